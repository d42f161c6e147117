#include <doctest.h>

#include "nvsim/io.hpp"
#include "nvsim/scan.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace nvsim;

namespace {

ScanConfig small_config(std::uint64_t seed) {
  ScanConfig c;
  c.seed = seed;
  c.seedSet = true;
  c.grid.nx = 4;
  c.grid.ny = 3;
  c.grid.spacing = 2.0;
  c.durationPerPoint = 0.5;
  return c;
}

StrainField uniform_scene(double epsZz) {
  UniformStrain u;
  u.eps.zz = epsZz;
  return StrainField{{u}};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("config schema round-trips and rejects unknown keys") {
  ScanConfig c = small_config(7);
  c.scenePath = "scene.json";
  const nlohmann::json j = scan_config_to_json(c);
  const ScanConfig back = load_scan_config(j);
  CHECK(scan_config_to_json(back).dump() == j.dump());
  CHECK(back.seedSet);
  CHECK(back.grid.nx == 4);

  nlohmann::json topBad = j;
  topBad["surprise"] = 1;
  CHECK_THROWS_WITH_AS(load_scan_config(topBad),
                       "config: unknown key 'surprise'", std::invalid_argument);
  nlohmann::json nestedBad = j;
  nestedBad["sequence"]["tau_s"] = 1e-6;
  CHECK_THROWS_AS(load_scan_config(nestedBad), std::invalid_argument);

  SUBCASE("validation rejects inconsistent settings") {
    ScanConfig noSeed = c;
    noSeed.seedSet = false;
    CHECK_THROWS_AS(noSeed.validate(), std::invalid_argument);
    ScanConfig oddSwaps = c;
    oddSwaps.nSwaps = 3;
    CHECK_THROWS_AS(oddSwaps.validate(), std::invalid_argument);
    ScanConfig badGain = c;
    badGain.servoGain = 0.0;
    CHECK_THROWS_AS(badGain.validate(), std::invalid_argument);
  }
}

TEST_CASE("confocal scan of a uniform sample reads the background shift") {
  ScanConfig cfg = small_config(11);
  cfg.noise = false;
  const StrainField scene = uniform_scene(1e-6);  // Mz = -8 kHz
  const ScanResult res = run_confocal_scan(cfg, scene);
  REQUIRE(res.maps.size() == 1);
  const StrainMap& m = res.maps[0];
  m.validate();
  for (std::size_t i = 0; i < m.size(); ++i) {
    CHECK(m.mask[i] == 1);
    CHECK(m.mz[i] == doctest::Approx(-8e3).epsilon(1e-6));
    CHECK(m.strain[i] == doctest::Approx(8e3 / 10.9e9).epsilon(1e-6));
  }
  CHECK(res.metadata.at("mode") == "confocal");
  CHECK(res.metadata.contains("config_hash"));

  SUBCASE("one map per requested depth") {
    ScanConfig deep = cfg;
    deep.grid.depths = {0.0, 5.0, 10.0};
    const ScanResult r3 = run_confocal_scan(deep, scene);
    CHECK(r3.maps.size() == 3);
    for (std::size_t k = 0; k < 3; ++k)
      CHECK(r3.maps[k].depth == deep.grid.depths[k]);
  }
}

TEST_CASE("identical config and seed give byte-identical outputs") {
  ScanConfig cfg = small_config(321);
  cfg.noise = true;
  const StrainField scene = uniform_scene(5e-7);
  const ScanResult a = run_confocal_scan(cfg, scene);
  const ScanResult b = run_confocal_scan(cfg, scene);
  CHECK(a.maps[0].mz == b.maps[0].mz);
  CHECK(a.maps[0].sigma == b.maps[0].sigma);

  const auto dir = std::filesystem::temp_directory_path() / "nvsim_det_test";
  std::filesystem::create_directories(dir);
  write_strain_map_csv(a.maps[0], (dir / "a.csv").string());
  write_strain_map_csv(b.maps[0], (dir / "b.csv").string());
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));

  const StrainMap rt = read_strain_map_csv((dir / "a.csv").string());
  CHECK(rt.nx == a.maps[0].nx);
  CHECK(rt.mz == a.maps[0].mz);
  std::filesystem::remove_all(dir);

  SUBCASE("a different seed gives different noise") {
    ScanConfig other = cfg;
    other.seed = 322;
    const ScanResult c = run_confocal_scan(other, scene);
    CHECK(c.maps[0].mz != a.maps[0].mz);
  }
}

TEST_CASE("gradiometry with no drift matches the plain scan") {
  ScanConfig cfg = small_config(5);
  cfg.noise = false;
  cfg.instrument.tempDriftRate = 0.0;
  const StrainField scene = uniform_scene(1e-6);
  const GradiometryResult g = run_gradiometry_scan(cfg, scene);
  REQUIRE(g.maps.size() == 1);
  for (std::size_t i = 0; i < g.maps[0].size(); ++i)
    CHECK(g.maps[0].mz[i] == doctest::Approx(-8e3).epsilon(1e-6));
  for (double s : g.driftLog.y) CHECK(std::abs(s) < 1e-9);
}

TEST_CASE("alternating reference readout rejects slow drift") {
  ScanConfig cfg = small_config(9);
  cfg.noise = false;
  cfg.durationPerPoint = 1.0;
  cfg.instrument.tempDriftRate = 1.0;  // K/h -> ~20.6 Hz/s apparent drift
  const StrainField scene = uniform_scene(2e-7);
  const GradiometrySeries s = run_gradiometry_series(cfg, scene, 600.0);
  REQUIRE(s.singleMz.size() == 600);

  const auto range = [](const std::vector<double>& v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi - *lo;
  };
  CHECK(range(s.singleMz) > 10e3);     // uncorrected channel walks away
  CHECK(range(s.gradioMz) < 1e3);      // servo holds the corrected channel
  CHECK(range(s.singleMz) > 10.0 * range(s.gradioMz));
  CHECK(s.sampleInterval == 1.0);

  CHECK_THROWS_AS(run_gradiometry_series(cfg, scene, 2.0),
                  std::invalid_argument);
}

TEST_CASE("widefield imaging bookkeeping and uniform-scene accuracy") {
  ScanConfig cfg = small_config(31);
  cfg.grid.nx = 8;
  cfg.grid.ny = 8;
  cfg.fovSizeUm = 150.0;
  cfg.durationPerPoint = 1.0;
  cfg.contrast = 0.05;
  cfg.pixelFlux = 5000.0;
  cfg.noise = false;
  const StrainField scene = uniform_scene(1e-6);
  const QdmResult q = run_qdm_imaging(cfg, scene);
  q.map.validate();

  CHECK(q.map.spacing == doctest::Approx(150.0 / 8.0));
  CHECK(q.metadata.at("frame_rate_hz").get<double>() ==
        doctest::Approx(270.833).epsilon(1e-3));
  CHECK(q.metadata.at("acquisition_seconds_per_fov").get<double>() == 1.0);
  CHECK(q.metadata.at("survey_rate_um2_per_s").get<double>() >=
        125.0 * 125.0);
  const double realized =
      q.metadata.at("realized_seconds_per_fov").get<double>();
  CHECK(realized == doctest::Approx(1.0).epsilon(0.01));

  // noiseless: only ADC quantization separates the map from the truth
  for (std::size_t i = 0; i < q.map.size(); ++i) {
    CHECK(q.map.mask[i] == 1);
    CHECK(q.map.mz[i] == doctest::Approx(-8e3).epsilon(0.02));
  }

  SUBCASE("with shot noise every pixel gets a stability estimate") {
    ScanConfig noisy = cfg;
    noisy.noise = true;
    noisy.durationPerPoint = 0.2;
    const QdmResult qn = run_qdm_imaging(noisy, scene);
    REQUIRE(qn.allanAt1s.size() == qn.map.size());
    for (double a : qn.allanAt1s) CHECK(a > 0.0);
    const QdmResult qn2 = run_qdm_imaging(noisy, scene);
    CHECK(qn.map.mz == qn2.map.mz);  // deterministic under the same seed
  }
}

TEST_CASE("resonance-line imaging maps relative shifts across the grid") {
  ScanConfig cfg = small_config(77);
  cfg.grid.nx = 3;
  cfg.grid.ny = 3;
  cfg.grid.spacing = 10.0;
  cfg.odmrNoise = 0.0;
  LinearGradient g;
  g.direction = {1.0, 0.0, 0.0};
  g.epsPerUm.zz = 2e-8;  // -160 Hz/um
  const StrainField scene{{g}};

  const OdmrResult r = run_odmr_imaging(cfg, scene);
  r.map.validate();
  REQUIRE(r.chi2PerDof.size() == 9);
  for (double c : r.chi2PerDof) CHECK(c < 1e-3);  // noiseless fits are exact

  // the map is relative to the field-of-view mean
  double mean = 0.0;
  for (double v : r.map.mz) mean += v / r.map.size();
  CHECK(std::abs(mean) < 1.0);

  // column-to-column steps follow the configured gradient
  const double step = -8.0e9 * 2e-8 * 10.0;  // Hz per column
  for (int iy = 0; iy < 3; ++iy)
    for (int ix = 1; ix < 3; ++ix) {
      const double d = r.map.mz[r.map.index(ix, iy)] -
                       r.map.mz[r.map.index(ix - 1, iy)];
      CHECK(d == doctest::Approx(step).epsilon(0.05));
    }
}

namespace {

StrainMap synthetic_fov(int nx, int ny, double ox, double oy, double spacing,
                        double offset) {
  StrainMap m;
  m.nx = nx;
  m.ny = ny;
  m.originX = ox;
  m.originY = oy;
  m.spacing = spacing;
  m.mz.assign(m.size(), 0.0);
  m.strain.assign(m.size(), 0.0);
  m.sigma.assign(m.size(), 0.0);
  m.amplitude.assign(m.size(), 1.0);
  m.mask.assign(m.size(), 1);
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix) {
      const double x = ox + ix * spacing, y = oy + iy * spacing;
      const double truth = 1e-6 * std::sin(x / 7.0) * std::cos(y / 9.0);
      const std::size_t i = m.index(ix, iy);
      m.strain[i] = truth + offset;
      m.mz[i] = -m.strain[i] * 10.9e9;
    }
  return m;
}

}  // namespace

TEST_CASE("overlapping fields of view merge onto a seamless composite") {
  SUBCASE("a pure constant offset is removed exactly") {
    const StrainMap a = synthetic_fov(8, 8, 0.0, 0.0, 1.0, 0.0);
    const StrainMap b = synthetic_fov(8, 8, 4.0, 0.0, 1.0, 3e-7);
    const StitchResult s = stitch({a, b});
    CHECK(s.offsets[0] == 0.0);
    CHECK(s.offsets[1] == doctest::Approx(3e-7).epsilon(1e-9));
    CHECK(s.seamResidual < 1e-15);
    CHECK(s.composite.nx == 12);
    // composite equals the gauge field of view's values in the overlap
    for (int iy = 0; iy < 8; ++iy)
      for (int ix = 4; ix < 8; ++ix) {
        const double got =
            s.composite.strain[s.composite.index(ix, iy)];
        CHECK(got == doctest::Approx(a.strain[a.index(ix, iy)]).epsilon(1e-9));
      }
  }
  SUBCASE("a 3x3 mosaic with random offsets stays consistent") {
    std::vector<StrainMap> fovs;
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> off(-5e-7, 5e-7);
    for (int gy = 0; gy < 3; ++gy)
      for (int gx = 0; gx < 3; ++gx)
        fovs.push_back(
            synthetic_fov(8, 8, 6.0 * gx, 6.0 * gy, 1.0, off(rng)));
    const StitchResult s = stitch(fovs);
    CHECK(s.seamResidual < 1e-12);
    CHECK(s.composite.nx == 20);
    CHECK(s.composite.ny == 20);
  }
  SUBCASE("disjoint fields of view are an error") {
    const StrainMap a = synthetic_fov(4, 4, 0.0, 0.0, 1.0, 0.0);
    const StrainMap b = synthetic_fov(4, 4, 100.0, 0.0, 1.0, 0.0);
    CHECK_THROWS_AS(stitch({a, b}), std::runtime_error);
  }
  SUBCASE("incompatible grids are rejected") {
    const StrainMap a = synthetic_fov(4, 4, 0.0, 0.0, 1.0, 0.0);
    StrainMap b = synthetic_fov(4, 4, 2.0, 0.0, 2.0, 0.0);
    CHECK_THROWS_AS(stitch({a, b}), std::invalid_argument);
    StrainMap c = synthetic_fov(4, 4, 2.3, 0.0, 1.0, 0.0);
    CHECK_THROWS_AS(stitch({a, c}), std::invalid_argument);
    CHECK_THROWS_AS(stitch({a}), std::invalid_argument);
  }
}
