#include "nvsim/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nvsim {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::ofstream open_out(const std::string& path, std::ios::openmode mode = {}) {
  std::ofstream os(path, mode);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  return os;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw std::runtime_error("bad numeric field: " + s);
  return v;
}

}  // namespace

void write_strain_map_csv(const StrainMap& map, const std::string& path) {
  map.validate();
  auto os = open_out(path);
  os << "x_um,y_um,z_um,Mz_Hz,strain,sigma,amplitude,mask\n";
  for (int iy = 0; iy < map.ny; ++iy)
    for (int ix = 0; ix < map.nx; ++ix) {
      const std::size_t i = map.index(ix, iy);
      os << format_double(map.originX + ix * map.spacing) << ','
         << format_double(map.originY + iy * map.spacing) << ','
         << format_double(map.depth) << ',' << format_double(map.mz[i]) << ','
         << format_double(map.strain[i]) << ',' << format_double(map.sigma[i])
         << ',' << format_double(map.amplitude[i]) << ','
         << int(map.mask[i]) << '\n';
    }
}

StrainMap read_strain_map_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::string line;
  if (!std::getline(is, line) ||
      line != "x_um,y_um,z_um,Mz_Hz,strain,sigma,amplitude,mask")
    throw std::runtime_error("bad strain-map header in " + path);

  std::vector<double> xs, ys;
  StrainMap m;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 8) throw std::runtime_error("bad row in " + path);
    xs.push_back(parse_double(f[0]));
    ys.push_back(parse_double(f[1]));
    m.depth = parse_double(f[2]);
    m.mz.push_back(parse_double(f[3]));
    m.strain.push_back(parse_double(f[4]));
    m.sigma.push_back(parse_double(f[5]));
    m.amplitude.push_back(parse_double(f[6]));
    m.mask.push_back(static_cast<char>(parse_double(f[7]) != 0.0));
  }
  if (xs.empty()) throw std::runtime_error("empty strain map: " + path);

  // infer grid from row-major ordering
  m.originX = xs[0];
  m.originY = ys[0];
  m.nx = 1;
  while (static_cast<std::size_t>(m.nx) < xs.size() && ys[m.nx] == ys[0])
    ++m.nx;
  m.ny = static_cast<int>(xs.size()) / m.nx;
  if (static_cast<std::size_t>(m.nx) * m.ny != xs.size())
    throw std::runtime_error("ragged strain map grid: " + path);
  m.spacing = m.nx > 1 ? xs[1] - xs[0]
                       : (m.ny > 1 ? ys[static_cast<std::size_t>(m.nx)] - ys[0]
                                   : 1.0);
  m.validate();
  return m;
}

void write_trace_csv(const Trace& t, const std::string& path,
                     const std::string& xName, const std::string& yName) {
  auto os = open_out(path);
  os << xName << ',' << yName << ",sigma\n";
  for (std::size_t i = 0; i < t.x.size(); ++i)
    os << format_double(t.x[i]) << ',' << format_double(t.y[i]) << ','
       << format_double(t.sigma.empty() ? 0.0 : t.sigma[i]) << '\n';
}

void write_allan_csv(const AllanResult& a, const std::string& path) {
  auto os = open_out(path);
  os << "tau_s,adev,ci_lower,ci_upper,pairs\n";
  for (std::size_t i = 0; i < a.tau.size(); ++i)
    os << format_double(a.tau[i]) << ',' << format_double(a.sigma[i]) << ','
       << format_double(a.ciLower[i]) << ',' << format_double(a.ciUpper[i])
       << ',' << a.pairs[i] << '\n';
}

void write_json(const nlohmann::json& j, const std::string& path) {
  auto os = open_out(path);
  os << j.dump(2) << '\n';
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  return nlohmann::json::parse(is);
}

std::string read_text(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string config_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
  return buf;
}

void write_pgm16(const StrainMap& map, const std::vector<double>& values,
                 const std::string& path) {
  if (values.size() != map.size())
    throw std::invalid_argument("write_pgm16: size mismatch");
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!map.mask[i]) continue;
    if (first || values[i] < lo) lo = values[i];
    if (first || values[i] > hi) hi = values[i];
    first = false;
  }
  const double range = hi > lo ? hi - lo : 1.0;
  auto os = open_out(path, std::ios::binary);
  os << "P5\n" << map.nx << ' ' << map.ny << "\n65535\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    unsigned v = 0;
    if (map.mask[i])
      v = static_cast<unsigned>(
          std::lround((values[i] - lo) / range * 65535.0));
    const unsigned char bytes[2] = {static_cast<unsigned char>(v >> 8),
                                    static_cast<unsigned char>(v & 0xff)};
    os.write(reinterpret_cast<const char*>(bytes), 2);
  }
}

void require_keys(const nlohmann::json& obj,
                  const std::vector<std::string>& allowed,
                  const std::string& context) {
  if (!obj.is_object())
    throw std::invalid_argument(context + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const auto& a : allowed)
      if (key == a) {
        ok = true;
        break;
      }
    if (!ok)
      throw std::invalid_argument(context + ": unknown key '" + key + "'");
  }
}

}  // namespace nvsim
