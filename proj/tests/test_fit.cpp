#include <doctest.h>

#include "nvsim/fit.hpp"

#include <cmath>
#include <random>
#include <vector>

using namespace nvsim;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd p(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) p(i++) = x;
  return p;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

TEST_CASE("exponential decay parameters are recovered exactly") {
  const ModelFn model = [](double x, const Eigen::VectorXd& p) {
    return p(0) * std::exp(-x / p(1));
  };
  std::vector<double> x, y;
  for (int i = 0; i < 60; ++i) {
    x.push_back(0.5 * i);
    y.push_back(3.2 * std::exp(-x.back() / 7.0));
  }
  const auto r = fit_least_squares(model, x, y, {}, vec({1.0, 2.0}),
                                   vec({0.0, 0.1}), vec({kInf, kInf}));
  CHECK(r.converged);
  CHECK(r.params(0) == doctest::Approx(3.2).epsilon(1e-8));
  CHECK(r.params(1) == doctest::Approx(7.0).epsilon(1e-8));
  CHECK(r.chi2 < 1e-12);
  CHECK(r.dof == 58);
}

TEST_CASE("noisy line fit: parameters within errors, chi2/dof ~ 1") {
  const ModelFn model = [](double x, const Eigen::VectorXd& p) {
    return p(0) + p(1) * x;
  };
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 0.3);
  std::vector<double> x, y, s;
  for (int i = 0; i < 400; ++i) {
    x.push_back(0.05 * i);
    y.push_back(1.5 - 0.8 * x.back() + g(rng));
    s.push_back(0.3);
  }
  const auto r = fit_least_squares(model, x, y, s, vec({0.0, 0.0}),
                                   vec({-kInf, -kInf}), vec({kInf, kInf}));
  CHECK(r.converged);
  CHECK(std::abs(r.params(0) - 1.5) < 4.0 * r.stderrOf(0));
  CHECK(std::abs(r.params(1) + 0.8) < 4.0 * r.stderrOf(1));
  CHECK(r.chi2PerDof() == doctest::Approx(1.0).epsilon(0.25));
  // analytic stderr of the slope for an evenly sampled line
  double sxx = 0.0, xbar = 0.0;
  for (double xi : x) xbar += xi / x.size();
  for (double xi : x) sxx += (xi - xbar) * (xi - xbar);
  CHECK(r.stderrOf(1) == doctest::Approx(0.3 / std::sqrt(sxx)).epsilon(0.05));
}

TEST_CASE("box bounds are respected") {
  const ModelFn model = [](double x, const Eigen::VectorXd& p) {
    return p(0) * x;
  };
  std::vector<double> x{1.0, 2.0, 3.0}, y{5.0, 10.0, 15.0};
  const auto r = fit_least_squares(model, x, y, {}, vec({1.0}), vec({0.0}),
                                   vec({2.0}));
  CHECK(r.params(0) == doctest::Approx(2.0));  // clamped at the ceiling
}

TEST_CASE("multistart escapes a wrong phase basin") {
  const ModelFn model = [](double x, const Eigen::VectorXd& p) {
    return std::sin(2.0 * M_PI * p(0) * x + p(1));
  };
  std::vector<double> x, y;
  for (int i = 0; i < 200; ++i) {
    x.push_back(0.01 * i);
    y.push_back(std::sin(2.0 * M_PI * 3.0 * x.back() + 0.7));
  }
  std::vector<Eigen::VectorXd> starts;
  for (int k = 0; k < 8; ++k) starts.push_back(vec({2.6, k * M_PI / 4.0}));
  const auto r = fit_multistart(model, x, y, {}, starts, vec({0.5, -10.0}),
                                vec({10.0, 10.0}));
  CHECK(r.converged);
  CHECK(r.params(0) == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(std::remainder(r.params(1) - 0.7, 2.0 * M_PI) ==
        doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("input validation") {
  const ModelFn model = [](double x, const Eigen::VectorXd& p) {
    return p(0) * x;
  };
  std::vector<double> x{1.0, 2.0}, y{1.0};
  CHECK_THROWS_AS(fit_least_squares(model, x, y, {}, vec({1.0}), vec({-kInf}),
                                    vec({kInf})),
                  std::invalid_argument);
  CHECK_THROWS_AS(fit_multistart(model, x, x, {}, {}, vec({-kInf}),
                                 vec({kInf})),
                  std::invalid_argument);
}
