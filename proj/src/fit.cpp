#include "nvsim/fit.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace nvsim {

double FitResult::stderrOf(int i) const {
  return std::sqrt(std::max(0.0, covariance(i, i)));
}

namespace {

Eigen::VectorXd clamp_params(const Eigen::VectorXd& p,
                             const Eigen::VectorXd& lo,
                             const Eigen::VectorXd& hi) {
  return p.cwiseMax(lo).cwiseMin(hi);
}

Eigen::VectorXd residuals(const ModelFn& model, const std::vector<double>& x,
                          const std::vector<double>& y,
                          const std::vector<double>& w,
                          const Eigen::VectorXd& p) {
  Eigen::VectorXd r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    r(i) = (y[i] - model(x[i], p)) * w[i];
  return r;
}

Eigen::MatrixXd jacobian(const ModelFn& model, const std::vector<double>& x,
                         const std::vector<double>& w,
                         const Eigen::VectorXd& p, const Eigen::VectorXd& lo,
                         const Eigen::VectorXd& hi) {
  const int np = static_cast<int>(p.size());
  Eigen::MatrixXd j(x.size(), np);
  for (int k = 0; k < np; ++k) {
    const double scale = std::max(1e-10, std::abs(p(k)));
    const double h = 1e-6 * scale;
    Eigen::VectorXd pp = p, pm = p;
    pp(k) = std::min(p(k) + h, hi(k));
    pm(k) = std::max(p(k) - h, lo(k));
    const double dh = pp(k) - pm(k);
    for (std::size_t i = 0; i < x.size(); ++i)
      j(i, k) = dh > 0.0
                    ? -(model(x[i], pp) - model(x[i], pm)) / dh * w[i]
                    : 0.0;
  }
  return j;
}

}  // namespace

FitResult fit_least_squares(const ModelFn& model, const std::vector<double>& x,
                            const std::vector<double>& y,
                            const std::vector<double>& sigma,
                            const Eigen::VectorXd& p0,
                            const Eigen::VectorXd& lower,
                            const Eigen::VectorXd& upper,
                            const FitOptions& opt) {
  if (x.size() != y.size() || (!sigma.empty() && sigma.size() != x.size()))
    throw std::invalid_argument("fit: data size mismatch");
  const int np = static_cast<int>(p0.size());
  if (lower.size() != np || upper.size() != np)
    throw std::invalid_argument("fit: bounds size mismatch");
  if (static_cast<int>(x.size()) <= np)
    throw std::invalid_argument("fit: fewer points than parameters");

  std::vector<double> w(x.size(), 1.0);
  for (std::size_t i = 0; i < sigma.size(); ++i)
    if (sigma[i] > 0.0) w[i] = 1.0 / sigma[i];

  Eigen::VectorXd p = clamp_params(p0, lower, upper);
  Eigen::VectorXd r = residuals(model, x, y, w, p);
  double chi2 = r.squaredNorm();
  double lambda = opt.lambda0;
  bool converged = false;

  for (int it = 0; it < opt.maxIterations; ++it) {
    const Eigen::MatrixXd j = jacobian(model, x, w, p, lower, upper);
    const Eigen::MatrixXd jtj = j.transpose() * j;
    const Eigen::VectorXd g = -j.transpose() * r;

    bool improved = false;
    for (int tries = 0; tries < 12; ++tries) {
      Eigen::MatrixXd a = jtj;
      a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
      const Eigen::VectorXd step = a.ldlt().solve(g);
      const Eigen::VectorXd pNew = clamp_params(p + step, lower, upper);
      const Eigen::VectorXd rNew = residuals(model, x, y, w, pNew);
      const double chi2New = rNew.squaredNorm();
      if (chi2New < chi2) {
        const double rel = (chi2 - chi2New) / std::max(chi2, 1e-300);
        p = pNew;
        r = rNew;
        chi2 = chi2New;
        lambda = std::max(lambda / 4.0, 1e-14);
        improved = true;
        if (rel < opt.tolerance) converged = true;
        break;
      }
      lambda *= 8.0;
    }
    if (!improved) {
      converged = true;  // local minimum within step budget
      break;
    }
    if (converged) break;
  }

  FitResult res;
  res.params = p;
  res.chi2 = chi2;
  res.dof = static_cast<int>(x.size()) - np;
  res.converged = converged;

  const Eigen::MatrixXd j = jacobian(model, x, w, p, lower, upper);
  Eigen::MatrixXd jtj = j.transpose() * j;
  jtj.diagonal().array() += 1e-300;
  // Equilibrate before inverting: parameters can differ by many orders of
  // magnitude (e.g. line centers in GHz vs depths of order 1), which would
  // otherwise push well-determined directions below the rank threshold.
  const Eigen::VectorXd d =
      jtj.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd scaled = d.asDiagonal() * jtj * d.asDiagonal();
  Eigen::MatrixXd cov =
      d.asDiagonal() *
      scaled.completeOrthogonalDecomposition().pseudoInverse() *
      d.asDiagonal();
  // If no per-point sigmas were given, scale by the residual variance.
  if (sigma.empty() && res.dof > 0) cov *= chi2 / res.dof;
  res.covariance = cov;
  return res;
}

FitResult fit_multistart(const ModelFn& model, const std::vector<double>& x,
                         const std::vector<double>& y,
                         const std::vector<double>& sigma,
                         const std::vector<Eigen::VectorXd>& starts,
                         const Eigen::VectorXd& lower,
                         const Eigen::VectorXd& upper, const FitOptions& opt) {
  if (starts.empty()) throw std::invalid_argument("fit_multistart: no starts");
  FitResult best;
  best.chi2 = std::numeric_limits<double>::infinity();
  for (const auto& p0 : starts) {
    const FitResult r = fit_least_squares(model, x, y, sigma, p0, lower, upper, opt);
    if (r.chi2 < best.chi2) best = r;
  }
  return best;
}

}  // namespace nvsim
