#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

// Bounded-parameter weighted least squares (Levenberg-Marquardt, numeric
// Jacobian).  Callers provide multi-start initial guesses where the model
// has phase ambiguities.

namespace nvsim {

using ModelFn =
    std::function<double(double x, const Eigen::VectorXd& params)>;

struct FitOptions {
  int maxIterations = 300;
  double tolerance = 1e-12;  // relative chi2 improvement
  double lambda0 = 1e-3;
};

struct FitResult {
  Eigen::VectorXd params;
  Eigen::MatrixXd covariance;
  double chi2 = 0.0;
  int dof = 0;
  bool converged = false;

  double chi2PerDof() const { return dof > 0 ? chi2 / dof : chi2; }
  double stderrOf(int i) const;
};

FitResult fit_least_squares(const ModelFn& model, const std::vector<double>& x,
                            const std::vector<double>& y,
                            const std::vector<double>& sigma,
                            const Eigen::VectorXd& p0,
                            const Eigen::VectorXd& lower,
                            const Eigen::VectorXd& upper,
                            const FitOptions& opt = {});

// Best of several starts.
FitResult fit_multistart(const ModelFn& model, const std::vector<double>& x,
                         const std::vector<double>& y,
                         const std::vector<double>& sigma,
                         const std::vector<Eigen::VectorXd>& starts,
                         const Eigen::VectorXd& lower,
                         const Eigen::VectorXd& upper,
                         const FitOptions& opt = {});

}  // namespace nvsim
