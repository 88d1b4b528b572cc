#ifndef ODMR_OPTIM_HPP
#define ODMR_OPTIM_HPP

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "odmr/errors.hpp"

namespace odmr::optim {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Per-parameter reparameterization. `positive` maps through exp so the
/// constrained parameter stays strictly positive at every evaluation;
/// `boxed` maps through a logistic onto the open interval (lo, hi).
struct Transform {
  enum class Kind { free, positive, boxed };
  Kind kind = Kind::free;
  double lo = 0.0;
  double hi = 0.0;

  static Transform Free() { return {}; }
  static Transform Positive() { return {Kind::positive, 0.0, 0.0}; }
  static Transform Boxed(double lo, double hi) { return {Kind::boxed, lo, hi}; }
};

/// A nonlinear least-squares problem: residual r(θ) of fixed length n over
/// p parameters, with an optional analytic Jacobian ∂r/∂θ (n×p). Residuals
/// follow the model-minus-data convention; sigma weighting, when wanted,
/// is folded into the residual by the caller.
struct ResidualProblem {
  std::function<VectorXd(const VectorXd&)> residual;
  std::function<MatrixXd(const VectorXd&)> jacobian; // empty: finite differences
  Eigen::Index parameter_count = 0;
  Eigen::Index residual_count = 0;
  std::vector<Transform> transforms; // empty means all free
};

struct SolveOptions {
  int max_iterations = 200;
  double ftol = 1e-12;        // relative SSR decrease per accepted step
  // Scale-invariant gradient test: stop when every |(Jᵀr)_j| is below
  // gtol·‖J col j‖·‖r‖, i.e. when the residual is numerically orthogonal
  // to the Jacobian columns. Uniform residual rescaling cannot change it.
  double gtol = 1e-10;
  double xtol = 1e-12;        // accepted-step size threshold, relative to ‖u‖
  double lambda0_scale = 1e-3;
  double lambda_max = 1e12;
  double lambda_shrink = 3.0; // accepted step: λ /= 3
  double lambda_grow = 7.0;   // rejected step: λ *= 7
  // Per-iteration cap on steps along log/logit coordinates. Linearizing
  // through exp or the logistic wildly overestimates far steps, and one
  // accepted overshoot would strand the iterate in the saturated tail
  // where the transform slope underflows. Free coordinates are not capped.
  double max_transform_step = 10.0;
};

struct FitReport {
  VectorXd theta_hat;
  MatrixXd covariance;   // constrained coordinates; zero when n == p
  double ssr = 0.0;
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;          // ∞-norm in solver coordinates
  std::vector<double> ssr_history;     // SSR at θ0, then after each accepted step
};

/// Damped least squares on the transformed (unconstrained) coordinates.
/// Damping starts at lambda0_scale·max(diag JᵀJ), shrinks on accepted steps
/// and grows on rejected ones without recomputing J. SSR never increases
/// across accepted steps. Hitting the iteration cap returns the best point
/// found with converged = false.
FitReport solve(const ResidualProblem& problem, const VectorXd& theta0,
                const SolveOptions& options = {});

/// Central-difference Jacobian in constrained coordinates, step
/// h_i = 1e−6·(1+|θ_i|). Throws NonFiniteResidualError if a perturbed
/// evaluation is non-finite.
MatrixXd jacobian_fd(const ResidualProblem& problem, const VectorXd& theta);

/// σ̂²·(JᵀJ)⁻¹ with σ̂² = ssr/(n−p). J is the Jacobian at the optimum in the
/// same coordinates the result is wanted in. Throws SingularNormalMatrixError
/// when J is rank deficient.
MatrixXd covariance(const MatrixXd& jacobian_at_optimum, double ssr,
                    Eigen::Index n, Eigen::Index p);

} // namespace odmr::optim

#endif
