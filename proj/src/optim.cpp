#include "odmr/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace odmr::optim {

namespace {

// Saturation guards for the constraint maps. Past these coordinates exp
// underflows and the logistic rounds to an endpoint, which would pin the
// parameter on its (open) boundary with a zero slope the solver cannot
// escape. Clamping keeps the mapped value strictly feasible and the slope
// nonzero at any u.
constexpr double kLogSat = 700.0;
constexpr double kLogitSat = 36.0;

double to_unconstrained(const Transform& t, double theta) {
  switch (t.kind) {
    case Transform::Kind::free:
      return theta;
    case Transform::Kind::positive:
      if (!(theta > 0.0))
        throw std::invalid_argument("positive-constrained parameter must start > 0");
      return std::log(theta);
    case Transform::Kind::boxed: {
      if (!(t.lo < t.hi))
        throw std::invalid_argument("boxed transform needs lo < hi");
      if (!(theta > t.lo && theta < t.hi))
        throw std::invalid_argument("boxed-constrained parameter must start inside (lo, hi)");
      const double s = (theta - t.lo) / (t.hi - t.lo);
      return std::log(s / (1.0 - s));
    }
  }
  return theta;
}

double to_constrained(const Transform& t, double u) {
  switch (t.kind) {
    case Transform::Kind::free:
      return u;
    case Transform::Kind::positive:
      return std::exp(std::clamp(u, -kLogSat, kLogSat));
    case Transform::Kind::boxed: {
      const double ue = std::clamp(u, -kLogitSat, kLogitSat);
      return t.lo + (t.hi - t.lo) / (1.0 + std::exp(-ue));
    }
  }
  return u;
}

// dθ/du evaluated at u, with the same saturation clamp as to_constrained.
double transform_slope(const Transform& t, double u) {
  switch (t.kind) {
    case Transform::Kind::free:
      return 1.0;
    case Transform::Kind::positive:
      return std::exp(std::clamp(u, -kLogSat, kLogSat));
    case Transform::Kind::boxed: {
      const double s = 1.0 / (1.0 + std::exp(-std::clamp(u, -kLogitSat, kLogitSat)));
      return (t.hi - t.lo) * s * (1.0 - s);
    }
  }
  return 1.0;
}

const Transform kFree{};

const Transform& transform_at(const ResidualProblem& p, Eigen::Index i) {
  if (p.transforms.empty()) return kFree;
  return p.transforms[static_cast<size_t>(i)];
}

VectorXd map_to_theta(const ResidualProblem& p, const VectorXd& u) {
  VectorXd theta(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i)
    theta[i] = to_constrained(transform_at(p, i), u[i]);
  return theta;
}

VectorXd map_to_u(const ResidualProblem& p, const VectorXd& theta) {
  VectorXd u(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i)
    u[i] = to_unconstrained(transform_at(p, i), theta[i]);
  return u;
}

VectorXd slopes_at(const ResidualProblem& p, const VectorXd& u) {
  VectorXd s(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i)
    s[i] = transform_slope(transform_at(p, i), u[i]);
  return s;
}

void check_problem(const ResidualProblem& p) {
  if (!p.residual) throw std::invalid_argument("ResidualProblem: residual function missing");
  if (p.parameter_count <= 0) throw std::invalid_argument("ResidualProblem: parameter_count <= 0");
  if (p.residual_count < p.parameter_count)
    throw std::invalid_argument("ResidualProblem: needs residual_count >= parameter_count");
  if (!p.transforms.empty() &&
      p.transforms.size() != static_cast<size_t>(p.parameter_count))
    throw std::invalid_argument("ResidualProblem: transforms size mismatch");
}

VectorXd eval_residual(const ResidualProblem& p, const VectorXd& theta) {
  VectorXd r = p.residual(theta);
  if (r.size() != p.residual_count)
    throw std::invalid_argument("residual length changed across calls");
  return r;
}

// Jacobian w.r.t. the unconstrained coordinates: chain rule when an analytic
// Jacobian exists, central differences in u otherwise so every evaluation
// stays feasible.
MatrixXd jacobian_u(const ResidualProblem& p, const VectorXd& u) {
  if (p.jacobian) {
    MatrixXd j = p.jacobian(map_to_theta(p, u));
    if (j.rows() != p.residual_count || j.cols() != p.parameter_count)
      throw std::invalid_argument("analytic Jacobian has wrong shape");
    return j * slopes_at(p, u).asDiagonal();
  }
  MatrixXd j(p.residual_count, p.parameter_count);
  for (Eigen::Index i = 0; i < p.parameter_count; ++i) {
    const double h = 1e-6 * (1.0 + std::abs(u[i]));
    VectorXd up = u, um = u;
    up[i] += h;
    um[i] -= h;
    const VectorXd rp = eval_residual(p, map_to_theta(p, up));
    const VectorXd rm = eval_residual(p, map_to_theta(p, um));
    if (!rp.allFinite() || !rm.allFinite())
      throw NonFiniteResidualError("non-finite residual in finite-difference Jacobian");
    j.col(i) = (rp - rm) / (2.0 * h);
  }
  return j;
}

} // namespace

FitReport solve(const ResidualProblem& problem, const VectorXd& theta0,
                const SolveOptions& options) {
  check_problem(problem);
  if (theta0.size() != problem.parameter_count)
    throw std::invalid_argument("theta0 size mismatch");
  if (!theta0.allFinite())
    throw std::invalid_argument("theta0 must be finite");

  const Eigen::Index n = problem.residual_count;
  const Eigen::Index p = problem.parameter_count;

  VectorXd u = map_to_u(problem, theta0);
  VectorXd r = eval_residual(problem, map_to_theta(problem, u));
  if (!r.allFinite())
    throw std::invalid_argument("residual at theta0 is non-finite");
  double ssr = r.squaredNorm();

  FitReport report;
  report.ssr_history.push_back(ssr);

  MatrixXd j = jacobian_u(problem, u);
  VectorXd gradient = j.transpose() * r;

  // Residual numerically orthogonal to every Jacobian column; invariant
  // under uniform residual rescaling, so weighted and unweighted versions
  // of the same fit stop at the same point.
  const auto gradient_small = [&options](const MatrixXd& jac, const VectorXd& g,
                                         double ssr_now) {
    const double rnorm = std::sqrt(ssr_now);
    for (Eigen::Index k = 0; k < g.size(); ++k)
      if (std::abs(g[k]) > options.gtol * jac.col(k).norm() * rnorm) return false;
    return true;
  };

  double lambda = options.lambda0_scale * (j.transpose() * j).diagonal().maxCoeff();
  if (!(lambda > 0.0) || !std::isfinite(lambda)) lambda = options.lambda0_scale;

  bool converged = ssr == 0.0 || gradient_small(j, gradient, ssr);
  int iter = 0;

  while (!converged && iter < options.max_iterations) {
    ++iter;
    const MatrixXd jtj = j.transpose() * j;

    // Try steps under growing damping; J stays fixed across rejections.
    bool accepted = false;
    VectorXd step;
    while (true) {
      MatrixXd normal = jtj;
      normal.diagonal().array() += lambda;
      Eigen::LDLT<MatrixXd> ldlt(normal);
      bool usable = ldlt.info() == Eigen::Success;
      if (usable) {
        step = ldlt.solve(-gradient);
        usable = step.allFinite();
      }
      if (usable && !problem.transforms.empty()) {
        for (Eigen::Index i = 0; i < step.size(); ++i)
          if (transform_at(problem, i).kind != Transform::Kind::free)
            step[i] = std::clamp(step[i], -options.max_transform_step,
                                 options.max_transform_step);
      }
      if (usable) {
        const VectorXd u_try = u + step;
        const VectorXd r_try = eval_residual(problem, map_to_theta(problem, u_try));
        const double ssr_try = r_try.allFinite()
                                   ? r_try.squaredNorm()
                                   : std::numeric_limits<double>::infinity();
        if (ssr_try < ssr) {
          u = u_try;
          r = r_try;
          ssr = ssr_try;
          report.ssr_history.push_back(ssr);
          lambda /= options.lambda_shrink;
          accepted = true;
          break;
        }
      }
      if (lambda >= options.lambda_max) {
        if (!usable)
          throw SingularNormalMatrixError("JtJ + lambda*I not factorizable at lambda_max");
        break; // no descent even under maximal damping
      }
      lambda *= options.lambda_grow;
    }

    if (!accepted) {
      // The damping sweep spanned fifteen decades of step lengths along
      // descent-biased directions and none lowered the SSR: the iterate is
      // a minimum at double precision, whatever the gradient cosine says.
      converged = true;
      break;
    }

    const double prev = report.ssr_history[report.ssr_history.size() - 2];
    if (prev - ssr <= options.ftol * prev || ssr == 0.0) {
      converged = true;
      break;
    }
    if (step.lpNorm<Eigen::Infinity>() <=
        options.xtol * (1.0 + u.lpNorm<Eigen::Infinity>())) {
      converged = true;
      break;
    }

    j = jacobian_u(problem, u);
    gradient = j.transpose() * r;
    if (gradient_small(j, gradient, ssr)) converged = true;
  }

  // Refresh J at the final point; stopping may have left it one step behind.
  j = jacobian_u(problem, u);
  gradient = j.transpose() * r;

  report.theta_hat = map_to_theta(problem, u);
  report.ssr = ssr;
  report.iterations = iter;
  report.converged = converged;
  report.gradient_norm = gradient.lpNorm<Eigen::Infinity>();

  if (n > p) {
    // A converged fit can still sit on a degenerate parameter direction
    // (collinear Jacobian columns); report undetermined sigmas rather than
    // failing the whole solve.
    try {
      const MatrixXd cov_u = covariance(j, ssr, n, p);
      const VectorXd s = slopes_at(problem, u);
      report.covariance = s.asDiagonal() * cov_u * s.asDiagonal();
    } catch (const SingularNormalMatrixError&) {
      report.covariance = MatrixXd::Constant(
          p, p, std::numeric_limits<double>::infinity());
    }
  } else {
    report.covariance = MatrixXd::Zero(p, p);
  }
  return report;
}

MatrixXd jacobian_fd(const ResidualProblem& problem, const VectorXd& theta) {
  check_problem(problem);
  if (theta.size() != problem.parameter_count)
    throw std::invalid_argument("theta size mismatch");
  MatrixXd j(problem.residual_count, problem.parameter_count);
  for (Eigen::Index i = 0; i < problem.parameter_count; ++i) {
    const double h = 1e-6 * (1.0 + std::abs(theta[i]));
    VectorXd tp = theta, tm = theta;
    tp[i] += h;
    tm[i] -= h;
    const VectorXd rp = eval_residual(problem, tp);
    const VectorXd rm = eval_residual(problem, tm);
    if (!rp.allFinite() || !rm.allFinite())
      throw NonFiniteResidualError("non-finite residual in finite-difference Jacobian");
    j.col(i) = (rp - rm) / (2.0 * h);
  }
  return j;
}

MatrixXd covariance(const MatrixXd& jacobian_at_optimum, double ssr,
                    Eigen::Index n, Eigen::Index p) {
  if (n <= p) throw std::invalid_argument("covariance needs n > p");
  if (jacobian_at_optimum.rows() != n || jacobian_at_optimum.cols() != p)
    throw std::invalid_argument("covariance: Jacobian shape mismatch");

  Eigen::ColPivHouseholderQR<MatrixXd> qr(jacobian_at_optimum);
  if (qr.rank() < p)
    throw SingularNormalMatrixError("rank-deficient Jacobian in covariance");

  const MatrixXd jtj = jacobian_at_optimum.transpose() * jacobian_at_optimum;
  const MatrixXd inv = jtj.ldlt().solve(MatrixXd::Identity(p, p));
  const double sigma2 = ssr / static_cast<double>(n - p);
  MatrixXd cov = sigma2 * inv;
  cov = 0.5 * (cov + cov.transpose()).eval();
  return cov;
}

} // namespace odmr::optim
