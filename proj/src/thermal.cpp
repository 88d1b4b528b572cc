#include "odmr/thermal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace odmr::thermal {

namespace {

struct SeriesView {
  ArrayXd t;
  ArrayXd d;
  ArrayXd w; // 1/sigma, or ones
};

using ViewPtr = std::shared_ptr<const SeriesView>;

ViewPtr make_view(const std::vector<CalibrationPoint>& series,
                  const std::vector<double>& sigmas) {
  auto v = std::make_shared<SeriesView>();
  const Eigen::Index n = static_cast<Eigen::Index>(series.size());
  v->t.resize(n);
  v->d.resize(n);
  v->w = ArrayXd::Ones(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    v->t[i] = series[static_cast<size_t>(i)].t;
    v->d[i] = series[static_cast<size_t>(i)].d;
  }
  if (!sigmas.empty()) {
    if (sigmas.size() != series.size())
      throw std::invalid_argument("fit_calibration: sigmas size mismatch");
    for (Eigen::Index i = 0; i < n; ++i) {
      const double s = sigmas[static_cast<size_t>(i)];
      if (!(s > 0.0)) throw std::invalid_argument("fit_calibration: sigmas must be positive");
      v->w[i] = 1.0 / s;
    }
  }
  return v;
}

size_t distinct_temperatures(const std::vector<CalibrationPoint>& series) {
  std::vector<double> t;
  t.reserve(series.size());
  for (const auto& p : series) t.push_back(p.t);
  std::sort(t.begin(), t.end());
  return static_cast<size_t>(std::unique(t.begin(), t.end()) - t.begin());
}

optim::ResidualProblem varshni_problem(ViewPtr v) {
  optim::ResidualProblem prob;
  prob.parameter_count = 3;
  prob.residual_count = v->t.size();
  prob.transforms = {optim::Transform::Free(), optim::Transform::Positive(),
                     optim::Transform::Positive()};
  prob.residual = [v](const VectorXd& th) {
    return (v->w * (th[0] - th[1] * v->t.square() / (th[2] + v->t) - v->d))
        .matrix()
        .eval();
  };
  prob.jacobian = [v](const VectorXd& th) {
    MatrixXd j(v->t.size(), 3);
    const ArrayXd s = th[2] + v->t;
    j.col(0) = v->w.matrix();
    j.col(1) = (-v->w * v->t.square() / s).matrix();
    j.col(2) = (v->w * th[1] * v->t.square() / s.square()).matrix();
    return j;
  };
  return prob;
}

optim::ResidualProblem modified_varshni_problem(ViewPtr v) {
  optim::ResidualProblem prob;
  prob.parameter_count = 3;
  prob.residual_count = v->t.size();
  prob.residual = [v](const VectorXd& th) {
    const ArrayXd s = th[2] + v->t;
    return (v->w * (th[0] - th[1] * v->t.square().square() / s.square() - v->d))
        .matrix()
        .eval();
  };
  prob.jacobian = [v](const VectorXd& th) {
    MatrixXd j(v->t.size(), 3);
    const ArrayXd s = th[2] + v->t;
    const ArrayXd t4 = v->t.square().square();
    j.col(0) = v->w.matrix();
    j.col(1) = (-v->w * t4 / s.square()).matrix();
    j.col(2) = (v->w * 2.0 * th[1] * t4 / (s * s * s)).matrix();
    return j;
  };
  return prob;
}

struct PolyBasis {
  double scale;
  double shift;
};

// Fit in x = scale·T + shift ∈ [−1, 1]; raw powers of Kelvin would make the
// normal matrix hopelessly ill-conditioned at degree 5.
PolyBasis poly_basis(const SeriesView& v) {
  const double t_min = v.t.minCoeff(), t_max = v.t.maxCoeff();
  return {2.0 / (t_max - t_min), -(t_max + t_min) / (t_max - t_min)};
}

optim::ResidualProblem poly_problem(ViewPtr v, int degree) {
  const PolyBasis basis = poly_basis(*v);
  const ArrayXd x = basis.scale * v->t + basis.shift;

  const Eigen::Index p = degree + 1;
  auto design = std::make_shared<MatrixXd>(v->t.size(), p);
  design->col(0) = v->w.matrix();
  for (Eigen::Index k = 1; k < p; ++k)
    design->col(k) = (design->col(k - 1).array() * x).matrix();
  auto wd = std::make_shared<const VectorXd>((v->w * v->d).matrix());

  optim::ResidualProblem prob;
  prob.parameter_count = p;
  prob.residual_count = v->t.size();
  prob.residual = [design, wd](const VectorXd& th) {
    return (*design * th - *wd).eval();
  };
  prob.jacobian = [design](const VectorXd&) { return *design; };
  return prob;
}

optim::ResidualProblem linear_problem(ViewPtr v) {
  optim::ResidualProblem prob;
  prob.parameter_count = 2;
  prob.residual_count = v->t.size();
  prob.residual = [v](const VectorXd& th) {
    return (v->w * (th[0] + th[1] * v->t - v->d)).matrix().eval();
  };
  prob.jacobian = [v](const VectorXd&) {
    MatrixXd j(v->t.size(), 2);
    j.col(0) = v->w.matrix();
    j.col(1) = (v->w * v->t).matrix();
    return j;
  };
  return prob;
}

// Expand q(x) = sum a_i x^i with x = s·T + c into power-basis coefficients
// in T. Exact for the degrees used here.
std::vector<double> rescale_poly(const std::vector<double>& a, double s, double c) {
  const size_t k = a.size();
  std::vector<double> out(k, 0.0);
  // binomial table up to degree 5
  double binom[6][6] = {};
  for (int i = 0; i < 6; ++i) {
    binom[i][0] = 1.0;
    for (int j = 1; j <= i; ++j)
      binom[i][j] = binom[i - 1][j - 1] + (j <= i - 1 ? binom[i - 1][j] : 0.0);
  }
  for (size_t i = 0; i < k; ++i) {
    // a_i (sT + c)^i = a_i sum_j C(i,j) s^j c^(i-j) T^j
    double cpow = 1.0;
    std::vector<double> cpows(i + 1);
    for (size_t j = 0; j <= i; ++j) {
      cpows[i - j] = cpow; // c^(i-j) stored by exponent of T
      cpow *= c;
    }
    double spow = 1.0;
    for (size_t j = 0; j <= i; ++j) {
      out[j] += a[i] * binom[i][j] * spow * cpows[j];
      spow *= s;
    }
  }
  return out;
}

double poly_eval(const std::vector<double>& c, double t) {
  double acc = 0.0;
  for (size_t i = c.size(); i-- > 0;) acc = acc * t + c[i];
  return acc;
}

double poly_derivative(const std::vector<double>& c, double t) {
  double acc = 0.0;
  for (size_t i = c.size(); i-- > 1;) acc = acc * t + double(i) * c[i];
  return acc;
}

struct FitCore {
  optim::FitReport report;
  std::variant<VarshniParams, ModVarshniParams, PolyParams, LinearParams> params;
  MatrixXd covariance;
};

FitCore fit_varshni(ViewPtr v) {
  const auto prob = varshni_problem(v);

  // Data-driven start: D0 from the low-T end, alpha from the span with a
  // Debye-scale beta.
  Eigen::Index hi;
  v->t.maxCoeff(&hi);
  const double d0 = v->d.maxCoeff();
  const double beta0 = 400.0;
  double alpha0 = (d0 - v->d[hi]) * (beta0 + v->t[hi]) / (v->t[hi] * v->t[hi]);
  if (!(alpha0 > 0.0) || !std::isfinite(alpha0))
    alpha0 = 1e-12 * (1.0 + std::abs(d0)) / (1.0 + v->t[hi]);

  VectorXd theta0(3);
  theta0 << d0, alpha0, beta0;
  auto report = optim::solve(prob, theta0);
  if (!report.converged)
    throw FitDivergedError("fit_calibration: Varshni fit did not converge");
  VarshniParams fitted(report.theta_hat[0], report.theta_hat[1], report.theta_hat[2]);
  MatrixXd cov = report.covariance;
  return FitCore{std::move(report), fitted, std::move(cov)};
}

FitCore fit_modified_varshni(ViewPtr v) {
  const auto prob = modified_varshni_problem(v);

  Eigen::Index hi;
  v->t.maxCoeff(&hi);
  const double d0 = v->d.maxCoeff();
  const double t_lo = v->t.minCoeff();

  // B enters squared, so the SSR surface has separate basins for positive
  // and negative B; start in both and keep the better fit.
  std::vector<double> b_starts{300.0};
  if (t_lo > 0.0) b_starts.push_back(-0.5 * t_lo);

  std::optional<optim::FitReport> best;
  for (double b0 : b_starts) {
    double a0 = (d0 - v->d[hi]) * std::pow(b0 + v->t[hi], 2) / std::pow(v->t[hi], 4);
    if (!std::isfinite(a0) || a0 == 0.0) a0 = 1e-12;
    VectorXd theta0(3);
    theta0 << d0, a0, b0;
    auto report = optim::solve(prob, theta0);
    if (report.converged && (!best || report.ssr < best->ssr)) best = std::move(report);
  }
  if (!best)
    throw FitDivergedError("fit_calibration: modified-Varshni fit did not converge");

  ModVarshniParams fitted(best->theta_hat[0], best->theta_hat[1], best->theta_hat[2]);
  MatrixXd cov = best->covariance;
  return FitCore{std::move(*best), fitted, std::move(cov)};
}

FitCore fit_poly(ViewPtr v, int degree) {
  const auto prob = poly_problem(v, degree);
  const PolyBasis basis = poly_basis(*v);
  const Eigen::Index p = degree + 1;

  VectorXd theta0 = VectorXd::Zero(p);
  theta0[0] = v->d.mean();
  auto report = optim::solve(prob, theta0);
  if (!report.converged)
    throw FitDivergedError("fit_calibration: polynomial fit did not converge");

  std::vector<double> scaled(report.theta_hat.data(), report.theta_hat.data() + p);
  PolyParams fitted{rescale_poly(scaled, basis.scale, basis.shift)};

  // Map the covariance into the power basis alongside the coefficients:
  // power = M·scaled, so cov_power = M·cov_scaled·Mᵀ.
  MatrixXd basis_map = MatrixXd::Zero(p, p);
  for (Eigen::Index k = 0; k < p; ++k) {
    std::vector<double> unit(static_cast<size_t>(p), 0.0);
    unit[static_cast<size_t>(k)] = 1.0;
    const auto col = rescale_poly(unit, basis.scale, basis.shift);
    for (Eigen::Index r = 0; r < p; ++r) basis_map(r, k) = col[static_cast<size_t>(r)];
  }
  MatrixXd cov = basis_map * report.covariance * basis_map.transpose();
  return FitCore{std::move(report), std::move(fitted), std::move(cov)};
}

FitCore fit_linear(ViewPtr v) {
  const auto prob = linear_problem(v);
  VectorXd theta0(2);
  theta0 << v->d.mean(), 0.0;
  auto report = optim::solve(prob, theta0);
  if (!report.converged)
    throw FitDivergedError("fit_calibration: linear fit did not converge");
  LinearParams fitted{report.theta_hat[0], report.theta_hat[1]};
  MatrixXd cov = report.covariance;
  return FitCore{std::move(report), fitted, std::move(cov)};
}

bool sampled_monotone_decreasing(const CalibrationModel& m, double lo, double hi) {
  const double tol = 1e-12 * (1.0 + std::abs(eval_model(m, lo)));
  double t = lo;
  while (true) {
    const double deriv = model_derivative(m, t);
    const double value = eval_model(m, t);
    if (!std::isfinite(deriv) || !std::isfinite(value) || deriv > tol) return false;
    if (t >= hi) break;
    t = std::min(t + 1.0, hi);
  }
  return true;
}

} // namespace

VarshniParams::VarshniParams(double d0_, double alpha_, double beta_)
    : d0(d0_), alpha(alpha_), beta(beta_) {
  if (!(alpha > 0.0) || !(beta > 0.0))
    throw std::invalid_argument("VarshniParams: alpha and beta must be positive");
}

ModVarshniParams::ModVarshniParams(double d0_, double a_, double b_)
    : d0(d0_), a(a_), b(b_) {
  if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(d0))
    throw std::invalid_argument("ModVarshniParams: parameters must be finite");
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::varshni: return "varshni";
    case ModelKind::modified_varshni: return "modvarshni";
    case ModelKind::poly3: return "poly3";
    case ModelKind::poly5: return "poly5";
    case ModelKind::linear: return "linear";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "varshni") return ModelKind::varshni;
  if (name == "modvarshni") return ModelKind::modified_varshni;
  if (name == "poly3") return ModelKind::poly3;
  if (name == "poly5") return ModelKind::poly5;
  if (name == "linear") return ModelKind::linear;
  throw std::invalid_argument("unknown model kind: " + name);
}

int parameter_count(ModelKind kind) {
  switch (kind) {
    case ModelKind::varshni: return 3;
    case ModelKind::modified_varshni: return 3;
    case ModelKind::poly3: return 4;
    case ModelKind::poly5: return 6;
    case ModelKind::linear: return 2;
  }
  return 0;
}

double eval_model(const CalibrationModel& m, double t) {
  if (!(t >= 0.0)) throw std::invalid_argument("eval_model: temperature must be >= 0");
  switch (m.kind) {
    case ModelKind::varshni:
      return varshni(std::get<VarshniParams>(m.params), t);
    case ModelKind::modified_varshni: {
      const auto& p = std::get<ModVarshniParams>(m.params);
      if (t == -p.b) throw std::invalid_argument("eval_model: pole at T = -B");
      return modified_varshni(p, t);
    }
    case ModelKind::poly3:
    case ModelKind::poly5:
      return poly_eval(std::get<PolyParams>(m.params).coefficients, t);
    case ModelKind::linear: {
      const auto& p = std::get<LinearParams>(m.params);
      return p.intercept + p.slope * t;
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

ArrayXd eval_model(const CalibrationModel& m, const ArrayXd& t) {
  ArrayXd out(t.size());
  for (Eigen::Index i = 0; i < t.size(); ++i) out[i] = eval_model(m, t[i]);
  return out;
}

double varshni_derivative(const VarshniParams& p, double t) {
  if (!(t >= 0.0)) throw std::invalid_argument("varshni_derivative: t must be >= 0");
  const double s = p.beta + t;
  return -p.alpha * t * (t + 2.0 * p.beta) / (s * s);
}

double model_derivative(const CalibrationModel& m, double t) {
  switch (m.kind) {
    case ModelKind::varshni:
      return varshni_derivative(std::get<VarshniParams>(m.params), t);
    case ModelKind::modified_varshni: {
      const auto& p = std::get<ModVarshniParams>(m.params);
      const double s = p.b + t;
      if (s == 0.0) return std::numeric_limits<double>::infinity();
      return -2.0 * p.a * t * t * t * (2.0 * p.b + t) / (s * s * s);
    }
    case ModelKind::poly3:
    case ModelKind::poly5:
      return poly_derivative(std::get<PolyParams>(m.params).coefficients, t);
    case ModelKind::linear:
      return std::get<LinearParams>(m.params).slope;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

optim::ResidualProblem fit_problem(ModelKind kind,
                                   const std::vector<CalibrationPoint>& series,
                                   const std::vector<double>& sigmas) {
  const ViewPtr v = make_view(series, sigmas);
  switch (kind) {
    case ModelKind::varshni: return varshni_problem(v);
    case ModelKind::modified_varshni: return modified_varshni_problem(v);
    case ModelKind::poly3: return poly_problem(v, 3);
    case ModelKind::poly5: return poly_problem(v, 5);
    case ModelKind::linear: return linear_problem(v);
  }
  throw std::invalid_argument("fit_problem: bad kind");
}

CalibrationModel fit_calibration(ModelKind kind,
                                 const std::vector<CalibrationPoint>& series,
                                 const std::vector<double>& sigmas) {
  const size_t need = static_cast<size_t>(parameter_count(kind)) + 1;
  if (distinct_temperatures(series) < need)
    throw InsufficientDataError("fit_calibration: needs at least " +
                                std::to_string(need) + " distinct temperatures");
  const ViewPtr v = make_view(series, sigmas);

  FitCore core = [&] {
    switch (kind) {
      case ModelKind::varshni: return fit_varshni(v);
      case ModelKind::modified_varshni: return fit_modified_varshni(v);
      case ModelKind::poly3: return fit_poly(v, 3);
      case ModelKind::poly5: return fit_poly(v, 5);
      case ModelKind::linear: return fit_linear(v);
    }
    throw std::invalid_argument("fit_calibration: bad kind");
  }();

  CalibrationModel m;
  m.kind = kind;
  m.params = std::move(core.params);
  m.covariance = std::move(core.covariance);
  m.t_min = v->t.minCoeff();
  m.t_max = v->t.maxCoeff();
  m.ssr = core.report.ssr;

  double max_res = 0.0;
  for (Eigen::Index i = 0; i < v->t.size(); ++i)
    max_res = std::max(max_res, std::abs(eval_model(m, v->t[i]) - v->d[i]));
  m.max_abs_residual = max_res;

  m.monotone_decreasing = sampled_monotone_decreasing(m, m.t_min, m.t_max);
  if (kind == ModelKind::modified_varshni &&
      std::get<ModVarshniParams>(m.params).b <= 0.0)
    m.monotone_decreasing = false; // turns upward just below the fit range
  return m;
}

Inversion invert_temperature(const CalibrationModel& m, double d_meas, double sigma_d) {
  if (!m.monotone_decreasing)
    throw NonMonotoneModelError("invert_temperature: model is not monotone decreasing");
  if (!(sigma_d >= 0.0))
    throw std::invalid_argument("invert_temperature: sigma_d must be >= 0");

  const double d_hi = eval_model(m, m.t_min);
  const double d_lo = eval_model(m, m.t_max);
  if (!(d_meas >= d_lo && d_meas <= d_hi))
    throw OutOfCalibrationRangeError("invert_temperature: value outside the attainable band");

  double lo = m.t_min, hi = m.t_max;
  while (hi - lo > 1e-7) {
    const double mid = 0.5 * (lo + hi);
    if (eval_model(m, mid) > d_meas)
      lo = mid;
    else
      hi = mid;
  }
  const double t = 0.5 * (lo + hi);
  const double deriv = model_derivative(m, t);
  const double sigma_t = sigma_d == 0.0 ? 0.0 : sigma_d / std::abs(deriv);
  return Inversion{t, sigma_t};
}

std::vector<ComparisonRow> model_compare(const std::vector<CalibrationPoint>& series,
                                         const std::vector<ModelKind>& kinds) {
  std::vector<ComparisonRow> rows;
  rows.reserve(kinds.size());
  for (ModelKind kind : kinds) {
    CalibrationModel m = fit_calibration(kind, series);
    ComparisonRow row;
    row.kind = kind;
    row.ssr = m.ssr;
    row.max_abs_residual = m.max_abs_residual;
    row.monotone_fit_range = m.monotone_decreasing;
    row.monotone_extrapolated = sampled_monotone_decreasing(m, m.t_max, 2.0 * m.t_max);
    row.param_count = parameter_count(kind);
    rows.push_back(row);
  }
  return rows;
}

} // namespace odmr::thermal
