#include "odmr/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace odmr::lattice {

LatticeRecord::LatticeRecord(double t_, double a_, double c_) : t(t_), a(a_), c(c_) {
  if (!(t >= 0.0)) throw std::invalid_argument("LatticeRecord: t must be >= 0");
  if (!(a > 0.0) || !(c > 0.0))
    throw std::invalid_argument("LatticeRecord: a and c must be positive");
}

double cell_volume(const LatticeRecord& r) {
  return std::sqrt(3.0) / 2.0 * r.a * r.a * r.c;
}

RegressionResult linear_regression(const ArrayXd& x, const ArrayXd& y) {
  const Eigen::Index n = x.size();
  if (y.size() != n) throw std::invalid_argument("linear_regression: size mismatch");
  if (n < 2) throw InsufficientDataError("linear_regression: needs at least two points");

  const double x_mean = x.mean();
  const double y_mean = y.mean();
  const ArrayXd dx = x - x_mean;
  const double sxx = dx.square().sum();
  if (!(sxx > 0.0))
    throw InsufficientDataError("linear_regression: x values are all identical");

  RegressionResult r;
  r.slope = (dx * (y - y_mean)).sum() / sxx;
  r.intercept = y_mean - r.slope * x_mean;

  const ArrayXd resid = y - (r.intercept + r.slope * x);
  const double ssr = resid.square().sum();
  const double ss_tot = (y - y_mean).square().sum();

  if (n == 2) {
    r.slope_sigma = 0.0;
    r.intercept_sigma = 0.0;
    r.r_squared = 1.0;
    return r;
  }

  const double s2 = ssr / double(n - 2);
  r.slope_sigma = std::sqrt(s2 / sxx);
  r.intercept_sigma = std::sqrt(s2 * (1.0 / double(n) + x_mean * x_mean / sxx));
  r.r_squared = ss_tot > 0.0 ? 1.0 - ssr / ss_tot : (ssr == 0.0 ? 1.0 : 0.0);
  r.r_squared = std::clamp(r.r_squared, 0.0, 1.0);
  return r;
}

thermal::CalibrationModel fit_inverse_volume(const std::vector<LatticeRecord>& records) {
  if (records.size() < 4)
    throw InsufficientDataError("fit_inverse_volume: needs at least 4 records");
  double t_lo = records.front().t, t_hi = records.front().t;
  for (const auto& r : records) {
    t_lo = std::min(t_lo, r.t);
    t_hi = std::max(t_hi, r.t);
  }
  if (!(t_hi - t_lo > 50.0))
    throw InsufficientDataError("fit_inverse_volume: records must span more than 50 K");

  std::vector<thermal::CalibrationPoint> series;
  series.reserve(records.size());
  for (const auto& r : records)
    series.push_back({r.t, 1.0 / cell_volume(r)});
  return thermal::fit_calibration(thermal::ModelKind::varshni, series);
}

RegressionResult regress_d_vs_vinv(const std::vector<thermal::CalibrationPoint>& d_series,
                                   const thermal::CalibrationModel& vinv_model) {
  const Eigen::Index n = static_cast<Eigen::Index>(d_series.size());
  ArrayXd vinv(n), d_ghz(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = d_series[static_cast<size_t>(i)];
    if (p.t < vinv_model.t_min || p.t > vinv_model.t_max) {
      std::ostringstream msg;
      msg << "regress_d_vs_vinv: T = " << p.t << " K outside the fitted range ["
          << vinv_model.t_min << ", " << vinv_model.t_max << "] K";
      throw RangeMismatchError(msg.str());
    }
    vinv[i] = thermal::eval_model(vinv_model, p.t);
    d_ghz[i] = p.d / 1000.0;
  }
  return linear_regression(vinv, d_ghz);
}

} // namespace odmr::lattice
