#ifndef ODMR_LATTICE_HPP
#define ODMR_LATTICE_HPP

#include <Eigen/Dense>
#include <vector>

#include "odmr/errors.hpp"
#include "odmr/thermal.hpp"

namespace odmr::lattice {

using Eigen::ArrayXd;

/// One temperature point of the hexagonal lattice constants.
struct LatticeRecord {
  double t; // K
  double a; // Å, in-plane
  double c; // Å, out-of-plane

  LatticeRecord(double t, double a, double c);
};

/// Ordinary least-squares line y = slope·x + intercept with textbook
/// standard errors. Two points give the exact interpolating line with
/// zero sigmas and r² = 1.
struct RegressionResult {
  double slope;
  double intercept;
  double slope_sigma;
  double intercept_sigma;
  double r_squared;
};

/// Hexagonal unit-cell volume (√3/2)·a²·c in Å³.
double cell_volume(const LatticeRecord& r);

RegressionResult linear_regression(const ArrayXd& x, const ArrayXd& y);

/// Varshni-form fit of V⁻¹(T) in Å⁻³, reusing the calibration machinery
/// (same positivity constraints on α, β). Needs at least four records
/// spanning more than 50 K.
thermal::CalibrationModel fit_inverse_volume(const std::vector<LatticeRecord>& records);

/// Maps each temperature of the D series to V⁻¹ through the fitted curve,
/// then regresses D (converted to GHz) on V⁻¹ (Å⁻³): slope lands in GHz·Å³,
/// intercept in GHz. Every temperature must sit inside the curve's fit range.
RegressionResult regress_d_vs_vinv(const std::vector<thermal::CalibrationPoint>& d_series,
                                   const thermal::CalibrationModel& vinv_model);

} // namespace odmr::lattice

#endif
