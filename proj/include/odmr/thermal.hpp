#ifndef ODMR_THERMAL_HPP
#define ODMR_THERMAL_HPP

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "odmr/errors.hpp"
#include "odmr/optim.hpp"

namespace odmr::thermal {

using Eigen::ArrayXd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// D(T) = D0 − αT²/(β+T); α, β > 0 keep the law monotone decreasing.
struct VarshniParams {
  double d0;    // MHz
  double alpha; // MHz/K
  double beta;  // K

  VarshniParams(double d0, double alpha, double beta);
};

/// D(T) = D0 − A·T⁴/(B+T)². B is left free in sign; evaluation excludes
/// the pole at T = −B.
struct ModVarshniParams {
  double d0; // MHz
  double a;  // MHz/K²
  double b;  // K

  ModVarshniParams(double d0, double a, double b);
};

/// Power-basis coefficients c0..ck, value = Σ c_i·Tⁱ.
struct PolyParams {
  std::vector<double> coefficients;
};

struct LinearParams {
  double intercept; // MHz
  double slope;     // MHz/K
};

enum class ModelKind { varshni, modified_varshni, poly3, poly5, linear };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);
int parameter_count(ModelKind kind);

/// A fitted temperature-calibration law with its diagnostics.
struct CalibrationModel {
  ModelKind kind = ModelKind::linear;
  std::variant<VarshniParams, ModVarshniParams, PolyParams, LinearParams> params =
      LinearParams{};
  MatrixXd covariance;
  double t_min = 0.0; // K
  double t_max = 0.0; // K
  double max_abs_residual = 0.0; // MHz, over the fitted series
  bool monotone_decreasing = false;
  double ssr = 0.0;
};

/// Scalar and vectorized closed-form evaluation of the tagged law.
template <class T>
T varshni(const VarshniParams& p, const T& t) {
  return p.d0 - p.alpha * t * t / (p.beta + t);
}
template <class T>
T modified_varshni(const ModVarshniParams& p, const T& t) {
  const T s = p.b + t;
  return p.d0 - p.a * t * t * t * t / (s * s);
}

double eval_model(const CalibrationModel& m, double t);
ArrayXd eval_model(const CalibrationModel& m, const ArrayXd& t);

/// dD/dT of the tagged law, closed form.
double model_derivative(const CalibrationModel& m, double t);

/// −α·T·(T+2β)/(β+T)².
double varshni_derivative(const VarshniParams& p, double t);

struct CalibrationPoint {
  double t; // K
  double d; // MHz
};

/// The exact residual/Jacobian pair fit_calibration hands to the optimizer
/// for the given law, sigma-weighted when sigmas are provided. Polynomial
/// kinds work in the internal [−1, 1]-scaled variable, so their parameters
/// are scaled-basis coefficients. The returned problem owns its data.
optim::ResidualProblem fit_problem(ModelKind kind,
                                   const std::vector<CalibrationPoint>& series,
                                   const std::vector<double>& sigmas = {});

/// Least-squares fit of the requested law with analytic Jacobians.
/// Varshni α, β go through positivity transforms; modified-Varshni B stays
/// free in sign and the fit is started from both a positive and a negative
/// B candidate. Polynomials are fitted on a [−1, 1]-scaled temperature
/// variable and reported in the plain power basis. The monotone flag comes
/// from the derivative sign sampled on a 1 K grid across the fit range
/// (a modified-Varshni fit with B <= 0 is non-monotone by construction).
CalibrationModel fit_calibration(ModelKind kind,
                                 const std::vector<CalibrationPoint>& series,
                                 const std::vector<double>& sigmas = {});

struct Inversion {
  double t;       // K
  double sigma_t; // K
};

/// Thermometry: bisection of eval_model to |ΔT| <= 1e−6 K, then
/// σ_T = σ_D/|dD/dT| at the solution. Requires a monotone-decreasing model
/// and d_meas within the attainable band.
Inversion invert_temperature(const CalibrationModel& m, double d_meas,
                             double sigma_d);

struct ComparisonRow {
  ModelKind kind;
  double ssr;
  double max_abs_residual;
  bool monotone_fit_range;
  bool monotone_extrapolated; // derivative sign over [t_max, 2·t_max]
  int param_count;
};

/// Fits every requested kind and tabulates diagnostics; monotonicity is the
/// discriminator, no winner is chosen.
std::vector<ComparisonRow> model_compare(const std::vector<CalibrationPoint>& series,
                                         const std::vector<ModelKind>& kinds);

} // namespace odmr::thermal

#endif
