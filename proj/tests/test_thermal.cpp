#include <doctest.h>

#include <cmath>
#include <random>

#include "odmr/optim.hpp"
#include "odmr/thermal.hpp"

using Eigen::ArrayXd;
using Eigen::VectorXd;
namespace thermal = odmr::thermal;

namespace {

std::vector<thermal::CalibrationPoint> varshni_series(const thermal::VarshniParams& p,
                                                      double t_lo, double t_hi, int n) {
  std::vector<thermal::CalibrationPoint> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double t = t_lo + (t_hi - t_lo) * double(i) / double(n - 1);
    out.push_back({t, thermal::varshni(p, t)});
  }
  return out;
}

const thermal::VarshniParams kRef{3584.0, 1.06, 559.0};

} // namespace

TEST_CASE("Varshni evaluation against independent arithmetic") {
  // Hand-expanded: D(300) = 3584 − 1.06·300²/(559+300).
  const double expected = 3584.0 - 1.06 * 90000.0 / 859.0;
  CHECK(thermal::varshni(kRef, 300.0) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(thermal::varshni(kRef, 0.0) == 3584.0);

  const ArrayXd t = ArrayXd::LinSpaced(5, 0.0, 600.0);
  const ArrayXd d = thermal::varshni(kRef, t);
  for (Eigen::Index i = 0; i < t.size(); ++i)
    CHECK(d[i] == doctest::Approx(thermal::varshni(kRef, t[i])).epsilon(1e-15));
}

TEST_CASE("Varshni derivative matches a central difference") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> t_draw(1.0, 650.0);
  for (int i = 0; i < 200; ++i) {
    const double t = t_draw(rng);
    const double h = 1e-4 * (1.0 + t);
    const double fd =
        (thermal::varshni(kRef, t + h) - thermal::varshni(kRef, t - h)) / (2.0 * h);
    CHECK(thermal::varshni_derivative(kRef, t) == doctest::Approx(fd).epsilon(1e-7));
  }
  CHECK(thermal::varshni_derivative(kRef, 0.0) == 0.0);
}

TEST_CASE("modified Varshni evaluation and derivative") {
  const thermal::ModVarshniParams p(3600.0, 2.4e-3, 80.0);
  // D(T) = D0 − A·T⁴/(B+T)² at T = 200: independent arithmetic.
  const double expected = 3600.0 - 2.4e-3 * 1.6e9 / (280.0 * 280.0);
  CHECK(thermal::modified_varshni(p, 200.0) == doctest::Approx(expected).epsilon(1e-14));

  thermal::CalibrationModel m;
  m.kind = thermal::ModelKind::modified_varshni;
  m.params = p;
  for (double t : {10.0, 150.0, 420.0}) {
    const double h = 1e-4 * (1.0 + t);
    const double fd = (thermal::modified_varshni(p, t + h) -
                       thermal::modified_varshni(p, t - h)) /
                      (2.0 * h);
    CHECK(thermal::model_derivative(m, t) == doctest::Approx(fd).epsilon(1e-7));
  }
}

TEST_CASE("noiseless Varshni fit recovers the generator") {
  const auto series = varshni_series(kRef, 5.0, 600.0, 25);
  const auto m = thermal::fit_calibration(thermal::ModelKind::varshni, series);
  const auto& p = std::get<thermal::VarshniParams>(m.params);
  CHECK(p.d0 == doctest::Approx(3584.0).epsilon(1e-6));
  CHECK(p.alpha == doctest::Approx(1.06).epsilon(1e-6));
  CHECK(p.beta == doctest::Approx(559.0).epsilon(1e-6));
  CHECK(m.monotone_decreasing);
  CHECK(m.t_min == 5.0);
  CHECK(m.t_max == 600.0);
  CHECK(m.max_abs_residual < 1e-6);
}

TEST_CASE("noisy Varshni fit keeps residuals within the noise scale") {
  std::mt19937_64 rng(101);
  std::normal_distribution<double> noise(0.0, 3.0);
  auto series = varshni_series(kRef, 5.0, 600.0, 25);
  for (auto& pt : series) pt.d += noise(rng);
  const auto m = thermal::fit_calibration(thermal::ModelKind::varshni, series);
  CHECK(m.max_abs_residual < 12.0);
  const auto& p = std::get<thermal::VarshniParams>(m.params);
  CHECK(p.d0 == doctest::Approx(3584.0).epsilon(0.01));
}

TEST_CASE("heteroscedastic weights pull the fit toward precise points") {
  // Two clusters of equal size; the first is trusted 100x more.
  std::vector<thermal::CalibrationPoint> series;
  std::vector<double> sigmas;
  for (int i = 0; i < 6; ++i) {
    series.push_back({double(i * 100 + 10), 3500.0});
    sigmas.push_back(0.1);
  }
  for (int i = 0; i < 6; ++i) {
    series.push_back({double(i * 100 + 60), 3400.0});
    sigmas.push_back(10.0);
  }
  const auto weighted =
      thermal::fit_calibration(thermal::ModelKind::linear, series, sigmas);
  const auto unweighted = thermal::fit_calibration(thermal::ModelKind::linear, series);
  const double w_mid = thermal::eval_model(weighted, 300.0);
  const double u_mid = thermal::eval_model(unweighted, 300.0);
  CHECK(w_mid > u_mid);       // pulled toward the 3500 MHz cluster
  CHECK(w_mid > 3490.0);
  CHECK(u_mid < 3460.0);
}

TEST_CASE("cubic and quintic fits recover exact polynomial generators") {
  SUBCASE("cubic") {
    const std::vector<double> truth{3600.0, -0.5, 1.2e-3, -9e-7};
    std::vector<thermal::CalibrationPoint> series;
    for (int i = 0; i < 13; ++i) {
      const double t = 5.0 + 595.0 * i / 12.0;
      series.push_back(
          {t, truth[0] + truth[1] * t + truth[2] * t * t + truth[3] * t * t * t});
    }
    const auto m = thermal::fit_calibration(thermal::ModelKind::poly3, series);
    const auto& c = std::get<thermal::PolyParams>(m.params).coefficients;
    REQUIRE(c.size() == 4);
    for (size_t k = 0; k < 4; ++k)
      CHECK(c[k] == doctest::Approx(truth[k]).epsilon(1e-6));
  }
  SUBCASE("quintic") {
    const std::vector<double> truth{3600.0, -0.5, 1.2e-3, -9e-7, 2e-10, -1e-13};
    std::vector<thermal::CalibrationPoint> series;
    for (int i = 0; i < 17; ++i) {
      const double t = 5.0 + 595.0 * i / 16.0;
      double acc = 0.0;
      for (size_t k = truth.size(); k-- > 0;) acc = acc * t + truth[k];
      series.push_back({t, acc});
    }
    const auto m = thermal::fit_calibration(thermal::ModelKind::poly5, series);
    const auto& c = std::get<thermal::PolyParams>(m.params).coefficients;
    REQUIRE(c.size() == 6);
    for (size_t k = 0; k < 6; ++k)
      CHECK(c[k] == doctest::Approx(truth[k]).epsilon(1e-5));
  }
}

TEST_CASE("polynomial prediction variance is invariant under the basis change") {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> noise(0.0, 2.0);
  std::vector<thermal::CalibrationPoint> series;
  for (int i = 0; i < 21; ++i) {
    const double t = 10.0 + 580.0 * i / 20.0;
    series.push_back({t, thermal::varshni(kRef, t) + noise(rng)});
  }

  const auto m = thermal::fit_calibration(thermal::ModelKind::poly3, series);

  // Independent route: solve the scaled-basis problem directly; its
  // covariance lives in the basis the solver used.
  const auto problem = thermal::fit_problem(thermal::ModelKind::poly3, series);
  VectorXd theta0 = VectorXd::Zero(4);
  theta0[0] = 3500.0;
  const auto report = odmr::optim::solve(problem, theta0);
  REQUIRE(report.converged);

  const double t_lo = 10.0, t_hi = 590.0;
  const double scale = 2.0 / (t_hi - t_lo), shift = -(t_hi + t_lo) / (t_hi - t_lo);
  for (double t : {50.0, 300.0, 550.0}) {
    VectorXd g_power(4), g_scaled(4);
    const double x = scale * t + shift;
    for (int k = 0; k < 4; ++k) {
      g_power[k] = std::pow(t, k);
      g_scaled[k] = std::pow(x, k);
    }
    const double var_power = g_power.dot(m.covariance * g_power);
    const double var_scaled = g_scaled.dot(report.covariance * g_scaled);
    CHECK(var_power == doctest::Approx(var_scaled).epsilon(1e-6));
  }
}

TEST_CASE("modified Varshni fitted to Varshni-shaped data turns non-monotone") {
  const auto series = varshni_series(kRef, 5.0, 600.0, 25);
  const auto m = thermal::fit_calibration(thermal::ModelKind::modified_varshni, series);
  const auto& p = std::get<thermal::ModVarshniParams>(m.params);
  CHECK(p.b < 0.0);
  CHECK_FALSE(m.monotone_decreasing);
  CHECK_THROWS_AS(thermal::invert_temperature(m, 3500.0, 0.0),
                  odmr::NonMonotoneModelError);
}

TEST_CASE("modified Varshni recovers its own generator") {
  const thermal::ModVarshniParams truth(3600.0, 1.8e-3, 120.0);
  std::vector<thermal::CalibrationPoint> series;
  for (int i = 0; i < 20; ++i) {
    const double t = 5.0 + 595.0 * i / 19.0;
    series.push_back({t, thermal::modified_varshni(truth, t)});
  }
  const auto m = thermal::fit_calibration(thermal::ModelKind::modified_varshni, series);
  const auto& p = std::get<thermal::ModVarshniParams>(m.params);
  CHECK(p.d0 == doctest::Approx(3600.0).epsilon(1e-6));
  CHECK(p.a == doctest::Approx(1.8e-3).epsilon(1e-5));
  CHECK(p.b == doctest::Approx(120.0).epsilon(1e-5));
  CHECK(m.monotone_decreasing);
}

TEST_CASE("an engineered cubic passes in range but fails extrapolated monotonicity") {
  // f'(T) = −(T − 700)(T − 2000)/1e5: decreasing on [5, 600], turning at 700.
  const auto f = [](double t) {
    return -(t * t * t / 3.0 - 1350.0 * t * t + 1.4e6 * t) / 1e5 + 8000.0;
  };
  std::vector<thermal::CalibrationPoint> series;
  for (int i = 0; i < 13; ++i) {
    const double t = 5.0 + 595.0 * i / 12.0;
    series.push_back({t, f(t)});
  }
  const auto rows = thermal::model_compare(series, {thermal::ModelKind::poly3});
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].monotone_fit_range);
  CHECK_FALSE(rows[0].monotone_extrapolated);
  CHECK(rows[0].param_count == 4);
  CHECK(rows[0].max_abs_residual < 1e-6);
}

TEST_CASE("model_compare separates monotone laws from flagged ones") {
  const auto series = varshni_series(kRef, 5.0, 600.0, 25);
  const auto rows = thermal::model_compare(
      series, {thermal::ModelKind::varshni, thermal::ModelKind::modified_varshni,
               thermal::ModelKind::poly3, thermal::ModelKind::poly5,
               thermal::ModelKind::linear});
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].monotone_fit_range);
  CHECK(rows[0].monotone_extrapolated);
  CHECK(rows[0].ssr < 1e-10);
  CHECK_FALSE(rows[1].monotone_fit_range); // modified Varshni: B < 0
  CHECK_FALSE(rows[2].monotone_extrapolated); // cubic turns past the range
  CHECK(rows[4].monotone_fit_range); // linear, crude but monotone
  CHECK(rows[4].max_abs_residual > rows[0].max_abs_residual);
}

TEST_CASE("inversion round trip and endpoint behavior") {
  const auto series = varshni_series(kRef, 0.0, 600.0, 25);
  const auto m = thermal::fit_calibration(thermal::ModelKind::varshni, series);

  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> t_draw(0.0, 600.0);
  for (int i = 0; i < 300; ++i) {
    const double t = t_draw(rng);
    const auto inv = thermal::invert_temperature(m, thermal::eval_model(m, t), 0.0);
    CHECK(std::abs(inv.t - t) <= 1e-5);
    CHECK(inv.sigma_t == 0.0);
  }

  const auto lo = thermal::invert_temperature(m, thermal::eval_model(m, 0.0), 0.0);
  CHECK(std::abs(lo.t - 0.0) <= 1e-5);
  const auto hi = thermal::invert_temperature(m, thermal::eval_model(m, 600.0), 0.0);
  CHECK(std::abs(hi.t - 600.0) <= 1e-5);

  CHECK_THROWS_AS(thermal::invert_temperature(m, thermal::eval_model(m, 0.0) + 1.0, 0.0),
                  odmr::OutOfCalibrationRangeError);
  CHECK_THROWS_AS(
      thermal::invert_temperature(m, thermal::eval_model(m, 600.0) - 1.0, 0.0),
      odmr::OutOfCalibrationRangeError);
}

TEST_CASE("inversion propagates sigma through the local slope") {
  const auto series = varshni_series(kRef, 5.0, 600.0, 25);
  const auto m = thermal::fit_calibration(thermal::ModelKind::varshni, series);
  const double t_star = 300.0;
  const double d_star = thermal::eval_model(m, t_star);
  const double sigma_d = 0.5;
  const auto inv = thermal::invert_temperature(m, d_star, sigma_d);
  const double slope = thermal::model_derivative(m, inv.t);
  CHECK(inv.sigma_t == doctest::Approx(sigma_d / std::abs(slope)).epsilon(1e-9));
}

TEST_CASE("fit preconditions and naming round trips") {
  using thermal::ModelKind;
  const auto series = varshni_series(kRef, 5.0, 600.0, 3);
  CHECK_THROWS_AS(thermal::fit_calibration(ModelKind::varshni, series),
                  odmr::InsufficientDataError);

  // Duplicated temperatures do not count toward the requirement.
  std::vector<thermal::CalibrationPoint> dup(8, {300.0, 3470.0});
  CHECK_THROWS_AS(thermal::fit_calibration(ModelKind::linear, dup),
                  odmr::InsufficientDataError);

  for (auto kind : {ModelKind::varshni, ModelKind::modified_varshni, ModelKind::poly3,
                    ModelKind::poly5, ModelKind::linear})
    CHECK(thermal::model_kind_from_string(thermal::to_string(kind)) == kind);
  CHECK_THROWS_AS(thermal::model_kind_from_string("quartic"), std::invalid_argument);

  CHECK(thermal::parameter_count(ModelKind::poly5) == 6);
  CHECK_THROWS_AS(thermal::VarshniParams(3584.0, -1.0, 559.0), std::invalid_argument);
  CHECK_THROWS_AS(thermal::VarshniParams(3584.0, 1.0, 0.0), std::invalid_argument);

  thermal::CalibrationModel m;
  m.kind = ModelKind::linear;
  m.params = thermal::LinearParams{3500.0, -0.5};
  CHECK_THROWS_AS(thermal::eval_model(m, -1.0), std::invalid_argument);
}

TEST_CASE("calibration fit Jacobians match central differences on every family") {
  std::mt19937_64 rng(301);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<thermal::CalibrationPoint> series;
  for (int i = 0; i < 15; ++i) {
    const double t = 10.0 + 580.0 * i / 14.0;
    series.push_back({t, thermal::varshni(kRef, t) + noise(rng)});
  }

  using thermal::ModelKind;
  const auto probe = [&](ModelKind kind, const VectorXd& theta) {
    auto problem = thermal::fit_problem(kind, series);
    const Eigen::MatrixXd an = problem.jacobian(theta);
    problem.jacobian = nullptr; // force the FD route
    const Eigen::MatrixXd fd = odmr::optim::jacobian_fd(problem, theta);
    const double scale = std::max(1.0, an.lpNorm<Eigen::Infinity>());
    CHECK((fd - an).lpNorm<Eigen::Infinity>() / scale < 1e-6);
  };

  VectorXd varshni_theta(3);
  varshni_theta << 3580.0, 1.0, 500.0;
  probe(ModelKind::varshni, varshni_theta);

  VectorXd mv_theta(3);
  mv_theta << 3580.0, 2e-3, 100.0;
  probe(ModelKind::modified_varshni, mv_theta);

  VectorXd lin_theta(2);
  lin_theta << 3500.0, -0.3;
  probe(ModelKind::linear, lin_theta);

  VectorXd p3_theta(4);
  p3_theta << 3500.0, -60.0, 5.0, 2.0; // scaled-basis coefficients
  probe(ModelKind::poly3, p3_theta);

  VectorXd p5_theta(6);
  p5_theta << 3500.0, -60.0, 5.0, 2.0, -1.0, 0.5;
  probe(ModelKind::poly5, p5_theta);
}
