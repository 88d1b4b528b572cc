#ifndef ODMR_LINESHAPE_HPP
#define ODMR_LINESHAPE_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <optional>

#include "odmr/errors.hpp"
#include "odmr/optim.hpp"
#include "odmr/spin.hpp"

namespace odmr::lineshape {

using Eigen::ArrayXd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// A sampled ODMR trace: strictly increasing frequencies in MHz and the
/// normalized PL ratio (≈1 off resonance), optionally with a per-point
/// noise estimate.
struct OdmrSpectrum {
  ArrayXd freqs;
  ArrayXd signal;
  std::optional<ArrayXd> sigma;

  OdmrSpectrum(ArrayXd freqs_mhz, ArrayXd signals,
               std::optional<ArrayXd> sigmas = std::nullopt);

  Eigen::Index size() const { return freqs.size(); }
};

/// Two-dip model parameters: centers, full widths at half maximum, dip
/// depths (the ODMR contrasts) and a shared baseline. The two dips are
/// interchangeable, so either center ordering describes the same curve;
/// fitted results are always reported with nu1 <= nu2.
struct DoubletParams {
  double nu1, nu2;       // MHz
  double gamma1, gamma2; // FWHM, MHz
  double c1, c2;         // dimensionless dip depths
  double baseline;       // dimensionless

  DoubletParams(double nu1, double nu2, double gamma1, double gamma2,
                double c1, double c2, double baseline);
};

/// Fit result: parameters, their 7×7 covariance (order nu1, nu2, gamma1,
/// gamma2, c1, c2, baseline), and the derived ZFS values with first-order
/// propagated uncertainties.
struct DoubletFit {
  DoubletParams params;
  MatrixXd covariance;
  double residual_rms; // unweighted RMS of model − data
  spin::ZfsParams derived;
  double sigma_d;
  double sigma_e;
  optim::FitReport report;
};

/// baseline·(1 − c1·L(nu; nu1, gamma1) − c2·L(nu; nu2, gamma2)) with the
/// peak-normalized Lorentzian L(nu; nu0, g) = (g²/4)/((nu−nu0)² + g²/4),
/// so the depth at each well-separated resonance equals its contrast.
double doublet_model(const DoubletParams& p, double nu);
ArrayXd doublet_model(const DoubletParams& p, const ArrayXd& nu);

/// Model samples plus independent Gaussian noise of standard deviation
/// noise_sigma; deterministic for a fixed seed.
OdmrSpectrum simulate_spectrum(const DoubletParams& p, const ArrayXd& freq_grid,
                               double noise_sigma, std::uint64_t rng_seed);

/// Starting point for fit_doublet: median baseline, dip candidates from the
/// two deepest local minima of a 5-point moving average (split symmetrically
/// when only one dip is found), widths from half-depth crossings. Throws
/// FlatSpectrumError when the smoothed dynamic range is below 3× the
/// estimated noise.
DoubletParams initial_guess(const OdmrSpectrum& s);

/// The exact residual/Jacobian pair fit_doublet hands to the optimizer:
/// (model − data), divided by sigma when present, over parameters
/// (nu1, nu2, gamma1, gamma2, c1, c2, baseline) with the same transforms.
/// The returned problem owns a copy of the spectrum.
optim::ResidualProblem fit_problem(const OdmrSpectrum& s);

/// Levenberg-Marquardt fit of all 7 parameters, sigma-weighted when the
/// spectrum carries noise estimates. Centers are ordered nu1 <= nu2 on
/// output; the covariance is permuted along with any swap.
DoubletFit fit_doublet(const OdmrSpectrum& s,
                       std::optional<DoubletParams> guess = std::nullopt);

} // namespace odmr::lineshape

#endif
