#include "odmr/lineshape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <vector>

namespace odmr::lineshape {

namespace {

double lorentzian(double nu, double nu0, double gamma) {
  const double q = gamma * gamma / 4.0;
  const double d = nu - nu0;
  return q / (d * d + q);
}

double median(std::vector<double> v) {
  const size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + n / 2, v.end());
  double hi = v[n / 2];
  if (n % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + n / 2 - 1, v.end());
  return 0.5 * (v[n / 2 - 1] + hi);
}

// Robust noise estimate from successive differences; for Gaussian noise
// median|x_{i+1} − x_i| = sigma·sqrt(2)·0.6745.
double estimate_noise(const ArrayXd& signal) {
  std::vector<double> diffs(static_cast<size_t>(signal.size() - 1));
  for (Eigen::Index i = 0; i + 1 < signal.size(); ++i)
    diffs[static_cast<size_t>(i)] = std::abs(signal[i + 1] - signal[i]);
  return median(std::move(diffs)) / (std::sqrt(2.0) * 0.6745);
}

ArrayXd moving_average(const ArrayXd& x, Eigen::Index window) {
  const Eigen::Index n = x.size();
  const Eigen::Index half = window / 2;
  ArrayXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, i - half);
    const Eigen::Index hi = std::min(n - 1, i + half);
    out[i] = x.segment(lo, hi - lo + 1).mean();
  }
  return out;
}

struct Dip {
  Eigen::Index index;
  double depth;
};

// FWHM estimate from where the smoothed signal re-crosses baseline − depth/2
// on either side of the dip, with sub-grid interpolation.
double width_from_half_depth(const ArrayXd& freqs, const ArrayXd& smooth,
                             Eigen::Index dip, double baseline) {
  const double level = baseline - 0.5 * (baseline - smooth[dip]);
  const double grid_step = (freqs[freqs.size() - 1] - freqs[0]) / double(freqs.size() - 1);

  double left = freqs[0] - 0.5 * grid_step;
  bool found_left = false;
  for (Eigen::Index i = dip; i > 0; --i) {
    if (smooth[i - 1] >= level) {
      const double f = (level - smooth[i]) / (smooth[i - 1] - smooth[i]);
      left = freqs[i] + f * (freqs[i - 1] - freqs[i]);
      found_left = true;
      break;
    }
  }
  double right = freqs[freqs.size() - 1] + 0.5 * grid_step;
  bool found_right = false;
  for (Eigen::Index i = dip; i + 1 < smooth.size(); ++i) {
    if (smooth[i + 1] >= level) {
      const double f = (level - smooth[i]) / (smooth[i + 1] - smooth[i]);
      right = freqs[i] + f * (freqs[i + 1] - freqs[i]);
      found_right = true;
      break;
    }
  }
  if (found_left && found_right) return right - left;
  if (found_left) return 2.0 * (freqs[dip] - left);
  if (found_right) return 2.0 * (right - freqs[dip]);
  return 5.0 * grid_step;
}

struct WeightedResiduals {
  std::shared_ptr<const OdmrSpectrum> s;

  // theta = (nu1, nu2, gamma1, gamma2, c1, c2, baseline)
  VectorXd operator()(const VectorXd& t) const {
    ArrayXd model = t[6] * (1.0 - t[4] * lorentz_array(t[0], t[2]) -
                            t[5] * lorentz_array(t[1], t[3]));
    ArrayXd r = model - s->signal;
    if (s->sigma) r /= *s->sigma;
    return r.matrix();
  }

  ArrayXd lorentz_array(double nu0, double gamma) const {
    const double q = gamma * gamma / 4.0;
    return q / ((s->freqs - nu0).square() + q);
  }

  MatrixXd jacobian(const VectorXd& t) const {
    const ArrayXd& nu = s->freqs;
    MatrixXd j(nu.size(), 7);
    for (int k = 0; k < 2; ++k) {
      const double nu0 = t[k], gamma = t[2 + k], c = t[4 + k];
      const double q = gamma * gamma / 4.0;
      const ArrayXd d = nu - nu0;
      const ArrayXd denom = d.square() + q;
      const ArrayXd lor = q / denom;
      // dL/dnu0 = 2 q d / denom², dL/dgamma = d²·(gamma/2)/denom²
      j.col(k) = (-t[6] * c * 2.0 * q * d / denom.square()).matrix();
      j.col(2 + k) = (-t[6] * c * d.square() * (gamma / 2.0) / denom.square()).matrix();
      j.col(4 + k) = (-t[6] * lor).matrix();
    }
    j.col(6) = (1.0 - t[4] * lorentz_array(t[0], t[2]) - t[5] * lorentz_array(t[1], t[3]))
                   .matrix();
    if (s->sigma)
      j.array().colwise() /= *s->sigma;
    return j;
  }
};

} // namespace

OdmrSpectrum::OdmrSpectrum(ArrayXd freqs_mhz, ArrayXd signals,
                           std::optional<ArrayXd> sigmas)
    : freqs(std::move(freqs_mhz)), signal(std::move(signals)), sigma(std::move(sigmas)) {
  if (freqs.size() < 8)
    throw std::invalid_argument("OdmrSpectrum: needs at least 8 points");
  if (signal.size() != freqs.size())
    throw std::invalid_argument("OdmrSpectrum: freqs/signal length mismatch");
  if (!freqs.isFinite().all() || !signal.isFinite().all())
    throw std::invalid_argument("OdmrSpectrum: values must be finite");
  for (Eigen::Index i = 0; i + 1 < freqs.size(); ++i)
    if (!(freqs[i] < freqs[i + 1]))
      throw std::invalid_argument("OdmrSpectrum: freqs must be strictly increasing");
  if (sigma) {
    if (sigma->size() != freqs.size())
      throw std::invalid_argument("OdmrSpectrum: sigma length mismatch");
    if (!sigma->isFinite().all() || (sigma->array() <= 0.0).any())
      throw std::invalid_argument("OdmrSpectrum: sigma must be finite and positive");
  }
}

DoubletParams::DoubletParams(double nu1_, double nu2_, double gamma1_, double gamma2_,
                             double c1_, double c2_, double baseline_)
    : nu1(nu1_), nu2(nu2_), gamma1(gamma1_), gamma2(gamma2_),
      c1(c1_), c2(c2_), baseline(baseline_) {
  if (!(gamma1 > 0.0 && gamma2 > 0.0))
    throw std::invalid_argument("DoubletParams: widths must be positive");
  if (!(c1 >= 0.0 && c1 < 1.0 && c2 >= 0.0 && c2 < 1.0))
    throw std::invalid_argument("DoubletParams: contrasts must lie in [0, 1)");
  if (!(baseline > 0.0))
    throw std::invalid_argument("DoubletParams: baseline must be positive");
}

double doublet_model(const DoubletParams& p, double nu) {
  return p.baseline * (1.0 - p.c1 * lorentzian(nu, p.nu1, p.gamma1) -
                       p.c2 * lorentzian(nu, p.nu2, p.gamma2));
}

ArrayXd doublet_model(const DoubletParams& p, const ArrayXd& nu) {
  const double q1 = p.gamma1 * p.gamma1 / 4.0;
  const double q2 = p.gamma2 * p.gamma2 / 4.0;
  return p.baseline * (1.0 - p.c1 * q1 / ((nu - p.nu1).square() + q1) -
                       p.c2 * q2 / ((nu - p.nu2).square() + q2));
}

OdmrSpectrum simulate_spectrum(const DoubletParams& p, const ArrayXd& freq_grid,
                               double noise_sigma, std::uint64_t rng_seed) {
  if (noise_sigma < 0.0)
    throw std::invalid_argument("simulate_spectrum: noise_sigma must be >= 0");
  ArrayXd signal = doublet_model(p, freq_grid);
  if (noise_sigma > 0.0) {
    std::mt19937_64 rng(rng_seed);
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (Eigen::Index i = 0; i < signal.size(); ++i) signal[i] += noise(rng);
  }
  return OdmrSpectrum(freq_grid, std::move(signal));
}

DoubletParams initial_guess(const OdmrSpectrum& s) {
  const ArrayXd smooth = moving_average(s.signal, 5);
  const double noise = estimate_noise(s.signal);
  const double range = smooth.maxCoeff() - smooth.minCoeff();
  if (range <= 3.0 * noise)
    throw FlatSpectrumError("initial_guess: spectrum dynamic range below noise floor");

  std::vector<double> values(s.signal.data(), s.signal.data() + s.signal.size());
  const double baseline = median(std::move(values));
  if (!(baseline > 0.0))
    throw std::invalid_argument("initial_guess: non-positive baseline estimate");

  std::vector<Dip> dips;
  for (Eigen::Index i = 1; i + 1 < smooth.size(); ++i) {
    if (smooth[i] < smooth[i - 1] && smooth[i] <= smooth[i + 1]) {
      const double depth = baseline - smooth[i];
      if (depth > 0.0) dips.push_back({i, depth});
    }
  }
  if (dips.empty())
    throw FlatSpectrumError("initial_guess: no dip below the baseline");
  std::sort(dips.begin(), dips.end(),
            [](const Dip& a, const Dip& b) { return a.depth > b.depth; });

  const Dip first = dips.front();
  const Dip* second = nullptr;
  for (size_t k = 1; k < dips.size(); ++k) {
    if (std::abs(dips[k].index - first.index) >= 5) {
      second = &dips[k];
      break;
    }
  }

  const auto clamp_contrast = [](double c) { return std::clamp(c, 1e-6, 0.999); };

  if (second) {
    Eigen::Index ia = first.index, ib = second->index;
    double da = first.depth, db = second->depth;
    if (s.freqs[ia] > s.freqs[ib]) {
      std::swap(ia, ib);
      std::swap(da, db);
    }
    const double wa = width_from_half_depth(s.freqs, smooth, ia, baseline);
    const double wb = width_from_half_depth(s.freqs, smooth, ib, baseline);
    return DoubletParams(s.freqs[ia], s.freqs[ib], wa, wb,
                         clamp_contrast(da / baseline), clamp_contrast(db / baseline),
                         baseline);
  }

  // Single minimum: a merged doublet. Split symmetrically by half the width.
  const double w = width_from_half_depth(s.freqs, smooth, first.index, baseline);
  const double center = s.freqs[first.index];
  const double c = clamp_contrast(0.5 * first.depth / baseline);
  return DoubletParams(center - 0.5 * w, center + 0.5 * w, w, w, c, c, baseline);
}

optim::ResidualProblem fit_problem(const OdmrSpectrum& s) {
  WeightedResiduals res{std::make_shared<const OdmrSpectrum>(s)};
  optim::ResidualProblem problem;
  problem.residual = [res](const VectorXd& t) { return res(t); };
  problem.jacobian = [res](const VectorXd& t) { return res.jacobian(t); };
  problem.parameter_count = 7;
  problem.residual_count = s.size();
  problem.transforms = {
      optim::Transform::Free(),        optim::Transform::Free(),
      optim::Transform::Positive(),    optim::Transform::Positive(),
      optim::Transform::Boxed(0, 1),   optim::Transform::Boxed(0, 1),
      optim::Transform::Positive(),
  };
  return problem;
}

DoubletFit fit_doublet(const OdmrSpectrum& s, std::optional<DoubletParams> guess) {
  const DoubletParams g = guess ? *guess : initial_guess(s);
  const optim::ResidualProblem problem = fit_problem(s);

  VectorXd theta0(7);
  theta0 << g.nu1, g.nu2, g.gamma1, g.gamma2,
      std::clamp(g.c1, 1e-9, 1.0 - 1e-9), std::clamp(g.c2, 1e-9, 1.0 - 1e-9),
      g.baseline;
  // Exactly coincident center guesses leave the two dips indistinguishable;
  // nudge them apart.
  if (theta0[0] == theta0[1]) {
    theta0[0] -= 0.25 * g.gamma1;
    theta0[1] += 0.25 * g.gamma2;
  }

  optim::FitReport report = optim::solve(problem, theta0);
  if (!report.converged)
    throw FitDivergedError("fit_doublet: no convergence within the iteration cap");

  VectorXd t = report.theta_hat;
  MatrixXd cov = report.covariance;
  if (t[0] > t[1]) {
    std::vector<Eigen::Index> perm{1, 0, 3, 2, 5, 4, 6};
    VectorXd ts(7);
    MatrixXd cs(7, 7);
    for (Eigen::Index i = 0; i < 7; ++i) {
      ts[i] = t[perm[static_cast<size_t>(i)]];
      for (Eigen::Index k = 0; k < 7; ++k)
        cs(i, k) = cov(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(k)]);
    }
    t = ts;
    cov = cs;
  }

  DoubletParams fitted(t[0], t[1], t[2], t[3], t[4], t[5], t[6]);
  const ArrayXd residual = doublet_model(fitted, s.freqs) - s.signal;
  const double rms = std::sqrt(residual.square().mean());

  spin::ZfsParams derived(0.5 * (t[0] + t[1]), 0.5 * (t[1] - t[0]));
  const double var1 = cov(0, 0), var2 = cov(1, 1), cov12 = cov(0, 1);
  const double sigma_d = 0.5 * std::sqrt(std::max(0.0, var1 + var2 + 2.0 * cov12));
  const double sigma_e = 0.5 * std::sqrt(std::max(0.0, var1 + var2 - 2.0 * cov12));

  return DoubletFit{fitted, std::move(cov), rms, derived, sigma_d, sigma_e,
                    std::move(report)};
}

} // namespace odmr::lineshape
