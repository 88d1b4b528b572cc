// odmrkit: command-line front end for ODMR spectrum simulation and fitting,
// temperature calibration, thermometry inversion, lattice-volume correlation
// and ensemble statistics. All outputs are written atomically; every command
// is deterministic given its inputs and seed.

#include <CLI11.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "odmr/csv.hpp"
#include "odmr/errors.hpp"
#include "odmr/lattice.hpp"
#include "odmr/lineshape.hpp"
#include "odmr/report.hpp"
#include "odmr/spin.hpp"
#include "odmr/stats.hpp"
#include "odmr/thermal.hpp"

namespace fs = std::filesystem;
using odmr::io::format_double;
using odmr::report::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitBadInput = 2;
constexpr int kExitFitFailed = 3;
constexpr int kExitFlatSpectrum = 4;
constexpr int kExitOutOfRange = 5;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const odmr::FlatSpectrumError*>(&e)) return kExitFlatSpectrum;
  if (dynamic_cast<const odmr::OutOfCalibrationRangeError*>(&e)) return kExitOutOfRange;
  if (dynamic_cast<const odmr::RangeMismatchError*>(&e)) return kExitOutOfRange;
  if (dynamic_cast<const odmr::FitDivergedError*>(&e)) return kExitFitFailed;
  if (dynamic_cast<const odmr::SingularNormalMatrixError*>(&e)) return kExitFitFailed;
  if (dynamic_cast<const odmr::NonFiniteResidualError*>(&e)) return kExitFitFailed;
  if (dynamic_cast<const odmr::NonMonotoneModelError*>(&e)) return kExitFitFailed;
  return kExitBadInput; // parse errors, bad options, insufficient data
}

// Relative output paths land in $ODMRKIT_OUT_DIR when it is set.
fs::path resolve_out(const fs::path& path) {
  fs::path out = path;
  if (out.is_relative()) {
    if (const char* dir = std::getenv("ODMRKIT_OUT_DIR"); dir && *dir)
      out = fs::path(dir) / out;
  }
  if (const fs::path parent = out.parent_path(); !parent.empty())
    fs::create_directories(parent);
  return out;
}

void write_json_file(const fs::path& path, const json& doc) {
  odmr::io::write_text_atomic(path.string(), doc.dump(2) + "\n");
}

fs::path with_extension(fs::path p, const std::string& ext) {
  p.replace_extension(ext);
  return p;
}

json load_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw odmr::ParseError(path.string() + ": cannot open");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw odmr::ParseError(path.string() + ": " + e.what());
  }
}

json regression_to_json(const odmr::lattice::RegressionResult& r) {
  return {{"slope_ghz_angstrom3", r.slope},
          {"intercept_ghz", r.intercept},
          {"slope_sigma_ghz_angstrom3", r.slope_sigma},
          {"intercept_sigma_ghz", r.intercept_sigma},
          {"r_squared", r.r_squared}};
}

struct SimulateConfig {
  double d = 3480.0, e = 70.0;
  double gamma = 40.0;
  std::optional<double> gamma1, gamma2;
  double c1 = 0.046, c2 = 0.046;
  double baseline = 1.0;
  double from = 3000.0, to = 4000.0;
  int points = 201;
  double noise = 0.0;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_simulate(const SimulateConfig& cfg) {
  if (cfg.noise > 0.0 && !cfg.seed) {
    std::cerr << "error: --noise > 0 requires --seed for reproducibility\n";
    return kExitBadInput;
  }
  if (!(cfg.from < cfg.to) || cfg.points < 2) {
    std::cerr << "error: need --from < --to and --points >= 2\n";
    return kExitBadInput;
  }

  const odmr::spin::ZfsParams zfs(cfg.d, cfg.e);
  const auto pair = odmr::spin::transitions_from_zfs(zfs);
  const double g1 = cfg.gamma1.value_or(cfg.gamma);
  const double g2 = cfg.gamma2.value_or(cfg.gamma);
  const odmr::lineshape::DoubletParams params(pair.nu1, pair.nu2, g1, g2, cfg.c1,
                                              cfg.c2, cfg.baseline);

  const Eigen::ArrayXd grid =
      Eigen::ArrayXd::LinSpaced(cfg.points, cfg.from, cfg.to);
  const auto spectrum = odmr::lineshape::simulate_spectrum(
      params, grid, cfg.noise, cfg.seed.value_or(0));

  const fs::path out = resolve_out(cfg.out);
  std::ostringstream csv;
  odmr::io::write_spectrum(csv, spectrum);
  odmr::io::write_text_atomic(out.string(), csv.str());

  json doc = odmr::report::make_report("simulate");
  doc["params"] = {{"d_mhz", cfg.d},         {"e_mhz", cfg.e},
                   {"nu1_mhz", pair.nu1},    {"nu2_mhz", pair.nu2},
                   {"gamma1_mhz", g1},       {"gamma2_mhz", g2},
                   {"c1", cfg.c1},           {"c2", cfg.c2},
                   {"baseline", cfg.baseline}};
  doc["grid"] = {{"from_mhz", cfg.from}, {"to_mhz", cfg.to}, {"points", cfg.points}};
  doc["noise_sigma"] = cfg.noise;
  if (cfg.seed)
    doc["seed"] = *cfg.seed;
  else
    doc["seed"] = nullptr;
  doc["output"] = out.string();
  write_json_file(with_extension(out, ".json"), doc);

  std::cout << "wrote " << out.string() << "\n";
  return kExitOk;
}

json fit_to_json(const std::string& input, const odmr::lineshape::DoubletFit& fit) {
  json doc = odmr::report::make_report("fit-spectrum");
  doc["input"] = input;
  const auto& p = fit.params;
  doc["params"] = {{"nu1_mhz", p.nu1},       {"nu2_mhz", p.nu2},
                   {"gamma1_mhz", p.gamma1}, {"gamma2_mhz", p.gamma2},
                   {"c1", p.c1},             {"c2", p.c2},
                   {"baseline", p.baseline}};
  const auto sigma = [&fit](int i) { return std::sqrt(fit.covariance(i, i)); };
  doc["sigmas"] = {{"nu1_mhz", sigma(0)},    {"nu2_mhz", sigma(1)},
                   {"gamma1_mhz", sigma(2)}, {"gamma2_mhz", sigma(3)},
                   {"c1", sigma(4)},         {"c2", sigma(5)},
                   {"baseline", sigma(6)}};
  doc["zfs"] = {{"d_mhz", fit.derived.d},
                {"e_mhz", fit.derived.e},
                {"sigma_d_mhz", fit.sigma_d},
                {"sigma_e_mhz", fit.sigma_e}};
  doc["residual_rms"] = fit.residual_rms;
  doc["fit"] = {{"converged", fit.report.converged},
                {"iterations", fit.report.iterations},
                {"ssr", fit.report.ssr},
                {"gradient_norm", fit.report.gradient_norm}};
  return doc;
}

struct FitJob {
  std::string input;
  fs::path output;
  int code = kExitOk;
  std::string message;
};

int cmd_fit_spectrum(const std::vector<std::string>& inputs,
                     const std::string& out_opt, int jobs) {
  if (inputs.size() > 1 && !out_opt.empty()) {
    std::cerr << "error: --out only applies to a single input; batch outputs are "
                 "derived per input\n";
    return kExitBadInput;
  }
  if (jobs < 1) {
    std::cerr << "error: --jobs must be >= 1\n";
    return kExitBadInput;
  }

  std::vector<FitJob> work(inputs.size());
  for (size_t i = 0; i < inputs.size(); ++i) {
    work[i].input = inputs[i];
    const fs::path fallback = with_extension(fs::path(inputs[i]), ".fit.json");
    work[i].output = resolve_out(out_opt.empty() ? fallback : fs::path(out_opt));
  }

  const auto run_one = [](FitJob& job) {
    try {
      const auto spectrum = odmr::io::read_spectrum_file(job.input);
      const auto fit = odmr::lineshape::fit_doublet(spectrum);
      write_json_file(job.output, fit_to_json(job.input, fit));
      job.message = "wrote " + job.output.string();
    } catch (const std::exception& e) {
      job.code = exit_code_for(e);
      job.message = std::string("error: ") + e.what();
    }
  };

  if (jobs == 1 || work.size() == 1) {
    for (auto& job : work) run_one(job);
  } else {
    std::atomic<size_t> next{0};
    const size_t workers = std::min<size_t>(static_cast<size_t>(jobs), work.size());
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (size_t i = next.fetch_add(1); i < work.size(); i = next.fetch_add(1))
          run_one(work[i]);
      });
    for (auto& t : pool) t.join();
  }

  int rc = kExitOk;
  for (const auto& job : work) {
    std::ostream& os = job.code == kExitOk ? std::cout : std::cerr;
    os << job.input << ": " << job.message << "\n";
    if (job.code != kExitOk && rc == kExitOk) rc = job.code;
  }
  return rc;
}

int cmd_calibrate(const std::string& input, const std::string& model_name,
                  const std::string& out, const std::string& curve_opt) {
  const auto kind = odmr::thermal::model_kind_from_string(model_name);
  const auto series = odmr::io::read_series_file(input);
  const auto model = odmr::thermal::fit_calibration(kind, series.points, series.sigmas);

  if (!model.monotone_decreasing)
    std::cerr << "warning: fitted " << odmr::thermal::to_string(kind)
              << " model is not monotone decreasing; it cannot be inverted for "
                 "thermometry\n";

  json doc = odmr::report::calibration_to_json(model);
  doc["input"] = input;
  doc["value_column"] = series.value_column;
  doc["n_points"] = series.points.size();
  const fs::path out_path = resolve_out(out);
  write_json_file(out_path, doc);

  const fs::path curve_path =
      resolve_out(curve_opt.empty() ? with_extension(fs::path(out), ".tsv")
                                    : fs::path(curve_opt));
  std::ostringstream tsv;
  tsv << "temp_k\tfit_mhz\n";
  const int samples = 201;
  for (int i = 0; i < samples; ++i) {
    const double t =
        model.t_min + (model.t_max - model.t_min) * double(i) / double(samples - 1);
    tsv << format_double(t) << '\t' << format_double(odmr::thermal::eval_model(model, t))
        << '\n';
  }
  odmr::io::write_text_atomic(curve_path.string(), tsv.str());

  std::cout << "wrote " << out_path.string() << " and " << curve_path.string() << "\n";
  return kExitOk;
}

int cmd_invert(const std::string& calibration_path, double d, double sigma_d,
               const std::string& out) {
  const json doc = load_json_file(calibration_path);
  const auto model = odmr::report::calibration_from_json(doc);
  const auto inv = odmr::thermal::invert_temperature(model, d, sigma_d);

  json rep = odmr::report::make_report("invert");
  rep["calibration"] = calibration_path;
  rep["model"] = odmr::thermal::to_string(model.kind);
  rep["d_mhz"] = d;
  rep["sigma_d_mhz"] = sigma_d;
  rep["t_k"] = inv.t;
  rep["sigma_t_k"] = inv.sigma_t;
  const fs::path out_path = resolve_out(out);
  write_json_file(out_path, rep);
  std::cout << "wrote " << out_path.string() << "\n";
  return kExitOk;
}

int cmd_correlate(const std::string& lattice_path, const std::string& series_path,
                  const std::string& out, const std::string& pairs_opt) {
  const auto records = odmr::io::read_lattice_file(lattice_path);
  const auto series = odmr::io::read_series_file(series_path);
  const auto vinv_model = odmr::lattice::fit_inverse_volume(records);
  const auto reg = odmr::lattice::regress_d_vs_vinv(series.points, vinv_model);

  json doc = odmr::report::make_report("correlate");
  doc["lattice_input"] = lattice_path;
  doc["series_input"] = series_path;
  doc["regression"] = regression_to_json(reg);
  doc["vinv_fit"] = odmr::report::calibration_to_json(vinv_model);
  const fs::path out_path = resolve_out(out);
  write_json_file(out_path, doc);

  const fs::path pairs_path =
      resolve_out(pairs_opt.empty() ? with_extension(fs::path(out), ".tsv")
                                    : fs::path(pairs_opt));
  std::ostringstream tsv;
  tsv << "vinv_inv_angstrom3\td_mhz\n";
  for (const auto& p : series.points)
    tsv << format_double(odmr::thermal::eval_model(vinv_model, p.t)) << '\t'
        << format_double(p.d) << '\n';
  odmr::io::write_text_atomic(pairs_path.string(), tsv.str());

  std::cout << "wrote " << out_path.string() << " and " << pairs_path.string() << "\n";
  return kExitOk;
}

int cmd_stats(const std::string& input, double bin_width, const std::string& out,
              const std::string& histogram_opt) {
  const auto values = odmr::io::read_values_file(input);
  const auto summary = odmr::stats::summarize(values, bin_width);

  json doc = odmr::report::make_report("stats");
  doc["input"] = input;
  doc["n"] = summary.n;
  doc["mean_mhz"] = summary.mean;
  doc["sem_mhz"] = summary.sem;
  doc["bin_width_mhz"] = bin_width;
  json bins = json::array();
  for (const auto& b : summary.histogram)
    bins.push_back({{"lower_mhz", b.lower}, {"upper_mhz", b.upper}, {"count", b.count}});
  doc["histogram"] = std::move(bins);
  const fs::path out_path = resolve_out(out);
  write_json_file(out_path, doc);

  const fs::path hist_path =
      resolve_out(histogram_opt.empty() ? with_extension(fs::path(out), ".tsv")
                                        : fs::path(histogram_opt));
  std::ostringstream tsv;
  tsv << "bin_lower_mhz\tbin_upper_mhz\tcount\n";
  for (const auto& b : summary.histogram)
    tsv << format_double(b.lower) << '\t' << format_double(b.upper) << '\t' << b.count
        << '\n';
  odmr::io::write_text_atomic(hist_path.string(), tsv.str());

  std::cout << "wrote " << out_path.string() << " and " << hist_path.string() << "\n";
  return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"ODMR spectroscopy toolkit: simulate and fit spectra, calibrate "
               "temperature laws, invert them, correlate with lattice expansion, "
               "and summarize ensembles"};
  app.require_subcommand(1);

  SimulateConfig sim;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic two-dip spectrum CSV");
  simulate->add_option("--d", sim.d, "Axial splitting D in MHz")->capture_default_str();
  simulate->add_option("--e", sim.e, "Transverse splitting E in MHz")->capture_default_str();
  simulate->add_option("--gamma", sim.gamma, "FWHM of both dips in MHz")->capture_default_str();
  simulate->add_option("--gamma1", sim.gamma1, "FWHM of the lower dip (overrides --gamma)");
  simulate->add_option("--gamma2", sim.gamma2, "FWHM of the upper dip (overrides --gamma)");
  simulate->add_option("--c1", sim.c1, "Contrast of the lower dip")->capture_default_str();
  simulate->add_option("--c2", sim.c2, "Contrast of the upper dip")->capture_default_str();
  simulate->add_option("--baseline", sim.baseline, "Off-resonance signal level")
      ->capture_default_str();
  simulate->add_option("--from", sim.from, "Grid start in MHz")->capture_default_str();
  simulate->add_option("--to", sim.to, "Grid end in MHz")->capture_default_str();
  simulate->add_option("--points", sim.points, "Number of grid points")->capture_default_str();
  simulate->add_option("--noise", sim.noise, "Gaussian noise sigma (0 = none)")
      ->capture_default_str();
  simulate->add_option("--seed", sim.seed, "RNG seed (required when --noise > 0)");
  simulate->add_option("--out", sim.out, "Output spectrum CSV path")->required();

  std::vector<std::string> fit_inputs;
  std::string fit_out;
  int fit_jobs = 1;
  auto* fitcmd = app.add_subcommand("fit-spectrum", "Fit the two-dip model to spectrum CSVs");
  fitcmd->add_option("inputs", fit_inputs, "Spectrum CSV files")
      ->required()
      ->check(CLI::ExistingFile);
  fitcmd->add_option("--out", fit_out,
                     "Report JSON path (single input only; default: <input>.fit.json)");
  fitcmd->add_option("--jobs", fit_jobs, "Parallel fit workers for batch inputs")
      ->capture_default_str();

  std::string cal_input, cal_model = "varshni", cal_out, cal_curve;
  auto* calibrate =
      app.add_subcommand("calibrate", "Fit a temperature-calibration law to a series CSV");
  calibrate->add_option("input", cal_input, "Series CSV (temp_k,d_mhz[,sigma_mhz])")
      ->required()
      ->check(CLI::ExistingFile);
  calibrate
      ->add_option("--model", cal_model,
                   "Law: varshni, modvarshni, poly3, poly5, linear")
      ->capture_default_str();
  calibrate->add_option("--out", cal_out, "Calibration JSON path")->required();
  calibrate->add_option("--curve", cal_curve,
                        "Fitted-curve TSV path (default: <out>.tsv)");

  std::string inv_cal, inv_out;
  double inv_d = 0.0, inv_sigma_d = 0.0;
  auto* invert = app.add_subcommand("invert", "Invert a calibration for temperature");
  invert->add_option("calibration", inv_cal, "Calibration JSON from 'calibrate'")
      ->required()
      ->check(CLI::ExistingFile);
  invert->add_option("--d", inv_d, "Measured splitting in MHz")->required();
  invert->add_option("--sigma-d", inv_sigma_d, "1-sigma uncertainty of --d in MHz")
      ->capture_default_str();
  invert->add_option("--out", inv_out, "Report JSON path")->required();

  std::string corr_lattice, corr_series, corr_out, corr_pairs;
  auto* correlate =
      app.add_subcommand("correlate", "Regress a D series against inverse cell volume");
  correlate->add_option("--lattice", corr_lattice, "Lattice CSV (temp_k,a_angstrom,c_angstrom)")
      ->required()
      ->check(CLI::ExistingFile);
  correlate->add_option("--series", corr_series, "D-series CSV (temp_k,d_mhz)")
      ->required()
      ->check(CLI::ExistingFile);
  correlate->add_option("--out", corr_out, "Report JSON path")->required();
  correlate->add_option("--pairs", corr_pairs,
                        "TSV of (V^-1, D) pairs (default: <out>.tsv)");

  std::string stats_input, stats_out, stats_hist;
  double stats_bin_width = 0.0;
  auto* statscmd = app.add_subcommand("stats", "Summarize an ensemble of values");
  statscmd->add_option("input", stats_input, "Values CSV (value_mhz)")
      ->required()
      ->check(CLI::ExistingFile);
  statscmd->add_option("--bin-width", stats_bin_width, "Histogram bin width in MHz")
      ->required();
  statscmd->add_option("--out", stats_out, "Report JSON path")->required();
  statscmd->add_option("--histogram", stats_hist,
                       "Histogram TSV path (default: <out>.tsv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitBadInput;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(sim);
    if (fitcmd->parsed()) return cmd_fit_spectrum(fit_inputs, fit_out, fit_jobs);
    if (calibrate->parsed()) return cmd_calibrate(cal_input, cal_model, cal_out, cal_curve);
    if (invert->parsed()) return cmd_invert(inv_cal, inv_d, inv_sigma_d, inv_out);
    if (correlate->parsed()) return cmd_correlate(corr_lattice, corr_series, corr_out, corr_pairs);
    if (statscmd->parsed()) return cmd_stats(stats_input, stats_bin_width, stats_out, stats_hist);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitBadInput;
}
