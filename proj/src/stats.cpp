#include "odmr/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace odmr::stats {

EnsembleSummary summarize(const std::vector<double>& values, double bin_width) {
  if (values.size() < 2)
    throw TooFewSamplesError("summarize: needs at least two values");
  if (!(bin_width > 0.0))
    throw std::invalid_argument("summarize: bin_width must be positive");
  for (double v : values)
    if (!std::isfinite(v)) throw std::invalid_argument("summarize: values must be finite");

  const std::size_t n = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / double(n);

  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / double(n - 1));

  const double vmin = *std::min_element(values.begin(), values.end());
  const double anchor = std::floor(vmin / bin_width) * bin_width;

  std::size_t max_idx = 0;
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double k = std::floor((values[i] - anchor) / bin_width);
    idx[i] = k < 0.0 ? 0 : static_cast<std::size_t>(k);
    max_idx = std::max(max_idx, idx[i]);
  }

  EnsembleSummary s;
  s.n = n;
  s.mean = mean;
  s.sem = sd / std::sqrt(double(n));
  s.histogram.resize(max_idx + 1);
  for (std::size_t k = 0; k <= max_idx; ++k) {
    s.histogram[k].lower = anchor + double(k) * bin_width;
    s.histogram[k].upper = anchor + double(k + 1) * bin_width;
    s.histogram[k].count = 0;
  }
  for (std::size_t i = 0; i < n; ++i) ++s.histogram[idx[i]].count;
  return s;
}

} // namespace odmr::stats
