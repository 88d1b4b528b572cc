#ifndef ODMR_STATS_HPP
#define ODMR_STATS_HPP

#include <cstddef>
#include <vector>

#include "odmr/errors.hpp"

namespace odmr::stats {

struct HistogramBin {
  double lower; // MHz, inclusive
  double upper; // MHz, exclusive
  std::size_t count;
};

struct EnsembleSummary {
  std::size_t n;
  double mean; // MHz
  double sem;  // MHz, sample standard deviation (n−1) over √n
  std::vector<HistogramBin> histogram;
};

/// Mean, standard error of the mean, and a histogram with bins anchored at
/// floor(min/bin_width)·bin_width. Bins are half-open [lower, upper) and
/// contiguous; empty interior bins are kept so counts always sum to n.
EnsembleSummary summarize(const std::vector<double>& values, double bin_width);

} // namespace odmr::stats

#endif
