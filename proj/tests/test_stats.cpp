#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "odmr/stats.hpp"

namespace stats = odmr::stats;

TEST_CASE("three-point summary by hand") {
  const auto s = stats::summarize({1.0, 2.0, 3.0}, 1.0);
  CHECK(s.n == 3);
  CHECK(s.mean == doctest::Approx(2.0).epsilon(1e-15));
  // sd with the n−1 divisor is exactly 1, so sem = 1/√3.
  CHECK(s.sem == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-12));
  CHECK(s.sem == doctest::Approx(0.5774).epsilon(1e-4));
}

TEST_CASE("histogram bins are anchored, contiguous, and complete") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> draw(3460.8, 5.66);
  std::uniform_real_distribution<double> bw_draw(0.5, 8.0);

  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> values(40);
    for (auto& v : values) v = draw(rng);
    const double bw = bw_draw(rng);
    const auto s = stats::summarize(values, bw);

    REQUIRE_FALSE(s.histogram.empty());
    const double anchor = s.histogram.front().lower;
    CHECK(anchor == doctest::Approx(std::floor(*std::min_element(values.begin(),
                                                                 values.end()) /
                                               bw) *
                                    bw)
                        .epsilon(1e-12));

    size_t total = 0;
    for (size_t i = 0; i < s.histogram.size(); ++i) {
      const auto& bin = s.histogram[i];
      CHECK(bin.upper == doctest::Approx(bin.lower + bw).epsilon(1e-9));
      if (i > 0)
        CHECK(bin.lower == doctest::Approx(s.histogram[i - 1].upper).epsilon(1e-9));
      total += bin.count;
    }
    CHECK(total == values.size());

    // Every value lands in the bin its offset from the anchor selects.
    for (double v : values) {
      const auto idx = static_cast<size_t>(
          std::max(0.0, std::floor((v - anchor) / bw)));
      REQUIRE(idx < s.histogram.size());
      CHECK(v >= s.histogram[idx].lower - 1e-9);
      CHECK(v < s.histogram[idx].upper + 1e-9);
    }
  }
}

TEST_CASE("identical samples collapse to one bin and zero sem") {
  const auto s = stats::summarize({5.5, 5.5, 5.5, 5.5}, 0.25);
  CHECK(s.mean == 5.5);
  CHECK(s.sem == 0.0);
  CHECK(s.histogram.size() == 1);
  CHECK(s.histogram[0].count == 4);
}

TEST_CASE("summary is invariant under permutation and equivariant under shift") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> draw(0.0, 2.0);
  std::vector<double> values(25);
  for (auto& v : values) v = draw(rng);

  const auto base = stats::summarize(values, 1.0);

  std::vector<double> shuffled = values;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto perm = stats::summarize(shuffled, 1.0);
  CHECK(perm.mean == doctest::Approx(base.mean).epsilon(1e-12));
  CHECK(perm.sem == doctest::Approx(base.sem).epsilon(1e-12));
  REQUIRE(perm.histogram.size() == base.histogram.size());
  for (size_t i = 0; i < base.histogram.size(); ++i)
    CHECK(perm.histogram[i].count == base.histogram[i].count);

  // A whole-bin-width shift moves every edge by the same amount and keeps
  // the occupancy pattern.
  std::vector<double> shifted = values;
  for (auto& v : shifted) v += 3.0;
  const auto sh = stats::summarize(shifted, 1.0);
  CHECK(sh.mean == doctest::Approx(base.mean + 3.0).epsilon(1e-12));
  CHECK(sh.sem == doctest::Approx(base.sem).epsilon(1e-12));
  REQUIRE(sh.histogram.size() == base.histogram.size());
  for (size_t i = 0; i < base.histogram.size(); ++i) {
    CHECK(sh.histogram[i].lower ==
          doctest::Approx(base.histogram[i].lower + 3.0).epsilon(1e-12));
    CHECK(sh.histogram[i].count == base.histogram[i].count);
  }
}

TEST_CASE("empty interior bins are kept") {
  // Two tight clusters with a gap of several widths between them.
  const auto s = stats::summarize({0.1, 0.2, 0.3, 5.1, 5.2}, 1.0);
  REQUIRE(s.histogram.size() == 6);
  CHECK(s.histogram[0].count == 3);
  CHECK(s.histogram[1].count == 0);
  CHECK(s.histogram[4].count == 0);
  CHECK(s.histogram[5].count == 2);
}

TEST_CASE("sem tracks the generator for ensemble-sized draws") {
  // 50 draws at sigma 5.66 has expected sem near 5.66/√50 ≈ 0.8.
  std::mt19937_64 rng(7);
  std::normal_distribution<double> draw(3460.8, 5.66);
  int within = 0;
  const int trials = 20;
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<double> values(50);
    for (auto& v : values) v = draw(rng);
    const auto s = stats::summarize(values, 2.0);
    if (std::abs(s.sem - 0.8) < 0.25) ++within;
    CHECK(std::abs(s.mean - 3460.8) < 4.0);
  }
  CHECK(within >= 17);
}

TEST_CASE("validation") {
  CHECK_THROWS_AS(stats::summarize({1.0}, 1.0), odmr::TooFewSamplesError);
  CHECK_THROWS_AS(stats::summarize({}, 1.0), odmr::TooFewSamplesError);
  CHECK_THROWS_AS(stats::summarize({1.0, 2.0}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(stats::summarize({1.0, 2.0}, -1.0), std::invalid_argument);
  const double nan = std::nan("");
  CHECK_THROWS_AS(stats::summarize({1.0, nan}, 1.0), std::invalid_argument);
}
