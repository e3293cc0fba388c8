#include "dejavu/ts_features.h"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "dejavu/error.h"

namespace dejavu::features {

const std::vector<FeatureDef>& feature_catalog() {
  static const std::vector<FeatureDef> catalog = {
      {"mean", "average value"},
      {"variance", "population variance"},
      {"standard_deviation", "population standard deviation"},
      {"minimum", "smallest value"},
      {"maximum", "largest value"},
      {"last_value", "value at the failure time"},
      {"abs_energy", "sum of squared values"},
      {"skewness", "third standardized moment (0 for a flat series)"},
      {"kurtosis", "excess fourth standardized moment (0 for a flat series)"},
      {"range_count", "number of values in [-1, 1]"},
      {"count_above_mean", "number of values above the mean"},
      {"count_below_mean", "number of values below the mean"},
      {"longest_strike_above_mean", "longest run of consecutive values above the mean"},
      {"longest_strike_below_mean", "longest run of consecutive values below the mean"},
      {"number_peaks", "number of values larger than both neighbours"},
      {"autocorrelation_lag1", "lag-1 autocorrelation (0 for a flat series)"},
      {"linear_trend_slope", "least-squares slope against the sample index"},
      {"linear_trend_intercept", "least-squares intercept at index 0"},
      {"mean_abs_change", "mean absolute difference of consecutive values"},
      {"max_change", "largest consecutive increase"},
      {"min_change", "largest consecutive decrease (most negative difference)"},
      {"first_last_difference", "last value minus first value"},
      {"binned_entropy", "entropy of a 5-bin histogram over [min, max]"},
      {"time_of_max", "relative position of the first maximum in [0, 1)"},
  };
  return catalog;
}

std::size_t feature_index(const std::string& name) {
  const auto& cat = feature_catalog();
  for (std::size_t i = 0; i < cat.size(); ++i) {
    if (cat[i].name == name) return i;
  }
  throw ValidationError(fmt::format("unknown time-series feature '{}'", name));
}

namespace {

std::size_t longest_run(std::span<const double> x, double mean, bool above) {
  std::size_t best = 0, cur = 0;
  for (double v : x) {
    const bool hit = above ? v > mean : v < mean;
    cur = hit ? cur + 1 : 0;
    best = std::max(best, cur);
  }
  return best;
}

}  // namespace

std::vector<double> extract_ts_features(std::span<const double> x) {
  if (x.empty()) throw ValidationError("time-series features of an empty column");
  for (double v : x) {
    if (!std::isfinite(v)) throw ValidationError("time-series features of a non-finite column");
  }
  const std::size_t n = x.size();
  const double dn = static_cast<double>(n);

  double mean = 0.0, energy = 0.0;
  for (double v : x) {
    mean += v;
    energy += v * v;
  }
  mean /= dn;
  const auto first_max = std::max_element(x.begin(), x.end());
  const double lo = *std::min_element(x.begin(), x.end()), hi = *first_max;
  if (lo == hi) mean = lo;  // exact, so a flat series has no values above or below it
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= dn;
  m3 /= dn;
  m4 /= dn;

  std::size_t in_range = 0, above = 0, below = 0, peaks = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] >= -1.0 && x[i] <= 1.0) ++in_range;
    if (x[i] > mean) ++above;
    if (x[i] < mean) ++below;
    if (i > 0 && i + 1 < n && x[i] > x[i - 1] && x[i] > x[i + 1]) ++peaks;
  }

  double acf = 0.0;
  if (m2 > 0.0 && n > 1) {
    for (std::size_t i = 0; i + 1 < n; ++i) acf += (x[i] - mean) * (x[i + 1] - mean);
    acf /= (dn - 1.0) * m2;
  }

  const double tmean = (dn - 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dt = static_cast<double>(i) - tmean;
    sxy += dt * (x[i] - mean);
    sxx += dt * dt;
  }
  const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  const double intercept = mean - slope * tmean;

  double abs_change = 0.0, max_change = 0.0, min_change = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    const double d = x[i] - x[i - 1];
    abs_change += std::abs(d);
    if (i == 1 || d > max_change) max_change = d;
    if (i == 1 || d < min_change) min_change = d;
  }
  if (n > 1) abs_change /= dn - 1.0;

  double entropy = 0.0;
  if (hi > lo) {
    std::size_t bins[5] = {0, 0, 0, 0, 0};
    for (double v : x) {
      auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * 5.0);
      ++bins[std::min<std::size_t>(b, 4)];
    }
    for (std::size_t c : bins) {
      if (c == 0) continue;
      const double p = static_cast<double>(c) / dn;
      entropy -= p * std::log(p);
    }
  }

  return {
      mean,
      m2,
      std::sqrt(m2),
      lo,
      hi,
      x[n - 1],
      energy,
      m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0,
      m2 > 0.0 ? m4 / (m2 * m2) - 3.0 : 0.0,
      static_cast<double>(in_range),
      static_cast<double>(above),
      static_cast<double>(below),
      static_cast<double>(longest_run(x, mean, true)),
      static_cast<double>(longest_run(x, mean, false)),
      static_cast<double>(peaks),
      acf,
      slope,
      intercept,
      abs_change,
      max_change,
      min_change,
      x[n - 1] - x[0],
      entropy,
      static_cast<double>(first_max - x.begin()) / dn,
  };
}

}  // namespace dejavu::features
