#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "dejavu/ad/tensor.h"
#include "dejavu/fdg.h"

namespace dejavu::data {

using Timestamp = std::int64_t;  // epoch seconds

// One metric's samples. NaN marks an explicitly missing sample.
struct MetricSeries {
  graph::MetricDescriptor descriptor;
  std::vector<Timestamp> timestamps;  // strictly increasing
  std::vector<double> values;

  bool operator==(const MetricSeries& other) const;
};

// All series of a system keyed by (unit_id, metric_name).
class MetricStore {
 public:
  using Key = std::pair<std::string, std::string>;

  // Throws ValidationError if timestamps are not strictly increasing or
  // lengths differ, or the key already exists.
  void add(MetricSeries series);
  const MetricSeries* find(const std::string& unit_id, const std::string& metric) const;
  MetricSeries* find_mutable(const std::string& unit_id, const std::string& metric);
  const std::map<Key, MetricSeries>& series() const { return series_; }
  std::size_t size() const { return series_.size(); }

  bool operator==(const MetricStore& other) const { return series_ == other.series_; }

 private:
  std::map<Key, MetricSeries> series_;
};

// W time steps x M_v metrics (class order) for one unit; row W-1 is the
// failure time.
struct MetricWindow {
  std::string unit_id;
  ad::Tensor matrix;
  Timestamp start_time = 0;

  std::size_t length() const { return matrix.dim(0); }
  std::size_t metric_count() const { return matrix.dim(1); }
  std::vector<double> column(std::size_t metric) const;
};

struct FailureRecord {
  std::string failure_id;
  Timestamp failure_time = 0;
  std::shared_ptr<const graph::Fdg> fdg;
  // Normalized windows aligned with fdg->units() order.
  std::vector<MetricWindow> windows;
  std::vector<std::string> ground_truth;

  const MetricWindow& window(const std::string& unit_id) const;
  bool is_faulty(const std::string& unit_id) const;
  // Failure classes of the ground-truth units, ascending.
  std::vector<std::string> truth_classes() const;
};

struct DatasetSplit {
  std::vector<FailureRecord> train;
  std::vector<FailureRecord> validation;
  std::vector<FailureRecord> test;
};

struct WindowOptions {
  std::size_t window = 20;           // W samples
  Timestamp step = 60;               // seconds between samples
  std::size_t baseline_length = 60;  // samples in the normalization reference
  // Samples between the baseline's end and the failure time; defaults to W so
  // the reference period never overlaps the input window.
  std::size_t baseline_gap = 20;
};

// Samples [end - (W-1)·step, end] with last-observation-carried-forward
// imputation, falling back to 0 before the first observation. A null column
// (no data for the metric) becomes all zeros with a logged warning.
MetricWindow slice_window(const std::string& unit_id,
                          std::span<const MetricSeries* const> columns, Timestamp end,
                          std::size_t window, Timestamp step);

inline constexpr double kNormalizeEpsilon = 1e-8;

// Each column x -> (x - mean) / (std + 1e-8).
MetricWindow normalize_window(const MetricWindow& w, std::span<const double> baseline_mean,
                              std::span<const double> baseline_std);

struct ColumnStats {
  std::vector<double> mean;
  std::vector<double> std;  // population
};
ColumnStats column_stats(const MetricWindow& w);

// Slice, normalize against the reference period, and collect into records.
struct FailureSpec {
  std::string failure_id;
  Timestamp failure_time = 0;
  std::vector<std::string> ground_truth;
};

MetricWindow normalized_unit_window(const graph::SystemDescription& system,
                                    const MetricStore& store, const std::string& unit_id,
                                    Timestamp failure_time, const WindowOptions& options);

FailureRecord build_record(const graph::SystemDescription& system,
                           std::shared_ptr<const graph::Fdg> fdg, const MetricStore& store,
                           const FailureSpec& spec, const WindowOptions& options);

// Chronological 40/20/40: validation and test sizes are floor(0.2n) and
// floor(0.4n), train takes the remainder. Requires >= 5 records.
DatasetSplit split_dataset(std::vector<FailureRecord> records);

// A failure with truths in several classes counts once for each.
std::map<std::string, std::size_t> class_counts(std::span<const FailureRecord> train);

// A loaded dataset directory.
struct Dataset {
  graph::SystemDescription system;
  graph::ComponentRelations relations;
  std::shared_ptr<const graph::Fdg> fdg;
  std::vector<FailureRecord> records;
  WindowOptions window_options;
};

}  // namespace dejavu::data
