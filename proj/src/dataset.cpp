#include "dejavu/dataset.h"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "dejavu/error.h"
#include "dejavu/log.h"

namespace dejavu::data {

bool MetricSeries::operator==(const MetricSeries& other) const {
  if (!(descriptor == other.descriptor) || timestamps != other.timestamps ||
      values.size() != other.values.size()) {
    return false;
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    const bool na = std::isnan(values[i]), nb = std::isnan(other.values[i]);
    if (na != nb || (!na && values[i] != other.values[i])) return false;
  }
  return true;
}

void MetricStore::add(MetricSeries series) {
  const auto& d = series.descriptor;
  if (series.timestamps.size() != series.values.size()) {
    throw ValidationError(fmt::format("series {}/{}: {} timestamps vs {} values", d.unit_id,
                                      d.name, series.timestamps.size(), series.values.size()));
  }
  for (std::size_t i = 1; i < series.timestamps.size(); ++i) {
    if (series.timestamps[i] <= series.timestamps[i - 1]) {
      throw ValidationError(fmt::format("series {}/{}: timestamps not strictly increasing at {}",
                                        d.unit_id, d.name, series.timestamps[i]));
    }
  }
  Key key{d.unit_id, d.name};
  if (series_.count(key)) {
    throw ValidationError(fmt::format("duplicate series {}/{}", d.unit_id, d.name));
  }
  series_.emplace(std::move(key), std::move(series));
}

const MetricSeries* MetricStore::find(const std::string& unit_id, const std::string& metric) const {
  auto it = series_.find(Key{unit_id, metric});
  return it == series_.end() ? nullptr : &it->second;
}

MetricSeries* MetricStore::find_mutable(const std::string& unit_id, const std::string& metric) {
  auto it = series_.find(Key{unit_id, metric});
  return it == series_.end() ? nullptr : &it->second;
}

std::vector<double> MetricWindow::column(std::size_t metric) const {
  std::vector<double> out(length());
  for (std::size_t r = 0; r < length(); ++r) out[r] = matrix.at(r, metric);
  return out;
}

const MetricWindow& FailureRecord::window(const std::string& unit_id) const {
  return windows.at(fdg->require_index(unit_id));
}

bool FailureRecord::is_faulty(const std::string& unit_id) const {
  return std::find(ground_truth.begin(), ground_truth.end(), unit_id) != ground_truth.end();
}

std::vector<std::string> FailureRecord::truth_classes() const {
  std::set<std::string> out;
  for (const auto& id : ground_truth) out.insert(fdg->unit_at(fdg->require_index(id)).class_id);
  return {out.begin(), out.end()};
}

MetricWindow slice_window(const std::string& unit_id,
                          std::span<const MetricSeries* const> columns, Timestamp end,
                          std::size_t window, Timestamp step) {
  if (window == 0) throw ValidationError("window length must be positive");
  if (step <= 0) throw ValidationError("sampling step must be positive");
  const std::size_t m = columns.size();
  MetricWindow out{unit_id, ad::Tensor({window, m}),
                   end - static_cast<Timestamp>(window - 1) * step};
  for (std::size_t c = 0; c < m; ++c) {
    const MetricSeries* s = columns[c];
    bool found_any = false;
    if (s != nullptr) {
      for (std::size_t r = 0; r < window; ++r) {
        const Timestamp t = out.start_time + static_cast<Timestamp>(r) * step;
        auto it = std::upper_bound(s->timestamps.begin(), s->timestamps.end(), t);
        double v = 0.0;
        for (auto i = static_cast<std::size_t>(it - s->timestamps.begin()); i-- > 0;) {
          if (!std::isnan(s->values[i])) {
            v = s->values[i];
            found_any = true;
            break;
          }
        }
        out.matrix.at(r, c) = v;
      }
    }
    if (!found_any) {
      logger().warn("unit {} metric #{}: no data up to t={}, using a zero column", unit_id, c, end);
    }
  }
  return out;
}

MetricWindow normalize_window(const MetricWindow& w, std::span<const double> baseline_mean,
                              std::span<const double> baseline_std) {
  const std::size_t m = w.metric_count();
  if (baseline_mean.size() != m || baseline_std.size() != m) {
    throw ShapeError(fmt::format("normalize_window: {} metrics but {} means / {} stds", m,
                                 baseline_mean.size(), baseline_std.size()));
  }
  MetricWindow out = w;
  for (std::size_t r = 0; r < w.length(); ++r)
    for (std::size_t c = 0; c < m; ++c)
      out.matrix.at(r, c) =
          (w.matrix.at(r, c) - baseline_mean[c]) / (baseline_std[c] + kNormalizeEpsilon);
  return out;
}

ColumnStats column_stats(const MetricWindow& w) {
  const std::size_t m = w.metric_count(), n = w.length();
  ColumnStats s{std::vector<double>(m, 0.0), std::vector<double>(m, 0.0)};
  for (std::size_t c = 0; c < m; ++c) {
    double mu = 0.0;
    for (std::size_t r = 0; r < n; ++r) mu += w.matrix.at(r, c);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double d = w.matrix.at(r, c) - mu;
      var += d * d;
    }
    s.mean[c] = mu;
    s.std[c] = std::sqrt(var / static_cast<double>(n));
  }
  return s;
}

MetricWindow normalized_unit_window(const graph::SystemDescription& system,
                                    const MetricStore& store, const std::string& unit_id,
                                    Timestamp failure_time, const WindowOptions& options) {
  const auto& cls = system.class_of_unit(unit_id);
  std::vector<const MetricSeries*> cols;
  cols.reserve(cls.metric_names.size());
  for (const auto& name : cls.metric_names) cols.push_back(store.find(unit_id, name));
  const MetricWindow raw = slice_window(unit_id, cols, failure_time, options.window, options.step);
  const Timestamp baseline_end =
      failure_time - static_cast<Timestamp>(options.baseline_gap) * options.step;
  const MetricWindow ref =
      slice_window(unit_id, cols, baseline_end, options.baseline_length, options.step);
  const ColumnStats stats = column_stats(ref);
  return normalize_window(raw, stats.mean, stats.std);
}

FailureRecord build_record(const graph::SystemDescription& system,
                           std::shared_ptr<const graph::Fdg> fdg, const MetricStore& store,
                           const FailureSpec& spec, const WindowOptions& options) {
  if (spec.ground_truth.empty()) {
    throw ValidationError(fmt::format("failure '{}' has no ground truth", spec.failure_id));
  }
  for (const auto& id : spec.ground_truth) {
    if (!fdg->contains(id)) {
      throw ValidationError(fmt::format("failure '{}': ground truth '{}' is not an FDG vertex",
                                        spec.failure_id, id));
    }
  }
  FailureRecord rec;
  rec.failure_id = spec.failure_id;
  rec.failure_time = spec.failure_time;
  rec.ground_truth = spec.ground_truth;
  std::sort(rec.ground_truth.begin(), rec.ground_truth.end());
  rec.ground_truth.erase(std::unique(rec.ground_truth.begin(), rec.ground_truth.end()),
                         rec.ground_truth.end());
  rec.windows.reserve(fdg->vertex_count());
  for (const auto& u : fdg->units()) {
    rec.windows.push_back(normalized_unit_window(system, store, u.id, spec.failure_time, options));
  }
  rec.fdg = std::move(fdg);
  return rec;
}

DatasetSplit split_dataset(std::vector<FailureRecord> records) {
  if (records.size() < 5) {
    throw ValidationError(
        fmt::format("need at least 5 failure records to split, got {}", records.size()));
  }
  std::sort(records.begin(), records.end(), [](const FailureRecord& a, const FailureRecord& b) {
    return std::tie(a.failure_time, a.failure_id) < std::tie(b.failure_time, b.failure_id);
  });
  const std::size_t n = records.size();
  const std::size_t n_val = n * 2 / 10;
  const std::size_t n_test = n * 4 / 10;
  const std::size_t n_train = n - n_val - n_test;
  DatasetSplit s;
  auto first = std::make_move_iterator(records.begin());
  s.train.assign(first, first + n_train);
  s.validation.assign(first + n_train, first + n_train + n_val);
  s.test.assign(first + n_train + n_val, std::make_move_iterator(records.end()));
  return s;
}

std::map<std::string, std::size_t> class_counts(std::span<const FailureRecord> train) {
  std::map<std::string, std::size_t> counts;
  for (const auto& r : train) {
    for (const auto& c : r.truth_classes()) ++counts[c];
  }
  return counts;
}

}  // namespace dejavu::data
