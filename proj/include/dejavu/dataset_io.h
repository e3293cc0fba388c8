#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "dejavu/dataset.h"
#include "dejavu/fdg.h"

namespace dejavu::data {

// Standard file names inside a dataset directory.
inline constexpr const char* kFdgFile = "fdg.json";
inline constexpr const char* kRelationsFile = "relations.json";
inline constexpr const char* kMetricsFile = "metrics.csv";
inline constexpr const char* kFailuresFile = "failures.json";

// {"components":[{"id","class_name"}], "classes":[{"id","component_class","metrics":[..]}],
//  "units":[{"id","component_id","class_id"}], "edges":[["u1","u2"],...], "snapshot_time":t}
nlohmann::json fdg_to_json(const graph::SystemDescription& system, const graph::Fdg& g);
// Validates the system description and the graph; throws ValidationError.
std::pair<graph::SystemDescription, graph::Fdg> fdg_from_json(const nlohmann::json& doc);

// {"call":[["a","b"],..], "deploy":[["a","b"],..]}
nlohmann::json relations_to_json(const graph::ComponentRelations& r);
graph::ComponentRelations relations_from_json(const nlohmann::json& doc);

// Header "timestamp,unit_id,metric_name,value"; empty or "nan" values are
// missing. Values are written in shortest round-trip form.
void write_metrics_csv(const MetricStore& store, const std::filesystem::path& path);
MetricStore read_metrics_csv(const std::filesystem::path& path);

// {"failures":[{"failure_id","failure_time","ground_truth":[..],"fdg":"fdg.json"}]}
struct FailureEntry {
  FailureSpec spec;
  std::string fdg_file = kFdgFile;
};
nlohmann::json failures_to_json(const std::vector<FailureEntry>& entries);
std::vector<FailureEntry> failures_from_json(const nlohmann::json& doc);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const nlohmann::json& doc, const std::filesystem::path& path);

// Reads fdg.json, relations.json (optional), metrics.csv and failures.json
// from `dir` and builds normalized failure records.
Dataset load_dataset(const std::filesystem::path& dir, const WindowOptions& options = {});

}  // namespace dejavu::data
