#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "dejavu/dataset.h"
#include "dejavu/fdg.h"

namespace dejavu::sim {

enum class InjectionKind { kLevelShift, kSpike };

// A failure class together with how its metrics react, in multiples of each
// metric's noise std: `fault_response` when the unit itself is faulty,
// `propagation_response` (scaled by `sensitivity`) when a nearby unit is.
struct ClassTemplate {
  std::string id;               // e.g. "container.cpu"
  std::string group;            // unit id suffix, e.g. "cpu"
  std::string component_class;  // "Service" | "Container" | "Host"
  std::vector<std::string> metrics;
  std::vector<double> fault_response;
  std::vector<double> propagation_response;
  double sensitivity = 1.0;
  InjectionKind kind = InjectionKind::kLevelShift;
};

std::vector<ClassTemplate> default_class_templates();

struct SimConfig {
  std::uint64_t seed = 0;
  std::size_t n_services = 10;
  std::size_t n_containers = 12;
  std::size_t n_hosts = 8;
  std::size_t call_layers = 3;
  std::vector<ClassTemplate> classes = default_class_templates();

  std::size_t n_failures = 200;
  double magnitude = 6.0;         // μ, multiples of the metric's noise std
  double magnitude_jitter = 0.3;  // per-failure factor drawn from [1 - j, 1 + j]
  double decay = 0.5;             // δ, per-hop attenuation
  std::size_t hops = 2;

  double noise_std = 0.05;           // relative to the metric's level
  double seasonal_amplitude = 0.05;  // relative to the metric's level
  std::size_t season_length = 1440;  // samples per seasonal period

  data::Timestamp start_time = 1'699'999'980;
  data::Timestamp step = 60;
  std::size_t window = 20;
  std::size_t baseline_length = 60;
  std::size_t warmup = 100;            // samples before the first failure
  std::size_t failure_spacing = 100;   // samples between failures
  std::size_t effect_length = 12;      // samples a level shift lasts
  std::size_t spike_length = 3;
  std::size_t max_onset_lead = 8;      // onset precedes the failure time by 1..this
  double quantum = 1e-4;               // values are rounded to this grid

  // Throws ValidationError when an invariant is broken.
  void validate() const;
  data::WindowOptions window_options() const;
};

nlohmann::json sim_config_to_json(const SimConfig& cfg);
// Missing keys keep their defaults.
SimConfig sim_config_from_json(const nlohmann::json& doc, SimConfig base = {});

struct Topology {
  graph::SystemDescription system;
  graph::ComponentRelations relations;
  graph::Fdg fdg;
};

// Layered random call DAG over services; each service deployed on a
// container, containers on hosts; one unit per class template per component.
Topology generate_topology(const SimConfig& cfg);

struct MetricProfile {
  std::string unit_id;
  std::string metric;
  double level = 0.0;
  double noise_std = 0.0;
  double amplitude = 0.0;
  double phase = 0.0;
};

struct SimMetrics {
  data::MetricStore store;
  std::vector<MetricProfile> profiles;
};

// level + seasonal sinusoid + Gaussian noise per metric, `steps` samples from
// cfg.start_time.
SimMetrics generate_metrics(const Topology& topology, const SimConfig& cfg, std::size_t steps);

struct InjectionPlan {
  std::string failure_id;
  std::string unit_id;
  data::Timestamp failure_time = 0;
  double magnitude = 0.0;       // multiples of noise std
  std::size_t onset_lead = 1;   // samples before failure_time the fault starts
};

struct AffectedUnit {
  std::string unit_id;
  std::size_t hop = 0;
  double magnitude = 0.0;
};

struct InjectedFailure {
  InjectionPlan plan;
  std::string class_id;
  InjectionKind kind = InjectionKind::kLevelShift;
  std::vector<AffectedUnit> affected;  // hop 0 is the root
};

// Random class, then random unit of that class, per failure. For classes
// drawn at least twice the first two picks use distinct units.
std::vector<InjectionPlan> plan_failures(const Topology& topology, const SimConfig& cfg);

// Adds the fault to the root's metrics and attenuated effects to units
// within cfg.hops FDG hops.
InjectedFailure apply_injection(data::MetricStore& store, const std::vector<MetricProfile>& profiles,
                                const Topology& topology, const SimConfig& cfg,
                                const InjectionPlan& plan);

struct SimDataset {
  SimConfig config;
  Topology topology;
  SimMetrics metrics;
  std::vector<data::FailureSpec> failures;
  std::vector<InjectedFailure> injections;
};

std::size_t required_steps(const SimConfig& cfg, std::size_t n_failures);

SimDataset simulate(const SimConfig& cfg);
// Same system and background metrics, but with caller-chosen injections.
SimDataset simulate_with_plans(const SimConfig& cfg, const std::vector<InjectionPlan>& plans);

// Failure time of the i-th planned failure.
data::Timestamp failure_time_at(const SimConfig& cfg, std::size_t i);

nlohmann::json manifest_to_json(const SimDataset& ds);

// Writes fdg.json, relations.json, metrics.csv, failures.json, manifest.json.
void write_sim_dataset(const SimDataset& ds, const std::filesystem::path& dir);
// Builds the same records load_dataset() would produce from the written files.
data::Dataset to_dataset(const SimDataset& ds);

}  // namespace dejavu::sim
