#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dejavu/dataset.h"
#include "dejavu/eval.h"
#include "dejavu/model.h"
#include "dejavu/training.h"

namespace dejavu::experiments {

struct RunSettings {
  model::ModelConfig model;
  train::TrainConfig train;
  std::uint64_t init_seed = 0;  // parameter initialization
};

struct RunOutcome {
  model::Localizer model;
  eval::EvalReport test;
  std::size_t epochs = 0;
  std::size_t best_epoch = 0;
  double best_val_mar = 0.0;
  double train_seconds = 0.0;
};

// Fresh model for `system`'s classes, trained on split.train/validation and
// evaluated on split.test.
RunOutcome train_and_evaluate(const graph::SystemDescription& system, const data::DatasetSplit& split,
                              const RunSettings& settings);

enum class Variant { kFull, kNoGru, kNoAggregator, kNoBalance };
const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);
RunSettings apply_variant(RunSettings s, Variant v);

// Each record independently loses round(fraction · |E|) of its FDG edges,
// chosen uniformly at random. Same seed, same removals.
std::vector<data::FailureRecord> remove_edges(std::span<const data::FailureRecord> records, double fraction,
                                              std::uint64_t seed);

struct SweepPoint {
  double fraction = 0.0;
  std::vector<double> mars;  // one per repeat
  double mean_mar = 0.0;
};

// For every fraction and repeat: remove edges from every failure, retrain,
// evaluate on the test split.
std::vector<SweepPoint> edge_removal_experiment(const graph::SystemDescription& system,
                                                const data::DatasetSplit& split,
                                                std::span<const double> fractions, std::size_t repeats,
                                                std::uint64_t seed, const RunSettings& settings);

// Chronological prefix of the training split; throws on an empty prefix.
std::vector<data::FailureRecord> training_prefix(std::span<const data::FailureRecord> train, double fraction);

std::vector<SweepPoint> training_fraction_sweep(const graph::SystemDescription& system,
                                                const data::DatasetSplit& split,
                                                std::span<const double> fractions,
                                                const RunSettings& settings);

nlohmann::json sweep_to_json(std::span<const SweepPoint> points);

}  // namespace dejavu::experiments
