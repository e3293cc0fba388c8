#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dejavu/ad/optimizer.h"
#include "dejavu/dataset.h"
#include "dejavu/model.h"

namespace dejavu::train {

inline constexpr double kScoreClamp = 1e-12;

// w_v = |V| for faulty units, 1 otherwise; aligned with record.fdg->units().
std::vector<double> sample_weights(const data::FailureRecord& record);
std::vector<double> labels(const data::FailureRecord& record);

// Σ_v w_v·BCE(s_v, y_v) / Σ_v w_v with scores clamped to [ε, 1-ε] and w as
// above for `n` = unit count. Throws on empty or mismatched input.
double weighted_bce(std::span<const double> scores, std::span<const double> labels, std::size_t n);
ad::Var weighted_bce_loss(ad::Var scores, std::span<const double> labels, std::size_t n);

// Draws a class uniformly, then a failure uniformly among that class's members.
// A failure whose truths span several classes is a member of each.
class BalancedSampler {
 public:
  using Members = std::map<std::string, std::vector<std::size_t>>;

  BalancedSampler(Members members, std::uint64_t seed);
  // Classes from the records' ground truths; with `balanced` false every
  // record sits in one pool and is drawn uniformly.
  static BalancedSampler for_records(std::span<const data::FailureRecord> records, std::uint64_t seed,
                                     bool balanced = true);

  std::size_t next();
  // Exact probability that next() returns `failure`.
  double probability(std::size_t failure) const;
  const Members& members() const { return members_; }

 private:
  Members members_;
  std::vector<const std::vector<std::size_t>*> pools_;
  std::mt19937_64 rng_;
};

struct TrainConfig {
  std::size_t epochs = 3000;
  std::size_t batch_size = 16;
  std::size_t patience = 300;  // epochs without validation-MAR improvement
  ad::AdamOptions adam;
  std::uint64_t seed = 0;
  bool balanced = true;

  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& doc, TrainConfig base = {});

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_mar = 0.0;
  std::map<std::size_t, double> val_accuracy;
  double wall_seconds = 0.0;
};

struct TrainResult {
  model::Localizer model;  // best validation-MAR checkpoint
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_mar = 0.0;
};

// Mean weighted BCE over records without recording gradients.
double mean_loss(const model::Localizer& model, std::span<const data::FailureRecord> records);

// Mini-batch Adam on the balanced stream, validation MAR every epoch, early
// stop after `patience` epochs without improvement. An epoch is
// ceil(|train| / batch_size) batches. Throws DivergenceError on a non-finite
// loss or gradient.
TrainResult train(model::Localizer initial, const data::DatasetSplit& split, const TrainConfig& cfg);

// epoch,train_loss,val_MAR,val_A@1,val_A@2,val_A@3,val_A@5 (no wall-clock
// column, so identical runs give identical files)
std::string train_log_csv(std::span<const EpochLog> log);

}  // namespace dejavu::train
