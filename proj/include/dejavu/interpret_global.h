#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dejavu/ad/optimizer.h"
#include "dejavu/dataset.h"
#include "dejavu/model.h"
#include "dejavu/tree.h"

namespace dejavu::interpret {

enum class ScoreCategory { kFaulty, kNormal, kUncertain };

inline constexpr double kFaultyAbove = 0.9;
inline constexpr double kNormalBelow = 0.1;

// faulty iff s > 0.9, normal iff s < 0.1, uncertain otherwise.
ScoreCategory categorize(double score);
const char* category_name(ScoreCategory c);

// Per-class decoders: dense Z -> (W-k+1)·C, then a transposed convolution
// back to [W, M_v]. Parameters under "decoder/<class>/...".
class Decoders {
 public:
  Decoders(const model::ModelConfig& config, const std::vector<model::ClassSpec>& classes,
           std::uint64_t seed);

  ad::Var decode(ad::ParamBinder& bind, const std::string& class_id, ad::Var feature) const;
  ad::Tensor reconstruct(const std::string& class_id, const ad::Tensor& feature) const;

  const ad::ParamStore& params() const { return params_; }
  ad::ParamStore& params() { return params_; }

 private:
  const model::ClassSpec& spec_for(const std::string& class_id) const;

  model::ModelConfig config_;
  std::vector<model::ClassSpec> classes_;
  ad::ParamStore params_;
};

struct DecoderConfig {
  std::size_t epochs = 150;
  std::size_t batch_size = 16;
  ad::AdamOptions adam;
  std::uint64_t seed = 0;
};

// Frozen unit features [N, Z] of each record.
std::vector<ad::Tensor> unit_features(const model::Localizer& model,
                                      std::span<const data::FailureRecord> records);

// Mean over failures of the mean over units of Σ_i ||A_i - Ã_i||² / M_v.
double reconstruction_loss(const Decoders& decoders, std::span<const data::FailureRecord> records,
                           std::span<const ad::Tensor> features);

struct DecoderTrainResult {
  Decoders decoders;
  std::vector<double> loss_log;  // per epoch, on all records
};

DecoderTrainResult train_decoders(const model::Localizer& model,
                                  std::span<const data::FailureRecord> records,
                                  const DecoderConfig& cfg);
// Same, with precomputed features.
DecoderTrainResult train_decoders(const model::Localizer& model,
                                  std::span<const data::FailureRecord> records,
                                  std::span<const ad::Tensor> features, const DecoderConfig& cfg);

// A time-series feature of one metric column.
struct FeatureRef {
  std::size_t metric = 0;
  std::size_t feature = 0;
  double discrepancy = 0.0;  // median relative discrepancy

  bool operator==(const FeatureRef& o) const { return metric == o.metric && feature == o.feature; }
};

// Features f whose median over samples of |f(orig) - f(recon)| / (|f(orig)| + 1)
// is below tau. Windows are [W, M] of one class, aligned pairwise.
std::vector<FeatureRef> feature_discrepancies(std::span<const ad::Tensor> originals,
                                              std::span<const ad::Tensor> reconstructions);
std::vector<FeatureRef> select_features(std::span<const ad::Tensor> originals,
                                        std::span<const ad::Tensor> reconstructions, double tau);

// Selected feature values of one window, in `selected` order.
std::vector<double> feature_vector(const ad::Tensor& window, std::span<const FeatureRef> selected);

struct RuleCondition {
  std::string feature;
  std::string metric;
  double threshold = 0.0;
  std::string direction;  // "<=" or ">"
};

struct DecisionRule {
  std::string class_id;
  std::vector<RuleCondition> conditions;
  std::string verdict;  // "faulty" | "normal"
  std::size_t support = 0;
  std::size_t leaf = 0;
};

// Pure leaves of `tree` as rules, by descending support.
std::vector<DecisionRule> extract_rules(const tree::DecisionTree& tree, const std::string& class_id,
                                        std::span<const FeatureRef> selected,
                                        std::span<const std::string> metric_names);
std::string render_rule(const DecisionRule& rule);

struct ClassSamples {
  std::vector<std::vector<double>> x;
  std::vector<int> y;  // 1 faulty, 0 normal
};

struct ClassInterpretation {
  std::string class_id;
  std::vector<std::string> metric_names;
  std::vector<FeatureRef> discrepancies;  // every (metric, feature)
  std::vector<FeatureRef> selected;
  tree::DecisionTree tree;
  std::vector<DecisionRule> rules;
  std::size_t train_samples = 0;
  std::size_t uncertain_dropped = 0;
  std::size_t heldout_samples = 0;
  std::size_t heldout_agree = 0;
  bool replay_consistent = true;
};

struct GlobalOptions {
  double tau = 0.5;
  tree::TreeOptions tree;
  DecoderConfig decoder;
};

struct GlobalInterpretation {
  std::vector<ClassInterpretation> classes;
  std::vector<double> decoder_loss;
  // Pooled agreement over held-out confident units.
  double heldout_agreement() const;
  std::size_t heldout_samples() const;
};

// Decoders and feature selection on `train`, surrogate trees on the model's
// confident categories of `train` units, agreement measured on `heldout`.
GlobalInterpretation interpret_global(const model::Localizer& model,
                                      std::span<const data::FailureRecord> train,
                                      std::span<const data::FailureRecord> heldout,
                                      const GlobalOptions& options = {});

nlohmann::json rules_to_json(const ClassInterpretation& c);
std::string rules_to_text(const ClassInterpretation& c);

// Decision Tree baseline: per-class trees on every catalog feature with
// ground-truth labels; a unit's score is its leaf's faulty fraction.
class TreeBaseline {
 public:
  static TreeBaseline fit(std::span<const data::FailureRecord> train, const tree::TreeOptions& options = {});
  Ranking localize(const data::FailureRecord& record) const;

 private:
  std::map<std::string, tree::DecisionTree> trees_;
};

}  // namespace dejavu::interpret
