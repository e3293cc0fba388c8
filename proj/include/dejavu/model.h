#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dejavu/ad/ops.h"
#include "dejavu/dataset.h"
#include "dejavu/ranking.h"

namespace dejavu::model {

struct ModelConfig {
  std::size_t feature_dim = 3;  // Z
  std::size_t heads = 4;        // H
  std::size_t layers = 8;       // L
  std::size_t window = 20;      // W
  std::size_t kernel_width = 3;
  std::size_t conv_channels = 8;
  std::size_t gru_hidden = 8;
  std::size_t classifier_hidden = 16;
  double attention_slope = 0.2;
  // Ablation switches.
  bool use_gru = true;
  bool use_aggregator = true;

  void validate() const;
  // Width of the features the classifier sees.
  std::size_t aggregated_width() const { return use_aggregator ? feature_dim * heads : feature_dim; }
};

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& doc, ModelConfig base = {});

// Failure class as the model sees it: metric order fixes the window columns.
struct ClassSpec {
  std::string class_id;
  std::vector<std::string> metric_names;

  bool operator==(const ClassSpec&) const = default;
};

std::vector<ClassSpec> class_specs(const graph::SystemDescription& system);

// Closed neighborhoods (self first, then neighbors ascending) of every vertex.
using Neighborhoods = std::vector<std::vector<std::uint32_t>>;
Neighborhoods closed_neighborhoods(const graph::Fdg& g);

// One attention head: out_i = Σ_j α_ij T_j over the closed neighborhood of i,
// α_i· = softmax_j(leaky(a[:Z]·T_i + a[Z:]·T_j)). T: [N, Z], a: [2Z].
ad::Var graph_attention(ad::Var transformed, ad::Var attention,
                        std::shared_ptr<const Neighborhoods> neighborhoods, double slope);
// The α matrix as rows per vertex, aligned with `neighborhoods`.
std::vector<std::vector<double>> attention_weights(const ad::Tensor& transformed,
                                                   const ad::Tensor& attention,
                                                   const Neighborhoods& neighborhoods, double slope);

struct ForwardResult {
  ad::Var unit_features;  // [N, Z]
  ad::Var aggregated;     // [N, aggregated_width]
  ad::Var scores;         // [N]
};

struct Inference {
  ad::Tensor unit_features;
  ad::Tensor aggregated;
  std::vector<double> scores;
};

class Localizer {
 public:
  // Fresh parameters drawn from `seed`.
  Localizer(ModelConfig config, std::vector<ClassSpec> classes, std::uint64_t seed);
  // Wraps existing parameters; throws ValidationError on missing or
  // mis-shaped tensors.
  Localizer(ModelConfig config, std::vector<ClassSpec> classes, ad::ParamStore params);

  const ModelConfig& config() const { return config_; }
  const std::vector<ClassSpec>& classes() const { return classes_; }
  const ad::ParamStore& params() const { return params_; }
  ad::ParamStore& params() { return params_; }

  // Throws ValidationError naming the first unit whose class the model lacks
  // or whose metric list differs.
  void check_compatible(const graph::SystemDescription& system) const;

  // Differentiable pipeline; parameters come through `bind`.
  ForwardResult forward(ad::ParamBinder& bind, const data::FailureRecord& record) const;
  // Stage 1-3 for a single window.
  ad::Var extract(ad::ParamBinder& bind, const std::string& class_id, ad::Var window) const;
  ad::Var aggregate(ad::ParamBinder& bind, ad::Var features, const graph::Fdg& g) const;
  ad::Var classify(ad::ParamBinder& bind, ad::Var aggregated) const;

  Inference infer(const data::FailureRecord& record) const;
  std::vector<double> scores(const data::FailureRecord& record) const;

 private:
  const ClassSpec& spec_for(const std::string& class_id) const;
  std::vector<std::pair<std::string, ad::Shape>> expected_shapes() const;

  ModelConfig config_;
  std::vector<ClassSpec> classes_;
  ad::ParamStore params_;
};

// Scores every unit and sorts; no threshold.
Ranking localize(const data::FailureRecord& record, const Localizer& model);

inline constexpr const char* kParamsFile = "params.json";
inline constexpr const char* kManifestFile = "manifest.json";

// Directory holding params.json and manifest.json (config + class metric order).
void save_model(const Localizer& model, const std::filesystem::path& dir);
Localizer load_model(const std::filesystem::path& dir);

}  // namespace dejavu::model
