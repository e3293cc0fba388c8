#include "dejavu/interpret_global.h"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "dejavu/ad/init.h"
#include "dejavu/ad/ops.h"
#include "dejavu/error.h"
#include "dejavu/log.h"
#include "dejavu/ts_features.h"

namespace dejavu::interpret {

using ad::Tensor;
using ad::Var;
using nlohmann::json;

ScoreCategory categorize(double score) {
  if (score > kFaultyAbove) return ScoreCategory::kFaulty;
  if (score < kNormalBelow) return ScoreCategory::kNormal;
  return ScoreCategory::kUncertain;
}

const char* category_name(ScoreCategory c) {
  switch (c) {
    case ScoreCategory::kFaulty: return "faulty";
    case ScoreCategory::kNormal: return "normal";
    default: return "uncertain";
  }
}

namespace {

std::string decoder_prefix(const std::string& class_id) { return "decoder/" + class_id + "/"; }

}  // namespace

Decoders::Decoders(const model::ModelConfig& config, const std::vector<model::ClassSpec>& classes,
                   std::uint64_t seed)
    : config_(config), classes_(classes) {
  ad::Rng rng(seed);
  const std::size_t conv_len = config_.window - config_.kernel_width + 1;
  const std::size_t c = config_.conv_channels, k = config_.kernel_width, z = config_.feature_dim;
  for (const auto& cls : classes_) {
    const std::string p = decoder_prefix(cls.class_id);
    const std::size_t m = cls.metric_names.size();
    params_.add(p + "dense/weight", ad::glorot_uniform({z, conv_len * c}, z, conv_len * c, rng));
    params_.add(p + "dense/bias", Tensor({conv_len * c}));
    params_.add(p + "deconv/kernels", ad::glorot_uniform({k, m, c}, k * c, k * m, rng));
    params_.add(p + "deconv/bias", Tensor({m}));
  }
}

const model::ClassSpec& Decoders::spec_for(const std::string& class_id) const {
  for (const auto& c : classes_) {
    if (c.class_id == class_id) return c;
  }
  throw ValidationError(fmt::format("no decoder for failure class '{}'", class_id));
}

Var Decoders::decode(ad::ParamBinder& bind, const std::string& class_id, Var feature) const {
  spec_for(class_id);
  const std::string p = decoder_prefix(class_id);
  const std::size_t conv_len = config_.window - config_.kernel_width + 1;
  Var h = ad::dense(feature, bind(p + "dense/weight"), bind(p + "dense/bias"));
  h = ad::reshape(h, {conv_len, config_.conv_channels});
  return ad::conv1d_transpose(h, bind(p + "deconv/kernels"), bind(p + "deconv/bias"));
}

Tensor Decoders::reconstruct(const std::string& class_id, const Tensor& feature) const {
  ad::Tape tape(false);
  ad::ParamBinder bind(tape, params_, nullptr);
  return decode(bind, class_id, tape.constant(feature)).value();
}

std::vector<Tensor> unit_features(const model::Localizer& model,
                                  std::span<const data::FailureRecord> records) {
  std::vector<Tensor> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(model.infer(r).unit_features);
  return out;
}

namespace {

Tensor feature_row(const Tensor& features, std::size_t row) {
  const std::size_t z = features.dim(1);
  std::vector<double> v(features.values().begin() + static_cast<std::ptrdiff_t>(row * z),
                        features.values().begin() + static_cast<std::ptrdiff_t>((row + 1) * z));
  return Tensor::vector(std::move(v));
}

// Mean per-metric squared reconstruction error over one failure's units.
Var failure_reconstruction_loss(ad::ParamBinder& bind, const Decoders& dec,
                                const data::FailureRecord& rec, const Tensor& features) {
  ad::Tape& tape = bind.tape();
  const graph::Fdg& g = *rec.fdg;
  std::vector<Var> terms;
  for (std::size_t i = 0; i < g.vertex_count(); ++i) {
    const Var recon = dec.decode(bind, g.unit_at(i).class_id, tape.constant(feature_row(features, i)));
    const Var err = ad::squared_error(recon, tape.constant(rec.windows[i].matrix));
    terms.push_back(ad::scale(err, 1.0 / static_cast<double>(rec.windows[i].metric_count())));
  }
  return ad::mean(ad::stack_rows(terms));
}

}  // namespace

double reconstruction_loss(const Decoders& decoders, std::span<const data::FailureRecord> records,
                           std::span<const Tensor> features) {
  if (records.empty()) throw ValidationError("reconstruction loss over no records");
  double total = 0.0;
  for (std::size_t r = 0; r < records.size(); ++r) {
    ad::Tape tape(false);
    ad::ParamBinder bind(tape, decoders.params(), nullptr);
    total += failure_reconstruction_loss(bind, decoders, records[r], features[r]).value().item();
  }
  return total / static_cast<double>(records.size());
}

DecoderTrainResult train_decoders(const model::Localizer& model,
                                  std::span<const data::FailureRecord> records,
                                  const DecoderConfig& cfg) {
  const auto feats = unit_features(model, records);
  return train_decoders(model, records, feats, cfg);
}

DecoderTrainResult train_decoders(const model::Localizer& model,
                                  std::span<const data::FailureRecord> records,
                                  std::span<const Tensor> features, const DecoderConfig& cfg) {
  if (records.empty()) throw ValidationError("decoder training needs records");
  if (features.size() != records.size()) throw ShapeError("decoder training: features/records mismatch");
  DecoderTrainResult out{Decoders(model.config(), model.classes(), cfg.seed), {}};
  ad::Adam adam(cfg.adam);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      ad::ParamStore& params = out.decoders.params();
      params.zero_grad();
      ad::GradientMap grads = ad::zero_gradients_like(params);
      for (std::size_t b = start; b < end; ++b) {
        ad::Tape tape;
        ad::ParamBinder bind(tape, params, &grads);
        const Var loss = failure_reconstruction_loss(bind, out.decoders, records[order[b]],
                                                     features[order[b]]);
        if (!std::isfinite(loss.value().item())) {
          throw DivergenceError(fmt::format("decoder loss is not finite at epoch {}", epoch + 1));
        }
        epoch_loss += loss.value().item();
        tape.backward(loss);
      }
      ad::add_to_store_grads(params, grads, 1.0 / static_cast<double>(end - start));
      adam.step(params);
    }
    out.loss_log.push_back(epoch_loss / static_cast<double>(records.size()));
  }
  return out;
}

std::vector<FeatureRef> feature_discrepancies(std::span<const Tensor> originals,
                                              std::span<const Tensor> reconstructions) {
  if (originals.size() != reconstructions.size()) {
    throw ShapeError("feature selection: originals and reconstructions differ in count");
  }
  if (originals.empty()) return {};
  const std::size_t m = originals[0].dim(1), w = originals[0].dim(0);
  const std::size_t nf = features::feature_catalog().size();
  // rel[metric][feature] -> per-sample discrepancies
  std::vector<std::vector<std::vector<double>>> rel(m, std::vector<std::vector<double>>(nf));
  std::vector<double> col_o(w), col_r(w);
  for (std::size_t s = 0; s < originals.size(); ++s) {
    if (originals[s].shape() != reconstructions[s].shape() || originals[s].dim(1) != m) {
      throw ShapeError("feature selection: window shapes differ");
    }
    for (std::size_t c = 0; c < m; ++c) {
      for (std::size_t r = 0; r < w; ++r) {
        col_o[r] = originals[s].at(r, c);
        col_r[r] = reconstructions[s].at(r, c);
      }
      const auto fo = features::extract_ts_features(col_o);
      const auto fr = features::extract_ts_features(col_r);
      for (std::size_t f = 0; f < nf; ++f) {
        rel[c][f].push_back(std::abs(fo[f] - fr[f]) / (std::abs(fo[f]) + 1.0));
      }
    }
  }
  std::vector<FeatureRef> out;
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t f = 0; f < nf; ++f) {
      auto& v = rel[c][f];
      std::sort(v.begin(), v.end());
      const std::size_t n = v.size();
      const double median = n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
      out.push_back({c, f, median});
    }
  }
  return out;
}

std::vector<FeatureRef> select_features(std::span<const Tensor> originals,
                                        std::span<const Tensor> reconstructions, double tau) {
  std::vector<FeatureRef> out;
  for (const auto& f : feature_discrepancies(originals, reconstructions)) {
    if (f.discrepancy < tau) out.push_back(f);
  }
  return out;
}

std::vector<double> feature_vector(const Tensor& window, std::span<const FeatureRef> selected) {
  const std::size_t m = window.dim(1), w = window.dim(0);
  std::vector<std::vector<double>> per_metric(m);
  std::vector<double> col(w);
  std::vector<double> out;
  out.reserve(selected.size());
  for (const auto& s : selected) {
    if (s.metric >= m) throw ShapeError(fmt::format("feature refers to metric #{} of {}", s.metric, m));
    if (per_metric[s.metric].empty()) {
      for (std::size_t r = 0; r < w; ++r) col[r] = window.at(r, s.metric);
      per_metric[s.metric] = features::extract_ts_features(col);
    }
    out.push_back(per_metric[s.metric][s.feature]);
  }
  return out;
}

std::vector<DecisionRule> extract_rules(const tree::DecisionTree& t, const std::string& class_id,
                                        std::span<const FeatureRef> selected,
                                        std::span<const std::string> metric_names) {
  const auto& catalog = features::feature_catalog();
  std::vector<DecisionRule> rules;
  for (const auto& path : t.leaf_paths()) {
    const tree::Node& leaf = t.nodes()[path.leaf];
    if (!leaf.pure() || leaf.positives + leaf.negatives == 0) continue;
    DecisionRule r;
    r.class_id = class_id;
    r.leaf = path.leaf;
    r.verdict = leaf.positives > 0 ? "faulty" : "normal";
    r.support = leaf.positives + leaf.negatives;
    for (const auto& c : path.conditions) {
      const FeatureRef& ref = selected[c.feature];
      r.conditions.push_back({catalog[ref.feature].name, metric_names[ref.metric], c.threshold,
                              c.greater ? ">" : "<="});
    }
    rules.push_back(std::move(r));
  }
  std::stable_sort(rules.begin(), rules.end(),
                   [](const DecisionRule& a, const DecisionRule& b) { return a.support > b.support; });
  return rules;
}

std::string render_rule(const DecisionRule& rule) {
  std::string out;
  for (std::size_t i = 0; i < rule.conditions.size(); ++i) {
    const auto& c = rule.conditions[i];
    if (i > 0) out += " AND ";
    out += fmt::format("{}({}) {} {:.4g}", c.feature, c.metric, c.direction, c.threshold);
  }
  if (out.empty()) out = "always";
  return fmt::format("{} -> {} (support {})", out, rule.verdict, rule.support);
}

double GlobalInterpretation::heldout_agreement() const {
  std::size_t agree = 0, total = 0;
  for (const auto& c : classes) {
    agree += c.heldout_agree;
    total += c.heldout_samples;
  }
  return total == 0 ? 0.0 : static_cast<double>(agree) / static_cast<double>(total);
}

std::size_t GlobalInterpretation::heldout_samples() const {
  std::size_t total = 0;
  for (const auto& c : classes) total += c.heldout_samples;
  return total;
}

namespace {

struct UnitSample {
  const Tensor* window;
  double score;
};

std::map<std::string, std::vector<UnitSample>> collect_units(std::span<const data::FailureRecord> records,
                                                             std::span<const std::vector<double>> scores) {
  std::map<std::string, std::vector<UnitSample>> out;
  for (std::size_t r = 0; r < records.size(); ++r) {
    const graph::Fdg& g = *records[r].fdg;
    for (std::size_t i = 0; i < g.vertex_count(); ++i) {
      out[g.unit_at(i).class_id].push_back({&records[r].windows[i].matrix, scores[r][i]});
    }
  }
  return out;
}

}  // namespace

GlobalInterpretation interpret_global(const model::Localizer& model,
                                      std::span<const data::FailureRecord> train,
                                      std::span<const data::FailureRecord> heldout,
                                      const GlobalOptions& options) {
  if (train.empty()) throw ValidationError("global interpretation needs training failures");
  std::vector<Tensor> feats;
  std::vector<std::vector<double>> train_scores, heldout_scores;
  for (const auto& r : train) {
    auto inf = model.infer(r);
    feats.push_back(std::move(inf.unit_features));
    train_scores.push_back(std::move(inf.scores));
  }
  for (const auto& r : heldout) heldout_scores.push_back(model.scores(r));

  GlobalInterpretation out;
  auto trained = train_decoders(model, train, feats, options.decoder);
  out.decoder_loss = trained.loss_log;
  const Decoders& dec = trained.decoders;
  logger().info("decoders trained: L_AE {:.4f} -> {:.4f}", out.decoder_loss.front(), out.decoder_loss.back());

  // Reconstructions of every training unit, grouped by class.
  std::map<std::string, std::vector<Tensor>> originals, recons;
  for (std::size_t r = 0; r < train.size(); ++r) {
    const graph::Fdg& g = *train[r].fdg;
    for (std::size_t i = 0; i < g.vertex_count(); ++i) {
      const std::string& cls = g.unit_at(i).class_id;
      originals[cls].push_back(train[r].windows[i].matrix);
      recons[cls].push_back(dec.reconstruct(cls, feature_row(feats[r], i)));
    }
  }
  const auto train_units = collect_units(train, train_scores);
  const auto heldout_units = collect_units(heldout, heldout_scores);

  for (const auto& spec : model.classes()) {
    if (!originals.count(spec.class_id)) continue;
    ClassInterpretation ci;
    ci.class_id = spec.class_id;
    ci.metric_names = spec.metric_names;
    ci.discrepancies = feature_discrepancies(originals[spec.class_id], recons[spec.class_id]);
    for (const auto& f : ci.discrepancies) {
      if (f.discrepancy < options.tau) ci.selected.push_back(f);
    }

    std::vector<std::vector<double>> x;
    std::vector<int> y;
    for (const auto& u : train_units.at(spec.class_id)) {
      const auto cat = categorize(u.score);
      if (cat == ScoreCategory::kUncertain) {
        ++ci.uncertain_dropped;
        continue;
      }
      x.push_back(feature_vector(*u.window, ci.selected));
      y.push_back(cat == ScoreCategory::kFaulty ? 1 : 0);
    }
    ci.train_samples = x.size();
    if (x.empty()) {
      logger().warn("class {}: no confident training units, skipping surrogate tree", spec.class_id);
      out.classes.push_back(std::move(ci));
      continue;
    }
    ci.tree = tree::DecisionTree::fit(x, y, options.tree);
    if (ci.tree.degenerate()) {
      logger().info("class {}: single category among confident units, one-leaf tree", spec.class_id);
    }
    ci.rules = extract_rules(ci.tree, spec.class_id, ci.selected, spec.metric_names);

    for (const auto& rule : ci.rules) {
      const int want = rule.verdict == "faulty" ? 1 : 0;
      const auto& path = ci.tree.leaf_paths();
      const auto it = std::find_if(path.begin(), path.end(),
                                   [&](const tree::LeafPath& p) { return p.leaf == rule.leaf; });
      for (std::size_t s = 0; s < x.size(); ++s) {
        if (ci.tree.leaf_of(x[s]) != rule.leaf) continue;
        const bool conditions_hold = std::all_of(it->conditions.begin(), it->conditions.end(),
                                                 [&](const tree::Condition& c) { return c.holds(x[s]); });
        if (!conditions_hold || y[s] != want) ci.replay_consistent = false;
      }
    }

    if (auto h = heldout_units.find(spec.class_id); h != heldout_units.end()) {
      for (const auto& u : h->second) {
        const auto cat = categorize(u.score);
        if (cat == ScoreCategory::kUncertain) continue;
        ++ci.heldout_samples;
        const int pred = ci.tree.predict(feature_vector(*u.window, ci.selected));
        if (pred == (cat == ScoreCategory::kFaulty ? 1 : 0)) ++ci.heldout_agree;
      }
    }
    logger().info("class {}: {}/{} features kept, {} rules, held-out agreement {}/{}", spec.class_id,
                  ci.selected.size(), ci.discrepancies.size(), ci.rules.size(), ci.heldout_agree,
                  ci.heldout_samples);
    out.classes.push_back(std::move(ci));
  }
  return out;
}

json rules_to_json(const ClassInterpretation& c) {
  const auto& catalog = features::feature_catalog();
  json selected = json::array(), rules = json::array();
  for (const auto& f : c.selected) {
    selected.push_back({{"feature", catalog[f.feature].name},
                        {"metric", c.metric_names[f.metric]},
                        {"discrepancy", f.discrepancy}});
  }
  for (const auto& r : c.rules) {
    json conds = json::array();
    for (const auto& cond : r.conditions) {
      conds.push_back({{"feature", cond.feature},
                       {"metric", cond.metric},
                       {"threshold", cond.threshold},
                       {"direction", cond.direction}});
    }
    rules.push_back({{"conditions", conds}, {"verdict", r.verdict}, {"support", r.support},
                     {"text", render_rule(r)}});
  }
  return {{"class_id", c.class_id},
          {"selected_features", selected},
          {"train_samples", c.train_samples},
          {"uncertain_dropped", c.uncertain_dropped},
          {"heldout_samples", c.heldout_samples},
          {"heldout_agreement",
           c.heldout_samples == 0 ? 0.0
                                  : static_cast<double>(c.heldout_agree) / static_cast<double>(c.heldout_samples)},
          {"tree_depth", c.tree.nodes().empty() ? 0 : c.tree.depth()},
          {"degenerate", c.tree.nodes().empty() || c.tree.degenerate()},
          {"rules", rules}};
}

std::string rules_to_text(const ClassInterpretation& c) {
  std::string out = fmt::format("Failure class {} ({} confident training units, {} features kept)\n",
                                c.class_id, c.train_samples, c.selected.size());
  if (c.rules.empty()) out += "  (no pure decision paths)\n";
  for (const auto& r : c.rules) out += "  " + render_rule(r) + "\n";
  return out;
}

TreeBaseline TreeBaseline::fit(std::span<const data::FailureRecord> train, const tree::TreeOptions& options) {
  std::map<std::string, std::pair<std::vector<std::vector<double>>, std::vector<int>>> data;
  for (const auto& rec : train) {
    const graph::Fdg& g = *rec.fdg;
    for (std::size_t i = 0; i < g.vertex_count(); ++i) {
      const Tensor& w = rec.windows[i].matrix;
      std::vector<FeatureRef> all;
      for (std::size_t m = 0; m < w.dim(1); ++m)
        for (std::size_t f = 0; f < features::feature_catalog().size(); ++f) all.push_back({m, f, 0.0});
      auto& [x, y] = data[g.unit_at(i).class_id];
      x.push_back(feature_vector(w, all));
      y.push_back(rec.is_faulty(g.unit_at(i).id) ? 1 : 0);
    }
  }
  TreeBaseline out;
  for (auto& [cls, xy] : data) out.trees_.emplace(cls, tree::DecisionTree::fit(xy.first, xy.second, options));
  return out;
}

Ranking TreeBaseline::localize(const data::FailureRecord& record) const {
  const graph::Fdg& g = *record.fdg;
  std::vector<double> scores(g.vertex_count(), 0.0);
  for (std::size_t i = 0; i < g.vertex_count(); ++i) {
    auto it = trees_.find(g.unit_at(i).class_id);
    if (it == trees_.end()) continue;
    const Tensor& w = record.windows[i].matrix;
    std::vector<FeatureRef> all;
    for (std::size_t m = 0; m < w.dim(1); ++m)
      for (std::size_t f = 0; f < features::feature_catalog().size(); ++f) all.push_back({m, f, 0.0});
    scores[i] = it->second.positive_fraction(feature_vector(w, all));
  }
  return make_ranking(record.failure_id, g, scores);
}

}  // namespace dejavu::interpret
