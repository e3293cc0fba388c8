#include "dejavu/model.h"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "dejavu/ad/checkpoint.h"
#include "dejavu/ad/init.h"
#include "dejavu/dataset_io.h"
#include "dejavu/error.h"

namespace dejavu::model {

using ad::Shape;
using ad::Tensor;
using ad::Var;
using nlohmann::json;

void ModelConfig::validate() const {
  if (feature_dim == 0 || heads == 0 || layers == 0 || window == 0 || kernel_width == 0 ||
      conv_channels == 0 || gru_hidden == 0 || classifier_hidden == 0) {
    throw ValidationError("model config: all sizes must be positive");
  }
  if (kernel_width > window) {
    throw ValidationError(
        fmt::format("model config: kernel width {} exceeds window {}", kernel_width, window));
  }
  if (!(attention_slope >= 0.0)) throw ValidationError("model config: attention_slope must be >= 0");
}

json model_config_to_json(const ModelConfig& c) {
  return {{"feature_dim", c.feature_dim},     {"heads", c.heads},
          {"layers", c.layers},               {"window", c.window},
          {"kernel_width", c.kernel_width},   {"conv_channels", c.conv_channels},
          {"gru_hidden", c.gru_hidden},       {"classifier_hidden", c.classifier_hidden},
          {"attention_slope", c.attention_slope}, {"use_gru", c.use_gru},
          {"use_aggregator", c.use_aggregator}};
}

ModelConfig model_config_from_json(const json& doc, ModelConfig c) {
  try {
    auto get = [&doc](const char* key, auto& field) {
      if (doc.contains(key)) field = doc.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("feature_dim", c.feature_dim);
    get("heads", c.heads);
    get("layers", c.layers);
    get("window", c.window);
    get("kernel_width", c.kernel_width);
    get("conv_channels", c.conv_channels);
    get("gru_hidden", c.gru_hidden);
    get("classifier_hidden", c.classifier_hidden);
    get("attention_slope", c.attention_slope);
    get("use_gru", c.use_gru);
    get("use_aggregator", c.use_aggregator);
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("model config: {}", e.what()));
  }
  c.validate();
  return c;
}

std::vector<ClassSpec> class_specs(const graph::SystemDescription& system) {
  std::vector<ClassSpec> out;
  for (const auto& c : system.classes) out.push_back({c.id, c.metric_names});
  std::sort(out.begin(), out.end(),
            [](const ClassSpec& a, const ClassSpec& b) { return a.class_id < b.class_id; });
  return out;
}

Neighborhoods closed_neighborhoods(const graph::Fdg& g) {
  Neighborhoods out(g.vertex_count());
  for (std::size_t i = 0; i < g.vertex_count(); ++i) {
    out[i].push_back(static_cast<std::uint32_t>(i));
    for (std::uint32_t j : g.neighbor_indices(i)) {
      if (j != i) out[i].push_back(j);
    }
  }
  return out;
}

namespace {

struct AttentionCache {
  std::vector<std::vector<double>> alpha;
  std::vector<std::vector<double>> logit;  // pre-activation
};

AttentionCache attention_forward(const Tensor& t, const Tensor& a, const Neighborhoods& nb,
                                 double slope) {
  const std::size_t n = t.dim(0), z = t.dim(1);
  std::vector<double> src(n, 0.0), dst(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < z; ++c) {
      src[i] += a[c] * t.at(i, c);
      dst[i] += a[z + c] * t.at(i, c);
    }
  }
  AttentionCache cache;
  cache.alpha.resize(n);
  cache.logit.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& hood = nb[i];
    auto& e = cache.logit[i];
    auto& al = cache.alpha[i];
    e.resize(hood.size());
    al.resize(hood.size());
    double hi = -INFINITY;
    for (std::size_t k = 0; k < hood.size(); ++k) {
      e[k] = src[i] + dst[hood[k]];
      al[k] = e[k] > 0.0 ? e[k] : slope * e[k];
      hi = std::max(hi, al[k]);
    }
    double total = 0.0;
    for (double& v : al) {
      v = std::exp(v - hi);
      total += v;
    }
    for (double& v : al) v /= total;
  }
  return cache;
}

}  // namespace

std::vector<std::vector<double>> attention_weights(const Tensor& transformed, const Tensor& attention,
                                                   const Neighborhoods& neighborhoods, double slope) {
  return attention_forward(transformed, attention, neighborhoods, slope).alpha;
}

Var graph_attention(Var transformed, Var attention, std::shared_ptr<const Neighborhoods> nb,
                    double slope) {
  ad::Tape& tape = *transformed.tape;
  const Tensor& t = tape.value(transformed);
  const Tensor& a = tape.value(attention);
  if (t.rank() != 2 || a.rank() != 1 || a.size() != 2 * t.dim(1) || nb->size() != t.dim(0)) {
    throw ShapeError(fmt::format("graph_attention: features {}, attention {}, {} neighborhoods",
                                 ad::shape_string(t.shape()), ad::shape_string(a.shape()), nb->size()));
  }
  const std::size_t n = t.dim(0), z = t.dim(1);
  auto cache = std::make_shared<AttentionCache>(attention_forward(t, a, *nb, slope));
  Tensor out({n, z});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& hood = (*nb)[i];
    for (std::size_t k = 0; k < hood.size(); ++k) {
      const double w = cache->alpha[i][k];
      for (std::size_t c = 0; c < z; ++c) out.at(i, c) += w * t.at(hood[k], c);
    }
  }
  const std::uint32_t ti = transformed.id, ai = attention.id;
  return tape.record(
      std::move(out), tape.requires_grad(ti) || tape.requires_grad(ai),
      [ti, ai, nb, cache, slope, n, z](ad::Tape& tp, std::uint32_t self) {
        const Tensor& g = tp.grad(self);
        const Tensor& tv = tp.value(ti);
        const Tensor& av = tp.value(ai);
        Tensor dt({n, z});
        std::vector<double> dsrc(n, 0.0), ddst(n, 0.0);
        std::vector<double> dalpha;
        for (std::size_t i = 0; i < n; ++i) {
          const auto& hood = (*nb)[i];
          const auto& al = cache->alpha[i];
          const auto& e = cache->logit[i];
          dalpha.assign(hood.size(), 0.0);
          double inner = 0.0;
          for (std::size_t k = 0; k < hood.size(); ++k) {
            const std::size_t j = hood[k];
            for (std::size_t c = 0; c < z; ++c) {
              dalpha[k] += g.at(i, c) * tv.at(j, c);
              dt.at(j, c) += al[k] * g.at(i, c);
            }
            inner += al[k] * dalpha[k];
          }
          for (std::size_t k = 0; k < hood.size(); ++k) {
            const double dl = al[k] * (dalpha[k] - inner);
            const double de = dl * (e[k] > 0.0 ? 1.0 : slope);
            dsrc[i] += de;
            ddst[hood[k]] += de;
          }
        }
        if (tp.requires_grad(ai)) {
          Tensor& ga = tp.grad(ai);
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < z; ++c) {
              ga[c] += dsrc[i] * tv.at(i, c);
              ga[z + c] += ddst[i] * tv.at(i, c);
            }
          }
        }
        if (tp.requires_grad(ti)) {
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < z; ++c) dt.at(i, c) += dsrc[i] * av[c] + ddst[i] * av[z + c];
          }
          tp.grad(ti) += dt;
        }
      });
}

namespace {

std::string extractor_prefix(const std::string& class_id) { return "extractor/" + class_id + "/"; }

std::string head_prefix(std::size_t layer, std::size_t head) {
  return fmt::format("aggregator/layer{}/head{}/", layer, head);
}

}  // namespace

std::vector<std::pair<std::string, Shape>> Localizer::expected_shapes() const {
  const auto& c = config_;
  std::vector<std::pair<std::string, Shape>> out;
  const std::size_t conv_len = c.window - c.kernel_width + 1;
  for (const auto& cls : classes_) {
    const std::string p = extractor_prefix(cls.class_id);
    const std::size_t m = cls.metric_names.size();
    std::size_t conv_in = m;
    if (c.use_gru) {
      out.push_back({p + "gru/input_weight", {m, 3 * c.gru_hidden}});
      out.push_back({p + "gru/hidden_weight", {c.gru_hidden, 3 * c.gru_hidden}});
      out.push_back({p + "gru/bias", {3 * c.gru_hidden}});
      conv_in = c.gru_hidden;
    }
    out.push_back({p + "conv/kernels", {c.kernel_width, conv_in, c.conv_channels}});
    out.push_back({p + "conv/bias", {c.conv_channels}});
    out.push_back({p + "dense/weight", {conv_len * c.conv_channels, c.feature_dim}});
    out.push_back({p + "dense/bias", {c.feature_dim}});
  }
  const std::size_t width = c.aggregated_width();
  if (c.use_aggregator) {
    out.push_back({"aggregator/proj/weight", {c.feature_dim, width}});
    out.push_back({"aggregator/proj/bias", {width}});
    for (std::size_t l = 0; l < c.layers; ++l) {
      for (std::size_t h = 0; h < c.heads; ++h) {
        out.push_back({head_prefix(l, h) + "weight", {width, c.feature_dim}});
        out.push_back({head_prefix(l, h) + "attention", {2 * c.feature_dim}});
      }
    }
  }
  out.push_back({"classifier/hidden/weight", {width, c.classifier_hidden}});
  out.push_back({"classifier/hidden/bias", {c.classifier_hidden}});
  out.push_back({"classifier/output/weight", {c.classifier_hidden, 1}});
  out.push_back({"classifier/output/bias", {1}});
  return out;
}

Localizer::Localizer(ModelConfig config, std::vector<ClassSpec> classes, std::uint64_t seed)
    : config_(config), classes_(std::move(classes)) {
  config_.validate();
  if (classes_.empty()) throw ValidationError("model needs at least one failure class");
  ad::Rng rng(seed);
  for (const auto& [name, shape] : expected_shapes()) {
    const bool is_bias = name.ends_with("bias");
    Tensor init(shape);
    if (name.ends_with("gru/hidden_weight")) {
      // One orthogonal block per gate.
      const std::size_t h = shape[0];
      for (std::size_t gate = 0; gate < 3; ++gate) {
        const Tensor q = ad::orthogonal(h, rng);
        for (std::size_t r = 0; r < h; ++r)
          for (std::size_t col = 0; col < h; ++col) init.at(r, gate * h + col) = q.at(r, col);
      }
    } else if (name.ends_with("conv/kernels")) {
      init = ad::glorot_uniform(shape, shape[0] * shape[1], shape[0] * shape[2], rng);
    } else if (name.ends_with("attention")) {
      init = ad::glorot_uniform(shape, shape[0], 1, rng);
    } else if (!is_bias) {
      init = ad::glorot_uniform(shape, shape[0], shape[1], rng);
    }
    params_.add(name, std::move(init));
  }
}

Localizer::Localizer(ModelConfig config, std::vector<ClassSpec> classes, ad::ParamStore params)
    : config_(config), classes_(std::move(classes)), params_(std::move(params)) {
  config_.validate();
  const auto expected = expected_shapes();
  for (const auto& [name, shape] : expected) {
    if (!params_.contains(name)) throw ValidationError(fmt::format("checkpoint lacks parameter '{}'", name));
    if (params_.value(name).shape() != shape) {
      throw ValidationError(fmt::format("parameter '{}' has shape {}, expected {}", name,
                                        ad::shape_string(params_.value(name).shape()),
                                        ad::shape_string(shape)));
    }
  }
  if (params_.entries().size() != expected.size()) {
    throw ValidationError(fmt::format("checkpoint has {} parameters, model expects {}",
                                      params_.entries().size(), expected.size()));
  }
}

const ClassSpec& Localizer::spec_for(const std::string& class_id) const {
  for (const auto& c : classes_) {
    if (c.class_id == class_id) return c;
  }
  throw ValidationError(fmt::format("model has no extractor for failure class '{}'", class_id));
}

void Localizer::check_compatible(const graph::SystemDescription& system) const {
  for (const auto& u : system.units) {
    const auto& want = system.class_of_unit(u.id);
    const ClassSpec* have = nullptr;
    for (const auto& c : classes_) {
      if (c.class_id == want.id) have = &c;
    }
    if (have == nullptr) {
      throw ValidationError(fmt::format("class-set mismatch: unit '{}' has class '{}' unknown to the model",
                                        u.id, want.id));
    }
    if (have->metric_names != want.metric_names) {
      throw ValidationError(fmt::format("class-set mismatch: class '{}' metric list differs from the model's",
                                        want.id));
    }
  }
}

Var Localizer::extract(ad::ParamBinder& bind, const std::string& class_id, Var window) const {
  const ClassSpec& spec = spec_for(class_id);
  const Shape& shape = window.shape();
  if (shape.size() != 2 || shape[0] != config_.window || shape[1] != spec.metric_names.size()) {
    throw ShapeError(fmt::format("class '{}' expects a [{}, {}] window, got {}", class_id,
                                 config_.window, spec.metric_names.size(), ad::shape_string(shape)));
  }
  const std::string p = extractor_prefix(class_id);
  Var h = window;
  if (config_.use_gru) {
    h = ad::gru_sequence(window, {bind(p + "gru/input_weight"), bind(p + "gru/hidden_weight"),
                                  bind(p + "gru/bias")});
  }
  Var c = ad::gelu(ad::conv1d(h, bind(p + "conv/kernels"), bind(p + "conv/bias")));
  Var flat = ad::reshape(c, {c.value().size()});
  return ad::dense(flat, bind(p + "dense/weight"), bind(p + "dense/bias"));
}

Var Localizer::aggregate(ad::ParamBinder& bind, Var features, const graph::Fdg& g) const {
  if (!config_.use_aggregator) return features;
  if (features.shape().size() != 2 || features.shape()[0] != g.vertex_count()) {
    throw ShapeError(fmt::format("aggregate: {} features for {} vertices",
                                 ad::shape_string(features.shape()), g.vertex_count()));
  }
  auto nb = std::make_shared<const Neighborhoods>(closed_neighborhoods(g));
  Var x = ad::dense(features, bind("aggregator/proj/weight"), bind("aggregator/proj/bias"));
  std::vector<Var> heads(config_.heads);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    for (std::size_t h = 0; h < config_.heads; ++h) {
      const std::string p = head_prefix(l, h);
      Var t = ad::matmul(x, bind(p + "weight"));
      heads[h] = graph_attention(t, bind(p + "attention"), nb, config_.attention_slope);
    }
    x = ad::add(x, ad::concat_columns(heads));
  }
  return x;
}

Var Localizer::classify(ad::ParamBinder& bind, Var aggregated) const {
  const Shape& s = aggregated.shape();
  if (s.size() != 2 || s[1] != config_.aggregated_width()) {
    throw ShapeError(fmt::format("classifier expects width {}, got {}", config_.aggregated_width(),
                                 ad::shape_string(s)));
  }
  Var hidden = ad::gelu(
      ad::dense(aggregated, bind("classifier/hidden/weight"), bind("classifier/hidden/bias")));
  Var logit = ad::dense(hidden, bind("classifier/output/weight"), bind("classifier/output/bias"));
  return ad::sigmoid(ad::reshape(logit, {s[0]}));
}

ForwardResult Localizer::forward(ad::ParamBinder& bind, const data::FailureRecord& record) const {
  const graph::Fdg& g = *record.fdg;
  if (record.windows.size() != g.vertex_count()) {
    throw ShapeError(fmt::format("failure '{}': {} windows for {} units", record.failure_id,
                                 record.windows.size(), g.vertex_count()));
  }
  ad::Tape& tape = bind.tape();
  std::vector<Var> rows;
  rows.reserve(g.vertex_count());
  for (std::size_t i = 0; i < g.vertex_count(); ++i) {
    rows.push_back(extract(bind, g.unit_at(i).class_id, tape.constant(record.windows[i].matrix)));
  }
  ForwardResult r;
  r.unit_features = ad::stack_rows(rows);
  r.aggregated = aggregate(bind, r.unit_features, g);
  r.scores = classify(bind, r.aggregated);
  return r;
}

Inference Localizer::infer(const data::FailureRecord& record) const {
  ad::Tape tape(false);
  ad::ParamBinder bind(tape, params_, nullptr);
  const ForwardResult r = forward(bind, record);
  const auto& s = r.scores.value().values();
  return {r.unit_features.value(), r.aggregated.value(), {s.begin(), s.end()}};
}

std::vector<double> Localizer::scores(const data::FailureRecord& record) const {
  return infer(record).scores;
}

Ranking localize(const data::FailureRecord& record, const Localizer& model) {
  const auto s = model.scores(record);
  return make_ranking(record.failure_id, *record.fdg, s);
}

void save_model(const Localizer& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  ad::save_params(model.params(), dir / kParamsFile);
  json classes = json::array();
  for (const auto& c : model.classes()) {
    classes.push_back({{"class_id", c.class_id}, {"metrics", c.metric_names}});
  }
  data::write_json({{"format", "dejavu-model"},
                    {"version", ad::kCheckpointFormatVersion},
                    {"config", model_config_to_json(model.config())},
                    {"classes", classes}},
                   dir / kManifestFile);
}

Localizer load_model(const std::filesystem::path& dir) {
  const json manifest = data::read_json(dir / kManifestFile);
  if (manifest.value("format", "") != "dejavu-model") {
    throw ValidationError(fmt::format("{}: not a model manifest", (dir / kManifestFile).string()));
  }
  if (manifest.value("version", 0) != ad::kCheckpointFormatVersion) {
    throw ValidationError(fmt::format("{}: unsupported version {}", (dir / kManifestFile).string(),
                                      manifest.value("version", 0)));
  }
  std::vector<ClassSpec> classes;
  try {
    for (const auto& c : manifest.at("classes")) {
      classes.push_back({c.at("class_id").get<std::string>(), c.at("metrics").get<std::vector<std::string>>()});
    }
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("model manifest: {}", e.what()));
  }
  return Localizer(model_config_from_json(manifest.at("config")), std::move(classes),
                   ad::load_params(dir / kParamsFile));
}

}  // namespace dejavu::model
