#include "dejavu/training.h"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <fmt/format.h>

#include "dejavu/error.h"
#include "dejavu/eval.h"
#include "dejavu/log.h"

namespace dejavu::train {

using ad::Tensor;
using ad::Var;
using nlohmann::json;

std::vector<double> sample_weights(const data::FailureRecord& record) {
  const auto& units = record.fdg->units();
  const double n = static_cast<double>(units.size());
  std::vector<double> w(units.size());
  for (std::size_t i = 0; i < units.size(); ++i) w[i] = record.is_faulty(units[i].id) ? n : 1.0;
  return w;
}

std::vector<double> labels(const data::FailureRecord& record) {
  const auto& units = record.fdg->units();
  std::vector<double> y(units.size());
  for (std::size_t i = 0; i < units.size(); ++i) y[i] = record.is_faulty(units[i].id) ? 1.0 : 0.0;
  return y;
}

namespace {

void check_loss_inputs(std::size_t scores, std::size_t labels, std::size_t n) {
  if (scores == 0) throw ValidationError("weighted BCE over an empty unit set");
  if (scores != labels) throw ShapeError(fmt::format("weighted BCE: {} scores, {} labels", scores, labels));
  if (n == 0) throw ValidationError("weighted BCE: unit count must be positive");
}

double clamp_score(double s) { return std::clamp(s, kScoreClamp, 1.0 - kScoreClamp); }

double term(double s, double y) {
  const double p = clamp_score(s);
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

}  // namespace

double weighted_bce(std::span<const double> scores, std::span<const double> labels, std::size_t n) {
  check_loss_inputs(scores.size(), labels.size(), n);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double w = labels[i] > 0.5 ? static_cast<double>(n) : 1.0;
    num += w * term(scores[i], labels[i]);
    den += w;
  }
  return num / den;
}

Var weighted_bce_loss(Var scores, std::span<const double> labels, std::size_t n) {
  ad::Tape& tape = *scores.tape;
  const Tensor& s = tape.value(scores);
  check_loss_inputs(s.size(), labels.size(), n);
  std::vector<double> y(labels.begin(), labels.end());
  const double loss = weighted_bce(s.data(), y, n);
  const std::uint32_t si = scores.id;
  return tape.record(Tensor::scalar(loss), tape.requires_grad(si),
                     [si, y = std::move(y), n](ad::Tape& t, std::uint32_t self) {
                       const double g = t.grad(self)[0];
                       const Tensor& sv = t.value(si);
                       double den = 0.0;
                       for (double l : y) den += l > 0.5 ? static_cast<double>(n) : 1.0;
                       Tensor& gs = t.grad(si);
                       for (std::size_t i = 0; i < y.size(); ++i) {
                         const double s = sv[i];
                         if (s <= kScoreClamp || s >= 1.0 - kScoreClamp) continue;
                         const double w = y[i] > 0.5 ? static_cast<double>(n) : 1.0;
                         gs[i] += g * w / den * (s - y[i]) / (s * (1.0 - s));
                       }
                     });
}

BalancedSampler::BalancedSampler(Members members, std::uint64_t seed)
    : members_(std::move(members)), rng_(seed) {
  if (members_.empty()) throw ValidationError("balanced sampler needs at least one class");
  for (const auto& [cls, idx] : members_) {
    if (idx.empty()) throw ValidationError(fmt::format("balanced sampler: class '{}' has no failures", cls));
    pools_.push_back(&idx);
  }
}

BalancedSampler BalancedSampler::for_records(std::span<const data::FailureRecord> records,
                                             std::uint64_t seed, bool balanced) {
  Members m;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!balanced) {
      m["*"].push_back(i);
      continue;
    }
    for (const auto& c : records[i].truth_classes()) m[c].push_back(i);
  }
  return BalancedSampler(std::move(m), seed);
}

std::size_t BalancedSampler::next() {
  const auto& pool =
      *pools_[std::uniform_int_distribution<std::size_t>(0, pools_.size() - 1)(rng_)];
  return pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng_)];
}

double BalancedSampler::probability(std::size_t failure) const {
  double p = 0.0;
  for (const auto* pool : pools_) {
    const auto hits = std::count(pool->begin(), pool->end(), failure);
    p += static_cast<double>(hits) / static_cast<double>(pool->size());
  }
  return p / static_cast<double>(pools_.size());
}

void TrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0 || patience == 0) {
    throw ValidationError("train config: epochs, batch_size and patience must be positive");
  }
  if (!(adam.learning_rate > 0.0)) throw ValidationError("train config: learning_rate must be positive");
}

json train_config_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"patience", c.patience},
          {"learning_rate", c.adam.learning_rate},
          {"weight_decay", c.adam.weight_decay},
          {"clip_norm", c.adam.clip_norm},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"epsilon", c.adam.epsilon},
          {"seed", c.seed},
          {"balanced", c.balanced}};
}

TrainConfig train_config_from_json(const json& doc, TrainConfig c) {
  try {
    auto get = [&doc](const char* key, auto& field) {
      if (doc.contains(key)) field = doc.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("patience", c.patience);
    get("learning_rate", c.adam.learning_rate);
    get("weight_decay", c.adam.weight_decay);
    get("clip_norm", c.adam.clip_norm);
    get("beta1", c.adam.beta1);
    get("beta2", c.adam.beta2);
    get("epsilon", c.adam.epsilon);
    get("seed", c.seed);
    get("balanced", c.balanced);
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("train config: {}", e.what()));
  }
  c.validate();
  return c;
}

double mean_loss(const model::Localizer& model, std::span<const data::FailureRecord> records) {
  if (records.empty()) throw ValidationError("mean_loss over no records");
  double total = 0.0;
  for (const auto& r : records) total += weighted_bce(model.scores(r), labels(r), r.fdg->vertex_count());
  return total / static_cast<double>(records.size());
}

namespace {

EpochLog validate_epoch(const model::Localizer& m, std::span<const data::FailureRecord> val) {
  EpochLog e;
  if (val.empty()) return e;
  std::vector<Ranking> rankings;
  rankings.reserve(val.size());
  for (const auto& r : val) rankings.push_back(model::localize(r, m));
  const auto rep = eval::score_rankings("validation", rankings, val);
  e.val_mar = rep.mar;
  e.val_accuracy = rep.accuracy;
  return e;
}

}  // namespace

TrainResult train(model::Localizer initial, const data::DatasetSplit& split, const TrainConfig& cfg) {
  cfg.validate();
  if (split.train.empty()) throw ValidationError("training set is empty");
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();

  model::Localizer current = std::move(initial);
  ad::Adam adam(cfg.adam);
  BalancedSampler sampler = BalancedSampler::for_records(split.train, cfg.seed, cfg.balanced);
  const std::size_t batches = (split.train.size() + cfg.batch_size - 1) / cfg.batch_size;

  TrainResult result{current, {}, 0, INFINITY};
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      ad::ParamStore& params = current.params();
      params.zero_grad();
      ad::GradientMap grads = ad::zero_gradients_like(params);
      double batch_loss = 0.0;
      for (std::size_t i = 0; i < cfg.batch_size; ++i) {
        const data::FailureRecord& rec = split.train[sampler.next()];
        ad::Tape tape;
        ad::ParamBinder bind(tape, params, &grads);
        const auto fwd = current.forward(bind, rec);
        const Var loss = weighted_bce_loss(fwd.scores, labels(rec), rec.fdg->vertex_count());
        const double lv = loss.value().item();
        if (!std::isfinite(lv)) {
          throw DivergenceError(fmt::format("non-finite loss at epoch {} batch {} on failure '{}'",
                                            epoch, b, rec.failure_id));
        }
        batch_loss += lv;
        tape.backward(loss);
      }
      ad::add_to_store_grads(params, grads, 1.0 / static_cast<double>(cfg.batch_size));
      adam.step(params);
      epoch_loss += batch_loss / static_cast<double>(cfg.batch_size);
    }

    EpochLog e = validate_epoch(current, split.validation);
    e.epoch = epoch;
    e.train_loss = epoch_loss / static_cast<double>(batches);
    e.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    result.log.push_back(e);
    logger().debug("epoch {}: loss {:.5f} val MAR {:.4f}", epoch, e.train_loss, e.val_mar);

    if (split.validation.empty() || e.val_mar < result.best_val_mar) {
      result.best_val_mar = e.val_mar;
      result.best_epoch = epoch;
      result.model = current;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      logger().info("early stop at epoch {} (best epoch {}, val MAR {:.4f})", epoch,
                    result.best_epoch, result.best_val_mar);
      break;
    }
  }
  logger().info("trained {} epochs in {:.1f}s; best val MAR {:.4f} at epoch {}", result.log.size(),
                result.log.back().wall_seconds, result.best_val_mar, result.best_epoch);
  return result;
}

std::string train_log_csv(std::span<const EpochLog> log) {
  std::string out = "epoch,train_loss,val_MAR,val_A@1,val_A@2,val_A@3,val_A@5\n";
  for (const auto& e : log) {
    out += fmt::format("{},{:.8g},{:.6g}", e.epoch, e.train_loss, e.val_mar);
    for (std::size_t k : eval::kAccuracyKs) {
      auto it = e.val_accuracy.find(k);
      out += fmt::format(",{:.6g}", it == e.val_accuracy.end() ? 0.0 : it->second);
    }
    out += '\n';
  }
  return out;
}

}  // namespace dejavu::train
