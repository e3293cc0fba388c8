#include "dejavu/experiments.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "dejavu/error.h"
#include "dejavu/log.h"

namespace dejavu::experiments {

RunOutcome train_and_evaluate(const graph::SystemDescription& system, const data::DatasetSplit& split,
                              const RunSettings& settings) {
  const auto t0 = std::chrono::steady_clock::now();
  model::Localizer init(settings.model, model::class_specs(system), settings.init_seed);
  train::TrainResult tr = train::train(std::move(init), split, settings.train);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const model::Localizer& m = tr.model;
  eval::EvalReport rep = eval::evaluate(
      "dejavu", [&m](const data::FailureRecord& r) { return model::localize(r, m); }, split.test);
  return {std::move(tr.model), std::move(rep), tr.log.size(), tr.best_epoch, tr.best_val_mar, secs};
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kNoGru: return "no_gru";
    case Variant::kNoAggregator: return "no_agg";
    case Variant::kNoBalance: return "no_balance";
    default: return "full";
  }
}

Variant variant_from_name(const std::string& name) {
  for (Variant v : {Variant::kFull, Variant::kNoGru, Variant::kNoAggregator, Variant::kNoBalance}) {
    if (name == variant_name(v)) return v;
  }
  throw ValidationError(fmt::format("unknown ablation variant '{}'", name));
}

RunSettings apply_variant(RunSettings s, Variant v) {
  switch (v) {
    case Variant::kNoGru: s.model.use_gru = false; break;
    case Variant::kNoAggregator: s.model.use_aggregator = false; break;
    case Variant::kNoBalance: s.train.balanced = false; break;
    default: break;
  }
  return s;
}

std::vector<data::FailureRecord> remove_edges(std::span<const data::FailureRecord> records, double fraction,
                                              std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw ValidationError(fmt::format("edge removal fraction {} is outside [0, 1)", fraction));
  }
  std::mt19937_64 rng(seed);
  std::vector<data::FailureRecord> out(records.begin(), records.end());
  for (auto& r : out) {
    std::vector<graph::IdPair> edges = r.fdg->edges();
    const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(edges.size())));
    if (k == 0) continue;
    // Partial Fisher-Yates: the first k slots become the removed sample.
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, edges.size() - 1);
      std::swap(edges[i], edges[pick(rng)]);
    }
    edges.resize(k);
    r.fdg = std::make_shared<const graph::Fdg>(r.fdg->without_edges(edges));
  }
  return out;
}

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

std::vector<SweepPoint> edge_removal_experiment(const graph::SystemDescription& system,
                                                const data::DatasetSplit& split,
                                                std::span<const double> fractions, std::size_t repeats,
                                                std::uint64_t seed, const RunSettings& settings) {
  std::vector<SweepPoint> out;
  for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
    SweepPoint p{fractions[fi], {}, 0.0};
    for (std::size_t rep = 0; rep < repeats; ++rep) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(fi), static_cast<std::uint32_t>(rep)};
      std::mt19937_64 draw(seq);
      const std::uint64_t s_train = draw(), s_val = draw(), s_test = draw();
      data::DatasetSplit cut{remove_edges(split.train, p.fraction, s_train),
                             remove_edges(split.validation, p.fraction, s_val),
                             remove_edges(split.test, p.fraction, s_test)};
      const auto run = train_and_evaluate(system, cut, settings);
      logger().info("edge removal {:.2f} repeat {}: test MAR {:.4f}", p.fraction, rep, run.test.mar);
      p.mars.push_back(run.test.mar);
    }
    p.mean_mar = mean_of(p.mars);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<data::FailureRecord> training_prefix(std::span<const data::FailureRecord> train, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ValidationError(fmt::format("training fraction {} is outside (0, 1]", fraction));
  }
  std::vector<data::FailureRecord> sorted(train.begin(), train.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const data::FailureRecord& a, const data::FailureRecord& b) {
    return std::tie(a.failure_time, a.failure_id) < std::tie(b.failure_time, b.failure_id);
  });
  const auto n = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(sorted.size()) + 1e-9));
  if (n == 0) throw ValidationError(fmt::format("training fraction {} leaves no training failures", fraction));
  sorted.resize(n);
  return sorted;
}

std::vector<SweepPoint> training_fraction_sweep(const graph::SystemDescription& system,
                                                const data::DatasetSplit& split,
                                                std::span<const double> fractions,
                                                const RunSettings& settings) {
  std::vector<SweepPoint> out;
  for (double f : fractions) {
    data::DatasetSplit cut{training_prefix(split.train, f), split.validation, split.test};
    const auto run = train_and_evaluate(system, cut, settings);
    logger().info("training fraction {:.2f} ({} failures): test MAR {:.4f}", f, cut.train.size(), run.test.mar);
    out.push_back({f, {run.test.mar}, run.test.mar});
  }
  return out;
}

nlohmann::json sweep_to_json(std::span<const SweepPoint> points) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : points) arr.push_back({{"fraction", p.fraction}, {"MAR", p.mars}, {"mean_MAR", p.mean_mar}});
  return arr;
}

}  // namespace dejavu::experiments
