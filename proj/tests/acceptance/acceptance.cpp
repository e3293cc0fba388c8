// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance --cli <path to dejavu> [--work dir] [--only 1,2,...] [--report file]
//   acceptance --prepare --work dir      train and store the headline model
//
// Criteria that need the headline model (default simulator, default
// training) load it from <work>/headline when present, otherwise train it.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "json.hpp"

#include "dejavu/ad/ops.h"
#include "dejavu/baselines.h"
#include "dejavu/eval.h"
#include "dejavu/experiments.h"
#include "dejavu/interpret_global.h"
#include "dejavu/interpret_local.h"
#include "dejavu/log.h"
#include "dejavu/model.h"
#include "dejavu/sim.h"
#include "dejavu/training.h"

#include "../support/fixtures.h"
#include "../support/gradcheck.h"

namespace fs = std::filesystem;
using namespace dejavu;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
  nlohmann::json values = nlohmann::json::object();
};

// Budget for the repeated retraining in the ablation and edge-removal
// criteria; the single headline run uses the default TrainConfig.
train::TrainConfig reduced_budget(std::uint64_t seed) {
  train::TrainConfig c;
  c.epochs = 300;
  c.patience = 50;
  c.seed = seed;
  return c;
}

// Shared state, built on first use.
struct Context {
  std::string cli;
  fs::path work;

  std::optional<sim::SimConfig> sim_cfg;
  std::optional<data::Dataset> dataset;
  std::optional<data::DatasetSplit> split;
  std::optional<model::Localizer> model;
  std::optional<eval::EvalReport> report;
  double pipeline_seconds = 0.0;
  std::map<std::uint64_t, double> full_mar;  // reduced budget, by seed

  void ensure_dataset() {
    if (dataset) return;
    const auto t0 = Clock::now();
    sim_cfg = sim::SimConfig{};
    dataset = sim::to_dataset(sim::simulate(*sim_cfg));
    split = data::split_dataset(dataset->records);
    pipeline_seconds += seconds_since(t0);
  }

  fs::path headline_dir() const { return work / "headline"; }

  void ensure_model(bool retrain = false) {
    if (model) return;
    ensure_dataset();
    const fs::path dir = headline_dir();
    if (!retrain && fs::exists(dir / "headline.json")) {
      std::ifstream is(dir / "headline.json");
      const auto doc = nlohmann::json::parse(is);
      model = model::load_model(dir);
      model->check_compatible(dataset->system);
      pipeline_seconds += doc.at("train_seconds").get<double>();
      const auto t0 = Clock::now();
      report = eval::evaluate(
          "dejavu", [this](const data::FailureRecord& r) { return model::localize(r, *model); }, split->test);
      pipeline_seconds += seconds_since(t0);
      logger().info("headline model loaded from {}", dir.string());
      return;
    }
    const auto t0 = Clock::now();
    experiments::RunSettings s;
    s.model.window = sim_cfg->window;
    auto run = experiments::train_and_evaluate(dataset->system, *split, s);
    logger().info("headline run: {} epochs, best {} (val MAR {:.4f}), test MAR {:.4f}", run.epochs, run.best_epoch,
                  run.best_val_mar, run.test.mar);
    model = std::move(run.model);
    report = std::move(run.test);
    pipeline_seconds += seconds_since(t0);
    fs::create_directories(dir);
    model::save_model(*model, dir);
    std::ofstream os(dir / "headline.json");
    os << nlohmann::json{{"epochs", run.epochs},
                         {"best_epoch", run.best_epoch},
                         {"best_val_MAR", run.best_val_mar},
                         {"train_seconds", run.train_seconds}}
              .dump(2)
       << "\n";
  }

  double full_reduced(std::uint64_t seed) {
    auto it = full_mar.find(seed);
    if (it != full_mar.end()) return it->second;
    ensure_dataset();
    experiments::RunSettings s{{}, reduced_budget(seed), seed};
    const double m = experiments::train_and_evaluate(dataset->system, *split, s).test.mar;
    full_mar[seed] = m;
    return m;
  }
};

// ---- 1 ---------------------------------------------------------------------

Outcome gradient_correctness(Context&) {
  using namespace ad;
  using testing::weighted_sum;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  auto rt = [&](Shape s, double lo = -1, double hi = 1) { return testing::random_tensor(s, rng, lo, hi); };
  auto nb = std::make_shared<const model::Neighborhoods>(model::Neighborhoods{{0, 1, 2}, {1, 0}, {2, 0}, {3}});

  struct Case {
    std::string name;
    std::vector<Tensor> inputs;
    testing::ScalarFn f;
  };
  const std::vector<Case> cases = {
      {"add", {rt({3, 4}), rt({3, 4})}, [](Tape& t, const auto& v) { return weighted_sum(t, add(v[0], v[1])); }},
      {"sub", {rt({3, 4}), rt({3, 4})}, [](Tape& t, const auto& v) { return weighted_sum(t, sub(v[0], v[1])); }},
      {"mul", {rt({3, 4}), rt({3, 4})}, [](Tape& t, const auto& v) { return weighted_sum(t, mul(v[0], v[1])); }},
      {"scale", {rt({5})}, [](Tape& t, const auto& v) { return weighted_sum(t, scale(v[0], 2.5)); }},
      {"sum", {rt({5})}, [](Tape&, const auto& v) { return sum(v[0]); }},
      {"mean", {rt({2, 3})}, [](Tape&, const auto& v) { return mean(v[0]); }},
      {"squared_error", {rt({4}), rt({4})}, [](Tape&, const auto& v) { return squared_error(v[0], v[1]); }},
      {"matmul", {rt({3, 4}), rt({4, 2})}, [](Tape& t, const auto& v) { return weighted_sum(t, matmul(v[0], v[1])); }},
      {"dense", {rt({3, 4}), rt({4, 2}), rt({2})},
       [](Tape& t, const auto& v) { return weighted_sum(t, dense(v[0], v[1], v[2])); }},
      {"conv1d", {rt({7, 2}), rt({3, 2, 4}), rt({4})},
       [](Tape& t, const auto& v) { return weighted_sum(t, conv1d(v[0], v[1], v[2])); }},
      {"conv1d_transpose", {rt({5, 4}), rt({3, 2, 4}), rt({2})},
       [](Tape& t, const auto& v) { return weighted_sum(t, conv1d_transpose(v[0], v[1], v[2])); }},
      {"gru", {rt({5, 2}), rt({2, 9}), rt({3, 9}), rt({9})},
       [](Tape& t, const auto& v) { return weighted_sum(t, gru_sequence(v[0], {v[1], v[2], v[3]})); }},
      {"gelu", {rt({6}, -3, 3)}, [](Tape& t, const auto& v) { return weighted_sum(t, gelu(v[0])); }},
      {"sigmoid", {rt({6}, -3, 3)}, [](Tape& t, const auto& v) { return weighted_sum(t, sigmoid(v[0])); }},
      {"tanh", {rt({6}, -3, 3)}, [](Tape& t, const auto& v) { return weighted_sum(t, ad::tanh(v[0])); }},
      {"leaky_rectifier", {rt({6}, -3, 3)},
       [](Tape& t, const auto& v) { return weighted_sum(t, leaky_rectifier(v[0], 0.2)); }},
      {"log", {rt({6}, 0.2, 3)}, [](Tape& t, const auto& v) { return weighted_sum(t, ad::log(v[0])); }},
      {"softmax", {rt({3, 4}, -2, 2)}, [](Tape& t, const auto& v) { return weighted_sum(t, softmax(v[0])); }},
      {"concat_columns", {rt({3, 2}), rt({3, 3})},
       [](Tape& t, const auto& v) {
         std::vector<Var> p{v[0], v[1]};
         return weighted_sum(t, concat_columns(p));
       }},
      {"stack_rows", {rt({4}), rt({4})},
       [](Tape& t, const auto& v) {
         std::vector<Var> p{v[0], v[1]};
         return weighted_sum(t, stack_rows(p));
       }},
      {"reshape", {rt({3, 4})}, [](Tape& t, const auto& v) { return weighted_sum(t, reshape(v[0], {4, 3})); }},
      {"graph_attention", {rt({4, 3}), rt({6})},
       [nb](Tape& t, const auto& v) { return weighted_sum(t, model::graph_attention(v[0], v[1], nb, 0.2)); }},
      {"weighted_bce", {rt({4}, 0.05, 0.95)},
       [](Tape&, const auto& v) { return train::weighted_bce_loss(v[0], std::vector<double>{0, 1, 0, 0}, 4); }},
  };

  Outcome o;
  double worst = 0.0;
  std::string worst_op;
  for (const auto& c : cases) {
    const double e = testing::check_gradient(c.inputs, c.f);
    o.values["ops"][c.name] = e;
    if (e >= worst) {
      worst = e;
      worst_op = c.name;
    }
  }

  model::Localizer m(testing::tiny_model_config(), model::class_specs(testing::tiny_system()), 5);
  const auto rec = testing::tiny_record(3);
  const auto y = train::labels(rec);
  const double pipeline = testing::check_param_gradient(m.params(), [&](ad::ParamBinder& bind) {
    return train::weighted_bce_loss(m.forward(bind, rec).scores, y, y.size());
  });
  const double secs = seconds_since(t0);
  o.values["pipeline"] = pipeline;
  o.values["seconds"] = secs;
  o.pass = worst < 1e-5 && pipeline < 1e-4 && secs < 60.0;
  o.detail = fmt::format("{} ops, worst rel err {:.2e} ({}) < 1e-5; 3-unit pipeline {:.2e} < 1e-4; {:.1f} s < 60 s",
                         cases.size(), worst, worst_op, pipeline, secs);
  return o;
}

// ---- 2 ---------------------------------------------------------------------

Outcome simulator_efficacy(Context& ctx) {
  ctx.ensure_model();
  const auto& r = *ctx.report;
  Outcome o;
  const double a5 = r.accuracy.at(5);
  o.values = {{"MAR", r.mar},
              {"A@1", r.accuracy.at(1)},
              {"A@5", a5},
              {"pipeline_seconds", ctx.pipeline_seconds},
              {"max_localization_seconds", r.max_seconds_per_failure},
              {"units", ctx.dataset->fdg->vertex_count()}};
  o.pass = r.mar <= 3.0 && a5 >= 0.90 && ctx.pipeline_seconds <= 1800.0 && r.max_seconds_per_failure < 1.0;
  o.detail = fmt::format("test MAR {:.4f} <= 3.0, A@5 {:.3f} >= 0.90, simulate+train+evaluate {:.0f} s <= 1800 s, "
                         "slowest localization {:.4f} s < 1 s",
                         r.mar, a5, ctx.pipeline_seconds, r.max_seconds_per_failure);
  return o;
}

// ---- 3 ---------------------------------------------------------------------

Outcome baseline_ordering(Context& ctx) {
  ctx.ensure_model();
  const auto rwm = eval::evaluate(
      "rw_metric", [](const data::FailureRecord& r) { return baselines::randomwalk_at_metric(r); }, ctx.split->test);
  const auto rwf = eval::evaluate(
      "rw_fi", [](const data::FailureRecord& r) { return baselines::randomwalk_at_fi(r); }, ctx.split->test);
  Outcome o;
  const double d = ctx.report->mar;
  o.values = {{"dejavu", d}, {"rw_metric", rwm.mar}, {"rw_fi", rwf.mar}};
  o.pass = d < rwm.mar && d < rwf.mar;
  o.detail = fmt::format("MAR dejavu {:.4f} < RandomWalk@Metric {:.4f} and < RandomWalk@FI {:.4f}", d, rwm.mar, rwf.mar);
  return o;
}

// ---- 4 ---------------------------------------------------------------------

Outcome ablation_direction(Context& ctx) {
  ctx.ensure_dataset();
  const std::uint64_t seeds[] = {0, 1, 2};
  std::map<std::string, double> mean;
  Outcome o;
  for (auto v : {experiments::Variant::kFull, experiments::Variant::kNoAggregator, experiments::Variant::kNoGru}) {
    double total = 0.0;
    for (std::uint64_t s : seeds) {
      double m;
      if (v == experiments::Variant::kFull) {
        m = ctx.full_reduced(s);
      } else {
        experiments::RunSettings rs{{}, reduced_budget(s), s};
        m = experiments::train_and_evaluate(ctx.dataset->system, *ctx.split, experiments::apply_variant(rs, v))
                .test.mar;
      }
      logger().info("ablation {} seed {}: test MAR {:.4f}", experiments::variant_name(v), s, m);
      o.values[experiments::variant_name(v)].push_back(m);
      total += m;
    }
    mean[experiments::variant_name(v)] = total / 3.0;
  }
  o.pass = mean["full"] <= mean["no_agg"] && mean["full"] <= mean["no_gru"];
  o.detail = fmt::format("mean MAR over 3 seeds: full {:.4f} <= w/o AGG {:.4f} and <= w/o GRU {:.4f}", mean["full"],
                         mean["no_agg"], mean["no_gru"]);
  return o;
}

// ---- 5 ---------------------------------------------------------------------

Outcome generalization(Context& ctx) {
  ctx.ensure_model();
  const auto su = eval::seen_unseen_split(ctx.split->test, ctx.split->train);
  std::vector<double> seen, unseen;
  for (std::size_t i : su.seen) seen.push_back(ctx.report->per_failure[i].average_rank);
  for (std::size_t i : su.unseen) unseen.push_back(ctx.report->per_failure[i].average_rank);
  auto avg = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); };
  const double share = double(unseen.size()) / double(ctx.split->test.size());
  Outcome o;
  if (unseen.empty() || seen.empty()) {
    o.detail = "test split lacks seen or unseen failures";
    return o;
  }
  const double ms = avg(seen), mu = avg(unseen);
  o.values = {{"seen_MAR", ms}, {"unseen_MAR", mu}, {"unseen_share", share}, {"unseen", unseen.size()}};
  o.pass = share >= 0.30 && mu <= 2.0 * ms;
  o.detail = fmt::format("unseen MAR {:.4f} <= 2 x seen MAR {:.4f}; {} of {} test failures unseen ({:.0f}% >= 30%)", mu,
                         ms, unseen.size(), ctx.split->test.size(), 100 * share);
  return o;
}

// ---- 6 ---------------------------------------------------------------------

Outcome edge_removal(Context& ctx) {
  ctx.ensure_dataset();
  const double base = ctx.full_reduced(0);
  const double fractions[] = {0.1};
  const auto pts = experiments::edge_removal_experiment(ctx.dataset->system, *ctx.split, fractions, 3, 2023,
                                                        {{}, reduced_budget(0), 0});
  Outcome o;
  const double m = pts[0].mean_mar;
  o.values = {{"baseline_MAR", base}, {"removed_10pct_MAR", pts[0].mars}, {"mean", m}};
  o.pass = m <= 1.5 * base;
  o.detail = fmt::format("10% edges removed: mean MAR {:.4f} over 3 repeats ({}) <= 1.5 x baseline {:.4f}", m,
                         fmt::join(pts[0].mars, ", "), base);
  return o;
}

// ---- 7 ---------------------------------------------------------------------

Outcome loss_identities(Context&) {
  const std::vector<double> y{0, 1, 0, 0, 0};
  const double perfect = train::weighted_bce(std::vector<double>{0, 1, 0, 0, 0}, y, 5);
  const double uniform = train::weighted_bce(std::vector<double>(5, 0.5), y, 5);
  // Class frequencies from an imbalanced membership.
  train::BalancedSampler::Members members;
  std::size_t next = 0;
  const std::size_t sizes[] = {1, 3, 10, 40, 7};
  std::map<std::size_t, std::string> owner;
  for (std::size_t c = 0; c < 5; ++c) {
    for (std::size_t k = 0; k < sizes[c]; ++k) {
      members["class" + std::to_string(c)].push_back(next);
      owner[next++] = "class" + std::to_string(c);
    }
  }
  train::BalancedSampler sampler(members, 7);
  std::map<std::string, std::size_t> hits;
  const std::size_t draws = 100000;
  for (std::size_t i = 0; i < draws; ++i) ++hits[owner.at(sampler.next())];
  double worst = 0.0;
  for (const auto& [c, n] : hits) worst = std::max(worst, std::abs(double(n) / draws - 0.2) / 0.2);
  Outcome o;
  o.values = {{"perfect", perfect}, {"uniform_minus_ln2", uniform - std::log(2.0)}, {"sampler_worst_rel", worst}};
  o.pass = std::abs(perfect) < 1e-9 && std::abs(uniform - std::log(2.0)) < 1e-9 && worst <= 0.01;
  o.detail = fmt::format("BCE perfect {:.1e}, uniform - ln2 {:.1e} (both < 1e-9); sampler class frequencies within "
                         "{:.2f}% of 1/C over 100k draws (<= 1%)",
                         perfect, uniform - std::log(2.0), 100 * worst);
  return o;
}

// ---- 8 ---------------------------------------------------------------------

Outcome evaluation_identities(Context&) {
  auto ranking = [](std::vector<std::string> ids) {
    Ranking r{"F", {}};
    double s = 1.0;
    for (auto& id : ids) r.entries.push_back({std::move(id), s -= 0.01});
    return r;
  };
  bool examples = true;
  {
    const std::vector<Ranking> rs{ranking({"a", "b", "c", "d"}), ranking({"c", "a", "b", "d"})};
    const std::vector<std::vector<std::string>> ts{{"a"}, {"b"}};
    examples &= eval::mar(rs, ts) == 2.0;
    examples &= eval::topk_accuracy(rs, ts, 1) == 0.5 && eval::topk_accuracy(rs, ts, 3) == 1.0;
    const std::vector<std::vector<std::string>> multi{{"b", "d"}, {"c"}};
    examples &= eval::mar(rs, multi) == 2.0;  // (2+4)/2 and 1
    examples &= eval::topk_accuracy(rs, multi, 3) == 0.5;
  }
  std::mt19937_64 rng(3);
  const std::size_t n = 25;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back(fmt::format("u{:02d}", i));
  bool monotone = true;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Ranking> rs;
    std::vector<std::vector<std::string>> ts;
    for (int f = 0; f < 5; ++f) {
      auto order = ids;
      std::shuffle(order.begin(), order.end(), rng);
      rs.push_back(ranking(order));
      ts.push_back({ids[rng() % n]});
    }
    double prev = 0.0;
    for (std::size_t k = 1; k <= n; ++k) {
      const double a = eval::topk_accuracy(rs, ts, k);
      monotone &= a >= prev;
      prev = a;
    }
  }
  std::vector<Ranking> rs;
  std::vector<std::vector<std::string>> ts;
  for (int t = 0; t < 10000; ++t) {
    auto order = ids;
    std::shuffle(order.begin(), order.end(), rng);
    rs.push_back(ranking(order));
    ts.push_back({ids[0]});
  }
  const double m = eval::mar(rs, ts), expect = (n + 1) / 2.0;
  const double rel = std::abs(m - expect) / expect;
  Outcome o;
  o.values = {{"examples", examples}, {"monotone", monotone}, {"random_MAR", m}, {"expected", expect}};
  o.pass = examples && monotone && rel <= 0.02;
  o.detail = fmt::format("MAR/A@k examples {}, A@k monotone over 500 random ranking sets {}, random-ranking MAR {:.3f} "
                         "vs (N+1)/2 = {:.1f} ({:.2f}% <= 2%)",
                         examples ? "exact" : "WRONG", monotone ? "yes" : "NO", m, expect, 100 * rel);
  return o;
}

// ---- 9 ---------------------------------------------------------------------

Outcome surrogate_fidelity(Context& ctx) {
  ctx.ensure_model();
  const auto gi = interpret::interpret_global(*ctx.model, ctx.split->train, ctx.split->test);
  bool replay = true;
  std::size_t rules = 0;
  for (const auto& c : gi.classes) {
    replay &= c.replay_consistent;
    rules += c.rules.size();
  }
  Outcome o;
  o.values = {{"agreement", gi.heldout_agreement()}, {"heldout_units", gi.heldout_samples()}, {"rules", rules}};
  o.pass = gi.heldout_agreement() >= 0.85 && replay;
  o.detail = fmt::format("held-out agreement {:.4f} >= 0.85 over {} confident units; {} rules replay {}",
                         gi.heldout_agreement(), gi.heldout_samples(), rules, replay ? "consistently" : "INCONSISTENTLY");
  return o;
}

// ---- 10 --------------------------------------------------------------------

// Two pairs per failure class on the headline system: four distinct units,
// identical magnitude (no jitter) and onset lead, placed after the regular
// failures so the background noise differs. A pair passes when each member
// finds the other among its 3 most similar failures in the probe history.
Outcome local_sanity(Context& ctx) {
  ctx.ensure_model();
  const sim::SimConfig& cfg = *ctx.sim_cfg;
  const auto topo = sim::generate_topology(cfg);
  std::map<std::string, std::vector<std::string>> by_class;
  for (const auto& u : topo.fdg.units()) by_class[u.class_id].push_back(u.id);
  std::mt19937_64 rng(10);
  std::vector<sim::InjectionPlan> plans;
  for (auto& [cls, units] : by_class) {
    std::shuffle(units.begin(), units.end(), rng);
    for (std::size_t k = 0; k < 4; ++k) {
      const std::size_t i = plans.size();
      plans.push_back({fmt::format("P{:03d}", i), units[k], sim::failure_time_at(cfg, cfg.n_failures + i),
                       cfg.magnitude, 4});
    }
  }
  const auto probe = sim::to_dataset(sim::simulate_with_plans(cfg, plans));
  const auto history = interpret::build_history(probe.records, *ctx.model);
  std::size_t ok = 0, pairs = 0;
  for (std::size_t p = 0; p + 1 < history.size(); p += 2) {
    bool both = true;
    for (std::size_t d = 0; d < 2; ++d) {
      const auto top = interpret::find_similar(history[p + d].signature, history, 3);
      const std::string& partner = history[p + 1 - d].signature.failure_id;
      both &= std::any_of(top.begin(), top.end(), [&](const auto& s) { return s.failure_id == partner; });
    }
    ok += both;
    ++pairs;
  }
  const double rate = double(ok) / double(pairs);
  Outcome o;
  o.values = {{"pairs", pairs}, {"mutual_top3", ok}, {"rate", rate}};
  o.pass = rate >= 0.80;
  o.detail = fmt::format("{} of {} same-class pairs retrieve each other within top-3 ({:.0f}%, need >= 80%)", ok, pairs,
                         100 * rate);
  return o;
}

// ---- 11 --------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Every regular file under `dir`, relative path -> bytes.
std::map<std::string, std::string> tree_bytes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return out;
}

int run(const std::string& cmd) {
  logger().debug("running {}", cmd);
  return std::system(cmd.c_str());
}

Outcome determinism(Context& ctx) {
  Outcome o;
  if (ctx.cli.empty()) {
    o.detail = "no --cli binary given";
    return o;
  }
  const fs::path root = ctx.work / "determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path cfg = root / "config.json";
  {
    std::ofstream os(cfg);
    os << nlohmann::json{{"seed", 4},
                         {"sim", {{"n_services", 5}, {"n_containers", 6}, {"n_hosts", 4}, {"n_failures", 60}}},
                         {"train", {{"epochs", 15}, {"patience", 15}}}}
              .dump();
  }
  std::vector<std::string> mismatched, failed;
  std::size_t compared = 0;
  for (int rep = 0; rep < 2; ++rep) {
    const fs::path d = root / fmt::format("run{}", rep);
    const std::string base = fmt::format("DEJAVU_LOG_LEVEL=warn {} ", ctx.cli);
    const std::string c = fmt::format(" --config {} ", cfg.string());
    const std::vector<std::string> cmds = {
        base + "simulate" + c + "--out " + (d / "data").string(),
        base + "train" + c + "--dataset " + (d / "data").string() + " --out " + (d / "model").string(),
        base + "evaluate" + c + "--dataset " + (d / "data").string() + " --checkpoint " + (d / "model").string() +
            " --out " + (d / "eval").string(),
        base + "evaluate" + c + "--producer rw_fi --dataset " + (d / "data").string() + " --out " +
            (d / "eval").string(),
        base + "localize" + c + "--dataset " + (d / "data").string() + " --checkpoint " + (d / "model").string() +
            " --failure F0050 --format json --out " + (d / "localize").string() + " > " +
            (d / "localize_stdout.json").string(),
        base + "interpret-local" + c + "--dataset " + (d / "data").string() + " --checkpoint " +
            (d / "model").string() + " --failure F0050 --k 3 --out " + (d / "local").string(),
    };
    for (const auto& cmd : cmds) {
      if (run(cmd.find(" > ") == std::string::npos ? cmd + " > /dev/null" : cmd) != 0) failed.push_back(cmd);
    }
  }
  if (!failed.empty()) {
    o.detail = "command failed: " + failed.front();
    return o;
  }
  const auto a = tree_bytes(root / "run0"), b = tree_bytes(root / "run1");
  for (const auto& [path, bytes] : a) {
    if (path.rfind("eval/timing_", 0) == 0) continue;  // wall-clock by design
    ++compared;
    auto it = b.find(path);
    if (it == b.end() || it->second != bytes) mismatched.push_back(path);
  }
  o.values = {{"files_compared", compared}, {"mismatched", mismatched}};
  o.pass = mismatched.empty() && compared > 10 && a.size() == b.size();
  o.detail = mismatched.empty()
                 ? fmt::format("simulate/train/evaluate/localize/interpret-local repeated with seed 4: {} output files "
                               "byte-identical (dataset, params, train log, metrics, rankings)",
                               compared)
                 : fmt::format("{} of {} files differ, first {}", mismatched.size(), compared, mismatched.front());
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  Context ctx;
  std::string work = (fs::temp_directory_path() / "dejavu_acceptance").string();
  std::vector<int> only;
  std::string report_path;
  app.add_option("--cli", ctx.cli, "dejavu binary for the determinism criterion");
  app.add_option("--work", work, "scratch directory");
  app.add_option("--only", only, "criterion numbers to run")->delimiter(',');
  app.add_option("--report", report_path, "write results as JSON");
  bool prepare = false;
  app.add_flag("--prepare", prepare, "train the headline model into <work>/headline and exit");
  CLI11_PARSE(app, argc, argv);
  ctx.work = work;
  fs::create_directories(ctx.work);
  if (prepare) {
    try {
      ctx.ensure_model(true);
    } catch (const std::exception& e) {
      std::cerr << "acceptance: " << e.what() << "\n";
      return 1;
    }
    std::cout << fmt::format("headline model: test MAR {:.4f}, stored in {}\n", ctx.report->mar,
                             ctx.headline_dir().string());
    return 0;
  }

  const std::vector<std::pair<std::string, std::function<Outcome(Context&)>>> criteria = {
      {"gradient correctness", gradient_correctness},
      {"simulator efficacy", simulator_efficacy},
      {"baseline ordering", baseline_ordering},
      {"ablation direction", ablation_direction},
      {"generalization to unseen failures", generalization},
      {"edge-removal robustness", edge_removal},
      {"loss and sampler identities", loss_identities},
      {"evaluation identities", evaluation_identities},
      {"surrogate fidelity", surrogate_fidelity},
      {"local interpretation sanity", local_sanity},
      {"determinism", determinism},
  };

  nlohmann::json results = nlohmann::json::array();
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second(ctx);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = fmt::format("error: {}", e.what());
    }
    const double secs = seconds_since(t0);
    std::cout << fmt::format("{} {:>2} {}: {} [{:.0f} s]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail,
                             secs)
              << std::flush;
    results.push_back({{"criterion", id},
                       {"name", criteria[i].first},
                       {"pass", o.pass},
                       {"detail", o.detail},
                       {"values", o.values},
                       {"seconds", secs}});
    failures += o.pass ? 0 : 1;
  }
  if (!report_path.empty()) {
    std::ofstream os(report_path);
    os << results.dump(2) << "\n";
  }
  std::cout << fmt::format("{} criteria, {} failed\n", results.size(), failures);
  return failures == 0 ? 0 : 1;
}
