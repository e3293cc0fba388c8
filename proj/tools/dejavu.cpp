// dejavu: simulate, train, localize, evaluate and interpret from one binary.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "json.hpp"

#include "dejavu/baselines.h"
#include "dejavu/dataset_io.h"
#include "dejavu/error.h"
#include "dejavu/eval.h"
#include "dejavu/experiments.h"
#include "dejavu/interpret_global.h"
#include "dejavu/interpret_local.h"
#include "dejavu/log.h"
#include "dejavu/model.h"
#include "dejavu/sim.h"
#include "dejavu/training.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dejavu;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string dataset;
  std::string checkpoint;
  std::string producer = "dejavu";
  std::size_t k = 3;
  std::vector<double> fractions;
  std::string failure;
  std::string variant = "full";
  std::size_t repeats = 3;
  std::string format = "table";
};

// File values first, flags on top.
struct RunConfig {
  std::string dataset;
  std::string checkpoint;
  std::string out;
  std::uint64_t seed = 0;
  sim::SimConfig sim;
  model::ModelConfig model;
  train::TrainConfig train;
  bool no_gru = false;
  bool no_agg = false;
  bool no_balance = false;

  json to_json() const {
    return {{"dataset", dataset},
            {"checkpoint", checkpoint},
            {"out", out},
            {"seed", seed},
            {"sim", sim::sim_config_to_json(sim)},
            {"model", model::model_config_to_json(model)},
            {"train", train::train_config_to_json(train)},
            {"ablation", {{"no_gru", no_gru}, {"no_agg", no_agg}, {"no_balance", no_balance}}}};
  }
};

RunConfig resolve(const Flags& f, const std::string& command) {
  RunConfig rc;
  if (!f.config.empty()) {
    const json doc = data::read_json(f.config);
    if (!doc.is_object()) throw ValidationError(fmt::format("config {} is not a JSON object", f.config));
    rc.dataset = doc.value("dataset", "");
    rc.checkpoint = doc.value("checkpoint", "");
    rc.out = doc.value("out", "");
    rc.seed = doc.value("seed", std::uint64_t{0});
    if (doc.contains("sim")) rc.sim = sim::sim_config_from_json(doc.at("sim"));
    if (doc.contains("model")) rc.model = model::model_config_from_json(doc.at("model"));
    if (doc.contains("train")) rc.train = train::train_config_from_json(doc.at("train"));
    if (doc.contains("ablation")) {
      const json& a = doc.at("ablation");
      rc.no_gru = a.value("no_gru", false);
      rc.no_agg = a.value("no_agg", false);
      rc.no_balance = a.value("no_balance", false);
    }
  }
  if (f.seed) rc.seed = *f.seed;
  if (!f.dataset.empty()) rc.dataset = f.dataset;
  if (!f.checkpoint.empty()) rc.checkpoint = f.checkpoint;
  if (!f.out.empty()) rc.out = f.out;
  rc.sim.seed = rc.seed;
  rc.train.seed = rc.seed;
  rc.model.window = rc.sim.window;
  if (rc.no_gru) rc.model.use_gru = false;
  if (rc.no_agg) rc.model.use_aggregator = false;
  if (rc.no_balance) rc.train.balanced = false;
  rc.sim.validate();
  rc.model.validate();
  rc.train.validate();
  logger().info("{}: seed {}, resolved config {}", command, rc.seed, rc.to_json().dump());
  return rc;
}

const std::string& require(const std::string& value, const char* what) {
  if (value.empty()) throw ValidationError(fmt::format("missing {} (flag or config file)", what));
  return value;
}

fs::path out_dir(const RunConfig& rc) {
  fs::path p = require(rc.out, "--out");
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(fmt::format("cannot write {}", path.string()));
  os << text;
}

data::Dataset open_dataset(const RunConfig& rc) {
  const fs::path dir = require(rc.dataset, "--dataset");
  if (!fs::is_directory(dir)) throw ValidationError(fmt::format("dataset directory {} not found", dir.string()));
  return data::load_dataset(dir, rc.sim.window_options());
}

model::Localizer open_model(const RunConfig& rc, const data::Dataset& ds) {
  const fs::path dir = require(rc.checkpoint, "--checkpoint");
  if (!fs::is_directory(dir)) throw ValidationError(fmt::format("checkpoint directory {} not found", dir.string()));
  model::Localizer m = model::load_model(dir);
  m.check_compatible(ds.system);
  return m;
}

const data::FailureRecord& find_failure(const data::Dataset& ds, const std::string& id) {
  if (id.empty()) throw ValidationError("missing --failure");
  for (const auto& r : ds.records) {
    if (r.failure_id == id) return r;
  }
  throw ValidationError(fmt::format("unknown failure id '{}'", id));
}

std::string ranking_table(const Ranking& r, std::size_t limit) {
  std::string out = fmt::format("Ranking for {}\n  {:>4}  {:<32} {}\n", r.failure_id, "rank", "unit", "score");
  for (std::size_t i = 0; i < std::min(limit, r.entries.size()); ++i) {
    out += fmt::format("  {:>4}  {:<32} {:.6f}\n", i + 1, r.entries[i].unit_id, r.entries[i].score);
  }
  return out;
}

std::string report_table(const eval::EvalReport& r) {
  std::string out = fmt::format("{:<12} {:>8} {:>8}", "producer", "failures", "MAR");
  for (std::size_t k : eval::kAccuracyKs) out += fmt::format(" {:>6}", fmt::format("A@{}", k));
  out += fmt::format("\n{:<12} {:>8} {:>8.4f}", r.producer, r.failures, r.mar);
  for (std::size_t k : eval::kAccuracyKs) out += fmt::format(" {:>6.3f}", r.accuracy.at(k));
  return out + "\n";
}

experiments::RunSettings settings_of(const RunConfig& rc) { return {rc.model, rc.train, rc.seed}; }

// ---- commands -------------------------------------------------------------

void cmd_simulate(const RunConfig& rc) {
  const fs::path dir = out_dir(rc);
  const sim::SimDataset ds = sim::simulate(rc.sim);
  sim::write_sim_dataset(ds, dir);
  std::cout << fmt::format("simulated {} units, {} FDG edges, {} failures -> {}\n", ds.topology.fdg.vertex_count(),
                           ds.topology.fdg.edge_count(), ds.failures.size(), dir.string());
}

void cmd_train(const RunConfig& rc) {
  const fs::path dir = out_dir(rc);
  const data::Dataset ds = open_dataset(rc);
  const data::DatasetSplit split = data::split_dataset(ds.records);
  logger().info("split: {} train, {} validation, {} test", split.train.size(), split.validation.size(),
                split.test.size());
  model::Localizer init(rc.model, model::class_specs(ds.system), rc.seed);
  const train::TrainResult res = train::train(std::move(init), split, rc.train);
  model::save_model(res.model, dir);
  write_text(dir / "train_log.csv", train::train_log_csv(res.log));
  data::write_json({{"epochs", res.log.size()}, {"best_epoch", res.best_epoch}, {"best_val_MAR", res.best_val_mar}},
                   dir / "train_summary.json");
  std::cout << fmt::format("trained {} epochs, best validation MAR {:.4f} at epoch {} -> {}\n", res.log.size(),
                           res.best_val_mar, res.best_epoch, dir.string());
}

void cmd_localize(const RunConfig& rc, const Flags& f) {
  const data::Dataset ds = open_dataset(rc);
  const data::FailureRecord& rec = find_failure(ds, f.failure);
  const model::Localizer m = open_model(rc, ds);
  const Ranking r = model::localize(rec, m);
  const json doc = ranking_to_json(r);
  if (!rc.out.empty()) data::write_json(doc, out_dir(rc) / fmt::format("ranking_{}.json", rec.failure_id));
  if (f.format == "json") std::cout << doc.dump(2) << "\n";
  else std::cout << ranking_table(r, 10);
}

eval::Producer make_producer(const std::string& name, const RunConfig& rc, const data::Dataset& ds,
                             const data::DatasetSplit& split, std::optional<model::Localizer>& model,
                             std::optional<interpret::TreeBaseline>& tree) {
  if (name == "rw_metric") return [](const data::FailureRecord& r) { return baselines::randomwalk_at_metric(r); };
  if (name == "rw_fi") return [](const data::FailureRecord& r) { return baselines::randomwalk_at_fi(r); };
  if (name == "tree") {
    tree = interpret::TreeBaseline::fit(split.train);
    return [&tree](const data::FailureRecord& r) { return tree->localize(r); };
  }
  if (name == "dejavu") {
    model = open_model(rc, ds);
    return [&model](const data::FailureRecord& r) { return model::localize(r, *model); };
  }
  throw ValidationError(fmt::format("unknown producer '{}' (dejavu, rw_metric, rw_fi, tree)", name));
}

void cmd_evaluate(const RunConfig& rc, const Flags& f) {
  const data::Dataset ds = open_dataset(rc);
  const data::DatasetSplit split = data::split_dataset(ds.records);
  std::optional<model::Localizer> m;
  std::optional<interpret::TreeBaseline> tree;
  const eval::Producer producer = make_producer(f.producer, rc, ds, split, m, tree);
  const eval::EvalReport rep = eval::evaluate(f.producer, producer, split.test);
  if (!rc.out.empty()) {
    const fs::path dir = out_dir(rc);
    data::write_json(eval::report_to_json(rep), dir / fmt::format("eval_{}.json", f.producer));
    data::write_json(eval::timing_to_json(rep), dir / fmt::format("timing_{}.json", f.producer));
    write_text(dir / fmt::format("eval_{}.csv", f.producer), eval::reports_to_csv(std::span(&rep, 1)));
  }
  std::cout << report_table(rep);
  std::cout << fmt::format("localization time: mean {:.4f} s, max {:.4f} s per failure\n", rep.seconds_per_failure,
                           rep.max_seconds_per_failure);
}

void cmd_interpret_global(const RunConfig& rc) {
  const data::Dataset ds = open_dataset(rc);
  const data::DatasetSplit split = data::split_dataset(ds.records);
  const model::Localizer m = open_model(rc, ds);
  interpret::GlobalOptions opts;
  opts.decoder.seed = rc.seed;
  const interpret::GlobalInterpretation gi = interpret::interpret_global(m, split.train, split.test, opts);
  json classes = json::array();
  std::string text;
  for (const auto& c : gi.classes) {
    classes.push_back(interpret::rules_to_json(c));
    text += interpret::rules_to_text(c);
  }
  text += fmt::format("held-out agreement {:.4f} over {} units\n", gi.heldout_agreement(), gi.heldout_samples());
  if (!rc.out.empty()) {
    const fs::path dir = out_dir(rc);
    data::write_json({{"heldout_agreement", gi.heldout_agreement()},
                      {"heldout_samples", gi.heldout_samples()},
                      {"classes", classes}},
                     dir / "rules.json");
    write_text(dir / "rules.txt", text);
  }
  std::cout << text;
}

void cmd_interpret_local(const RunConfig& rc, const Flags& f) {
  const data::Dataset ds = open_dataset(rc);
  const data::FailureRecord& rec = find_failure(ds, f.failure);
  const data::DatasetSplit split = data::split_dataset(ds.records);
  const model::Localizer m = open_model(rc, ds);
  const auto history = interpret::build_history(split.train, m);
  const auto similar = interpret::find_similar(interpret::class_signature(rec, m), history, f.k);
  const json doc = interpret::local_report_json(rec, m, similar, split.train);
  if (!rc.out.empty()) data::write_json(doc, out_dir(rc) / fmt::format("similar_{}.json", rec.failure_id));
  if (f.format == "json") std::cout << doc.dump(2) << "\n";
  else std::cout << interpret::local_report_text(doc);
}

void cmd_ablate(const RunConfig& rc, const Flags& f) {
  const data::Dataset ds = open_dataset(rc);
  const data::DatasetSplit split = data::split_dataset(ds.records);
  const experiments::Variant v = experiments::variant_from_name(f.variant);
  const auto run = experiments::train_and_evaluate(ds.system, split, experiments::apply_variant(settings_of(rc), v));
  json doc = eval::report_to_json(run.test);
  doc["producer"] = experiments::variant_name(v);
  doc["best_epoch"] = run.best_epoch;
  if (!rc.out.empty()) data::write_json(doc, out_dir(rc) / fmt::format("ablation_{}.json", f.variant));
  eval::EvalReport shown = run.test;
  shown.producer = experiments::variant_name(v);
  std::cout << report_table(shown);
}

void print_sweep(const std::vector<experiments::SweepPoint>& pts) {
  std::cout << fmt::format("{:>8}  {:>8}  {}\n", "fraction", "mean MAR", "MAR per run");
  for (const auto& p : pts) std::cout << fmt::format("{:>8.2f}  {:>8.4f}  {}\n", p.fraction, p.mean_mar, fmt::join(p.mars, " "));
}

void cmd_edge_removal(const RunConfig& rc, const Flags& f) {
  const data::Dataset ds = open_dataset(rc);
  const data::DatasetSplit split = data::split_dataset(ds.records);
  const std::vector<double> fr = f.fractions.empty() ? std::vector<double>{0.0, 0.1, 0.2} : f.fractions;
  const auto pts = experiments::edge_removal_experiment(ds.system, split, fr, f.repeats, rc.seed, settings_of(rc));
  if (!rc.out.empty()) data::write_json(experiments::sweep_to_json(pts), out_dir(rc) / "edge_removal.json");
  print_sweep(pts);
}

void cmd_train_fraction(const RunConfig& rc, const Flags& f) {
  const data::Dataset ds = open_dataset(rc);
  const data::DatasetSplit split = data::split_dataset(ds.records);
  const std::vector<double> fr = f.fractions.empty() ? std::vector<double>{0.25, 0.5, 0.75, 1.0} : f.fractions;
  const auto pts = experiments::training_fraction_sweep(ds.system, split, fr, settings_of(rc));
  if (!rc.out.empty()) data::write_json(experiments::sweep_to_json(pts), out_dir(rc) / "train_fraction.json");
  print_sweep(pts);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dejavu: fault localization for recurring failures"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&f](CLI::App* c) {
    c->add_option("--config", f.config, "JSON config (sim/model/train sections, paths, seed)")->check(CLI::ExistingFile);
    c->add_option("--seed", f.seed, "overrides the config seed");
    c->add_option("--out", f.out, "output directory");
  };
  auto data_opt = [&f](CLI::App* c) { c->add_option("--dataset", f.dataset, "dataset directory"); };
  auto ckpt_opt = [&f](CLI::App* c) { c->add_option("--checkpoint", f.checkpoint, "model checkpoint directory"); };
  auto fmt_opt = [&f](CLI::App* c) {
    c->add_option("--format", f.format, "stdout format")->check(CLI::IsMember({"table", "json"}));
  };

  auto* simulate = app.add_subcommand("simulate", "generate a synthetic dataset");
  common(simulate);
  auto* train_cmd = app.add_subcommand("train", "train a localizer; --out receives the checkpoint");
  common(train_cmd);
  data_opt(train_cmd);
  auto* localize = app.add_subcommand("localize", "rank failure units for one failure");
  common(localize);
  data_opt(localize);
  ckpt_opt(localize);
  fmt_opt(localize);
  localize->add_option("--failure", f.failure, "failure id")->required();
  auto* evaluate = app.add_subcommand("evaluate", "score a producer on the test split");
  common(evaluate);
  data_opt(evaluate);
  ckpt_opt(evaluate);
  evaluate->add_option("--producer", f.producer, "dejavu | rw_metric | rw_fi | tree");
  auto* iglobal = app.add_subcommand("interpret-global", "decision-rule surrogates per failure class");
  common(iglobal);
  data_opt(iglobal);
  ckpt_opt(iglobal);
  auto* ilocal = app.add_subcommand("interpret-local", "similar historical failures");
  common(ilocal);
  data_opt(ilocal);
  ckpt_opt(ilocal);
  fmt_opt(ilocal);
  ilocal->add_option("--failure", f.failure, "failure id")->required();
  ilocal->add_option("--k", f.k, "number of similar failures")->check(CLI::PositiveNumber);
  auto* ablate = app.add_subcommand("ablate", "train and evaluate one ablation variant");
  common(ablate);
  data_opt(ablate);
  ablate->add_option("--variant", f.variant, "full | no_gru | no_agg | no_balance");
  auto* edges = app.add_subcommand("edge-removal", "retrain with FDG edges removed");
  common(edges);
  data_opt(edges);
  edges->add_option("--fraction", f.fractions, "removed-edge fractions");
  edges->add_option("--repeats", f.repeats, "repeats per fraction")->check(CLI::PositiveNumber);
  auto* tfrac = app.add_subcommand("train-fraction", "retrain on chronological prefixes of the training split");
  common(tfrac);
  data_opt(tfrac);
  tfrac->add_option("--fraction", f.fractions, "training fractions");

  CLI11_PARSE(app, argc, argv);

  try {
    CLI::App* sub = app.get_subcommands().front();
    const RunConfig rc = resolve(f, sub->get_name());
    if (sub == simulate) cmd_simulate(rc);
    else if (sub == train_cmd) cmd_train(rc);
    else if (sub == localize) cmd_localize(rc, f);
    else if (sub == evaluate) cmd_evaluate(rc, f);
    else if (sub == iglobal) cmd_interpret_global(rc);
    else if (sub == ilocal) cmd_interpret_local(rc, f);
    else if (sub == ablate) cmd_ablate(rc, f);
    else if (sub == edges) cmd_edge_removal(rc, f);
    else if (sub == tfrac) cmd_train_fraction(rc, f);
  } catch (const std::exception& e) {
    std::cerr << "dejavu: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
