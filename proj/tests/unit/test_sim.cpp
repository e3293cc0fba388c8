#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include "dejavu/dataset_io.h"
#include "dejavu/error.h"
#include "dejavu/sim.h"

#include "../support/fixtures.h"

using namespace dejavu;

TEST_CASE("simulation is deterministic under a seed") {
  const auto cfg = testing::small_sim_config(5);
  const auto a = sim::simulate(cfg);
  const auto b = sim::simulate(cfg);
  CHECK(a.metrics.store == b.metrics.store);
  CHECK(a.topology.fdg == b.topology.fdg);
  CHECK(sim::manifest_to_json(a).dump() == sim::manifest_to_json(b).dump());
  const auto c = sim::simulate(testing::small_sim_config(6));
  CHECK_FALSE(a.metrics.store == c.metrics.store);
}

TEST_CASE("topology has the configured shape") {
  const auto cfg = testing::small_sim_config();
  const auto topo = sim::generate_topology(cfg);
  CHECK(topo.system.components.size() == cfg.n_services + cfg.n_containers + cfg.n_hosts);
  CHECK(topo.system.validate().empty());
  CHECK(graph::validate_fdg(topo.fdg, topo.system.units).empty());
  std::set<std::string> classes;
  for (const auto& u : topo.fdg.units()) classes.insert(u.class_id);
  CHECK(classes.size() == cfg.classes.size());
}

TEST_CASE("every class with enough failures hits two distinct units") {
  auto cfg = testing::small_sim_config();
  cfg.n_failures = 4 * cfg.classes.size();
  const auto topo = sim::generate_topology(cfg);
  std::map<std::string, std::set<std::string>> units;
  std::map<std::string, std::size_t> count;
  for (const auto& p : sim::plan_failures(topo, cfg)) {
    const auto& cls = topo.system.unit(p.unit_id).class_id;
    units[cls].insert(p.unit_id);
    ++count[cls];
  }
  for (const auto& [cls, n] : count) {
    if (n >= 2) CHECK_MESSAGE(units[cls].size() >= 2, cls);
  }
}

TEST_CASE("zero decay perturbs only the root") {
  auto cfg = testing::small_sim_config();
  cfg.decay = 0.0;
  const auto topo = sim::generate_topology(cfg);
  const std::string root = topo.fdg.units()[3].id;
  const sim::InjectionPlan plan{"F0", root, sim::failure_time_at(cfg, 2), 6.0, 4};
  const auto clean = sim::simulate_with_plans(cfg, {});
  const auto hit = sim::simulate_with_plans(cfg, {plan});
  std::size_t changed = 0;
  for (const auto& [key, series] : clean.metrics.store.series()) {
    const bool same = series == *hit.metrics.store.find(key.first, key.second);
    if (key.first == root) {
      CHECK_FALSE(same);
      ++changed;
    } else {
      CHECK_MESSAGE(same, key.first);
    }
  }
  CHECK(changed > 0);
}

TEST_CASE("injected roots stand out after normalization") {
  const auto cfg = testing::small_sim_config(1);
  const auto ds = sim::to_dataset(sim::simulate(cfg));
  for (const auto& r : ds.records) {
    const auto& w = r.window(r.ground_truth.front());
    double peak = 0.0;
    for (std::size_t i = 0; i < w.matrix.size(); ++i) peak = std::max(peak, std::abs(w.matrix[i]));
    CHECK_MESSAGE(peak >= cfg.magnitude / 2, r.failure_id);
  }
}

TEST_CASE("background noise is centered on the seasonal profile") {
  const auto cfg = testing::small_sim_config(2);
  const auto topo = sim::generate_topology(cfg);
  const std::size_t n = 3000;
  const auto m = sim::generate_metrics(topo, cfg, n);
  for (const auto& p : m.profiles) {
    const auto* s = m.store.find(p.unit_id, p.metric);
    double resid = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double season = p.amplitude * std::sin(2 * std::numbers::pi * (double(i) / cfg.season_length + p.phase));
      resid += s->values[i] - p.level - season;
    }
    resid /= static_cast<double>(n);
    CHECK(std::abs(resid) <= 3 * p.noise_std / std::sqrt(double(n)) + cfg.quantum);
  }
}

TEST_CASE("config validation") {
  auto cfg = testing::small_sim_config();
  cfg.failure_spacing = 2 * cfg.window;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = testing::small_sim_config();
  cfg.max_onset_lead = cfg.window;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = testing::small_sim_config();
  const sim::InjectionPlan early{"F0", sim::generate_topology(cfg).fdg.units()[0].id, cfg.start_time + 60, 6.0, 2};
  CHECK_THROWS_WITH_AS(sim::simulate_with_plans(cfg, {early}), doctest::Contains("insufficient duration"),
                       ValidationError);
}

TEST_CASE("config json round-trip") {
  auto cfg = testing::small_sim_config(9);
  cfg.decay = 0.25;
  cfg.classes[2].kind = sim::InjectionKind::kSpike;
  const auto back = sim::sim_config_from_json(sim::sim_config_to_json(cfg));
  CHECK(sim::sim_config_to_json(back) == sim::sim_config_to_json(cfg));
}

TEST_CASE("written datasets load back to the same records") {
  const auto cfg = testing::small_sim_config(3);
  const auto sd = sim::simulate(cfg);
  const auto dir = std::filesystem::temp_directory_path() / "dejavu_sim_roundtrip";
  std::filesystem::remove_all(dir);
  sim::write_sim_dataset(sd, dir);
  const auto loaded = data::load_dataset(dir, cfg.window_options());
  const auto direct = sim::to_dataset(sd);
  REQUIRE(loaded.records.size() == direct.records.size());
  CHECK(*loaded.fdg == *direct.fdg);
  for (std::size_t i = 0; i < direct.records.size(); ++i) {
    const auto& a = loaded.records[i];
    const auto& b = direct.records[i];
    CHECK(a.failure_id == b.failure_id);
    CHECK(a.failure_time == b.failure_time);
    CHECK(a.ground_truth == b.ground_truth);
    for (std::size_t u = 0; u < a.windows.size(); ++u) CHECK(a.windows[u].matrix == b.windows[u].matrix);
  }
  CHECK(data::read_metrics_csv(dir / data::kMetricsFile) == sd.metrics.store);
  std::filesystem::remove_all(dir);
}
