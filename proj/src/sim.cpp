#include "dejavu/sim.h"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include <fmt/format.h>

#include "dejavu/dataset_io.h"
#include "dejavu/error.h"
#include "dejavu/log.h"

namespace dejavu::sim {

using nlohmann::json;
using data::Timestamp;

namespace {

using Rng = std::mt19937_64;

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

const ClassTemplate& template_for(const SimConfig& cfg, const std::string& class_id) {
  for (const auto& t : cfg.classes) {
    if (t.id == class_id) return t;
  }
  throw ValidationError(fmt::format("no class template '{}'", class_id));
}

std::string component_name(const char* prefix, std::size_t i) {
  return fmt::format("{}{:02d}", prefix, i);
}

const char* kind_name(InjectionKind k) {
  return k == InjectionKind::kSpike ? "spike" : "level_shift";
}

InjectionKind kind_from_name(const std::string& s) {
  if (s == "spike") return InjectionKind::kSpike;
  if (s == "level_shift") return InjectionKind::kLevelShift;
  throw ValidationError(fmt::format("unknown injection kind '{}'", s));
}

double quantize(double v, double q) { return q > 0 ? std::round(v / q) * q : v; }

}  // namespace

std::vector<ClassTemplate> default_class_templates() {
  using K = InjectionKind;
  return {
      {"service.requests", "requests", "Service", {"request_count", "avg_latency", "error_rate"},
       {-0.6, 1.0, 1.0}, {-0.3, 1.0, 0.4}, 1.6, K::kLevelShift},
      {"service.jvm", "jvm", "Service", {"gc_time", "heap_used"},
       {1.0, 0.8}, {0.6, 0.2}, 0.6, K::kLevelShift},
      {"container.cpu", "cpu", "Container", {"cpu_used"}, {1.0}, {1.0}, 0.8, K::kLevelShift},
      {"container.memory", "memory", "Container", {"mem_used"}, {1.0}, {1.0}, 0.4,
       K::kLevelShift},
      {"container.threads", "threads", "Container", {"threads_running", "threads_blocked"},
       {1.0, 1.0}, {0.8, 0.4}, 0.8, K::kSpike},
      {"host.load", "load", "Host", {"cpu_util", "load_avg"}, {1.0, 0.8}, {0.8, 0.8}, 0.8,
       K::kLevelShift},
      {"host.memory", "memory", "Host", {"mem_used_pct", "swap_used_pct"}, {1.0, 1.0},
       {0.4, 0.0}, 0.5, K::kLevelShift},
      {"host.network", "network", "Host", {"retransmits", "rtt"}, {1.0, 1.0}, {0.2, 1.0}, 1.2,
       K::kSpike},
  };
}

void SimConfig::validate() const {
  if (n_services == 0 || n_containers == 0 || n_hosts == 0) {
    throw ValidationError("simulator needs at least one service, container and host");
  }
  if (call_layers == 0) throw ValidationError("call_layers must be positive");
  if (classes.empty()) throw ValidationError("simulator needs at least one class template");
  if (!(decay >= 0.0 && decay < 1.0)) throw ValidationError("decay must lie in [0, 1)");
  if (magnitude_jitter < 0.0 || magnitude_jitter >= 1.0) {
    throw ValidationError("magnitude_jitter must lie in [0, 1)");
  }
  if (window == 0 || step <= 0) throw ValidationError("window and step must be positive");
  if (failure_spacing < 3 * window) {
    throw ValidationError(fmt::format("failure_spacing {} is below three windows ({})",
                                      failure_spacing, 3 * window));
  }
  if (warmup < baseline_length + window || failure_spacing < baseline_length + 2 * window) {
    throw ValidationError("insufficient duration: warmup/spacing cannot hold baseline + window");
  }
  if (max_onset_lead == 0 || max_onset_lead >= window) {
    throw ValidationError("max_onset_lead must lie in [1, window)");
  }
  if (effect_length == 0 || effect_length > window || spike_length == 0) {
    throw ValidationError("effect_length must lie in [1, window] and spike_length be positive");
  }
  for (const auto& t : classes) {
    if (t.metrics.empty() || t.fault_response.size() != t.metrics.size() ||
        t.propagation_response.size() != t.metrics.size()) {
      throw ValidationError(fmt::format("class template '{}': response sizes must match metrics", t.id));
    }
    if (t.component_class != "Service" && t.component_class != "Container" &&
        t.component_class != "Host") {
      throw ValidationError(
          fmt::format("class template '{}': unknown component class '{}'", t.id, t.component_class));
    }
  }
}

data::WindowOptions SimConfig::window_options() const {
  return {window, step, baseline_length, window};
}

json sim_config_to_json(const SimConfig& cfg) {
  json classes = json::array();
  for (const auto& t : cfg.classes) {
    classes.push_back({{"id", t.id},
                       {"group", t.group},
                       {"component_class", t.component_class},
                       {"metrics", t.metrics},
                       {"fault_response", t.fault_response},
                       {"propagation_response", t.propagation_response},
                       {"sensitivity", t.sensitivity},
                       {"kind", kind_name(t.kind)}});
  }
  return {{"seed", cfg.seed},
          {"n_services", cfg.n_services},
          {"n_containers", cfg.n_containers},
          {"n_hosts", cfg.n_hosts},
          {"call_layers", cfg.call_layers},
          {"classes", classes},
          {"n_failures", cfg.n_failures},
          {"magnitude", cfg.magnitude},
          {"magnitude_jitter", cfg.magnitude_jitter},
          {"decay", cfg.decay},
          {"hops", cfg.hops},
          {"noise_std", cfg.noise_std},
          {"seasonal_amplitude", cfg.seasonal_amplitude},
          {"season_length", cfg.season_length},
          {"start_time", cfg.start_time},
          {"step", cfg.step},
          {"window", cfg.window},
          {"baseline_length", cfg.baseline_length},
          {"warmup", cfg.warmup},
          {"failure_spacing", cfg.failure_spacing},
          {"effect_length", cfg.effect_length},
          {"spike_length", cfg.spike_length},
          {"max_onset_lead", cfg.max_onset_lead},
          {"quantum", cfg.quantum}};
}

SimConfig sim_config_from_json(const json& doc, SimConfig cfg) {
  try {
    auto get = [&doc](const char* key, auto& field) {
      if (doc.contains(key)) field = doc.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("seed", cfg.seed);
    get("n_services", cfg.n_services);
    get("n_containers", cfg.n_containers);
    get("n_hosts", cfg.n_hosts);
    get("call_layers", cfg.call_layers);
    get("n_failures", cfg.n_failures);
    get("magnitude", cfg.magnitude);
    get("magnitude_jitter", cfg.magnitude_jitter);
    get("decay", cfg.decay);
    get("hops", cfg.hops);
    get("noise_std", cfg.noise_std);
    get("seasonal_amplitude", cfg.seasonal_amplitude);
    get("season_length", cfg.season_length);
    get("start_time", cfg.start_time);
    get("step", cfg.step);
    get("window", cfg.window);
    get("baseline_length", cfg.baseline_length);
    get("warmup", cfg.warmup);
    get("failure_spacing", cfg.failure_spacing);
    get("effect_length", cfg.effect_length);
    get("spike_length", cfg.spike_length);
    get("max_onset_lead", cfg.max_onset_lead);
    get("quantum", cfg.quantum);
    if (doc.contains("classes")) {
      cfg.classes.clear();
      for (const auto& c : doc.at("classes")) {
        ClassTemplate t;
        t.id = c.at("id").get<std::string>();
        t.group = c.at("group").get<std::string>();
        t.component_class = c.at("component_class").get<std::string>();
        t.metrics = c.at("metrics").get<std::vector<std::string>>();
        t.fault_response = c.at("fault_response").get<std::vector<double>>();
        t.propagation_response = c.at("propagation_response").get<std::vector<double>>();
        t.sensitivity = c.value("sensitivity", 1.0);
        t.kind = kind_from_name(c.value("kind", std::string("level_shift")));
        cfg.classes.push_back(std::move(t));
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("simulator config: {}", e.what()));
  }
  return cfg;
}

Topology generate_topology(const SimConfig& cfg) {
  cfg.validate();
  Rng rng = make_rng(cfg.seed, 1);
  Topology topo;
  auto& sys = topo.system;

  for (std::size_t i = 0; i < cfg.n_services; ++i)
    sys.components.push_back({component_name("svc", i), "Service"});
  for (std::size_t i = 0; i < cfg.n_containers; ++i)
    sys.components.push_back({component_name("ctr", i), "Container"});
  for (std::size_t i = 0; i < cfg.n_hosts; ++i)
    sys.components.push_back({component_name("host", i), "Host"});

  // Services are split into consecutive layers; each service below the top
  // layer is called by one or two services of the layer above.
  const std::size_t layers = std::min(cfg.call_layers, cfg.n_services);
  std::vector<std::vector<std::size_t>> layer_members(layers);
  for (std::size_t i = 0; i < cfg.n_services; ++i) {
    layer_members[i * layers / cfg.n_services].push_back(i);
  }
  for (std::size_t l = 1; l < layers; ++l) {
    const auto& callers = layer_members[l - 1];
    for (std::size_t callee : layer_members[l]) {
      const std::size_t n_callers = std::min<std::size_t>(callers.size(), 1 + uniform_index(rng, 2));
      std::vector<std::size_t> pool = callers;
      std::shuffle(pool.begin(), pool.end(), rng);
      for (std::size_t k = 0; k < n_callers; ++k) {
        topo.relations.call_edges.emplace_back(component_name("svc", pool[k]),
                                               component_name("svc", callee));
      }
    }
  }
  for (std::size_t i = 0; i < cfg.n_services; ++i) {
    topo.relations.deploy_edges.emplace_back(component_name("svc", i),
                                             component_name("ctr", i % cfg.n_containers));
  }
  for (std::size_t j = 0; j < cfg.n_containers; ++j) {
    const std::size_t host = j < cfg.n_hosts ? j : uniform_index(rng, cfg.n_hosts);
    topo.relations.deploy_edges.emplace_back(component_name("ctr", j), component_name("host", host));
  }

  for (const auto& t : cfg.classes) sys.classes.push_back({t.id, t.component_class, t.metrics});
  for (const auto& c : sys.components) {
    for (const auto& t : cfg.classes) {
      if (t.component_class == c.class_name) {
        sys.units.push_back({c.id + "." + t.group, c.id, t.id});
      }
    }
  }
  if (auto v = sys.validate(); !v.empty()) throw ValidationError(v.front());
  topo.fdg = graph::build_fdg(sys.units, topo.relations, {}, {}, sys.components);
  return topo;
}

SimMetrics generate_metrics(const Topology& topology, const SimConfig& cfg, std::size_t steps) {
  Rng rng = make_rng(cfg.seed, 2);
  std::uniform_real_distribution<double> level_dist(20.0, 200.0);
  std::uniform_real_distribution<double> phase_dist(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  SimMetrics out;
  for (const auto& d : topology.system.metrics()) {
    MetricProfile p{d.unit_id, d.name, level_dist(rng), 0.0, 0.0, phase_dist(rng)};
    p.noise_std = cfg.noise_std * p.level;
    p.amplitude = cfg.seasonal_amplitude * p.level;
    data::MetricSeries s{d, std::vector<Timestamp>(steps), std::vector<double>(steps)};
    const double period = static_cast<double>(cfg.season_length);
    for (std::size_t i = 0; i < steps; ++i) {
      s.timestamps[i] = cfg.start_time + static_cast<Timestamp>(i) * cfg.step;
      const double season =
          p.amplitude * std::sin(2.0 * std::numbers::pi * (static_cast<double>(i) / period + p.phase));
      s.values[i] = quantize(p.level + season + p.noise_std * noise(rng), cfg.quantum);
    }
    out.store.add(std::move(s));
    out.profiles.push_back(std::move(p));
  }
  return out;
}

Timestamp failure_time_at(const SimConfig& cfg, std::size_t i) {
  return cfg.start_time + static_cast<Timestamp>(cfg.warmup + i * cfg.failure_spacing) * cfg.step;
}

std::size_t required_steps(const SimConfig& cfg, std::size_t n_failures) {
  return cfg.warmup + (n_failures == 0 ? 0 : (n_failures - 1) * cfg.failure_spacing) + cfg.window + 1;
}

std::vector<InjectionPlan> plan_failures(const Topology& topology, const SimConfig& cfg) {
  Rng rng = make_rng(cfg.seed, 3);
  std::map<std::string, std::vector<std::string>> units_by_class;
  for (const auto& u : topology.fdg.units()) units_by_class[u.class_id].push_back(u.id);
  std::vector<std::string> classes;
  for (const auto& t : cfg.classes) {
    if (units_by_class.count(t.id)) classes.push_back(t.id);
  }
  if (classes.empty()) throw ValidationError("no failure class has any unit");

  std::map<std::string, std::vector<std::string>> picked;
  std::uniform_real_distribution<double> jitter(1.0 - cfg.magnitude_jitter, 1.0 + cfg.magnitude_jitter);
  std::vector<InjectionPlan> plans;
  for (std::size_t i = 0; i < cfg.n_failures; ++i) {
    const std::string& cls = classes[uniform_index(rng, classes.size())];
    const auto& pool = units_by_class[cls];
    std::string unit = pool[uniform_index(rng, pool.size())];
    auto& prev = picked[cls];
    if (prev.size() == 1 && pool.size() > 1 && unit == prev.front()) {
      std::vector<std::string> others;
      for (const auto& u : pool) {
        if (u != prev.front()) others.push_back(u);
      }
      unit = others[uniform_index(rng, others.size())];
    }
    prev.push_back(unit);
    InjectionPlan p;
    p.failure_id = fmt::format("F{:04d}", i);
    p.unit_id = unit;
    p.failure_time = failure_time_at(cfg, i);
    p.magnitude = cfg.magnitude * jitter(rng);
    p.onset_lead = 1 + uniform_index(rng, cfg.max_onset_lead);
    plans.push_back(std::move(p));
  }
  return plans;
}

InjectedFailure apply_injection(data::MetricStore& store, const std::vector<MetricProfile>& profiles,
                                const Topology& topology, const SimConfig& cfg,
                                const InjectionPlan& plan) {
  const graph::Fdg& g = topology.fdg;
  const std::size_t root = g.require_index(plan.unit_id);
  const ClassTemplate& root_tpl = template_for(cfg, g.unit_at(root).class_id);

  InjectedFailure out{plan, root_tpl.id, root_tpl.kind, {}};

  std::map<std::pair<std::string, std::string>, double> noise_of;
  for (const auto& p : profiles) noise_of[{p.unit_id, p.metric}] = p.noise_std;

  // BFS hop distances from the root.
  std::vector<std::size_t> hop(g.vertex_count(), SIZE_MAX);
  std::deque<std::size_t> queue{root};
  hop[root] = 0;
  while (!queue.empty()) {
    const std::size_t v = queue.front();
    queue.pop_front();
    if (hop[v] >= cfg.hops) continue;
    for (std::uint32_t w : g.neighbor_indices(v)) {
      if (hop[w] == SIZE_MAX) {
        hop[w] = hop[v] + 1;
        queue.push_back(w);
      }
    }
  }

  const Timestamp onset = plan.failure_time - static_cast<Timestamp>(plan.onset_lead) * cfg.step;
  auto perturb = [&](std::size_t v, double magnitude, const std::vector<double>& weights,
                     std::size_t delay) {
    const auto& unit = g.unit_at(v);
    const ClassTemplate& tpl = template_for(cfg, unit.class_id);
    const std::size_t length = root_tpl.kind == InjectionKind::kSpike
                                   ? cfg.spike_length
                                   : cfg.effect_length - std::min(delay, cfg.effect_length - 1);
    const Timestamp begin = onset + static_cast<Timestamp>(delay) * cfg.step;
    for (std::size_t m = 0; m < tpl.metrics.size(); ++m) {
      if (weights[m] == 0.0) continue;
      data::MetricSeries* s = store.find_mutable(unit.id, tpl.metrics[m]);
      if (s == nullptr) continue;
      const double delta = magnitude * weights[m] * noise_of.at({unit.id, tpl.metrics[m]});
      auto it = std::lower_bound(s->timestamps.begin(), s->timestamps.end(), begin);
      for (std::size_t k = 0; k < length && it != s->timestamps.end(); ++k, ++it) {
        if (*it >= begin + static_cast<Timestamp>(length) * cfg.step) break;
        auto idx = static_cast<std::size_t>(it - s->timestamps.begin());
        s->values[idx] = quantize(s->values[idx] + delta, cfg.quantum);
      }
    }
  };

  perturb(root, plan.magnitude, root_tpl.fault_response, 0);
  out.affected.push_back({plan.unit_id, 0, plan.magnitude});
  if (cfg.decay > 0.0) {
    for (std::size_t v = 0; v < g.vertex_count(); ++v) {
      if (v == root || hop[v] == SIZE_MAX) continue;
      const ClassTemplate& tpl = template_for(cfg, g.unit_at(v).class_id);
      const double m = plan.magnitude * std::pow(cfg.decay, static_cast<double>(hop[v])) * tpl.sensitivity;
      perturb(v, m, tpl.propagation_response, hop[v]);
      out.affected.push_back({g.unit_at(v).id, hop[v], m});
    }
  }
  return out;
}

SimDataset simulate_with_plans(const SimConfig& cfg, const std::vector<InjectionPlan>& plans) {
  cfg.validate();
  SimDataset ds;
  ds.config = cfg;
  ds.topology = generate_topology(cfg);
  Timestamp last = cfg.start_time;
  for (const auto& p : plans) last = std::max(last, p.failure_time);
  const auto span_steps = static_cast<std::size_t>((last - cfg.start_time) / cfg.step);
  const std::size_t steps = std::max(required_steps(cfg, cfg.n_failures), span_steps + cfg.window + 1);
  ds.metrics = generate_metrics(ds.topology, cfg, steps);
  for (const auto& p : plans) {
    const Timestamp earliest =
        cfg.start_time + static_cast<Timestamp>(cfg.baseline_length + 2 * cfg.window) * cfg.step;
    if (p.failure_time < earliest) {
      throw ValidationError(fmt::format("insufficient duration: failure '{}' at {} leaves no baseline",
                                        p.failure_id, p.failure_time));
    }
    ds.injections.push_back(apply_injection(ds.metrics.store, ds.metrics.profiles, ds.topology, cfg, p));
    ds.failures.push_back({p.failure_id, p.failure_time, {p.unit_id}});
  }
  return ds;
}

SimDataset simulate(const SimConfig& cfg) {
  cfg.validate();
  const Topology topo = generate_topology(cfg);
  return simulate_with_plans(cfg, plan_failures(topo, cfg));
}

json manifest_to_json(const SimDataset& ds) {
  json failures = json::array();
  for (const auto& inj : ds.injections) {
    json affected = json::array();
    for (const auto& a : inj.affected) {
      affected.push_back({{"unit_id", a.unit_id}, {"hop", a.hop}, {"magnitude", a.magnitude}});
    }
    failures.push_back({{"failure_id", inj.plan.failure_id},
                        {"failure_time", inj.plan.failure_time},
                        {"ground_truth", {inj.plan.unit_id}},
                        {"class_id", inj.class_id},
                        {"kind", kind_name(inj.kind)},
                        {"magnitude", inj.plan.magnitude},
                        {"onset_lead", inj.plan.onset_lead},
                        {"affected", affected}});
  }
  return {{"generator", "dejavu-sim"}, {"config", sim_config_to_json(ds.config)}, {"failures", failures}};
}

void write_sim_dataset(const SimDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  data::write_json(data::fdg_to_json(ds.topology.system, ds.topology.fdg), dir / data::kFdgFile);
  data::write_json(data::relations_to_json(ds.topology.relations), dir / data::kRelationsFile);
  data::write_metrics_csv(ds.metrics.store, dir / data::kMetricsFile);
  std::vector<data::FailureEntry> entries;
  for (const auto& f : ds.failures) entries.push_back({f, data::kFdgFile});
  data::write_json(data::failures_to_json(entries), dir / data::kFailuresFile);
  data::write_json(manifest_to_json(ds), dir / "manifest.json");
}

data::Dataset to_dataset(const SimDataset& ds) {
  data::Dataset out;
  out.system = ds.topology.system;
  out.relations = ds.topology.relations;
  out.fdg = std::make_shared<const graph::Fdg>(ds.topology.fdg);
  out.window_options = ds.config.window_options();
  for (const auto& f : ds.failures) {
    out.records.push_back(data::build_record(out.system, out.fdg, ds.metrics.store, f, out.window_options));
  }
  return out;
}

}  // namespace dejavu::sim
