#include "dejavu/dataset_io.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include <fmt/format.h>

#include "dejavu/error.h"
#include "dejavu/log.h"

namespace dejavu::data {

using nlohmann::json;

namespace {

std::vector<graph::IdPair> pairs_from_json(const json& arr, const char* what) {
  std::vector<graph::IdPair> out;
  for (const auto& e : arr) {
    if (!e.is_array() || e.size() != 2) {
      throw ValidationError(fmt::format("{}: each entry must be a two-element array", what));
    }
    out.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
  }
  return out;
}

json pairs_to_json(const std::vector<graph::IdPair>& pairs) {
  json arr = json::array();
  for (const auto& [a, b] : pairs) arr.push_back({a, b});
  return arr;
}

std::string_view next_field(std::string_view& line) {
  const auto comma = line.find(',');
  std::string_view field = line.substr(0, comma);
  line = comma == std::string_view::npos ? std::string_view{} : line.substr(comma + 1);
  return field;
}

}  // namespace

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open {}", path.string()));
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_json(const json& doc, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  out << doc.dump(2) << '\n';
}

json fdg_to_json(const graph::SystemDescription& system, const graph::Fdg& g) {
  json comps = json::array(), classes = json::array(), units = json::array();
  for (const auto& c : system.components) comps.push_back({{"id", c.id}, {"class_name", c.class_name}});
  for (const auto& c : system.classes) {
    classes.push_back(
        {{"id", c.id}, {"component_class", c.component_class}, {"metrics", c.metric_names}});
  }
  for (const auto& u : g.units()) {
    units.push_back({{"id", u.id}, {"component_id", u.component_id}, {"class_id", u.class_id}});
  }
  return {{"components", comps},
          {"classes", classes},
          {"units", units},
          {"edges", pairs_to_json(g.edges())},
          {"snapshot_time", g.snapshot_time()}};
}

std::pair<graph::SystemDescription, graph::Fdg> fdg_from_json(const json& doc) {
  graph::SystemDescription sys;
  try {
    for (const auto& c : doc.at("components")) {
      sys.components.push_back({c.at("id").get<std::string>(), c.at("class_name").get<std::string>()});
    }
    for (const auto& c : doc.at("classes")) {
      sys.classes.push_back({c.at("id").get<std::string>(),
                             c.at("component_class").get<std::string>(),
                             c.at("metrics").get<std::vector<std::string>>()});
    }
    for (const auto& u : doc.at("units")) {
      sys.units.push_back({u.at("id").get<std::string>(), u.at("component_id").get<std::string>(),
                           u.at("class_id").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("FDG file: {}", e.what()));
  }
  if (auto v = sys.validate(); !v.empty()) {
    throw ValidationError(fmt::format("FDG file: {}", v.front()));
  }
  graph::Fdg g(sys.units, pairs_from_json(doc.value("edges", json::array()), "edges"),
               doc.value("snapshot_time", std::int64_t{0}));
  if (auto v = graph::validate_fdg(g, sys.units); !v.empty()) {
    throw ValidationError(fmt::format("FDG file: {}", v.front()));
  }
  return {std::move(sys), std::move(g)};
}

json relations_to_json(const graph::ComponentRelations& r) {
  return {{"call", pairs_to_json(r.call_edges)}, {"deploy", pairs_to_json(r.deploy_edges)}};
}

graph::ComponentRelations relations_from_json(const json& doc) {
  return {pairs_from_json(doc.value("call", json::array()), "call"),
          pairs_from_json(doc.value("deploy", json::array()), "deploy")};
}

void write_metrics_csv(const MetricStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  std::string buf = "timestamp,unit_id,metric_name,value\n";
  char num[64];
  for (const auto& [key, s] : store.series()) {
    const std::string prefix = "," + key.first + "," + key.second + ",";
    for (std::size_t i = 0; i < s.timestamps.size(); ++i) {
      auto r = std::to_chars(num, num + sizeof(num), s.timestamps[i]);
      buf.append(num, r.ptr);
      buf += prefix;
      if (std::isnan(s.values[i])) {
        buf += "nan";
      } else {
        r = std::to_chars(num, num + sizeof(num), s.values[i]);
        buf.append(num, r.ptr);
      }
      buf += '\n';
    }
    if (buf.size() > (1u << 20)) {
      out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
      buf.clear();
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

MetricStore read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(fmt::format("cannot open {}", path.string()));
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::string_view rest(content);

  auto take_line = [&rest]() {
    const auto nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
  };
  const std::string_view header = take_line();
  if (header != "timestamp,unit_id,metric_name,value") {
    throw ValidationError(fmt::format("{}: unexpected header '{}'", path.string(), header));
  }

  std::map<MetricStore::Key, MetricSeries> pending;
  MetricSeries* current = nullptr;
  std::string cur_unit, cur_metric;
  std::size_t line_no = 1;
  while (!rest.empty()) {
    std::string_view line = take_line();
    ++line_no;
    if (line.empty()) continue;
    const std::string_view ts = next_field(line);
    const std::string_view unit = next_field(line);
    const std::string_view metric = next_field(line);
    const std::string_view value = line;
    Timestamp t = 0;
    if (std::from_chars(ts.data(), ts.data() + ts.size(), t).ec != std::errc{} || unit.empty() ||
        metric.empty()) {
      throw ValidationError(fmt::format("{}:{}: malformed row", path.string(), line_no));
    }
    double v = std::numeric_limits<double>::quiet_NaN();
    if (!value.empty() && value != "nan" && value != "NaN") {
      if (std::from_chars(value.data(), value.data() + value.size(), v).ec != std::errc{}) {
        throw ValidationError(fmt::format("{}:{}: bad value '{}'", path.string(), line_no, value));
      }
    }
    if (current == nullptr || unit != cur_unit || metric != cur_metric) {
      cur_unit = unit;
      cur_metric = metric;
      auto [it, _] = pending.try_emplace({cur_unit, cur_metric});
      current = &it->second;
      current->descriptor = {cur_metric, cur_unit};
    }
    current->timestamps.push_back(t);
    current->values.push_back(v);
  }
  MetricStore store;
  for (auto& [key, s] : pending) {
    if (!std::is_sorted(s.timestamps.begin(), s.timestamps.end())) {
      std::vector<std::size_t> order(s.timestamps.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return s.timestamps[a] < s.timestamps[b]; });
      MetricSeries sorted{s.descriptor, {}, {}};
      for (std::size_t i : order) {
        sorted.timestamps.push_back(s.timestamps[i]);
        sorted.values.push_back(s.values[i]);
      }
      s = std::move(sorted);
    }
    store.add(std::move(s));
  }
  return store;
}

json failures_to_json(const std::vector<FailureEntry>& entries) {
  json arr = json::array();
  for (const auto& e : entries) {
    arr.push_back({{"failure_id", e.spec.failure_id},
                   {"failure_time", e.spec.failure_time},
                   {"ground_truth", e.spec.ground_truth},
                   {"fdg", e.fdg_file}});
  }
  return {{"failures", arr}};
}

std::vector<FailureEntry> failures_from_json(const json& doc) {
  std::vector<FailureEntry> out;
  try {
    for (const auto& f : doc.at("failures")) {
      FailureEntry e;
      e.spec.failure_id = f.at("failure_id").get<std::string>();
      e.spec.failure_time = f.at("failure_time").get<Timestamp>();
      e.spec.ground_truth = f.at("ground_truth").get<std::vector<std::string>>();
      e.fdg_file = f.value("fdg", std::string(kFdgFile));
      if (e.spec.ground_truth.empty()) {
        throw ValidationError(fmt::format("failure '{}' has no ground truth", e.spec.failure_id));
      }
      out.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("failure records: {}", e.what()));
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& dir, const WindowOptions& options) {
  Dataset ds;
  ds.window_options = options;
  auto [sys, g] = fdg_from_json(read_json(dir / kFdgFile));
  ds.system = std::move(sys);
  ds.fdg = std::make_shared<const graph::Fdg>(std::move(g));
  if (std::filesystem::exists(dir / kRelationsFile)) {
    ds.relations = relations_from_json(read_json(dir / kRelationsFile));
  }
  const MetricStore store = read_metrics_csv(dir / kMetricsFile);
  const auto entries = failures_from_json(read_json(dir / kFailuresFile));

  std::map<std::string, std::shared_ptr<const graph::Fdg>> snapshots{{kFdgFile, ds.fdg}};
  for (const auto& e : entries) {
    auto it = snapshots.find(e.fdg_file);
    if (it == snapshots.end()) {
      auto [s2, g2] = fdg_from_json(read_json(dir / e.fdg_file));
      for (const auto& u : g2.units()) ds.system.unit(u.id);
      it = snapshots.emplace(e.fdg_file, std::make_shared<const graph::Fdg>(std::move(g2))).first;
    }
    ds.records.push_back(build_record(ds.system, it->second, store, e.spec, options));
  }
  logger().info("loaded dataset {}: {} units, {} edges, {} series, {} failures", dir.string(),
                ds.fdg->vertex_count(), ds.fdg->edge_count(), store.size(), ds.records.size());
  return ds;
}

}  // namespace dejavu::data
