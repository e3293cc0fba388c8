#include "dejavu/fdg.h"

#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "dejavu/error.h"

namespace dejavu::graph {
namespace {

template <typename T>
const T& find_by_id(const std::vector<T>& items, const std::string& id, const char* what) {
  auto it = std::find_if(items.begin(), items.end(), [&](const T& x) { return x.id == id; });
  if (it == items.end()) throw ValidationError(fmt::format("unknown {} '{}'", what, id));
  return *it;
}

}  // namespace

const Component& SystemDescription::component(const std::string& id) const {
  return find_by_id(components, id, "component");
}

const FailureClass& SystemDescription::failure_class(const std::string& id) const {
  return find_by_id(classes, id, "failure class");
}

const FailureUnit& SystemDescription::unit(const std::string& id) const {
  return find_by_id(units, id, "failure unit");
}

const FailureClass& SystemDescription::class_of_unit(const std::string& unit_id) const {
  return failure_class(unit(unit_id).class_id);
}

std::vector<MetricDescriptor> SystemDescription::metrics() const {
  std::vector<MetricDescriptor> out;
  for (const auto& u : units) {
    for (const auto& m : failure_class(u.class_id).metric_names) out.push_back({m, u.id});
  }
  return out;
}

std::vector<std::string> SystemDescription::validate() const {
  std::vector<std::string> v;
  std::map<std::string, const Component*> comps;
  for (const auto& c : components) {
    if (!comps.emplace(c.id, &c).second) v.push_back(fmt::format("duplicate component '{}'", c.id));
    if (c.class_name.empty()) v.push_back(fmt::format("component '{}' has empty class", c.id));
  }
  std::map<std::string, const FailureClass*> cls;
  for (const auto& fc : classes) {
    if (!cls.emplace(fc.id, &fc).second) v.push_back(fmt::format("duplicate class '{}'", fc.id));
    if (fc.metric_names.empty()) v.push_back(fmt::format("class '{}' has no metrics", fc.id));
    std::set<std::string> seen(fc.metric_names.begin(), fc.metric_names.end());
    if (seen.size() != fc.metric_names.size())
      v.push_back(fmt::format("class '{}' lists a metric twice", fc.id));
  }
  std::set<std::string> unit_ids;
  for (const auto& u : units) {
    if (!unit_ids.insert(u.id).second) v.push_back(fmt::format("duplicate unit '{}'", u.id));
    auto c = comps.find(u.component_id);
    auto k = cls.find(u.class_id);
    if (c == comps.end()) {
      v.push_back(fmt::format("unit '{}' references unknown component '{}'", u.id, u.component_id));
    }
    if (k == cls.end()) {
      v.push_back(fmt::format("unit '{}' references unknown class '{}'", u.id, u.class_id));
    }
    if (c != comps.end() && k != cls.end() &&
        c->second->class_name != k->second->component_class) {
      v.push_back(fmt::format("unit '{}': component class '{}' does not match class '{}' ('{}')",
                              u.id, c->second->class_name, u.class_id,
                              k->second->component_class));
    }
  }
  return v;
}

IdPair canonical(const IdPair& p) {
  return p.first <= p.second ? p : IdPair{p.second, p.first};
}

Fdg::Fdg(std::vector<FailureUnit> units, std::vector<IdPair> edges, std::int64_t snapshot_time)
    : units_(std::move(units)), edges_(std::move(edges)), snapshot_time_(snapshot_time) {
  std::sort(units_.begin(), units_.end(),
            [](const FailureUnit& a, const FailureUnit& b) { return a.id < b.id; });
  for (std::uint32_t i = 0; i < units_.size(); ++i) index_.emplace(units_[i].id, i);
  adjacency_.resize(units_.size());
  for (const auto& [a, b] : edges_) {
    auto ia = index_.find(a);
    auto ib = index_.find(b);
    if (ia == index_.end() || ib == index_.end() || ia->second == ib->second) continue;
    adjacency_[ia->second].push_back(ib->second);
    adjacency_[ib->second].push_back(ia->second);
  }
  for (auto& adj : adjacency_) {
    std::sort(adj.begin(), adj.end());
    adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
  }
}

bool Fdg::contains(const std::string& unit_id) const { return index_.count(unit_id) > 0; }

std::optional<std::size_t> Fdg::index_of(const std::string& unit_id) const {
  auto it = index_.find(unit_id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Fdg::require_index(const std::string& unit_id) const {
  auto it = index_.find(unit_id);
  if (it == index_.end()) throw ValidationError(fmt::format("unknown failure unit '{}'", unit_id));
  return it->second;
}

std::span<const std::uint32_t> Fdg::neighbor_indices(std::size_t index) const {
  return adjacency_.at(index);
}

Fdg Fdg::with_snapshot_time(std::int64_t t) const { return Fdg(units_, edges_, t); }

Fdg Fdg::without_edges(std::span<const IdPair> removed) const {
  std::set<IdPair> drop;
  for (const auto& p : removed) drop.insert(canonical(p));
  std::vector<IdPair> kept;
  for (const auto& e : edges_) {
    if (!drop.count(canonical(e))) kept.push_back(e);
  }
  return Fdg(units_, std::move(kept), snapshot_time_);
}

Fdg Fdg::with_edges(std::span<const IdPair> added) const {
  std::set<IdPair> all;
  for (const auto& e : edges_) all.insert(canonical(e));
  for (const auto& p : added) {
    require_index(p.first);
    require_index(p.second);
    if (p.first != p.second) all.insert(canonical(p));
  }
  return Fdg(units_, std::vector<IdPair>(all.begin(), all.end()), snapshot_time_);
}

bool Fdg::operator==(const Fdg& other) const {
  if (units_ != other.units_ || snapshot_time_ != other.snapshot_time_) return false;
  std::set<IdPair> a, b;
  for (const auto& e : edges_) a.insert(canonical(e));
  for (const auto& e : other.edges_) b.insert(canonical(e));
  return a == b;
}

Fdg build_fdg(const std::vector<FailureUnit>& units, const ComponentRelations& relations,
              const std::vector<IdPair>& manual_edges, const std::vector<IdPair>& manual_removals,
              std::span<const Component> components) {
  std::set<std::string> known_components;
  if (components.empty()) {
    for (const auto& u : units) known_components.insert(u.component_id);
  } else {
    for (const auto& c : components) known_components.insert(c.id);
  }
  std::map<std::string, std::vector<std::string>> units_by_component;
  std::set<std::string> unit_ids;
  for (const auto& u : units) {
    if (!unit_ids.insert(u.id).second) {
      throw ValidationError(fmt::format("duplicate failure unit '{}'", u.id));
    }
    if (!known_components.count(u.component_id)) {
      throw ValidationError(
          fmt::format("unit '{}' references unknown component '{}'", u.id, u.component_id));
    }
    units_by_component[u.component_id].push_back(u.id);
  }
  auto check_unit = [&](const std::string& id) {
    if (!unit_ids.count(id)) throw ValidationError(fmt::format("unknown failure unit '{}'", id));
  };
  auto check_component = [&](const std::string& id) {
    if (!known_components.count(id)) throw ValidationError(fmt::format("unknown component '{}'", id));
  };

  std::set<IdPair> edges;
  auto connect = [&](const std::string& a, const std::string& b) {
    if (a != b) edges.insert(canonical({a, b}));
  };
  for (const auto& [_, members] : units_by_component) {
    for (std::size_t i = 0; i < members.size(); ++i)
      for (std::size_t j = i + 1; j < members.size(); ++j) connect(members[i], members[j]);
  }
  auto link_components = [&](const std::vector<IdPair>& rel) {
    for (const auto& [ca, cb] : rel) {
      check_component(ca);
      check_component(cb);
      auto ua = units_by_component.find(ca);
      auto ub = units_by_component.find(cb);
      if (ua == units_by_component.end() || ub == units_by_component.end()) continue;
      for (const auto& a : ua->second)
        for (const auto& b : ub->second) connect(a, b);
    }
  };
  link_components(relations.call_edges);
  link_components(relations.deploy_edges);
  for (const auto& [a, b] : manual_edges) {
    check_unit(a);
    check_unit(b);
    connect(a, b);
  }
  for (const auto& [a, b] : manual_removals) {
    check_unit(a);
    check_unit(b);
    edges.erase(canonical({a, b}));
  }
  return Fdg(units, std::vector<IdPair>(edges.begin(), edges.end()));
}

std::vector<std::string> neighbors(const Fdg& g, const std::string& unit_id) {
  std::vector<std::string> out;
  for (std::uint32_t j : g.neighbor_indices(g.require_index(unit_id))) {
    out.push_back(g.unit_at(j).id);
  }
  return out;
}

std::vector<std::string> validate_fdg(const Fdg& g, const std::vector<FailureUnit>& units) {
  std::vector<std::string> v;
  std::set<std::string> known;
  for (const auto& u : units) known.insert(u.id);
  std::set<std::string> seen;
  for (const auto& u : g.units()) {
    if (!seen.insert(u.id).second) v.push_back(fmt::format("duplicate vertex '{}'", u.id));
    if (!known.count(u.id)) v.push_back(fmt::format("vertex '{}' is not a defined failure unit", u.id));
  }
  std::set<IdPair> edges;
  for (const auto& e : g.edges()) {
    const auto& [a, b] = e;
    bool ok = true;
    for (const auto* end : {&a, &b}) {
      if (!seen.count(*end)) {
        v.push_back(fmt::format("edge ({}, {}) has unknown endpoint '{}'", a, b, *end));
        ok = false;
      }
    }
    if (a == b) {
      v.push_back(fmt::format("self-loop on '{}'", a));
      ok = false;
    }
    if (ok && !edges.insert(canonical(e)).second) {
      v.push_back(fmt::format("duplicate edge ({}, {})", a, b));
    }
  }
  return v;
}

}  // namespace dejavu::graph
