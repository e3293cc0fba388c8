#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace dejavu::graph {

struct Component {
  std::string id;
  std::string class_name;  // e.g. "Service", "Container", "Host"

  bool operator==(const Component&) const = default;
};

struct MetricDescriptor {
  std::string name;
  std::string unit_id;

  bool operator==(const MetricDescriptor&) const = default;
};

// A group of indicative metrics on one component class. Every unit of the
// class exposes exactly `metric_names`, in this order.
struct FailureClass {
  std::string id;
  std::string component_class;
  std::vector<std::string> metric_names;

  bool operator==(const FailureClass&) const = default;
};

// One metric group on one component: the atomic localization answer.
struct FailureUnit {
  std::string id;
  std::string component_id;
  std::string class_id;

  bool operator==(const FailureUnit&) const = default;
};

using IdPair = std::pair<std::string, std::string>;

struct ComponentRelations {
  std::vector<IdPair> call_edges;    // (caller, callee)
  std::vector<IdPair> deploy_edges;  // (deployed, host)
};

// Components, failure classes and units of one system.
struct SystemDescription {
  std::vector<Component> components;
  std::vector<FailureClass> classes;
  std::vector<FailureUnit> units;

  const Component& component(const std::string& id) const;
  const FailureClass& failure_class(const std::string& id) const;
  const FailureUnit& unit(const std::string& id) const;
  const FailureClass& class_of_unit(const std::string& unit_id) const;
  std::vector<MetricDescriptor> metrics() const;

  // Empty iff every type invariant holds.
  std::vector<std::string> validate() const;
};

// Failure dependency graph: undirected, over failure units. Immutable after
// construction. Vertices are kept sorted by id; neighbor lists are sorted.
// The constructor does not reject malformed edges (see validate_fdg);
// adjacency is built from the well-formed ones only.
class Fdg {
 public:
  Fdg() = default;
  Fdg(std::vector<FailureUnit> units, std::vector<IdPair> edges, std::int64_t snapshot_time = 0);

  const std::vector<FailureUnit>& units() const { return units_; }
  const std::vector<IdPair>& edges() const { return edges_; }
  std::int64_t snapshot_time() const { return snapshot_time_; }
  std::size_t vertex_count() const { return units_.size(); }
  std::size_t edge_count() const { return edges_.size(); }

  bool contains(const std::string& unit_id) const;
  std::optional<std::size_t> index_of(const std::string& unit_id) const;
  // Throws ValidationError for unknown ids.
  std::size_t require_index(const std::string& unit_id) const;
  const FailureUnit& unit_at(std::size_t index) const { return units_[index]; }

  std::span<const std::uint32_t> neighbor_indices(std::size_t index) const;

  Fdg with_snapshot_time(std::int64_t t) const;
  Fdg without_edges(std::span<const IdPair> removed) const;
  Fdg with_edges(std::span<const IdPair> added) const;

  bool operator==(const Fdg& other) const;

 private:
  std::vector<FailureUnit> units_;
  std::vector<IdPair> edges_;
  std::int64_t snapshot_time_ = 0;
  std::map<std::string, std::uint32_t, std::less<>> index_;
  std::vector<std::vector<std::uint32_t>> adjacency_;
};

// Canonical form of an undirected pair: (min, max).
IdPair canonical(const IdPair& p);

// Connects two units iff they share a component, their components are related
// by a call or deployment edge, or the pair is listed in `manual_edges`; then
// drops `manual_removals`. Output edges are canonical, sorted and unique.
// Relation endpoints are checked against `components` when given, else
// against the components referenced by `units`.
Fdg build_fdg(const std::vector<FailureUnit>& units, const ComponentRelations& relations,
              const std::vector<IdPair>& manual_edges = {},
              const std::vector<IdPair>& manual_removals = {},
              std::span<const Component> components = {});

// Neighbor ids in ascending order, excluding the unit itself.
std::vector<std::string> neighbors(const Fdg& g, const std::string& unit_id);

// Returns human-readable violations; empty iff all FDG invariants hold.
std::vector<std::string> validate_fdg(const Fdg& g, const std::vector<FailureUnit>& units);

}  // namespace dejavu::graph
