#include "dejavu/ranking.h"

#include <algorithm>

#include <fmt/format.h>

#include "dejavu/error.h"

namespace dejavu {

std::size_t Ranking::rank_of(const std::string& unit_id) const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].unit_id == unit_id) return i + 1;
  }
  throw ValidationError(fmt::format("unit '{}' is not in the ranking of failure '{}'", unit_id, failure_id));
}

Ranking make_ranking(std::string failure_id, const graph::Fdg& g, std::span<const double> scores) {
  if (scores.size() != g.vertex_count()) {
    throw ShapeError(fmt::format("make_ranking: {} scores for {} units", scores.size(), g.vertex_count()));
  }
  Ranking r{std::move(failure_id), {}};
  r.entries.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) r.entries.push_back({g.unit_at(i).id, scores[i]});
  std::sort(r.entries.begin(), r.entries.end(), [](const RankedUnit& a, const RankedUnit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.unit_id < b.unit_id;
  });
  return r;
}

nlohmann::json ranking_to_json(const Ranking& r) {
  nlohmann::json units = nlohmann::json::array();
  for (std::size_t i = 0; i < r.entries.size(); ++i) {
    units.push_back({{"rank", i + 1}, {"unit_id", r.entries[i].unit_id}, {"score", r.entries[i].score}});
  }
  return {{"failure_id", r.failure_id}, {"ranking", units}};
}

}  // namespace dejavu
