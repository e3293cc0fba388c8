#pragma once

#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dejavu/fdg.h"

namespace dejavu {

struct RankedUnit {
  std::string unit_id;
  double score = 0.0;

  bool operator==(const RankedUnit&) const = default;
};

// Units by descending score, ties by ascending id. Holds every FDG vertex once.
struct Ranking {
  std::string failure_id;
  std::vector<RankedUnit> entries;

  // 1-based; throws ValidationError when absent.
  std::size_t rank_of(const std::string& unit_id) const;
  bool operator==(const Ranking&) const = default;
};

// `scores` is aligned with g.units().
Ranking make_ranking(std::string failure_id, const graph::Fdg& g, std::span<const double> scores);

nlohmann::json ranking_to_json(const Ranking& r);

}  // namespace dejavu
