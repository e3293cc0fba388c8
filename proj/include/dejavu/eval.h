#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dejavu/dataset.h"
#include "dejavu/ranking.h"

namespace dejavu::eval {

inline constexpr std::size_t kAccuracyKs[] = {1, 2, 3, 5};

// Mean 1-based rank of the truths; throws ValidationError if one is missing.
double average_rank(const Ranking& ranking, std::span<const std::string> truths);
// Mean over failures of average_rank.
double mar(std::span<const Ranking> rankings, std::span<const std::vector<std::string>> truths);
// Fraction of failures with every truth within the top k.
double topk_accuracy(std::span<const Ranking> rankings,
                     std::span<const std::vector<std::string>> truths, std::size_t k);

struct FailureResult {
  std::string failure_id;
  std::vector<std::string> ground_truth;
  std::vector<std::size_t> ranks;
  double average_rank = 0.0;
};

struct EvalReport {
  std::string producer;
  std::size_t failures = 0;
  double mar = 0.0;
  std::map<std::size_t, double> accuracy;  // k -> A@k
  std::vector<FailureResult> per_failure;
  double seconds_per_failure = 0.0;
  double max_seconds_per_failure = 0.0;
};

using Producer = std::function<Ranking(const data::FailureRecord&)>;

// Runs `producer` on every record and scores the rankings.
EvalReport evaluate(const std::string& name, const Producer& producer,
                    std::span<const data::FailureRecord> records);
// Scores precomputed rankings aligned with `records`.
EvalReport score_rankings(const std::string& name, std::span<const Ranking> rankings,
                          std::span<const data::FailureRecord> records);

// Deterministic part of the report; wall-clock figures go to timing_to_json.
nlohmann::json report_to_json(const EvalReport& r);
nlohmann::json timing_to_json(const EvalReport& r);
// One row per report: producer,failures,MAR,A@1,A@2,A@3,A@5
std::string reports_to_csv(std::span<const EvalReport> reports);

struct SeenUnseen {
  std::vector<std::size_t> seen;    // indices into the test span
  std::vector<std::size_t> unseen;
};

// Seen iff some training failure shares an exact ground-truth unit.
SeenUnseen seen_unseen_split(std::span<const data::FailureRecord> test,
                             std::span<const data::FailureRecord> train);

}  // namespace dejavu::eval
