#include "dejavu/eval.h"

#include <algorithm>
#include <chrono>
#include <set>

#include <fmt/format.h>

#include "dejavu/error.h"

namespace dejavu::eval {

namespace {

void require_aligned(std::size_t rankings, std::size_t truths) {
  if (rankings != truths) {
    throw ValidationError(fmt::format("{} rankings but {} ground-truth lists", rankings, truths));
  }
  if (rankings == 0) throw ValidationError("no failures to evaluate");
}

}  // namespace

double average_rank(const Ranking& ranking, std::span<const std::string> truths) {
  if (truths.empty()) {
    throw ValidationError(fmt::format("failure '{}' has no ground truth", ranking.failure_id));
  }
  double total = 0.0;
  for (const auto& t : truths) total += static_cast<double>(ranking.rank_of(t));
  return total / static_cast<double>(truths.size());
}

double mar(std::span<const Ranking> rankings, std::span<const std::vector<std::string>> truths) {
  require_aligned(rankings.size(), truths.size());
  double total = 0.0;
  for (std::size_t i = 0; i < rankings.size(); ++i) total += average_rank(rankings[i], truths[i]);
  return total / static_cast<double>(rankings.size());
}

double topk_accuracy(std::span<const Ranking> rankings,
                     std::span<const std::vector<std::string>> truths, std::size_t k) {
  require_aligned(rankings.size(), truths.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < rankings.size(); ++i) {
    if (truths[i].empty()) {
      throw ValidationError(fmt::format("failure '{}' has no ground truth", rankings[i].failure_id));
    }
    bool all = true;
    for (const auto& t : truths[i]) all = all && rankings[i].rank_of(t) <= k;
    hits += all ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

EvalReport score_rankings(const std::string& name, std::span<const Ranking> rankings,
                          std::span<const data::FailureRecord> records) {
  std::vector<std::vector<std::string>> truths;
  for (const auto& r : records) truths.push_back(r.ground_truth);
  EvalReport rep;
  rep.producer = name;
  rep.failures = records.size();
  rep.mar = mar(rankings, truths);
  for (std::size_t k : kAccuracyKs) rep.accuracy[k] = topk_accuracy(rankings, truths, k);
  for (std::size_t i = 0; i < records.size(); ++i) {
    FailureResult f{records[i].failure_id, truths[i], {}, average_rank(rankings[i], truths[i])};
    for (const auto& t : truths[i]) f.ranks.push_back(rankings[i].rank_of(t));
    rep.per_failure.push_back(std::move(f));
  }
  return rep;
}

EvalReport evaluate(const std::string& name, const Producer& producer,
                    std::span<const data::FailureRecord> records) {
  using Clock = std::chrono::steady_clock;
  std::vector<Ranking> rankings;
  rankings.reserve(records.size());
  double total = 0.0, worst = 0.0;
  for (const auto& r : records) {
    const auto t0 = Clock::now();
    rankings.push_back(producer(r));
    const double s = std::chrono::duration<double>(Clock::now() - t0).count();
    total += s;
    worst = std::max(worst, s);
  }
  EvalReport rep = score_rankings(name, rankings, records);
  rep.seconds_per_failure = total / static_cast<double>(records.size());
  rep.max_seconds_per_failure = worst;
  return rep;
}

nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json acc = nlohmann::json::object();
  for (const auto& [k, v] : r.accuracy) acc[fmt::format("A@{}", k)] = v;
  nlohmann::json per = nlohmann::json::array();
  for (const auto& f : r.per_failure) {
    per.push_back({{"failure_id", f.failure_id},
                   {"ground_truth", f.ground_truth},
                   {"ranks", f.ranks},
                   {"average_rank", f.average_rank}});
  }
  return {{"producer", r.producer},
          {"failures", r.failures},
          {"MAR", r.mar},
          {"accuracy", acc},
          {"per_failure", per}};
}

nlohmann::json timing_to_json(const EvalReport& r) {
  return {{"producer", r.producer},
          {"failures", r.failures},
          {"seconds_per_failure", r.seconds_per_failure},
          {"max_seconds_per_failure", r.max_seconds_per_failure}};
}

std::string reports_to_csv(std::span<const EvalReport> reports) {
  std::string out = "producer,failures,MAR,A@1,A@2,A@3,A@5\n";
  for (const auto& r : reports) {
    out += fmt::format("{},{},{:.4f}", r.producer, r.failures, r.mar);
    for (std::size_t k : kAccuracyKs) {
      auto it = r.accuracy.find(k);
      out += fmt::format(",{:.4f}", it == r.accuracy.end() ? 0.0 : it->second);
    }
    out += '\n';
  }
  return out;
}

SeenUnseen seen_unseen_split(std::span<const data::FailureRecord> test,
                             std::span<const data::FailureRecord> train) {
  std::set<std::string> trained;
  for (const auto& r : train) trained.insert(r.ground_truth.begin(), r.ground_truth.end());
  SeenUnseen out;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const bool seen = std::any_of(test[i].ground_truth.begin(), test[i].ground_truth.end(),
                                  [&](const std::string& u) { return trained.count(u) > 0; });
    (seen ? out.seen : out.unseen).push_back(i);
  }
  return out;
}

}  // namespace dejavu::eval
