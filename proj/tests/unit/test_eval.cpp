#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "dejavu/error.h"
#include "dejavu/eval.h"

#include "../support/fixtures.h"

using namespace dejavu;

namespace {

Ranking ranking_of(std::vector<std::string> order) {
  Ranking r{"F", {}};
  double s = 1.0;
  for (auto& u : order) r.entries.push_back({std::move(u), s -= 0.01});
  return r;
}

}  // namespace

TEST_CASE("ranking order and ties") {
  const auto g = testing::tiny_fdg();
  const std::vector<double> scores{0.5, 0.9, 0.5};
  const Ranking r = make_ranking("F1", *g, scores);
  CHECK(r.entries[0].unit_id == "c1.B");
  CHECK(r.entries[1].unit_id == "c0.A");  // tie broken by id
  CHECK(r.rank_of("c2.A") == 3);
  CHECK_THROWS_AS(r.rank_of("zz"), ValidationError);
  const auto j = ranking_to_json(r);
  CHECK(j["ranking"][0]["rank"] == 1);
}

TEST_CASE("average rank and MAR examples") {
  const Ranking r = ranking_of({"a", "b", "c", "d", "e"});
  CHECK(eval::average_rank(r, std::vector<std::string>{"a"}) == 1.0);
  CHECK(eval::average_rank(r, std::vector<std::string>{"b", "d"}) == 3.0);
  CHECK_THROWS_AS(eval::average_rank(r, std::vector<std::string>{"x"}), ValidationError);

  const std::vector<Ranking> rs{r, ranking_of({"c", "a", "b", "d", "e"})};
  const std::vector<std::vector<std::string>> truths{{"a"}, {"b"}};
  CHECK(eval::mar(rs, truths) == 2.0);  // ranks 1 and 3
  CHECK(eval::topk_accuracy(rs, truths, 1) == 0.5);
  CHECK(eval::topk_accuracy(rs, truths, 2) == 0.5);
  CHECK(eval::topk_accuracy(rs, truths, 3) == 1.0);
  // Multiple truths: all of them must be within k.
  const std::vector<std::vector<std::string>> multi{{"a", "e"}, {"c"}};
  CHECK(eval::topk_accuracy(rs, multi, 3) == 0.5);
  CHECK(eval::topk_accuracy(rs, multi, 5) == 1.0);
}

TEST_CASE("accuracy is monotone in k over random rankings") {
  std::mt19937_64 rng(8);
  std::vector<std::string> ids;
  for (int i = 0; i < 12; ++i) ids.push_back("u" + std::to_string(i));
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Ranking> rs;
    std::vector<std::vector<std::string>> ts;
    for (int f = 0; f < 6; ++f) {
      auto order = ids;
      std::shuffle(order.begin(), order.end(), rng);
      rs.push_back(ranking_of(order));
      const std::size_t first = rng() % ids.size();
      std::vector<std::string> t{ids[first]};
      // Sometimes a second, distinct truth.
      if (rng() % 3 == 0) t.push_back(ids[(first + 1 + rng() % (ids.size() - 1)) % ids.size()]);
      ts.push_back(t);
    }
    double prev = 0.0;
    for (std::size_t k = 1; k <= ids.size(); ++k) {
      const double acc = eval::topk_accuracy(rs, ts, k);
      CHECK(acc >= prev);
      prev = acc;
    }
    CHECK(prev == 1.0);
  }
}

TEST_CASE("random rankings have expected MAR (N+1)/2") {
  std::mt19937_64 rng(12);
  const std::size_t n = 30, trials = 10000;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("u" + std::to_string(i));
  std::vector<Ranking> rs;
  std::vector<std::vector<std::string>> ts;
  for (std::size_t t = 0; t < trials; ++t) {
    auto order = ids;
    std::shuffle(order.begin(), order.end(), rng);
    rs.push_back(ranking_of(order));
    ts.push_back({ids[0]});
  }
  const double expect = (n + 1) / 2.0;
  CHECK(std::abs(eval::mar(rs, ts) - expect) <= 0.02 * expect);
}

TEST_CASE("evaluation reports") {
  std::vector<data::FailureRecord> recs{testing::tiny_record(0, "c0.A"), testing::tiny_record(1, "c2.A")};
  const auto rep = eval::evaluate(
      "fixed", [](const data::FailureRecord& r) { return make_ranking(r.failure_id, *r.fdg, std::vector<double>{3, 2, 1}); },
      recs);
  CHECK(rep.mar == 2.0);
  CHECK(rep.accuracy.at(1) == 0.5);
  CHECK(rep.per_failure[1].ranks == std::vector<std::size_t>{3});
  const auto j = eval::report_to_json(rep);
  CHECK(j["MAR"] == 2.0);
  CHECK(j["accuracy"]["A@3"] == 1.0);
  CHECK_FALSE(j.contains("seconds_per_failure"));
  CHECK(eval::reports_to_csv(std::span(&rep, 1)) ==
        "producer,failures,MAR,A@1,A@2,A@3,A@5\nfixed,2,2.0000,0.5000,0.5000,1.0000,1.0000\n");
}

TEST_CASE("seen and unseen failures") {
  std::vector<data::FailureRecord> train{testing::tiny_record(0, "c0.A")};
  std::vector<data::FailureRecord> test{testing::tiny_record(1, "c0.A"), testing::tiny_record(2, "c2.A")};
  const auto su = eval::seen_unseen_split(test, train);
  CHECK(su.seen == std::vector<std::size_t>{0});
  CHECK(su.unseen == std::vector<std::size_t>{1});
}
