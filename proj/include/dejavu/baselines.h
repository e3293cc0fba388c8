#pragma once

#include <span>
#include <string>
#include <vector>

#include "dejavu/ad/tensor.h"
#include "dejavu/dataset.h"
#include "dejavu/ranking.h"

namespace dejavu::baselines {

// Pearson correlation; 0 when either series has zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

// Row-stochastic matrix over named nodes.
struct TransitionMatrix {
  std::vector<std::string> nodes;
  ad::Tensor matrix;  // [n, n]
};

// Divides each row by its sum; an all-zero row becomes uniform. Weights must
// be finite and non-negative.
TransitionMatrix normalize_rows(std::vector<std::string> nodes, ad::Tensor weights);

struct PageRankOptions {
  double restart = 0.15;
  double tolerance = 1e-10;  // L1 change between iterations
  std::size_t max_iterations = 10000;
};

struct PageRankResult {
  std::vector<double> scores;
  std::size_t iterations = 0;
};

// p <- (1 - c)·Pᵀp + c·u with uniform u, from p = u.
PageRankResult personalized_pagerank(const TransitionMatrix& t, const PageRankOptions& opts = {});

// Metric-level graph: metrics of one unit pairwise linked, plus every metric
// pair across FDG-adjacent units; weights |Pearson| over the window.
TransitionMatrix metric_transition(const data::FailureRecord& record);
// Unit-level graph on the FDG; weight = mean |Pearson| over cross metric pairs.
TransitionMatrix unit_transition(const data::FailureRecord& record);

// Unit score = sum of its metric PageRank scores.
Ranking randomwalk_at_metric(const data::FailureRecord& record, const PageRankOptions& opts = {});
Ranking randomwalk_at_fi(const data::FailureRecord& record, const PageRankOptions& opts = {});

}  // namespace dejavu::baselines
