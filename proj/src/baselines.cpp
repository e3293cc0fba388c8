#include "dejavu/baselines.h"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "dejavu/error.h"
#include "dejavu/log.h"

namespace dejavu::baselines {

using ad::Tensor;

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError(fmt::format("pearson: lengths {} and {}", a.size(), b.size()));
  }
  const std::size_t n = a.size();
  if (n < 2) return 0.0;
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

TransitionMatrix normalize_rows(std::vector<std::string> nodes, Tensor weights) {
  const std::size_t n = nodes.size();
  if (weights.shape() != ad::Shape{n, n}) {
    throw ShapeError(fmt::format("transition weights {} for {} nodes", ad::shape_string(weights.shape()), n));
  }
  for (std::size_t r = 0; r < n; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      const double w = weights.at(r, c);
      if (!std::isfinite(w) || w < 0.0) {
        throw ValidationError(fmt::format("transition weight ({}, {}) = {} is invalid", r, c, w));
      }
      total += w;
    }
    for (std::size_t c = 0; c < n; ++c) {
      weights.at(r, c) = total > 0.0 ? weights.at(r, c) / total : 1.0 / static_cast<double>(n);
    }
  }
  return {std::move(nodes), std::move(weights)};
}

PageRankResult personalized_pagerank(const TransitionMatrix& t, const PageRankOptions& opts) {
  const std::size_t n = t.nodes.size();
  if (n == 0) return {};
  const double u = 1.0 / static_cast<double>(n);
  std::vector<double> p(n, u), next(n);
  PageRankResult out;
  for (out.iterations = 1; out.iterations <= opts.max_iterations; ++out.iterations) {
    std::fill(next.begin(), next.end(), opts.restart * u);
    for (std::size_t r = 0; r < n; ++r) {
      const double mass = (1.0 - opts.restart) * p[r];
      for (std::size_t c = 0; c < n; ++c) next[c] += mass * t.matrix.at(r, c);
    }
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) change += std::abs(next[i] - p[i]);
    p.swap(next);
    if (change < opts.tolerance) break;
  }
  if (out.iterations > opts.max_iterations) {
    logger().warn("PageRank did not converge in {} iterations", opts.max_iterations);
    out.iterations = opts.max_iterations;
  }
  out.scores = std::move(p);
  return out;
}

namespace {

struct MetricNode {
  std::size_t unit;
  std::size_t column;
  std::vector<double> values;
};

std::vector<MetricNode> metric_nodes(const data::FailureRecord& record) {
  std::vector<MetricNode> out;
  for (std::size_t u = 0; u < record.windows.size(); ++u) {
    for (std::size_t c = 0; c < record.windows[u].metric_count(); ++c) {
      out.push_back({u, c, record.windows[u].column(c)});
    }
  }
  return out;
}

}  // namespace

TransitionMatrix metric_transition(const data::FailureRecord& record) {
  const graph::Fdg& g = *record.fdg;
  const auto nodes = metric_nodes(record);
  const std::size_t n = nodes.size();
  std::vector<std::vector<bool>> adjacent(g.vertex_count(), std::vector<bool>(g.vertex_count(), false));
  for (std::size_t v = 0; v < g.vertex_count(); ++v) {
    adjacent[v][v] = true;
    for (std::uint32_t w : g.neighbor_indices(v)) adjacent[v][w] = true;
  }
  Tensor w({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!adjacent[nodes[i].unit][nodes[j].unit]) continue;
      const double c = std::abs(pearson(nodes[i].values, nodes[j].values));
      w.at(i, j) = c;
      w.at(j, i) = c;
    }
  }
  std::vector<std::string> names;
  for (const auto& m : nodes) {
    names.push_back(fmt::format("{}#{}", g.unit_at(m.unit).id, m.column));
  }
  return normalize_rows(std::move(names), std::move(w));
}

TransitionMatrix unit_transition(const data::FailureRecord& record) {
  const graph::Fdg& g = *record.fdg;
  const std::size_t n = g.vertex_count();
  std::vector<std::vector<std::vector<double>>> cols(n);
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t c = 0; c < record.windows[u].metric_count(); ++c) {
      cols[u].push_back(record.windows[u].column(c));
    }
  }
  Tensor w({n, n});
  for (std::size_t u = 0; u < n; ++u) {
    for (std::uint32_t v : g.neighbor_indices(u)) {
      if (v <= u) continue;
      double total = 0.0;
      for (const auto& a : cols[u])
        for (const auto& b : cols[v]) total += std::abs(pearson(a, b));
      const double mean = total / static_cast<double>(cols[u].size() * cols[v].size());
      w.at(u, v) = mean;
      w.at(v, u) = mean;
    }
  }
  std::vector<std::string> names;
  for (const auto& unit : g.units()) names.push_back(unit.id);
  return normalize_rows(std::move(names), std::move(w));
}

Ranking randomwalk_at_metric(const data::FailureRecord& record, const PageRankOptions& opts) {
  const auto nodes = metric_nodes(record);
  const auto pr = personalized_pagerank(metric_transition(record), opts);
  std::vector<double> unit_scores(record.fdg->vertex_count(), 0.0);
  for (std::size_t i = 0; i < nodes.size(); ++i) unit_scores[nodes[i].unit] += pr.scores[i];
  return make_ranking(record.failure_id, *record.fdg, unit_scores);
}

Ranking randomwalk_at_fi(const data::FailureRecord& record, const PageRankOptions& opts) {
  const auto pr = personalized_pagerank(unit_transition(record), opts);
  return make_ranking(record.failure_id, *record.fdg, pr.scores);
}

}  // namespace dejavu::baselines
