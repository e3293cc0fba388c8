#pragma once

// Small hand-built systems and records for tests.

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "dejavu/dataset.h"
#include "dejavu/fdg.h"
#include "dejavu/model.h"
#include "dejavu/sim.h"

namespace dejavu::testing {

// Three components c0 - c1 - c2; classes "A" (two metrics) on c0 and c2,
// "B" (one metric) on c1. Edges c0.A-c1.B, c1.B-c2.A.
inline graph::SystemDescription tiny_system() {
  graph::SystemDescription s;
  s.components = {{"c0", "Service"}, {"c1", "Host"}, {"c2", "Service"}};
  s.classes = {{"A", "Service", {"a1", "a2"}}, {"B", "Host", {"b1"}}};
  s.units = {{"c0.A", "c0", "A"}, {"c1.B", "c1", "B"}, {"c2.A", "c2", "A"}};
  return s;
}

inline std::shared_ptr<const graph::Fdg> tiny_fdg(std::vector<graph::IdPair> edges = {{"c0.A", "c1.B"},
                                                                                      {"c1.B", "c2.A"}}) {
  return std::make_shared<const graph::Fdg>(tiny_system().units, std::move(edges));
}

// Gaussian windows of length `window`; `truth` gets a +3 shift in its last
// third.
inline data::FailureRecord tiny_record(std::uint64_t seed, const std::string& truth = "c1.B",
                                       std::size_t window = 6,
                                       std::shared_ptr<const graph::Fdg> fdg = tiny_fdg()) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  const graph::SystemDescription sys = tiny_system();
  data::FailureRecord r;
  r.failure_id = "T" + std::to_string(seed);
  r.failure_time = 1000 + static_cast<data::Timestamp>(seed);
  r.fdg = fdg;
  r.ground_truth = {truth};
  for (const auto& u : fdg->units()) {
    const std::size_t m = sys.failure_class(u.class_id).metric_names.size();
    ad::Tensor t({window, m});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = n(rng);
    if (u.id == truth) {
      for (std::size_t row = window - window / 3; row < window; ++row) {
        for (std::size_t c = 0; c < m; ++c) t.at(row, c) += 3.0;
      }
    }
    r.windows.push_back({u.id, std::move(t), r.failure_time - static_cast<data::Timestamp>(window - 1) * 60});
  }
  return r;
}

inline model::ModelConfig tiny_model_config(std::size_t window = 6) {
  model::ModelConfig c;
  c.feature_dim = 3;
  c.heads = 2;
  c.layers = 2;
  c.window = window;
  c.kernel_width = 3;
  c.conv_channels = 2;
  c.gru_hidden = 3;
  c.classifier_hidden = 4;
  return c;
}

// A desk-scale simulator config small enough for unit tests.
inline sim::SimConfig small_sim_config(std::uint64_t seed = 0) {
  sim::SimConfig c;
  c.seed = seed;
  c.n_services = 4;
  c.n_containers = 4;
  c.n_hosts = 3;
  c.call_layers = 2;
  c.n_failures = 24;
  return c;
}

}  // namespace dejavu::testing
