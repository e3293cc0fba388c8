#pragma once

#include <span>
#include <vector>

namespace dejavu::tree {

struct TreeOptions {
  std::size_t max_depth = 5;
  std::size_t min_leaf = 5;
};

struct Node {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;  // left iff x[feature] <= threshold
  int left = -1;
  int right = -1;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t depth = 0;

  bool is_leaf() const { return feature < 0; }
  bool pure() const { return positives == 0 || negatives == 0; }
};

struct Condition {
  std::size_t feature = 0;
  double threshold = 0.0;
  bool greater = false;  // x > threshold; otherwise x <= threshold

  bool holds(std::span<const double> x) const {
    return greater ? x[feature] > threshold : x[feature] <= threshold;
  }
};

struct LeafPath {
  std::size_t leaf = 0;
  std::vector<Condition> conditions;
};

// Binary axis-aligned classification tree grown greedily by Gini impurity.
// Thresholds are midpoints between consecutive distinct values; among equal
// gains the lowest feature index, then the lowest threshold, wins.
class DecisionTree {
 public:
  // labels: 1 = positive (faulty), 0 = negative (normal).
  static DecisionTree fit(const std::vector<std::vector<double>>& samples, std::span<const int> labels,
                          const TreeOptions& options = {});

  int predict(std::span<const double> x) const;
  double positive_fraction(std::span<const double> x) const;
  std::size_t leaf_of(std::span<const double> x) const;

  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t depth() const;
  // Training data held a single label, so the tree is one leaf.
  bool degenerate() const { return degenerate_; }

  std::vector<LeafPath> leaf_paths() const;

 private:
  std::vector<Node> nodes_;
  bool degenerate_ = false;
};

}  // namespace dejavu::tree
