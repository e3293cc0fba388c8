#include "dejavu/tree.h"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "dejavu/error.h"

namespace dejavu::tree {

namespace {

double gini(std::size_t pos, std::size_t neg) {
  const double n = static_cast<double>(pos + neg);
  if (n == 0.0) return 0.0;
  const double p = static_cast<double>(pos) / n;
  return 2.0 * p * (1.0 - p);
}

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double impurity = 0.0;
};

class Builder {
 public:
  Builder(const std::vector<std::vector<double>>& x, std::span<const int> y, const TreeOptions& opt,
          std::vector<Node>& nodes)
      : x_(x), y_(y), opt_(opt), nodes_(nodes) {}

  int grow(std::vector<std::size_t> idx, std::size_t depth) {
    Node node;
    node.depth = depth;
    for (std::size_t i : idx) (y_[i] ? node.positives : node.negatives) += 1;
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (depth >= opt_.max_depth || node.pure() || idx.size() < 2 * opt_.min_leaf) return id;

    const Split best = find_split(idx, node.positives, node.negatives);
    if (best.feature < 0) return id;

    std::vector<std::size_t> left, right;
    for (std::size_t i : idx) {
      (x_[i][static_cast<std::size_t>(best.feature)] <= best.threshold ? left : right).push_back(i);
    }
    const int l = grow(std::move(left), depth + 1);
    const int r = grow(std::move(right), depth + 1);
    nodes_[static_cast<std::size_t>(id)].feature = best.feature;
    nodes_[static_cast<std::size_t>(id)].threshold = best.threshold;
    nodes_[static_cast<std::size_t>(id)].left = l;
    nodes_[static_cast<std::size_t>(id)].right = r;
    return id;
  }

 private:
  Split find_split(const std::vector<std::size_t>& idx, std::size_t pos, std::size_t neg) const {
    const std::size_t n = idx.size();
    const double parent = gini(pos, neg);
    Split best;
    best.impurity = parent;
    std::vector<std::size_t> order(idx);
    for (std::size_t f = 0; f < x_[idx[0]].size(); ++f) {
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return x_[a][f] < x_[b][f] || (x_[a][f] == x_[b][f] && a < b);
      });
      std::size_t lpos = 0, lneg = 0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        (y_[order[k]] ? lpos : lneg) += 1;
        const double v = x_[order[k]][f], next = x_[order[k + 1]][f];
        if (v == next) continue;
        const std::size_t nl = k + 1, nr = n - nl;
        if (nl < opt_.min_leaf || nr < opt_.min_leaf) continue;
        const double imp = (static_cast<double>(nl) * gini(lpos, lneg) +
                            static_cast<double>(nr) * gini(pos - lpos, neg - lneg)) /
                           static_cast<double>(n);
        if (imp < best.impurity - 1e-15) {
          best = {static_cast<int>(f), v + (next - v) / 2.0, imp};
        }
      }
    }
    return best;
  }

  const std::vector<std::vector<double>>& x_;
  std::span<const int> y_;
  const TreeOptions& opt_;
  std::vector<Node>& nodes_;
};

}  // namespace

DecisionTree DecisionTree::fit(const std::vector<std::vector<double>>& samples,
                               std::span<const int> labels, const TreeOptions& options) {
  if (samples.empty()) throw ValidationError("decision tree needs at least one sample");
  if (samples.size() != labels.size()) {
    throw ShapeError(fmt::format("decision tree: {} samples, {} labels", samples.size(), labels.size()));
  }
  if (options.min_leaf == 0) throw ValidationError("decision tree: min_leaf must be positive");
  for (const auto& s : samples) {
    if (s.size() != samples[0].size()) throw ShapeError("decision tree: ragged feature matrix");
  }
  DecisionTree t;
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  Builder(samples, labels, options, t.nodes_).grow(std::move(idx), 0);
  t.degenerate_ = t.nodes_[0].pure();
  return t;
}

std::size_t DecisionTree::leaf_of(std::span<const double> x) const {
  std::size_t i = 0;
  while (!nodes_[i].is_leaf()) {
    const Node& n = nodes_[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return i;
}

int DecisionTree::predict(std::span<const double> x) const {
  const Node& leaf = nodes_[leaf_of(x)];
  return leaf.positives > leaf.negatives ? 1 : 0;
}

double DecisionTree::positive_fraction(std::span<const double> x) const {
  const Node& leaf = nodes_[leaf_of(x)];
  return static_cast<double>(leaf.positives) / static_cast<double>(leaf.positives + leaf.negatives);
}

std::size_t DecisionTree::depth() const {
  std::size_t d = 0;
  for (const auto& n : nodes_) d = std::max(d, n.depth);
  return d;
}

std::vector<LeafPath> DecisionTree::leaf_paths() const {
  std::vector<LeafPath> out;
  std::vector<LeafPath> stack{{0, {}}};
  while (!stack.empty()) {
    LeafPath cur = std::move(stack.back());
    stack.pop_back();
    const Node& n = nodes_[cur.leaf];
    if (n.is_leaf()) {
      out.push_back(std::move(cur));
      continue;
    }
    const auto f = static_cast<std::size_t>(n.feature);
    LeafPath right{static_cast<std::size_t>(n.right), cur.conditions};
    right.conditions.push_back({f, n.threshold, true});
    LeafPath left{static_cast<std::size_t>(n.left), std::move(cur.conditions)};
    left.conditions.push_back({f, n.threshold, false});
    stack.push_back(std::move(right));
    stack.push_back(std::move(left));
  }
  return out;
}

}  // namespace dejavu::tree
