#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "xbart/dataset.hpp"
#include "xbart/error.hpp"

namespace xbart {

/// Binary regression tree. Internal nodes route x[var] <= cut to the left
/// child; leaves carry a scalar mean.
class Tree {
 public:
  static constexpr std::int32_t kNone = -1;

  struct Node {
    std::size_t var = 0;
    double cut = 0.0;
    std::int32_t left = kNone;
    std::int32_t right = kNone;
    double mu = 0.0;
    int depth = 0;

    bool is_leaf() const noexcept { return left == kNone; }
    friend bool operator==(const Node&, const Node&) = default;
  };

  Tree() = default;
  explicit Tree(std::size_t num_vars, int root_depth = 0)
      : nodes_(1), split_counts_(num_vars, 0) {
    nodes_[0].depth = root_depth;
  }

  static constexpr std::size_t root() noexcept { return 0; }

  std::size_t num_vars() const noexcept { return split_counts_.size(); }
  std::size_t size() const noexcept { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_.at(i); }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  bool is_leaf(std::size_t i) const { return nodes_.at(i).is_leaf(); }

  /// Turns leaf `i` into an internal node; returns (left, right) ids.
  std::pair<std::size_t, std::size_t> split(std::size_t i, std::size_t var, double cut) {
    if (!nodes_.at(i).is_leaf()) throw ContractViolation("node is already split");
    if (var >= split_counts_.size()) throw ContractViolation("split variable out of range");
    const auto left = static_cast<std::int32_t>(nodes_.size());
    const int depth = nodes_[i].depth + 1;
    nodes_[i].var = var;
    nodes_[i].cut = cut;
    nodes_[i].left = left;
    nodes_[i].right = left + 1;
    nodes_[i].mu = 0.0;
    nodes_.push_back(Node{0, 0.0, kNone, kNone, 0.0, depth});
    nodes_.push_back(Node{0, 0.0, kNone, kNone, 0.0, depth});
    ++split_counts_[var];
    return {static_cast<std::size_t>(left), static_cast<std::size_t>(left + 1)};
  }

  void set_leaf_value(std::size_t i, double mu) {
    if (!nodes_.at(i).is_leaf()) throw ContractViolation("cannot set a leaf value on an internal node");
    nodes_[i].mu = mu;
  }

  const std::vector<std::size_t>& split_counts() const noexcept { return split_counts_; }

  std::size_t num_internal() const noexcept {
    std::size_t k = 0;
    for (const auto& n : nodes_) k += n.is_leaf() ? 0 : 1;
    return k;
  }
  std::size_t num_leaves() const noexcept { return nodes_.size() - num_internal(); }

  int max_depth() const noexcept {
    int d = 0;
    for (const auto& n : nodes_) d = std::max(d, n.depth);
    return d;
  }

  template <class RowAccess>
  std::size_t leaf_of(RowAccess&& value_of) const {
    std::size_t i = 0;
    while (!nodes_[i].is_leaf()) {
      const auto& n = nodes_[i];
      i = static_cast<std::size_t>(value_of(n.var) <= n.cut ? n.left : n.right);
    }
    return i;
  }

  friend bool operator==(const Tree&, const Tree&) = default;

 private:
  std::vector<Node> nodes_;
  std::vector<std::size_t> split_counts_;
};

inline double predict_tree(const Tree& tree, std::span<const double> x_row) {
  if (x_row.size() != tree.num_vars()) throw InputError("input row has the wrong number of predictors");
  return tree.node(tree.leaf_of([&](std::size_t v) { return x_row[v]; })).mu;
}

inline double predict_tree(const Tree& tree, const Matrix& x, std::size_t row) {
  return tree.node(tree.leaf_of([&](std::size_t v) { return x(row, v); })).mu;
}

/// Fitted value of `tree` at every row of `x`.
inline std::vector<double> tree_fit(const Tree& tree, const Matrix& x) {
  std::vector<double> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) out[i] = predict_tree(tree, x, i);
  return out;
}

}  // namespace xbart
