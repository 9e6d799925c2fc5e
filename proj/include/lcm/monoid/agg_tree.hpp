#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lcm/core/prng.hpp"
#include "lcm/core/tensor.hpp"
#include "lcm/monoid/exact_monoid.hpp"

namespace lcm {

/// Binary tree over leaf indices 0..n-1, stored flat in post-order so that
/// every node appears after both of its children; the root is the last node.
class AggTree {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  struct Node {
    std::size_t left = npos;
    std::size_t right = npos;
    std::size_t leaf = npos;   // leaf index for leaves
    std::size_t height = 0;    // 0 for leaves

    bool is_leaf() const { return left == npos; }
  };

  static AggTree leaf(std::size_t index) {
    AggTree t;
    t.nodes_.push_back(Node{npos, npos, index, 0});
    t.leaf_count_ = 1;
    return t;
  }

  /// Joins two trees under a new root. Leaf indices are kept as-is.
  static AggTree join(const AggTree& left, const AggTree& right) {
    AggTree t;
    t.nodes_.reserve(left.nodes_.size() + right.nodes_.size() + 1);
    t.append(left);
    const std::size_t left_root = t.nodes_.size() - 1;
    t.append(right);
    const std::size_t right_root = t.nodes_.size() - 1;
    const std::size_t height = 1 + std::max(t.nodes_[left_root].height, t.nodes_[right_root].height);
    t.nodes_.push_back(Node{left_root, right_root, npos, height});
    t.leaf_count_ = left.leaf_count_ + right.leaf_count_;
    return t;
  }

  std::size_t leaf_count() const { return leaf_count_; }
  std::size_t internal_count() const { return nodes_.size() - leaf_count_; }
  std::size_t root() const { return nodes_.size() - 1; }
  std::size_t depth() const { return nodes_.back().height; }
  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_[i]; }
  std::span<const Node> nodes() const { return nodes_; }

  /// Leaf indices in left-to-right order.
  std::vector<std::size_t> leaf_order() const {
    std::vector<std::size_t> order;
    for (const auto& n : nodes_) {
      if (n.is_leaf()) order.push_back(n.leaf);
    }
    return order;  // post-order visits leaves left to right
  }

 private:
  void append(const AggTree& other) {
    const std::size_t base = nodes_.size();
    for (Node n : other.nodes_) {
      if (!n.is_leaf()) {
        n.left += base;
        n.right += base;
      }
      nodes_.push_back(n);
    }
  }

  std::vector<Node> nodes_;
  std::size_t leaf_count_ = 0;
};

namespace detail {

inline AggTree balanced_range(std::size_t begin, std::size_t count) {
  if (count == 1) return AggTree::leaf(begin);
  const std::size_t left = (count + 1) / 2;
  return AggTree::join(balanced_range(begin, left), balanced_range(begin + left, count - left));
}

inline AggTree random_range(std::size_t begin, std::size_t count, Prng& prng) {
  if (count == 1) return AggTree::leaf(begin);
  const std::size_t left = 1 + prng.index(count - 1);
  return AggTree::join(random_range(begin, left, prng), random_range(begin + left, count - left, prng));
}

}  // namespace detail

/// Balanced tree over n leaves: the left subtree takes ceil(n/2) leaves, so
/// depth is ceil(log2 n).
inline AggTree to_balanced_tree(std::size_t n) {
  if (n == 0) throw Error("to_balanced_tree: no leaves (empty reductions use the identity)");
  return detail::balanced_range(0, n);
}

/// ((x0 . x1) . x2) ... : the shape of a left fold.
inline AggTree left_comb_tree(std::size_t n) {
  if (n == 0) throw Error("left_comb_tree: no leaves");
  AggTree t = AggTree::leaf(0);
  for (std::size_t i = 1; i < n; ++i) t = AggTree::join(t, AggTree::leaf(i));
  return t;
}

/// Random binary tree shape (uniform split point at every node).
inline AggTree random_tree(std::size_t n, Prng& prng) {
  if (n == 0) throw Error("random_tree: no leaves");
  return detail::random_range(0, n, prng);
}

inline std::size_t ceil_log2(std::size_t n) {
  std::size_t depth = 0;
  while ((std::size_t{1} << depth) < n) ++depth;
  return depth;
}

/// Folds `m.plus` over the tree, bottom-up.
template <class T>
T tree_fold(const ExactMonoid<T>& m, const AggTree& tree, std::span<const T> leaves) {
  if (leaves.size() != tree.leaf_count()) {
    throw Error("tree_fold: " + std::to_string(leaves.size()) + " leaves for a tree over " +
                std::to_string(tree.leaf_count()));
  }
  std::vector<T> values;
  values.reserve(tree.size());
  for (const auto& n : tree.nodes()) {
    if (n.is_leaf()) values.push_back(leaves[n.leaf]);
    else values.push_back(m.plus(values[n.left], values[n.right]));
  }
  return values.back();
}

template <class T>
T tree_fold(const ExactMonoid<T>& m, const AggTree& tree, const std::vector<T>& leaves) {
  return tree_fold(m, tree, std::span<const T>(leaves));
}

}  // namespace lcm
