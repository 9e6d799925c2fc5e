#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "lcm/aggregators/reg_losses.hpp"
#include "lcm/core/ops.hpp"
#include "lcm/monoid/agg_tree.hpp"

namespace lcm {

/// Counters for one aggregation call over a batch of segments.
struct AggStats {
  std::size_t operator_applications = 0;  // learned-operator applications on the main path
  std::size_t extra_applications = 0;     // applications spent on regularization terms
  std::size_t critical_path = 0;          // longest chain of dependent applications (max over segments)
  std::size_t batched_calls = 0;          // vectorized operator invocations on the main path
};

template <class T>
struct AggregateOutput {
  Var<T> value;  // [segments, h]
  RegLossAccumulator<T> reg;
  AggStats stats;
  std::vector<std::size_t> empty_segments;  // segments that received no messages
};

/// Batched binary operator: row i of the result is op(left row i, right row i).
template <class T>
using BinaryOp = std::function<Var<T>(const Var<T>& left, const Var<T>& right)>;

struct TreeOptions {
  bool comm = false;
  bool assoc = false;
  bool identity = false;
  bool pad_to_power_of_two = false;
};

inline std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// Reduces each segment [offsets[s], offsets[s+1]) of `messages` with `op`
/// along the balanced tree over its rows. All applications at the same height
/// across every segment form one call of `op`, so the number of sequential
/// calls equals the deepest tree. Empty segments produce `identity` ([1, h]).
template <class T>
AggregateOutput<T> tree_aggregate(const Var<T>& messages, std::span<const std::size_t> offsets,
                                  const Var<T>& identity, const BinaryOp<T>& op, const TreeOptions& opts = {}) {
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != messages.value().rows()) {
    throw ShapeError("tree_aggregate: offsets do not cover the message rows");
  }
  if (identity.value().rows() != 1 || identity.value().cols() != messages.value().cols()) {
    throw ShapeError("tree_aggregate: identity " + to_string(identity.shape()) + " does not match messages " +
                     to_string(messages.shape()));
  }
  const std::size_t segments = offsets.size() - 1;
  AggregateOutput<T> out;

  std::vector<Var<T>> sources{messages, identity};
  constexpr std::uint32_t kMessages = 0, kIdentity = 1;

  std::map<std::size_t, AggTree> trees;
  std::vector<const AggTree*> tree_of(segments, nullptr);
  std::vector<std::vector<RowRef>> refs(segments);
  std::size_t max_height = 0;
  for (std::size_t s = 0; s < segments; ++s) {
    const std::size_t n = offsets[s + 1] - offsets[s];
    if (n == 0) {
      out.empty_segments.push_back(s);
      continue;
    }
    const std::size_t leaves = opts.pad_to_power_of_two ? next_power_of_two(n) : n;
    auto it = trees.find(leaves);
    if (it == trees.end()) it = trees.emplace(leaves, to_balanced_tree(leaves)).first;
    const AggTree& tree = it->second;
    tree_of[s] = &tree;
    refs[s].resize(tree.size());
    for (std::size_t i = 0; i < tree.size(); ++i) {
      const auto& node = tree.node(i);
      if (!node.is_leaf()) continue;
      refs[s][i] = node.leaf < n ? RowRef{kMessages, static_cast<std::uint32_t>(offsets[s] + node.leaf)}
                                 : RowRef{kIdentity, 0};
    }
    max_height = std::max(max_height, tree.depth());
    out.stats.operator_applications += leaves - 1;
  }
  out.stats.critical_path = max_height;

  auto apply = [&](const std::vector<RowRef>& left, const std::vector<RowRef>& right) {
    const Var<T> l = gather_rows<T>(sources, left);
    const Var<T> r = gather_rows<T>(sources, right);
    sources.push_back(op(l, r));
    return static_cast<std::uint32_t>(sources.size() - 1);
  };

  for (std::size_t height = 1; height <= max_height; ++height) {
    std::vector<RowRef> left, right;
    std::vector<std::pair<std::size_t, std::size_t>> slots;
    for (std::size_t s = 0; s < segments; ++s) {
      if (tree_of[s] == nullptr) continue;
      const auto nodes = tree_of[s]->nodes();
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].height != height) continue;
        left.push_back(refs[s][nodes[i].left]);
        right.push_back(refs[s][nodes[i].right]);
        slots.emplace_back(s, i);
      }
    }
    const std::uint32_t src = apply(left, right);
    ++out.stats.batched_calls;
    for (std::size_t j = 0; j < slots.size(); ++j) {
      refs[slots[j].first][slots[j].second] = RowRef{src, static_cast<std::uint32_t>(j)};
    }
  }

  std::vector<RowRef> roots(segments, RowRef{kIdentity, 0});
  for (std::size_t s = 0; s < segments; ++s) {
    if (tree_of[s] != nullptr) roots[s] = refs[s][tree_of[s]->root()];
  }
  out.value = gather_rows<T>(sources, roots);

  auto add_terms = [&](RegKind kind, const std::vector<RowRef>& lhs, const std::vector<RowRef>& rhs,
                       std::vector<std::size_t> owners) {
    if (lhs.empty()) return;
    const Var<T> diff = sub(gather_rows<T>(sources, lhs), gather_rows<T>(sources, rhs));
    out.reg.add(kind, row_sqnorm(diff), std::move(owners));
  };

  if (opts.comm) {
    // |a <> b - b <> a|^2 at every internal node; a <> b is the memoized node value.
    std::vector<RowRef> node_refs, swapped_l, swapped_r;
    std::vector<std::size_t> owners;
    for (std::size_t s = 0; s < segments; ++s) {
      if (tree_of[s] == nullptr) continue;
      const auto nodes = tree_of[s]->nodes();
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].is_leaf()) continue;
        node_refs.push_back(refs[s][i]);
        swapped_l.push_back(refs[s][nodes[i].right]);
        swapped_r.push_back(refs[s][nodes[i].left]);
        owners.push_back(s);
      }
    }
    if (!node_refs.empty()) {
      const std::uint32_t src = apply(swapped_l, swapped_r);
      out.stats.extra_applications += node_refs.size();
      std::vector<RowRef> fresh(node_refs.size());
      for (std::size_t j = 0; j < fresh.size(); ++j) fresh[j] = {src, static_cast<std::uint32_t>(j)};
      add_terms(RegKind::Comm, node_refs, fresh, std::move(owners));
    }
  }

  if (opts.assoc) {
    // Node patterns, with capitals for memoized subtree values:
    //   Nd (Nd a b) (Nd c d): (A<>B)<>C vs A<>(B<>C) and (B<>C)<>D vs B<>(C<>D)
    //   Nd (Nd a b) (Lf c):   (A<>B)<>c vs A<>(B<>c)
    // A<>B, C<>D and (A<>B)<>c are already node values. B<>C (or B<>c) is
    // computed in a first batch, the remaining products in a second.
    struct Match {
      std::size_t segment;
      RowRef a, b, c, d, ab, cd, node;
      bool full;  // false: leaf pattern
    };
    std::vector<Match> matches;
    for (std::size_t s = 0; s < segments; ++s) {
      if (tree_of[s] == nullptr) continue;
      const auto nodes = tree_of[s]->nodes();
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto& n = nodes[i];
        if (n.is_leaf() || nodes[n.left].is_leaf()) continue;
        const auto& l = nodes[n.left];
        const auto& r = nodes[n.right];
        Match m{s, refs[s][l.left], refs[s][l.right], {}, {}, refs[s][n.left], {}, refs[s][i], !r.is_leaf()};
        if (m.full) {
          m.c = refs[s][r.left];
          m.d = refs[s][r.right];
          m.cd = refs[s][n.right];
        } else {
          m.c = refs[s][n.right];
        }
        matches.push_back(m);
      }
    }
    if (!matches.empty()) {
      std::vector<RowRef> bl, br;
      for (const auto& m : matches) {
        bl.push_back(m.b);
        br.push_back(m.c);
      }
      const std::uint32_t bc_src = apply(bl, br);
      out.stats.extra_applications += matches.size();

      std::vector<RowRef> pl, pr;  // second batch
      std::vector<RowRef> lhs, rhs;
      std::vector<std::size_t> owners;
      std::vector<std::pair<std::int64_t, std::int64_t>> term_slots;  // product index (or -1 for node) per side
      for (std::size_t j = 0; j < matches.size(); ++j) {
        const auto& m = matches[j];
        const RowRef bc{bc_src, static_cast<std::uint32_t>(j)};
        auto product = [&](RowRef x, RowRef y) {
          pl.push_back(x);
          pr.push_back(y);
          return static_cast<std::int64_t>(pl.size() - 1);
        };
        if (m.full) {
          term_slots.emplace_back(product(m.ab, m.c), product(m.a, bc));
          term_slots.emplace_back(product(bc, m.d), product(m.b, m.cd));
          owners.push_back(m.segment);
          owners.push_back(m.segment);
        } else {
          term_slots.emplace_back(-1 - static_cast<std::int64_t>(j), product(m.a, bc));
          owners.push_back(m.segment);
        }
      }
      const std::uint32_t p_src = apply(pl, pr);
      out.stats.extra_applications += pl.size();
      auto resolve = [&](std::int64_t slot) {
        if (slot >= 0) return RowRef{p_src, static_cast<std::uint32_t>(slot)};
        return matches[static_cast<std::size_t>(-1 - slot)].node;
      };
      for (const auto& [x, y] : term_slots) {
        lhs.push_back(resolve(x));
        rhs.push_back(resolve(y));
      }
      add_terms(RegKind::Assoc, lhs, rhs, std::move(owners));
    }
  }

  if (opts.identity) {
    std::vector<RowRef> root_refs, ids;
    std::vector<std::size_t> owners;
    for (std::size_t s = 0; s < segments; ++s) {
      if (tree_of[s] == nullptr) continue;
      root_refs.push_back(roots[s]);
      ids.push_back(RowRef{kIdentity, 0});
      owners.push_back(s);
    }
    if (!root_refs.empty()) {
      const std::uint32_t src = apply(root_refs, ids);
      out.stats.extra_applications += root_refs.size();
      std::vector<RowRef> fresh(root_refs.size());
      for (std::size_t j = 0; j < fresh.size(); ++j) fresh[j] = {src, static_cast<std::uint32_t>(j)};
      add_terms(RegKind::Identity, fresh, root_refs, std::move(owners));
    }
  }
  return out;
}

/// Exact elementwise max as a BinaryOp.
template <class T>
Var<T> elementwise_max(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape("elementwise_max", a, b);
  const std::array<Var<T>, 2> parts{a, b};
  const std::size_t m = a.value().rows();
  std::vector<RowRef> refs;
  std::vector<std::size_t> offsets{0};
  for (std::uint32_t i = 0; i < m; ++i) {
    refs.push_back({0, i});
    refs.push_back({1, i});
    offsets.push_back(offsets.back() + 2);
  }
  return segment_max(gather_rows<T>(parts, refs), offsets);
}

}  // namespace lcm
