#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "lcm/aggregators/tree.hpp"
#include "lcm/core/prng.hpp"

namespace lcm {

/// Batched recurrent cell: cell(input rows, state rows) -> new state rows.
template <class T>
using CellFn = std::function<Var<T>(const Var<T>& input, const Var<T>& state)>;

struct SwapOptions {
  bool enabled = false;
  std::size_t pairs = 4;  // adjacent pairs sampled per segment (without replacement)
  Prng* prng = nullptr;   // required when enabled
};

/// Left fold of `cell` over each segment's rows, front to back, seeded with
/// `initial` ([1, h]). Segments advance in lockstep: step t updates every
/// segment that still has a t-th message. With swap enabled, sampled adjacent
/// pairs (i, i+1) add |f(f(s_i, x_i), x_i+1) - f(f(s_i, x_i+1), x_i)|^2, where
/// the first ordering is the memoized fold state.
template <class T>
AggregateOutput<T> recurrent_aggregate(const Var<T>& messages, std::span<const std::size_t> offsets,
                                       const Var<T>& initial, const CellFn<T>& cell, const SwapOptions& swap = {}) {
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != messages.value().rows()) {
    throw ShapeError("recurrent_aggregate: offsets do not cover the message rows");
  }
  if (initial.value().rows() != 1 || initial.value().cols() != messages.value().cols()) {
    throw ShapeError("recurrent_aggregate: initial state " + to_string(initial.shape()) +
                     " does not match messages " + to_string(messages.shape()));
  }
  if (swap.enabled && swap.prng == nullptr) throw Error("recurrent_aggregate: swap regularizer needs a Prng");
  const std::size_t segments = offsets.size() - 1;
  AggregateOutput<T> out;

  std::size_t longest = 0;
  for (std::size_t s = 0; s < segments; ++s) {
    const std::size_t n = offsets[s + 1] - offsets[s];
    if (n == 0) out.empty_segments.push_back(s);
    longest = std::max(longest, n);
    out.stats.operator_applications += n;
  }
  out.stats.critical_path = longest;

  // states[t] holds every segment's state after consuming t messages (segments
  // shorter than t keep their final state).
  std::vector<Var<T>> states{repeat_rows(initial, segments)};
  for (std::size_t t = 0; t < longest; ++t) {
    std::vector<std::size_t> active, rows;
    for (std::size_t s = 0; s < segments; ++s) {
      if (offsets[s] + t < offsets[s + 1]) {
        active.push_back(s);
        rows.push_back(offsets[s] + t);
      }
    }
    const Var<T> x = gather_rows<T>(messages, rows);
    const Var<T> prev = gather_rows<T>(states.back(), active);
    states.push_back(replace_rows<T>(states.back(), active, cell(x, prev)));
    ++out.stats.batched_calls;
  }
  out.value = states.back();

  if (swap.enabled) {
    std::vector<RowRef> state_refs, first, second, memo;
    std::vector<std::size_t> owners;
    // sources: [messages, states...]
    std::vector<Var<T>> sources{messages};
    sources.insert(sources.end(), states.begin(), states.end());
    for (std::size_t s = 0; s < segments; ++s) {
      const std::size_t n = offsets[s + 1] - offsets[s];
      if (n < 2) continue;
      std::vector<std::size_t> starts(n - 1);
      for (std::size_t i = 0; i < starts.size(); ++i) starts[i] = i;
      swap.prng->shuffle(std::span<std::size_t>(starts));
      starts.resize(std::min(swap.pairs, starts.size()));
      std::sort(starts.begin(), starts.end());
      for (std::size_t i : starts) {
        state_refs.push_back({static_cast<std::uint32_t>(1 + i), static_cast<std::uint32_t>(s)});
        first.push_back({0, static_cast<std::uint32_t>(offsets[s] + i)});
        second.push_back({0, static_cast<std::uint32_t>(offsets[s] + i + 1)});
        memo.push_back({static_cast<std::uint32_t>(1 + i + 2), static_cast<std::uint32_t>(s)});
        owners.push_back(s);
      }
    }
    if (!owners.empty()) {
      const Var<T> s_i = gather_rows<T>(sources, state_refs);
      const Var<T> x_i = gather_rows<T>(sources, first);
      const Var<T> x_next = gather_rows<T>(sources, second);
      const Var<T> swapped = cell(x_i, cell(x_next, s_i));
      out.stats.extra_applications += 2 * owners.size();
      const Var<T> diff = sub(gather_rows<T>(sources, memo), swapped);
      out.reg.add(RegKind::Swap, row_sqnorm(diff), std::move(owners));
    }
  }
  return out;
}

}  // namespace lcm
