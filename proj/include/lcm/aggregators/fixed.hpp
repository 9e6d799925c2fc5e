#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "lcm/aggregators/config.hpp"
#include "lcm/aggregators/tree.hpp"
#include "lcm/core/prng.hpp"

namespace lcm {

/// Row permutation that shuffles rows uniformly within each segment. Segments
/// keep their positions; singletons are unchanged.
inline std::vector<std::size_t> shuffle_batch(std::span<const std::size_t> offsets, Prng& prng) {
  std::vector<std::size_t> perm(offsets.empty() ? 0 : offsets.back());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    prng.shuffle(std::span<std::size_t>(perm.data() + offsets[s], offsets[s + 1] - offsets[s]));
  }
  return perm;
}

/// Row permutation that sorts each segment lexicographically by row value.
/// Any reordering of a segment's rows maps to the same sorted sequence, so a
/// left-to-right reduction over it is bit-reproducible under permutation.
template <class T>
std::vector<std::size_t> canonical_order(const Tensor<T>& rows, std::span<const std::size_t> offsets) {
  const std::size_t cols = rows.cols();
  std::vector<std::size_t> perm(rows.rows());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  auto less = [&](std::size_t a, std::size_t b) {
    const T* ra = rows.data() + a * cols;
    const T* rb = rows.data() + b * cols;
    return std::lexicographical_compare(ra, ra + cols, rb, rb + cols);
  };
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    std::stable_sort(perm.begin() + static_cast<std::ptrdiff_t>(offsets[s]),
                     perm.begin() + static_cast<std::ptrdiff_t>(offsets[s + 1]), less);
  }
  return perm;
}

template <class T>
Var<T> permute_rows(const Var<T>& messages, std::span<const std::size_t> perm) {
  return gather_rows<T>(messages, perm);
}

/// sum, max or mean per segment. Empty segments give zero rows; for max and
/// mean they are also listed in empty_segments.
template <class T>
AggregateOutput<T> fixed_aggregate(const Var<T>& messages, std::span<const std::size_t> offsets, AggKind kind,
                                   bool canonical = true) {
  if (kind != AggKind::Sum && kind != AggKind::Max && kind != AggKind::Mean) {
    throw Error("fixed_aggregate: kind must be sum, max or mean, got " + std::string(to_string(kind)));
  }
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != messages.value().rows()) {
    throw ShapeError("fixed_aggregate: offsets do not cover the message rows");
  }
  AggregateOutput<T> out;
  const std::size_t segments = offsets.size() - 1;
  std::vector<T> inv_counts(segments, T{0});
  for (std::size_t s = 0; s < segments; ++s) {
    const std::size_t n = offsets[s + 1] - offsets[s];
    if (n == 0 && kind != AggKind::Sum) out.empty_segments.push_back(s);
    if (n > 0) inv_counts[s] = T{1} / static_cast<T>(n);
  }
  const Var<T> ordered =
      canonical && kind != AggKind::Max ? permute_rows(messages, canonical_order(messages.value(), offsets)) : messages;
  switch (kind) {
    case AggKind::Sum: out.value = segment_sum(ordered, offsets); break;
    case AggKind::Max: out.value = segment_max(ordered, offsets); break;
    default: out.value = scale_rows(segment_sum(ordered, offsets), std::move(inv_counts)); break;
  }
  return out;
}

/// Adds the PNA-lite projection ([12h, h] kernel and bias) under `prefix`.
template <class T>
void add_pna_params(ParameterStore<T>& store, const std::string& prefix, std::size_t h, Prng& prng) {
  store.add(prefix + ".W", init_params<T>({12 * h, h}, InitScheme::GlorotUniform, prng));
  store.add(prefix + ".b", init_params<T>({h}, InitScheme::Zeros, prng));
}

/// Per segment: mean, max, min and population std of the rows, each scaled by
/// 1, log(n+1)/delta and delta/log(n+1), concatenated into [segments, 12h].
/// Empty segments give zero rows and are listed in `empty`.
template <class T>
Var<T> pna_lite_features(const Var<T>& messages, std::span<const std::size_t> offsets, double delta,
                         std::vector<std::size_t>* empty = nullptr, bool canonical = true) {
  if (!(delta > 0.0)) throw Error("pna_lite: delta must be positive");
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != messages.value().rows()) {
    throw ShapeError("pna_lite: offsets do not cover the message rows");
  }
  const std::size_t segments = offsets.size() - 1;
  std::vector<T> inv_counts(segments, T{0}), amplify(segments, T{0}), attenuate(segments, T{0});
  std::vector<std::size_t> owner;  // segment of each row
  for (std::size_t s = 0; s < segments; ++s) {
    const std::size_t n = offsets[s + 1] - offsets[s];
    owner.insert(owner.end(), n, s);
    if (n == 0) {
      if (empty != nullptr) empty->push_back(s);
      continue;
    }
    const double log_degree = std::log(static_cast<double>(n) + 1.0);
    inv_counts[s] = static_cast<T>(1.0 / static_cast<double>(n));
    amplify[s] = static_cast<T>(log_degree / delta);
    attenuate[s] = static_cast<T>(delta / log_degree);
  }
  const Var<T> x =
      canonical ? permute_rows(messages, canonical_order(messages.value(), offsets)) : messages;
  const Var<T> mu = scale_rows(segment_sum(x, offsets), inv_counts);
  const Var<T> mx = segment_max(x, offsets);
  const Var<T> mn = scale(segment_max(scale(x, T{-1}), offsets), T{-1});
  const Var<T> centred = sub(x, gather_rows<T>(mu, owner));
  const Var<T> sd = safe_sqrt(scale_rows(segment_sum(square(centred), offsets), inv_counts));
  const Var<T> stats = concat<T>({mu, mx, mn, sd});
  return concat<T>({stats, scale_rows(stats, amplify), scale_rows(stats, attenuate)});
}

/// pna_lite_features projected back to h columns with (kernel [12h, h], bias).
template <class T>
AggregateOutput<T> pna_lite_aggregate(const Var<T>& messages, std::span<const std::size_t> offsets, double delta,
                                      const Var<T>& kernel, const Var<T>& bias, bool canonical = true) {
  AggregateOutput<T> out;
  out.value = dense(pna_lite_features(messages, offsets, delta, &out.empty_segments, canonical), kernel, bias);
  return out;
}

}  // namespace lcm
