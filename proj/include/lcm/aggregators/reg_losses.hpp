#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <vector>

#include "lcm/core/ops.hpp"

namespace lcm {

enum class RegKind { Comm = 0, Assoc = 1, Swap = 2, Identity = 3 };
inline constexpr std::size_t kRegKinds = 4;

/// Regularization terms gathered during one aggregation call. Each term is a
/// squared distance owned by one sample. mean() averages terms within each
/// sample, then across the samples that have any; a kind with no terms is
/// exactly 0.
template <class T>
class RegLossAccumulator {
 public:
  /// `terms` is a rank-1 tensor of per-term values; owners[i] is the sample
  /// that term i belongs to.
  void add(RegKind kind, const Var<T>& terms, std::vector<std::size_t> owners) {
    if (terms.value().size() != owners.size()) throw ShapeError("RegLossAccumulator: owner count mismatch");
    auto& slot = slots_[static_cast<std::size_t>(kind)];
    slot.chunks.push_back(terms);
    slot.owners.push_back(std::move(owners));
  }

  std::size_t count(RegKind kind) const {
    std::size_t n = 0;
    for (const auto& o : slots_[static_cast<std::size_t>(kind)].owners) n += o.size();
    return n;
  }

  bool has(RegKind kind) const { return !slots_[static_cast<std::size_t>(kind)].chunks.empty(); }

  Var<T> mean(Tape<T>& tape, RegKind kind) const {
    const auto& slot = slots_[static_cast<std::size_t>(kind)];
    std::map<std::size_t, std::size_t> per_sample;
    for (const auto& owners : slot.owners) {
      for (auto s : owners) ++per_sample[s];
    }
    if (per_sample.empty()) return tape.constant(Tensor<T>::scalar(T{0}));
    const double samples = static_cast<double>(per_sample.size());
    Var<T> total;
    bool first = true;
    for (std::size_t c = 0; c < slot.chunks.size(); ++c) {
      std::vector<T> weights;
      weights.reserve(slot.owners[c].size());
      for (auto s : slot.owners[c]) {
        weights.push_back(static_cast<T>(1.0 / (static_cast<double>(per_sample[s]) * samples)));
      }
      Var<T> part = weighted_sum(slot.chunks[c], std::move(weights));
      total = first ? part : lcm::add(total, part);
      first = false;
    }
    return total;
  }

  /// Plain value of mean(kind), without recording anything.
  double value(RegKind kind) const {
    const auto& slot = slots_[static_cast<std::size_t>(kind)];
    std::map<std::size_t, std::pair<double, std::size_t>> per_sample;
    for (std::size_t c = 0; c < slot.chunks.size(); ++c) {
      const auto& v = slot.chunks[c].value();
      for (std::size_t i = 0; i < slot.owners[c].size(); ++i) {
        auto& acc = per_sample[slot.owners[c][i]];
        acc.first += static_cast<double>(v[i]);
        ++acc.second;
      }
    }
    if (per_sample.empty()) return 0.0;
    double total = 0.0;
    for (const auto& [s, acc] : per_sample) total += acc.first / static_cast<double>(acc.second);
    return total / static_cast<double>(per_sample.size());
  }

 private:
  struct Slot {
    std::vector<Var<T>> chunks;
    std::vector<std::vector<std::size_t>> owners;
  };
  std::array<Slot, kRegKinds> slots_;
};

}  // namespace lcm
