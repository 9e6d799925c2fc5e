#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lcm/aggregators/config.hpp"
#include "lcm/aggregators/fixed.hpp"
#include "lcm/aggregators/gru.hpp"
#include "lcm/aggregators/recurrent.hpp"
#include "lcm/aggregators/reg_losses.hpp"
#include "lcm/aggregators/tree.hpp"

namespace lcm {

/// One configured aggregator. Parameters live in a caller-owned store under
/// `prefix`; apply() reduces a batch of segments to one row each.
template <class T>
class Aggregator {
 public:
  explicit Aggregator(AggregatorConfig config, std::string prefix = "agg")
      : config_(std::move(config)), prefix_(std::move(prefix)) {
    config_.validate();
  }

  const AggregatorConfig& config() const { return config_; }
  AggregatorConfig& mutable_config() { return config_; }
  const std::string& prefix() const { return prefix_; }
  bool learnable() const { return is_learnable(config_.kind); }

  void add_parameters(ParameterStore<T>& store, Prng& prng) const {
    const std::size_t h = config_.hidden_dim;
    switch (config_.kind) {
      case AggKind::Gru:
        add_gru_params(store, prefix_ + ".gru", h, prng);
        store.add(prefix_ + ".initial_state", init_params<T>({1, h}, InitScheme::SmallNormal, prng));
        break;
      case AggKind::BinaryGru:
        add_gru_params(store, prefix_ + ".gru", h, prng);
        store.add(prefix_ + ".identity", init_params<T>({1, h}, InitScheme::SmallNormal, prng));
        break;
      case AggKind::PnaLite: add_pna_params(store, prefix_ + ".pna", h, prng); break;
      default: break;
    }
  }

  bool computes(RegKind kind) const {
    const bool track = config_.track_regularizers;
    switch (kind) {
      case RegKind::Comm: return config_.kind == AggKind::BinaryGru && (track || config_.lambda_comm > 0);
      case RegKind::Assoc: return config_.kind == AggKind::BinaryGru && (track || config_.lambda_assoc > 0);
      case RegKind::Identity: return config_.kind == AggKind::BinaryGru && config_.lambda_identity > 0;
      case RegKind::Swap: return config_.kind == AggKind::Gru && (track || config_.lambda_swap > 0);
    }
    return false;
  }

  /// `messages` is [rows, h] (or absent when every segment is empty). `rng`
  /// enables training-time behaviour: shuffling of learnable-kind inputs and
  /// the regularization terms. Pass nullptr for evaluation.
  AggregateOutput<T> apply(Tape<T>& tape, ParameterStore<T>& store, const Var<T>* messages,
                           std::span<const std::size_t> offsets, Prng* rng) const {
    const std::size_t h = config_.hidden_dim;
    const std::size_t segments = offsets.size() - 1;
    if (messages == nullptr) return all_empty(tape, store, segments);
    if (messages->value().cols() != h) {
      throw ShapeError("aggregator: messages " + to_string(messages->shape()) + " do not have hidden_dim " +
                       std::to_string(h) + " columns");
    }
    switch (config_.kind) {
      case AggKind::Sum:
      case AggKind::Max:
      case AggKind::Mean: return fixed_aggregate(*messages, offsets, config_.kind);
      case AggKind::PnaLite:
        return pna_lite_aggregate(*messages, offsets, pna_delta(), tape.param(store, prefix_ + ".pna.W"),
                                  tape.param(store, prefix_ + ".pna.b"));
      default: break;
    }

    Var<T> input = *messages;
    if (rng != nullptr && config_.shuffle) input = permute_rows(input, shuffle_batch(offsets, *rng));
    const auto weights = GruWeights<T>::bind(tape, store, prefix_ + ".gru");

    if (config_.kind == AggKind::Gru) {
      SwapOptions swap;
      swap.enabled = computes(RegKind::Swap) && rng != nullptr;
      swap.pairs = config_.swap_pairs;
      swap.prng = rng;
      return recurrent_aggregate<T>(
          input, offsets, tape.param(store, prefix_ + ".initial_state"),
          [&](const Var<T>& x, const Var<T>& s) { return gru_cell(x, s, weights); }, swap);
    }
    TreeOptions opts;
    opts.comm = computes(RegKind::Comm) && rng != nullptr;
    opts.assoc = computes(RegKind::Assoc) && rng != nullptr;
    opts.identity = computes(RegKind::Identity) && rng != nullptr;
    opts.pad_to_power_of_two = config_.pad_to_power_of_two;
    return tree_aggregate<T>(
        input, offsets, tape.param(store, prefix_ + ".identity"),
        [&](const Var<T>& a, const Var<T>& b) { return binary_gru_apply(a, b, weights); }, opts);
  }

  /// Weighted sum of the regularizer means: the term added to the task loss.
  Var<T> regularization(Tape<T>& tape, const RegLossAccumulator<T>& reg) const {
    Var<T> total = tape.constant(Tensor<T>::scalar(T{0}));
    const std::pair<RegKind, double> weighted[] = {{RegKind::Comm, config_.lambda_comm},
                                                   {RegKind::Assoc, config_.lambda_assoc},
                                                   {RegKind::Swap, config_.lambda_swap},
                                                   {RegKind::Identity, config_.lambda_identity}};
    for (const auto& [kind, weight] : weighted) {
      if (weight > 0 && reg.has(kind)) total = add(total, scale(reg.mean(tape, kind), static_cast<T>(weight)));
    }
    return total;
  }

  double pna_delta() const {
    if (!(config_.pna_delta > 0)) throw Error("aggregator: pna-lite needs a positive pna_delta (mean log(degree+1))");
    return config_.pna_delta;
  }

 private:
  AggregateOutput<T> all_empty(Tape<T>& tape, ParameterStore<T>& store, std::size_t segments) const {
    AggregateOutput<T> out;
    for (std::size_t s = 0; s < segments; ++s) out.empty_segments.push_back(s);
    const std::size_t h = config_.hidden_dim;
    switch (config_.kind) {
      case AggKind::Gru: out.value = repeat_rows(tape.param(store, prefix_ + ".initial_state"), segments); break;
      case AggKind::BinaryGru: out.value = repeat_rows(tape.param(store, prefix_ + ".identity"), segments); break;
      case AggKind::PnaLite:
        out.value = dense(tape.constant(Tensor<T>::zeros({segments, 12 * h})), tape.param(store, prefix_ + ".pna.W"),
                          tape.param(store, prefix_ + ".pna.b"));
        break;
      default: out.value = tape.constant(Tensor<T>::zeros({segments, h})); break;
    }
    if (config_.kind == AggKind::Sum) out.empty_segments.clear();
    return out;
  }

  AggregatorConfig config_;
  std::string prefix_;
};

/// Mean of log(degree + 1) over a collection of degrees (the PNA scaler constant).
inline double mean_log_degree(std::span<const std::size_t> degrees) {
  if (degrees.empty()) throw Error("mean_log_degree: no degrees");
  double total = 0.0;
  for (auto d : degrees) total += std::log(static_cast<double>(d) + 1.0);
  return total / static_cast<double>(degrees.size());
}

}  // namespace lcm
