#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lcm/aggregators/aggregator.hpp"
#include "lcm/secondmin/data.hpp"

namespace lcm {

/// Flattened multisets: values of segment s are values[offsets[s] .. offsets[s+1]).
struct MultisetBatch {
  std::vector<std::size_t> values;
  std::vector<std::size_t> offsets{0};
  std::vector<Bits8> labels;

  std::size_t size() const { return offsets.size() - 1; }
};

inline MultisetBatch make_batch(std::span<const SecondMinSample> samples, std::span<const std::size_t> indices) {
  MultisetBatch b;
  for (auto i : indices) {
    const auto& s = samples[i];
    if (s.values.empty()) throw Error("make_batch: empty multiset");
    for (int v : s.values) b.values.push_back(static_cast<std::size_t>(v));
    b.offsets.push_back(b.values.size());
    b.labels.push_back(s.label_bits);
  }
  return b;
}

inline MultisetBatch make_batch(std::span<const SecondMinSample> samples) {
  std::vector<std::size_t> all(samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return make_batch(samples, all);
}

/// dec . agg . map enc, with enc = gelu . dense . embed and
/// embed(x) = sum_i bit_i * one_i + (1 - bit_i) * zero_i.
/// The decoder returns logits; probabilities are their sigmoid.
template <class T>
class SecondMinModel {
 public:
  explicit SecondMinModel(const AggregatorConfig& agg) : agg_(agg) {}

  std::size_t hidden_dim() const { return agg_.config().hidden_dim; }
  const Aggregator<T>& aggregator() const { return agg_; }
  Aggregator<T>& aggregator() { return agg_; }

  void add_parameters(ParameterStore<T>& store, Prng& prng) const {
    const std::size_t h = hidden_dim();
    store.add("embed.one", init_params<T>({8, h}, InitScheme::SmallNormal, prng));
    store.add("embed.zero", init_params<T>({8, h}, InitScheme::SmallNormal, prng));
    store.add("enc.W", init_params<T>({h, h}, InitScheme::GlorotUniform, prng));
    store.add("enc.b", init_params<T>({h}, InitScheme::Zeros, prng));
    agg_.add_parameters(store, prng);
    store.add("dec.W1", init_params<T>({h, h}, InitScheme::GlorotUniform, prng));
    store.add("dec.b1", init_params<T>({h}, InitScheme::Zeros, prng));
    store.add("dec.W2", init_params<T>({h, 8}, InitScheme::GlorotUniform, prng));
    store.add("dec.b2", init_params<T>({8}, InitScheme::Zeros, prng));
  }

  /// Summed bit embeddings for every integer 0..255, [256, h].
  Var<T> embed_table(Tape<T>& tape, ParameterStore<T>& store) const {
    Tensor<T> bits({256, 8}), flipped({256, 8});
    for (int x = 0; x < 256; ++x) {
      const auto b = encode_int_bits(x);
      for (int i = 0; i < 8; ++i) {
        bits[x * 8 + i] = static_cast<T>(b[i]);
        flipped[x * 8 + i] = static_cast<T>(1 - b[i]);
      }
    }
    return add(matmul(tape.constant(std::move(bits)), tape.param(store, "embed.one")),
               matmul(tape.constant(std::move(flipped)), tape.param(store, "embed.zero")));
  }

  /// Encoder output for every integer 0..255, [256, h].
  Var<T> encode_table(Tape<T>& tape, ParameterStore<T>& store) const {
    return gelu(dense(embed_table(tape, store), tape.param(store, "enc.W"), tape.param(store, "enc.b")));
  }

  struct Output {
    Var<T> logits;  // [batch, 8]
    AggregateOutput<T> agg;
  };

  /// `rng` switches on training behaviour (input shuffling, regularizers).
  Output forward(Tape<T>& tape, ParameterStore<T>& store, const MultisetBatch& batch, Prng* rng = nullptr) const {
    const Var<T> table = encode_table(tape, store);
    Output out;
    if (batch.values.empty()) {
      out.agg = agg_.apply(tape, store, nullptr, batch.offsets, rng);
    } else {
      const Var<T> messages = gather_rows<T>(table, batch.values);
      out.agg = agg_.apply(tape, store, &messages, batch.offsets, rng);
    }
    const Var<T> hidden = gelu(dense(out.agg.value, tape.param(store, "dec.W1"), tape.param(store, "dec.b1")));
    out.logits = dense(hidden, tape.param(store, "dec.W2"), tape.param(store, "dec.b2"));
    return out;
  }

 private:
  Aggregator<T> agg_;
};

template <class T>
Tensor<T> label_tensor(const MultisetBatch& batch) {
  Tensor<T> y({batch.size(), 8});
  for (std::size_t s = 0; s < batch.size(); ++s) {
    for (int i = 0; i < 8; ++i) y[s * 8 + i] = static_cast<T>(batch.labels[s][i]);
  }
  return y;
}

/// Bit i is predicted 1 iff sigmoid(logit) > 0.5, i.e. logit > 0.
template <class T>
Bits8 decode_prediction(const Tensor<T>& logits, std::size_t row) {
  Bits8 bits{};
  for (int i = 0; i < 8; ++i) bits[i] = logits[row * 8 + i] > T{0} ? 1 : 0;
  return bits;
}

/// Number of rows whose decoded 8 bits equal the label exactly.
template <class T>
std::size_t count_correct(const Tensor<T>& logits, const MultisetBatch& batch) {
  std::size_t correct = 0;
  for (std::size_t s = 0; s < batch.size(); ++s) correct += decode_prediction(logits, s) == batch.labels[s];
  return correct;
}

}  // namespace lcm
