#pragma once

#include <array>
#include <cstddef>
#include <string>

#include "lcm/core/ops.hpp"
#include "lcm/core/parameters.hpp"

namespace lcm {

inline constexpr std::array<const char*, 3> kGruGates{"z", "r", "c"};

/// Registers the nine GRU tensors under `prefix`: W_g (input kernel), U_g
/// (hidden kernel) and b_g for g in {z, r, c}. Kernels are [h, h], used as x * W.
template <class T>
void add_gru_params(ParameterStore<T>& store, const std::string& prefix, std::size_t h, Prng& prng) {
  for (const char* g : kGruGates) store.add(prefix + ".W_" + g, init_params<T>({h, h}, InitScheme::GlorotUniform, prng));
  for (const char* g : kGruGates) store.add(prefix + ".U_" + g, init_params<T>({h, h}, InitScheme::GlorotUniform, prng));
  for (const char* g : kGruGates) store.add(prefix + ".b_" + g, init_params<T>({h}, InitScheme::Zeros, prng));
}

/// GRU tensors bound to one tape. Input kernels and biases are fused so a
/// batch of rows needs two matmuls for the gates plus one for the candidate.
template <class T>
struct GruWeights {
  Var<T> w_zrc;  // [h, 3h]
  Var<T> u_zr;   // [h, 2h]
  Var<T> u_c;    // [h, h]
  Var<T> b_zrc;  // [3h]
  std::size_t h = 0;

  static GruWeights bind(Tape<T>& tape, ParameterStore<T>& store, const std::string& prefix) {
    GruWeights w;
    auto p = [&](const std::string& name) { return tape.param(store, prefix + "." + name); };
    w.w_zrc = concat<T>({p("W_z"), p("W_r"), p("W_c")});
    w.u_zr = concat<T>({p("U_z"), p("U_r")});
    w.u_c = p("U_c");
    w.b_zrc = concat<T>({p("b_z"), p("b_r"), p("b_c")});
    w.h = w.u_c.value().rows();
    return w;
  }
};

/// Batched GRU step on rows of [m, h] matrices:
///   z = sigma(x W_z + s U_z + b_z), r = sigma(x W_r + s U_r + b_r)
///   c = tanh(x W_c + (r * s) U_c + b_c), out = (1 - z) * s + z * c
template <class T>
Var<T> gru_cell(const Var<T>& input, const Var<T>& state, const GruWeights<T>& w) {
  if (input.shape() != state.shape() || input.value().cols() != w.h) {
    throw ShapeError("gru_cell: input " + to_string(input.shape()) + " and state " + to_string(state.shape()) +
                     " must match and have " + std::to_string(w.h) + " columns");
  }
  const std::size_t h = w.h;
  const Var<T> gx = add_row(matmul(input, w.w_zrc), w.b_zrc);
  const Var<T> gs = matmul(state, w.u_zr);
  const Var<T> z = sigmoid(add(slice(gx, 0, h), slice(gs, 0, h)));
  const Var<T> r = sigmoid(add(slice(gx, h, 2 * h), slice(gs, h, 2 * h)));
  const Var<T> c = tanh(add(slice(gx, 2 * h, 3 * h), matmul(mul(r, state), w.u_c)));
  return add(mul(one_minus(z), state), mul(z, c));
}

/// (g(a, b) + g(b, a)) / 2 with g(input, state). Both orders run as one batch
/// of 2m rows, and each output row is computed independently of the others,
/// so the result is bit-exactly symmetric in a and b.
template <class T>
Var<T> binary_gru_apply(const Var<T>& a, const Var<T>& b, const GruWeights<T>& w) {
  if (a.shape() != b.shape()) {
    throw ShapeError("binary_gru_apply: shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  const std::size_t m = a.value().rows();
  const std::array<Var<T>, 2> ab{a, b}, ba{b, a};
  const Var<T> both = gru_cell(concat_rows<T>(ab), concat_rows<T>(ba), w);
  std::vector<std::size_t> top(m), bottom(m);
  for (std::size_t i = 0; i < m; ++i) {
    top[i] = i;
    bottom[i] = m + i;
  }
  return scale(add(gather_rows<T>(both, top), gather_rows<T>(both, bottom)), T{0.5});
}

}  // namespace lcm
