#pragma once

#include <cmath>
#include <cstddef>

#include "lcm/core/parameters.hpp"

namespace lcm {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update over every parameter of the store, then
/// clears the gradients. Every parameter must have received a gradient from
/// backward() since the previous step.
template <class T>
void adam_step(ParameterStore<T>& store, const AdamConfig& cfg = {}) {
  for (const auto& entry : store.entries()) {
    if (!entry.has_grad) throw Error("adam_step: parameter '" + entry.name + "' has no gradient");
  }
  const std::int64_t step = store.step() + 1;
  store.set_step(step);
  const double m_corr = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double v_corr = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  for (auto& entry : store.entries()) {
    T* p = entry.value.data();
    const T* g = entry.grad.data();
    T* m = entry.first_moment.data();
    T* v = entry.second_moment.data();
    for (std::size_t i = 0; i < entry.value.size(); ++i) {
      m[i] = b1 * m[i] + (T{1} - b1) * g[i];
      v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
      const double m_hat = static_cast<double>(m[i]) / m_corr;
      const double v_hat = static_cast<double>(v[i]) / v_corr;
      p[i] -= static_cast<T>(cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon));
    }
  }
  store.zero_grad();
}

}  // namespace lcm
