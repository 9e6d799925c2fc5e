#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "lcm/core/ops.hpp"

namespace lcm {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t elements = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<GradCheckEntry> params;

  bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

inline double relative_error(double ad, double fd) {
  return std::abs(ad - fd) / (std::abs(ad) + std::abs(fd) + 1e-8);
}

/// Compares reverse-mode gradients against central differences, entirely in
/// 64-bit arithmetic. `loss_fn(tape, store)` must build a deterministic scalar
/// loss; it is re-evaluated twice per parameter element.
template <class LossFn>
GradCheckReport grad_check(ParameterStore<double>& store, LossFn&& loss_fn, double step = 1e-3) {
  {
    Tape<double> tape;
    auto loss = loss_fn(tape, store);
    tape.backward(loss);
  }
  std::vector<Tensor<double>> analytic;
  for (const auto& e : store.entries()) analytic.push_back(e.grad);
  store.zero_grad();

  auto evaluate = [&] {
    Tape<double> tape;
    return loss_fn(tape, store).value().item();
  };

  GradCheckReport report;
  for (std::size_t p = 0; p < store.size(); ++p) {
    auto& entry = store.entry(p);
    GradCheckEntry result{entry.name, 0.0, entry.value.size()};
    for (std::size_t i = 0; i < entry.value.size(); ++i) {
      const double original = entry.value[i];
      entry.value[i] = original + step;
      const double plus = evaluate();
      entry.value[i] = original - step;
      const double minus = evaluate();
      entry.value[i] = original;
      const double numeric = (plus - minus) / (2.0 * step);
      result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic[p][i], numeric));
    }
    report.max_rel_error = std::max(report.max_rel_error, result.max_rel_error);
    report.params.push_back(std::move(result));
  }
  return report;
}

}  // namespace lcm
