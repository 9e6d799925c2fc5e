#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lcm/core/prng.hpp"
#include "lcm/core/tensor.hpp"

namespace lcm {

/// Named learnable tensors plus Adam moment state.
template <class T>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    Tensor<T> first_moment;
    Tensor<T> second_moment;
    bool has_grad = false;
  };

  Tensor<T>& add(std::string name, Tensor<T> init) {
    if (index_.count(name) != 0) throw Error("ParameterStore: duplicate parameter '" + name + "'");
    Entry entry;
    entry.name = name;
    entry.grad = Tensor<T>::zeros(init.shape());
    entry.first_moment = Tensor<T>::zeros(init.shape());
    entry.second_moment = Tensor<T>::zeros(init.shape());
    entry.value = std::move(init);
    index_.emplace(name, entries_.size());
    entries_.push_back(std::move(entry));
    return entries_.back().value;
  }

  bool contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }

  std::size_t index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw Error("ParameterStore: unknown parameter '" + std::string(name) + "'");
    return it->second;
  }

  Tensor<T>& value(std::string_view name) { return entries_[index_of(name)].value; }
  const Tensor<T>& value(std::string_view name) const { return entries_[index_of(name)].value; }
  const Tensor<T>& grad(std::string_view name) const { return entries_[index_of(name)].grad; }

  Entry& entry(std::size_t i) { return entries_[i]; }
  const Entry& entry(std::size_t i) const { return entries_[i]; }
  std::span<Entry> entries() { return entries_; }
  std::span<const Entry> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t total = 0;
    for (const auto& e : entries_) total += e.value.size();
    return total;
  }

  std::int64_t step() const { return step_; }
  void set_step(std::int64_t step) { step_ = step; }

  void zero_grad() {
    for (auto& e : entries_) {
      e.grad.fill(T{0});
      e.has_grad = false;
    }
  }

  /// Copy with every tensor converted to another scalar type (used for 64-bit shadow checks).
  template <class U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>());
    out.set_step(step_);
    return out;
  }

  /// Overwrites values from a store with identical names and shapes.
  void assign_values(const ParameterStore& other) {
    if (other.size() != size()) throw Error("ParameterStore::assign_values: parameter count differs");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& src = other.entries_[i];
      if (src.name != entries_[i].name || src.value.shape() != entries_[i].value.shape()) {
        throw Error("ParameterStore::assign_values: mismatch at '" + entries_[i].name + "'");
      }
      entries_[i].value = src.value;
    }
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::int64_t step_ = 0;
};

enum class InitScheme { GlorotUniform, Zeros, SmallNormal };

inline InitScheme parse_init_scheme(std::string_view name) {
  if (name == "glorot-uniform") return InitScheme::GlorotUniform;
  if (name == "zeros") return InitScheme::Zeros;
  if (name == "small-normal") return InitScheme::SmallNormal;
  throw Error("unknown initialisation scheme '" + std::string(name) + "'");
}

inline constexpr double kSmallNormalStddev = 0.02;

/// Kernels are stored [fan_in, fan_out] (inputs multiply from the left).
template <class T>
Tensor<T> init_params(const Shape& shape, InitScheme scheme, Prng& prng) {
  Tensor<T> out(shape);
  switch (scheme) {
    case InitScheme::Zeros:
      break;
    case InitScheme::GlorotUniform: {
      const double fan_in = static_cast<double>(shape.size() >= 2 ? shape[shape.size() - 2] : shape[0]);
      const double fan_out = static_cast<double>(shape.back());
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      for (auto& v : out.values()) v = static_cast<T>(prng.uniform(-bound, bound));
      break;
    }
    case InitScheme::SmallNormal:
      for (auto& v : out.values()) v = static_cast<T>(prng.normal(0.0, kSmallNormalStddev));
      break;
  }
  return out;
}

template <class T>
Tensor<T> init_params(const Shape& shape, std::string_view scheme, Prng& prng) {
  return init_params<T>(shape, parse_init_scheme(scheme), prng);
}

}  // namespace lcm
