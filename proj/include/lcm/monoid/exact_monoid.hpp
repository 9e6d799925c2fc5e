#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lcm/core/tensor.hpp"

namespace lcm {

/// Integer extended with a +infinity sentinel that is distinct from every
/// finite value.
class ExtendedInt {
 public:
  constexpr ExtendedInt() = default;
  constexpr ExtendedInt(std::int64_t value) : value_(value) {}  // NOLINT: implicit by intent

  static constexpr ExtendedInt infinity() {
    ExtendedInt x;
    x.infinite_ = true;
    return x;
  }

  constexpr bool is_infinite() const { return infinite_; }

  std::int64_t value() const {
    if (infinite_) throw Error("ExtendedInt: value() of +infinity");
    return value_;
  }

  friend constexpr bool operator==(const ExtendedInt& a, const ExtendedInt& b) {
    return a.infinite_ == b.infinite_ && (a.infinite_ || a.value_ == b.value_);
  }

  friend constexpr std::strong_ordering operator<=>(const ExtendedInt& a, const ExtendedInt& b) {
    if (a.infinite_ || b.infinite_) return a.infinite_ <=> b.infinite_;
    return a.value_ <=> b.value_;
  }

 private:
  std::int64_t value_ = 0;
  bool infinite_ = false;
};

/// Carrier of the second-minimum monoid: the two smallest values seen, ordered.
struct SecondMinPair {
  ExtendedInt first = ExtendedInt::infinity();
  ExtendedInt second = ExtendedInt::infinity();

  static SecondMinPair make(ExtendedInt a, ExtendedInt b) {
    if (b < a) throw Error("SecondMinPair: first must not exceed second");
    return {a, b};
  }

  friend bool operator==(const SecondMinPair&, const SecondMinPair&) = default;
};

inline std::string describe(std::int64_t x) { return std::to_string(x); }
inline std::string describe(int x) { return std::to_string(x); }
inline std::string describe(const ExtendedInt& x) {
  return x.is_infinite() ? std::string("inf") : std::to_string(x.value());
}
inline std::string describe(const SecondMinPair& p) {
  return "(" + describe(p.first) + "," + describe(p.second) + ")";
}

/// (carrier, plus, identity). Nothing here enforces the laws; see check_monoid_laws.
template <class T>
struct ExactMonoid {
  std::string carrier;
  T identity;
  std::function<T(const T&, const T&)> plus;

  /// Left fold from the identity.
  T reduce(std::span<const T> xs) const {
    T acc = identity;
    for (const auto& x : xs) acc = plus(acc, x);
    return acc;
  }
};

// ------------------------------------------------------- reference monoids

inline ExactMonoid<std::int64_t> max_monoid() {
  return {"int64 under max", std::numeric_limits<std::int64_t>::lowest(),
          [](std::int64_t a, std::int64_t b) { return std::max(a, b); }};
}

inline ExactMonoid<std::int64_t> sum_monoid() {
  return {"int64 under +", 0, [](std::int64_t a, std::int64_t b) { return a + b; }};
}

inline ExactMonoid<int> parity_monoid() {
  return {"{0,1} under xor", 0, [](int a, int b) { return a ^ b; }};
}

/// Not a monoid: fails commutativity and associativity. Used as a negative control.
inline ExactMonoid<std::int64_t> subtraction_pseudo_monoid() {
  return {"int64 under - (not a monoid)", 0, [](std::int64_t a, std::int64_t b) { return a - b; }};
}

/// The two smallest of {a.first, a.second, b.first, b.second}, in order.
inline SecondMinPair second_min_plus(const SecondMinPair& a, const SecondMinPair& b) {
  std::array<ExtendedInt, 4> all{a.first, a.second, b.first, b.second};
  std::partial_sort(all.begin(), all.begin() + 2, all.end());
  return {all[0], all[1]};
}

inline ExactMonoid<SecondMinPair> second_min_monoid() {
  return {"(ext int, ext int) keeping the two smallest", SecondMinPair{}, second_min_plus};
}

inline SecondMinPair second_min_encode(std::int64_t x) { return {ExtendedInt(x), ExtendedInt::infinity()}; }

/// decode . reduce . map encode. A singleton yields +infinity.
inline ExtendedInt second_minimum_oracle(std::span<const std::int64_t> xs) {
  if (xs.empty()) throw Error("second_minimum_oracle: empty input");
  SecondMinPair acc;
  for (auto x : xs) acc = second_min_plus(acc, second_min_encode(x));
  return acc.second;
}

inline ExtendedInt second_minimum_oracle(std::initializer_list<std::int64_t> xs) {
  return second_minimum_oracle(std::span<const std::int64_t>(xs.begin(), xs.size()));
}

/// XOR reduction; the empty set has parity 0.
inline int parity_fold(std::span<const int> bits) {
  int acc = 0;
  for (int b : bits) {
    if (b != 0 && b != 1) throw Error("parity_fold: bits must be 0 or 1");
    acc ^= b;
  }
  return acc;
}

}  // namespace lcm
