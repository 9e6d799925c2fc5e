#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lcm/core/prng.hpp"
#include "lcm/monoid/exact_monoid.hpp"

namespace lcm {

struct LawResult {
  LawResult() = default;
  explicit LawResult(std::string name) : law(std::move(name)) {}

  std::string law;
  bool passed = true;
  std::size_t checked = 0;
  std::optional<std::string> counterexample;
};

struct LawReport {
  std::string monoid;
  std::vector<LawResult> laws;

  bool all_passed() const {
    for (const auto& l : laws) {
      if (!l.passed) return false;
    }
    return true;
  }

  const LawResult& law(std::string_view name) const {
    for (const auto& l : laws) {
      if (l.law == name) return l;
    }
    throw Error("LawReport: no law named '" + std::string(name) + "'");
  }
};

inline void to_json(nlohmann::json& j, const LawResult& r) {
  j = {{"law", r.law}, {"passed", r.passed}, {"checked", r.checked}};
  j["counterexample"] = r.counterexample ? nlohmann::json(*r.counterexample) : nlohmann::json(nullptr);
}

inline void to_json(nlohmann::json& j, const LawReport& r) {
  j = {{"monoid", r.monoid}, {"all_passed", r.all_passed()}, {"laws", r.laws}};
}

namespace detail {

template <class T>
class LawTally {
 public:
  explicit LawTally(const ExactMonoid<T>& m) : m_(m) {}

  void identity(const T& x) {
    auto& r = results_[0];
    ++r.checked;
    const T right = m_.plus(x, m_.identity);
    const T left = m_.plus(m_.identity, x);
    if ((right != x || left != x) && r.passed) {
      r.passed = false;
      r.counterexample = "x=" + describe(x) + ": x<>e=" + describe(right) + ", e<>x=" + describe(left);
    }
  }

  void commutativity(const T& x, const T& y) {
    auto& r = results_[1];
    ++r.checked;
    const T xy = m_.plus(x, y);
    const T yx = m_.plus(y, x);
    if (xy != yx && r.passed) {
      r.passed = false;
      r.counterexample = "x=" + describe(x) + ", y=" + describe(y) + ": x<>y=" + describe(xy) +
                         ", y<>x=" + describe(yx);
    }
  }

  void associativity(const T& x, const T& y, const T& z) {
    auto& r = results_[2];
    ++r.checked;
    const T left = m_.plus(m_.plus(x, y), z);
    const T right = m_.plus(x, m_.plus(y, z));
    if (left != right && r.passed) {
      r.passed = false;
      r.counterexample = "x=" + describe(x) + ", y=" + describe(y) + ", z=" + describe(z) +
                         ": (x<>y)<>z=" + describe(left) + ", x<>(y<>z)=" + describe(right);
    }
  }

  LawReport report() const { return {m_.carrier, {results_.begin(), results_.end()}}; }

 private:
  const ExactMonoid<T>& m_;
  std::array<LawResult, 3> results_{LawResult{"identity"}, LawResult{"commutativity"},
                                    LawResult{"associativity"}};
};

}  // namespace detail

/// Random-trial check of identity, commutativity and associativity. Each law
/// reports the first counterexample found.
template <class T>
LawReport check_monoid_laws(const ExactMonoid<T>& m, const std::function<T(Prng&)>& sampler,
                            std::size_t trials, Prng& prng) {
  detail::LawTally<T> tally(m);
  for (std::size_t i = 0; i < trials; ++i) {
    const T x = sampler(prng);
    const T y = sampler(prng);
    const T z = sampler(prng);
    tally.identity(x);
    tally.commutativity(x, y);
    tally.associativity(x, y, z);
  }
  return tally.report();
}

/// Exhaustive check over every element, pair and triple of a finite domain.
template <class T>
LawReport check_monoid_laws_exhaustive(const ExactMonoid<T>& m, std::span<const T> domain) {
  detail::LawTally<T> tally(m);
  for (const auto& x : domain) {
    tally.identity(x);
    for (const auto& y : domain) {
      tally.commutativity(x, y);
      for (const auto& z : domain) tally.associativity(x, y, z);
    }
  }
  return tally.report();
}

// ------------------------------------------------------------ homomorphisms

struct ClauseResult {
  ClauseResult() = default;
  explicit ClauseResult(std::string name) : clause(std::move(name)) {}

  std::string clause;
  bool passed = true;
  std::size_t checked = 0;
  std::optional<std::string> counterexample;
};

/// Outcome of the four-clause falsifier for "aggregating in F through g and h
/// imitates aggregating in M":
///   (i)   h(g(x)) == x
///   (ii)  h(e_F) == e_M
///   (iii) h(x + y) == h(x) * h(y) for x, y in the submonoid generated by g(M)
///   (iv)  *_{x in X} x == h(+_{x in X} g(x)) for finite multisets X
/// (iv) holds exactly when (i)-(iii) do, so a sound sampler sees them agree.
struct HomomorphismReport {
  std::array<ClauseResult, 4> clauses{ClauseResult{"left_inverse"}, ClauseResult{"identity"},
                                      ClauseResult{"homomorphism"}, ClauseResult{"multiset_equivalence"}};

  bool structural_clauses_pass() const {
    return clauses[0].passed && clauses[1].passed && clauses[2].passed;
  }
  bool equivalence_passes() const { return clauses[3].passed; }
  bool all_passed() const { return structural_clauses_pass() && equivalence_passes(); }
  bool clauses_agree() const { return structural_clauses_pass() == equivalence_passes(); }
};

inline void to_json(nlohmann::json& j, const ClauseResult& r) {
  j = {{"clause", r.clause}, {"passed", r.passed}, {"checked", r.checked}};
  j["counterexample"] = r.counterexample ? nlohmann::json(*r.counterexample) : nlohmann::json(nullptr);
}

inline void to_json(nlohmann::json& j, const HomomorphismReport& r) {
  j = {{"all_passed", r.all_passed()}, {"clauses_agree", r.clauses_agree()}, {"clauses", r.clauses}};
}

struct HomomorphismSampling {
  std::size_t max_word_length = 8;   // products of at most this many g-images
  std::size_t max_multiset_size = 16;
};

template <class F, class M>
HomomorphismReport check_homomorphism(const ExactMonoid<F>& fixed, const ExactMonoid<M>& target,
                                      const std::function<F(const M&)>& g,
                                      const std::function<M(const F&)>& h,
                                      const std::function<M(Prng&)>& sampler, std::size_t trials,
                                      Prng& prng, HomomorphismSampling sampling = {}) {
  HomomorphismReport report;
  auto fail = [](ClauseResult& c, std::string what) {
    if (c.passed) {
      c.passed = false;
      c.counterexample = std::move(what);
    }
  };

  auto& ident = report.clauses[1];
  ++ident.checked;
  if (h(fixed.identity) != target.identity) {
    fail(ident, "h(e_F)=" + describe(h(fixed.identity)) + " but e_M=" + describe(target.identity));
  }

  // Random element of <g(M)>: a product of up to max_word_length g-images.
  auto word = [&](std::string& trace) {
    const std::size_t len = prng.index(sampling.max_word_length + 1);
    F acc = fixed.identity;
    trace = "g-word[";
    for (std::size_t i = 0; i < len; ++i) {
      const M x = sampler(prng);
      acc = fixed.plus(acc, g(x));
      trace += (i ? "," : "") + describe(x);
    }
    trace += "]=" + describe(acc);
    return acc;
  };

  for (std::size_t t = 0; t < trials; ++t) {
    auto& inv = report.clauses[0];
    const M x = sampler(prng);
    ++inv.checked;
    if (h(g(x)) != x) fail(inv, "x=" + describe(x) + ": h(g(x))=" + describe(h(g(x))));

    auto& hom = report.clauses[2];
    std::string tx, ty;
    const F a = word(tx);
    const F b = word(ty);
    ++hom.checked;
    const M lhs = h(fixed.plus(a, b));
    const M rhs = target.plus(h(a), h(b));
    if (lhs != rhs) {
      fail(hom, tx + ", " + ty + ": h(x+y)=" + describe(lhs) + ", h(x)*h(y)=" + describe(rhs));
    }

    auto& eqv = report.clauses[3];
    const std::size_t size = prng.index(sampling.max_multiset_size + 1);
    M direct = target.identity;
    F through = fixed.identity;
    std::string items;
    for (std::size_t i = 0; i < size; ++i) {
      const M v = sampler(prng);
      direct = target.plus(direct, v);
      through = fixed.plus(through, g(v));
      items += (i ? "," : "") + describe(v);
    }
    ++eqv.checked;
    if (direct != h(through)) {
      fail(eqv, "X={" + items + "}: direct=" + describe(direct) + ", via F=" + describe(h(through)));
    }
  }
  return report;
}

}  // namespace lcm
