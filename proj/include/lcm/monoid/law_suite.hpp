#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lcm/monoid/laws.hpp"

namespace lcm {

/// Second-min carrier element with values in [0, hi]; about one slot in five is +infinity.
inline SecondMinPair random_second_min_pair(Prng& prng, std::int64_t hi) {
  auto draw = [&]() -> ExtendedInt {
    if (prng.index(5) == 0) return ExtendedInt::infinity();
    return ExtendedInt(prng.uniform_int(0, hi));
  };
  ExtendedInt a = draw(), b = draw();
  if (b < a) std::swap(a, b);
  return SecondMinPair::make(a, b);
}

/// Every pair (a, b) with a <= b over {0..hi, +infinity}.
inline std::vector<SecondMinPair> second_min_domain(std::int64_t hi) {
  std::vector<ExtendedInt> values{ExtendedInt::infinity()};
  for (std::int64_t v = 0; v <= hi; ++v) values.emplace_back(v);
  std::vector<SecondMinPair> domain;
  for (const auto& a : values) {
    for (const auto& b : values) {
      if (!(b < a)) domain.push_back(SecondMinPair::make(a, b));
    }
  }
  return domain;
}

struct LawSuiteEntry {
  std::string name;
  bool expect_pass = true;
  LawReport report;

  bool as_expected() const { return report.all_passed() == expect_pass; }
};

struct HomomorphismSuiteEntry {
  std::string name;
  bool expect_pass = true;
  HomomorphismReport report;

  bool as_expected() const { return report.all_passed() == expect_pass && report.clauses_agree(); }
};

struct LawSuiteReport {
  std::vector<LawSuiteEntry> monoids;
  std::vector<HomomorphismSuiteEntry> homomorphisms;

  bool as_expected() const {
    for (const auto& m : monoids) {
      if (!m.as_expected()) return false;
    }
    for (const auto& h : homomorphisms) {
      if (!h.as_expected()) return false;
    }
    return true;
  }
};

inline void to_json(nlohmann::json& j, const LawSuiteReport& r) {
  j = {{"as_expected", r.as_expected()}, {"monoids", nlohmann::json::array()}, {"homomorphisms", nlohmann::json::array()}};
  for (const auto& m : r.monoids) {
    j["monoids"].push_back(
        {{"name", m.name}, {"expect_pass", m.expect_pass}, {"as_expected", m.as_expected()}, {"report", m.report}});
  }
  for (const auto& h : r.homomorphisms) {
    j["homomorphisms"].push_back(
        {{"name", h.name}, {"expect_pass", h.expect_pass}, {"as_expected", h.as_expected()}, {"report", h.report}});
  }
}

/// Laws of the built-in monoids (random trials plus an exhaustive second-min
/// check over values 0..7), the subtraction negative control, and the parity
/// through (Z,+) homomorphism with a correct and a perturbed decoder.
inline LawSuiteReport run_law_suite(std::uint64_t seed, std::size_t trials = 1000, std::size_t hom_trials = 500) {
  LawSuiteReport out;
  Prng prng(seed, 0);
  const std::function<std::int64_t(Prng&)> ints = [](Prng& p) { return p.uniform_int(-1000, 1000); };
  const std::function<int(Prng&)> bits = [](Prng& p) { return static_cast<int>(p.index(2)); };
  const std::function<SecondMinPair(Prng&)> pairs = [](Prng& p) { return random_second_min_pair(p, 255); };

  out.monoids.push_back({"max", true, check_monoid_laws(max_monoid(), ints, trials, prng)});
  out.monoids.push_back({"sum", true, check_monoid_laws(sum_monoid(), ints, trials, prng)});
  out.monoids.push_back({"parity", true, check_monoid_laws(parity_monoid(), bits, trials, prng)});
  out.monoids.push_back({"second-min", true, check_monoid_laws(second_min_monoid(), pairs, trials, prng)});
  const auto domain = second_min_domain(7);
  out.monoids.push_back({"second-min exhaustive 0..7", true,
                         check_monoid_laws_exhaustive(second_min_monoid(), std::span<const SecondMinPair>(domain))});
  out.monoids.push_back({"subtraction", false, check_monoid_laws(subtraction_pseudo_monoid(), ints, trials, prng)});
  for (auto& m : out.monoids) m.report.monoid = m.name;

  const std::function<std::int64_t(const int&)> g = [](const int& b) { return static_cast<std::int64_t>(b); };
  const std::function<int(const std::int64_t&)> mod2 = [](const std::int64_t& x) {
    return static_cast<int>(((x % 2) + 2) % 2);
  };
  // Agrees with mod 2 on g's image {0, 1} but not on 2.
  const std::function<int(const std::int64_t&)> clamped = [](const std::int64_t& x) {
    return static_cast<int>(std::min<std::int64_t>(((x % 3) + 3) % 3, 1));
  };
  out.homomorphisms.push_back(
      {"parity via (Z,+), h = x mod 2", true,
       check_homomorphism(sum_monoid(), parity_monoid(), g, mod2, bits, hom_trials, prng)});
  out.homomorphisms.push_back(
      {"parity via (Z,+), h = min(x mod 3, 1)", false,
       check_homomorphism(sum_monoid(), parity_monoid(), g, clamped, bits, hom_trials, prng)});
  return out;
}

}  // namespace lcm
