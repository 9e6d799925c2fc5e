#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>

#include <json.hpp>

#include "lcm/core/tensor.hpp"

namespace lcm {

enum class AggKind { Sum, Max, Mean, PnaLite, Gru, BinaryGru };

inline constexpr std::array<std::pair<AggKind, std::string_view>, 6> kAggKindNames{{
    {AggKind::Sum, "sum"},
    {AggKind::Max, "max"},
    {AggKind::Mean, "mean"},
    {AggKind::PnaLite, "pna-lite"},
    {AggKind::Gru, "gru"},
    {AggKind::BinaryGru, "binary-gru"},
}};

inline std::string_view to_string(AggKind kind) {
  for (const auto& [k, name] : kAggKindNames) {
    if (k == kind) return name;
  }
  return "?";
}

inline AggKind parse_agg_kind(std::string_view name) {
  for (const auto& [k, n] : kAggKindNames) {
    if (n == name) return k;
  }
  throw Error("unknown aggregator kind '" + std::string(name) +
              "' (expected sum, max, mean, pna-lite, gru or binary-gru)");
}

inline bool is_learnable(AggKind kind) { return kind == AggKind::Gru || kind == AggKind::BinaryGru; }

struct AggregatorConfig {
  AggKind kind = AggKind::BinaryGru;
  std::size_t hidden_dim = 64;
  double lambda_assoc = 0.0;
  double lambda_comm = 0.0;
  double lambda_swap = 0.0;
  // |x <> e - x|^2 on tree roots; not part of the original method, default off.
  double lambda_identity = 0.0;
  bool shuffle = true;  // training-time only, ignored by fixed kinds
  bool pad_to_power_of_two = false;
  std::size_t swap_pairs = 4;
  // Mean of log(degree + 1) over the training data; 0 means "compute from data".
  double pna_delta = 0.0;
  // Compute regularizer values even when their weight is 0 (for logging).
  bool track_regularizers = false;

  void validate() const {
    if (hidden_dim == 0) throw Error("aggregator.hidden_dim must be positive");
    const std::array<std::pair<const char*, double>, 4> weights{
        {{"lambda_assoc", lambda_assoc}, {"lambda_comm", lambda_comm}, {"lambda_swap", lambda_swap},
         {"lambda_identity", lambda_identity}}};
    for (const auto& [name, w] : weights) {
      if (!std::isfinite(w) || w < 0.0) {
        throw Error(std::string("aggregator.") + name + " must be a nonnegative finite number");
      }
    }
    const std::string kind_name(to_string(kind));
    if (kind != AggKind::BinaryGru) {
      for (const auto& [name, w] : {weights[0], weights[1], weights[3]}) {
        if (w != 0.0) {
          throw Error(std::string("aggregator.") + name + " applies only to kind binary-gru, not " + kind_name);
        }
      }
      if (pad_to_power_of_two) throw Error("aggregator.pad_to_power_of_two applies only to kind binary-gru");
    }
    if (kind != AggKind::Gru && lambda_swap != 0.0) {
      throw Error("aggregator.lambda_swap applies only to kind gru, not " + kind_name);
    }
    if (swap_pairs == 0) throw Error("aggregator.swap_pairs must be at least 1");
    if (!std::isfinite(pna_delta) || pna_delta < 0.0) throw Error("aggregator.pna_delta must be >= 0");
  }
};

inline void to_json(nlohmann::json& j, const AggregatorConfig& c) {
  j = {{"kind", std::string(to_string(c.kind))},
       {"hidden_dim", c.hidden_dim},
       {"lambda_assoc", c.lambda_assoc},
       {"lambda_comm", c.lambda_comm},
       {"lambda_swap", c.lambda_swap},
       {"lambda_identity", c.lambda_identity},
       {"shuffle", c.shuffle},
       {"pad_to_power_of_two", c.pad_to_power_of_two},
       {"swap_pairs", c.swap_pairs},
       {"pna_delta", c.pna_delta},
       {"track_regularizers", c.track_regularizers}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, AggregatorConfig& c) {
  if (!j.is_object()) throw Error("aggregator: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "kind") c.kind = parse_agg_kind(value.get<std::string>());
      else if (key == "hidden_dim") c.hidden_dim = value.get<std::size_t>();
      else if (key == "lambda_assoc") c.lambda_assoc = value.get<double>();
      else if (key == "lambda_comm") c.lambda_comm = value.get<double>();
      else if (key == "lambda_swap") c.lambda_swap = value.get<double>();
      else if (key == "lambda_identity") c.lambda_identity = value.get<double>();
      else if (key == "shuffle") c.shuffle = value.get<bool>();
      else if (key == "pad_to_power_of_two") c.pad_to_power_of_two = value.get<bool>();
      else if (key == "swap_pairs") c.swap_pairs = value.get<std::size_t>();
      else if (key == "pna_delta") c.pna_delta = value.get<double>();
      else if (key == "track_regularizers") c.track_regularizers = value.get<bool>();
      else throw Error("aggregator: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw Error("aggregator." + key + ": " + e.what());
    }
  }
}

}  // namespace lcm
