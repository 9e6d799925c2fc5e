#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "lcm/core/prng.hpp"
#include "lcm/core/tensor.hpp"

namespace lcm {

using Bits8 = std::array<std::uint8_t, 8>;

/// MSB first: 5 -> 00000101.
inline Bits8 encode_int_bits(int x) {
  if (x < 0 || x > 255) throw Error("encode_int_bits: " + std::to_string(x) + " is outside [0, 255]");
  Bits8 bits{};
  for (int i = 0; i < 8; ++i) bits[i] = static_cast<std::uint8_t>((x >> (7 - i)) & 1);
  return bits;
}

inline int decode_int_bits(const Bits8& bits) {
  int x = 0;
  for (int i = 0; i < 8; ++i) {
    if (bits[i] > 1) throw Error("decode_int_bits: bit values must be 0 or 1");
    x = (x << 1) | bits[i];
  }
  return x;
}

/// Label rule: the second smallest element counting repeats; a singleton's
/// label is its only element.
inline int second_min_label(std::vector<int> values) {
  if (values.empty()) throw Error("second_min_label: empty multiset");
  if (values.size() == 1) return values[0];
  std::nth_element(values.begin(), values.begin() + 1, values.end());
  return values[1];
}

struct SecondMinSample {
  std::vector<int> values;
  int label = 0;
  Bits8 label_bits{};
};

inline SecondMinSample make_sample(std::vector<int> values) {
  SecondMinSample s;
  s.label = second_min_label(values);
  s.label_bits = encode_int_bits(s.label);
  s.values = std::move(values);
  return s;
}

struct DatasetConfig {
  std::uint64_t seed = 0;
  std::size_t count = 8192;
  std::size_t size_low = 1;
  std::size_t size_high = 16;
  int value_low = 0;
  int value_high = 255;
  bool exclude_singletons = false;
  std::size_t val_count = 1024;
  std::size_t val_size = 32;
  std::size_t eval_per_size = 1024;
  std::vector<std::size_t> eval_sizes{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 20, 32, 50, 64, 100, 128, 200};

  void validate() const {
    if (!(0 <= value_low && value_low <= value_high && value_high <= 255)) {
      throw Error("dataset: need 0 <= value_low <= value_high <= 255");
    }
    if (size_low < 1 || size_low > size_high) throw Error("dataset: need 1 <= size_low <= size_high");
    if (exclude_singletons && size_high < 2) throw Error("dataset: exclude_singletons leaves no valid sizes");
    if (count == 0) throw Error("dataset.count must be positive");
    if (val_size < 1 || val_count == 0) throw Error("dataset: validation set must be nonempty");
    for (auto n : eval_sizes) {
      if (n < 1) throw Error("dataset.eval_sizes entries must be >= 1");
    }
  }
};

inline void to_json(nlohmann::json& j, const DatasetConfig& c) {
  j = {{"seed", c.seed},
       {"count", c.count},
       {"size_low", c.size_low},
       {"size_high", c.size_high},
       {"value_low", c.value_low},
       {"value_high", c.value_high},
       {"exclude_singletons", c.exclude_singletons},
       {"val_count", c.val_count},
       {"val_size", c.val_size},
       {"eval_per_size", c.eval_per_size},
       {"eval_sizes", c.eval_sizes}};
}

inline void from_json(const nlohmann::json& j, DatasetConfig& c) {
  if (!j.is_object()) throw Error("dataset: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "count") c.count = value.get<std::size_t>();
      else if (key == "size_low") c.size_low = value.get<std::size_t>();
      else if (key == "size_high") c.size_high = value.get<std::size_t>();
      else if (key == "value_low") c.value_low = value.get<int>();
      else if (key == "value_high") c.value_high = value.get<int>();
      else if (key == "exclude_singletons") c.exclude_singletons = value.get<bool>();
      else if (key == "val_count") c.val_count = value.get<std::size_t>();
      else if (key == "val_size") c.val_size = value.get<std::size_t>();
      else if (key == "eval_per_size") c.eval_per_size = value.get<std::size_t>();
      else if (key == "eval_sizes") c.eval_sizes = value.get<std::vector<std::size_t>>();
      else throw Error("dataset: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw Error("dataset." + key + ": " + e.what());
    }
  }
}

namespace detail {

// Stream ids keep the train, validation and per-size evaluation sets disjoint.
inline constexpr std::uint64_t kTrainStream = 1;
inline constexpr std::uint64_t kValStream = 2;
inline constexpr std::uint64_t kEvalStreamBase = 1000;

inline std::vector<SecondMinSample> draw_samples(Prng prng, std::size_t count, std::size_t size_low,
                                                 std::size_t size_high, const DatasetConfig& cfg) {
  std::vector<SecondMinSample> out;
  out.reserve(count);
  while (out.size() < count) {
    const auto n = static_cast<std::size_t>(prng.uniform_int(static_cast<std::int64_t>(size_low),
                                                             static_cast<std::int64_t>(size_high)));
    if (n == 1 && cfg.exclude_singletons) continue;
    std::vector<int> values(n);
    for (auto& v : values) v = static_cast<int>(prng.uniform_int(cfg.value_low, cfg.value_high));
    out.push_back(make_sample(std::move(values)));
  }
  return out;
}

}  // namespace detail

/// Training multisets, sizes uniform in [size_low, size_high].
inline std::vector<SecondMinSample> gen_dataset(const DatasetConfig& cfg) {
  cfg.validate();
  return detail::draw_samples(Prng(cfg.seed, detail::kTrainStream), cfg.count, cfg.size_low, cfg.size_high, cfg);
}

inline std::vector<SecondMinSample> gen_validation_set(const DatasetConfig& cfg) {
  cfg.validate();
  return detail::draw_samples(Prng(cfg.seed, detail::kValStream), cfg.val_count, cfg.val_size, cfg.val_size, cfg);
}

/// `count` multisets of exactly n elements. Singletons are kept even when
/// excluded from training, since evaluation at n = 1 is explicit.
inline std::vector<SecondMinSample> gen_eval_set(const DatasetConfig& cfg, std::size_t n, std::size_t count) {
  cfg.validate();
  DatasetConfig c = cfg;
  c.exclude_singletons = false;
  return detail::draw_samples(Prng(cfg.seed, detail::kEvalStreamBase + n), count, n, n, c);
}

}  // namespace lcm
