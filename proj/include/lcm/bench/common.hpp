#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lcm/core/parameters.hpp"

namespace lcm {

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch = 32;
  double lr = 1e-4;
  std::vector<std::uint64_t> seeds{1, 2, 3};

  void validate() const {
    if (epochs == 0) throw Error("train.epochs must be positive");
    if (batch == 0) throw Error("train.batch must be positive");
    if (!(lr > 0) || !std::isfinite(lr)) throw Error("train.lr must be a positive number");
    if (seeds.empty()) throw Error("train.seeds must not be empty");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs}, {"batch", c.batch}, {"lr", c.lr}, {"seeds", c.seeds}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw Error("train: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "epochs") c.epochs = value.get<std::size_t>();
      else if (key == "batch") c.batch = value.get<std::size_t>();
      else if (key == "lr") c.lr = value.get<double>();
      else if (key == "seeds") c.seeds = value.get<std::vector<std::uint64_t>>();
      else throw Error("train: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw Error("train." + key + ": " + e.what());
    }
  }
}

class TrainingError : public Error {
 public:
  using Error::Error;
};

/// One line of the metrics CSV. Regularizer columns are empty when the term
/// was not computed.
struct MetricsRow {
  std::size_t epoch = 0;
  std::string split;
  double loss = 0.0;
  double accuracy = 0.0;
  std::optional<double> comm_loss, assoc_loss, swap_loss;
  double wall_ms = 0.0;
};

inline constexpr const char* kMetricsHeader = "epoch,split,loss,accuracy,comm_loss,assoc_loss,swap_loss,wall_ms";

inline std::string format_number(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

inline std::string to_csv_line(const MetricsRow& r) {
  auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  return std::to_string(r.epoch) + "," + r.split + "," + format_number(r.loss) + "," + format_number(r.accuracy) +
         "," + opt(r.comm_loss) + "," + opt(r.assoc_loss) + "," + opt(r.swap_loss) + "," + format_number(r.wall_ms);
}

/// Appends rows as they are produced, so an interrupted run keeps its history.
class MetricsWriter {
 public:
  MetricsWriter() = default;
  explicit MetricsWriter(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw Error("cannot write " + path.string());
    out_ << kMetricsHeader << '\n';
    out_.flush();
  }
  void write(const MetricsRow& row) {
    if (!out_.is_open()) return;
    out_ << to_csv_line(row) << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

/// Snapshot written when training hits a non-finite loss.
template <class T>
void write_diagnostic(const std::filesystem::path& dir, std::size_t epoch, std::size_t step, double loss,
                      const ParameterStore<T>& store) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& e : store.entries()) {
    double sq = 0.0;
    std::size_t nonfinite = 0;
    for (T v : e.value.values()) {
      if (!std::isfinite(static_cast<double>(v))) ++nonfinite;
      else sq += static_cast<double>(v) * static_cast<double>(v);
    }
    params[e.name] = {{"l2_norm", std::sqrt(sq)}, {"nonfinite", nonfinite}};
  }
  nlohmann::json j = {{"epoch", epoch},
                      {"step", step},
                      {"loss", std::isfinite(loss) ? nlohmann::json(loss) : nlohmann::json(std::to_string(loss))},
                      {"params", params}};
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "diagnostic.json") << j.dump(2) << '\n';
}

}  // namespace lcm
