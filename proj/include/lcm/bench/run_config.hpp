#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lcm/aggregators/config.hpp"
#include "lcm/bench/common.hpp"
#include "lcm/graph/mpnn.hpp"
#include "lcm/secondmin/data.hpp"

namespace lcm {

enum class TaskKind { SecondMin, Sssp, Laws, Bench };

inline std::string_view to_string(TaskKind t) {
  switch (t) {
    case TaskKind::SecondMin: return "secondmin";
    case TaskKind::Sssp: return "sssp";
    case TaskKind::Laws: return "laws";
    case TaskKind::Bench: return "bench";
  }
  return "?";
}

inline TaskKind parse_task(std::string_view name) {
  if (name == "secondmin") return TaskKind::SecondMin;
  if (name == "sssp") return TaskKind::Sssp;
  if (name == "laws") return TaskKind::Laws;
  if (name == "bench") return TaskKind::Bench;
  throw Error("unknown task '" + std::string(name) + "' (expected secondmin, sssp, laws or bench)");
}

struct SweepConfig {
  std::vector<double> lambda_assoc{1.0, 1e-3, 1e-6};
};

struct BenchConfig {
  std::vector<std::string> kinds{"sum", "max", "pna-lite", "gru", "binary-gru", "binary-gru-assoc"};
  std::vector<std::size_t> sizes{20, 50, 100, 200};
  std::size_t batch = 32;
  std::size_t repeats = 3;
};

struct LawsConfig {
  std::uint64_t seed = 0;
  std::size_t trials = 1000;
  std::size_t homomorphism_trials = 500;
};

/// Everything one CLI invocation needs. `dataset` is read as a DatasetConfig
/// for secondmin and as a GraphTaskConfig for sssp; `mpnn` only applies to sssp,
/// where mpnn.hidden_dim also sets aggregator.hidden_dim.
struct RunConfig {
  TaskKind task = TaskKind::SecondMin;
  AggregatorConfig aggregator;
  DatasetConfig dataset;
  GraphTaskConfig graph;
  TrainConfig train;
  std::size_t mpnn_layers = 6;
  std::size_t mpnn_hidden_dim = 32;
  SweepConfig sweep;
  BenchConfig bench;
  LawsConfig laws;
  std::string output_dir = "runs/default";

  static RunConfig defaults(TaskKind task) {
    RunConfig c;
    c.task = task;
    if (task == TaskKind::Sssp) {
      c.train.epochs = 100;
      c.train.lr = 1e-3;
      c.aggregator.hidden_dim = c.mpnn_hidden_dim;
    }
    return c;
  }

  /// Full-size settings (h=128, 1000 epochs). Explicit keys and flags still override.
  void apply_paper_scale() {
    train.epochs = 1000;
    if (task == TaskKind::SecondMin) {
      aggregator.hidden_dim = 128;
      dataset.count = 65536;
      dataset.eval_sizes.clear();
      for (std::size_t n = 1; n <= 200; ++n) dataset.eval_sizes.push_back(n);
    } else if (task == TaskKind::Sssp) {
      mpnn_hidden_dim = 128;
      aggregator.hidden_dim = 128;
      train.lr = 1e-4;
    }
  }

  MpnnConfig mpnn() const {
    MpnnConfig m;
    m.layers = mpnn_layers;
    m.hidden_dim = mpnn_hidden_dim;
    m.aggregator = aggregator;
    m.aggregator.hidden_dim = mpnn_hidden_dim;
    return m;
  }

  void validate() {
    if (task == TaskKind::Sssp) aggregator.hidden_dim = mpnn_hidden_dim;
    aggregator.validate();
    train.validate();
    if (task == TaskKind::SecondMin) dataset.validate();
    if (task == TaskKind::Sssp) {
      graph.validate();
      mpnn().validate();
    }
    if (sweep.lambda_assoc.empty()) throw Error("sweep.lambda_assoc must not be empty");
    for (double l : sweep.lambda_assoc) {
      if (!(l >= 0) || !std::isfinite(l)) throw Error("sweep.lambda_assoc entries must be nonnegative");
    }
    if (bench.batch == 0 || bench.repeats == 0) throw Error("bench.batch and bench.repeats must be positive");
    for (const auto& k : bench.kinds) bench_aggregator(k);
    for (auto n : bench.sizes) {
      if (n == 0) throw Error("bench.sizes entries must be positive");
    }
    if (laws.trials == 0 || laws.homomorphism_trials == 0) throw Error("laws trial counts must be positive");
    if (output_dir.empty()) throw Error("output_dir must not be empty");
  }

  /// Aggregator for a bench kind name; "binary-gru-assoc" is binary-gru with lambda_assoc 1.
  AggregatorConfig bench_aggregator(const std::string& name) const {
    AggregatorConfig c;
    c.hidden_dim = aggregator.hidden_dim;
    if (name == "binary-gru-assoc") {
      c.kind = AggKind::BinaryGru;
      c.lambda_assoc = 1.0;
    } else {
      c.kind = parse_agg_kind(name);
    }
    return c;
  }
};

inline void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"task", std::string(to_string(c.task))},
       {"aggregator", c.aggregator},
       {"train", c.train},
       {"output_dir", c.output_dir}};
  switch (c.task) {
    case TaskKind::SecondMin:
      j["dataset"] = c.dataset;
      j["sweep"] = {{"lambda_assoc", c.sweep.lambda_assoc}};
      break;
    case TaskKind::Sssp:
      j["dataset"] = c.graph;
      j["mpnn"] = {{"layers", c.mpnn_layers}, {"hidden_dim", c.mpnn_hidden_dim}};
      j["sweep"] = {{"lambda_assoc", c.sweep.lambda_assoc}};
      break;
    case TaskKind::Bench:
      j["dataset"] = c.dataset;
      j["bench"] = {{"kinds", c.bench.kinds}, {"sizes", c.bench.sizes}, {"batch", c.bench.batch},
                    {"repeats", c.bench.repeats}};
      break;
    case TaskKind::Laws:
      j["laws"] = {{"seed", c.laws.seed}, {"trials", c.laws.trials},
                   {"homomorphism_trials", c.laws.homomorphism_trials}};
      break;
  }
}

namespace detail {

template <class F>
void for_keys(const nlohmann::json& j, const std::string& section, F&& f) {
  if (!j.is_object()) throw Error(section + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (!f(key, value)) throw Error(section + ": unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw Error(section + "." + key + ": " + e.what());
    }
  }
}

}  // namespace detail

/// Parses on top of the task's defaults. Unknown keys anywhere are errors.
inline RunConfig parse_run_config(const nlohmann::json& j, bool paper_scale = false) {
  if (!j.is_object()) throw Error("config: expected a JSON object");
  TaskKind task = TaskKind::SecondMin;
  if (j.contains("task")) {
    if (!j["task"].is_string()) throw Error("config.task: expected a string");
    task = parse_task(j["task"].get<std::string>());
  }
  RunConfig c = RunConfig::defaults(task);
  if (paper_scale) c.apply_paper_scale();
  detail::for_keys(j, "config", [&](const std::string& key, const nlohmann::json& value) {
    if (key == "task") return true;
    if (key == "aggregator") {
      AggregatorConfig a = c.aggregator;
      from_json(value, a);
      c.aggregator = a;
    } else if (key == "dataset") {
      if (task == TaskKind::Sssp) from_json(value, c.graph);
      else from_json(value, c.dataset);
    } else if (key == "train") {
      from_json(value, c.train);
    } else if (key == "mpnn") {
      detail::for_keys(value, "mpnn", [&](const std::string& k, const nlohmann::json& v) {
        if (k == "layers") c.mpnn_layers = v.get<std::size_t>();
        else if (k == "hidden_dim") c.mpnn_hidden_dim = v.get<std::size_t>();
        else return false;
        return true;
      });
    } else if (key == "sweep") {
      detail::for_keys(value, "sweep", [&](const std::string& k, const nlohmann::json& v) {
        if (k != "lambda_assoc") return false;
        c.sweep.lambda_assoc = v.get<std::vector<double>>();
        return true;
      });
    } else if (key == "bench") {
      detail::for_keys(value, "bench", [&](const std::string& k, const nlohmann::json& v) {
        if (k == "kinds") c.bench.kinds = v.get<std::vector<std::string>>();
        else if (k == "sizes") c.bench.sizes = v.get<std::vector<std::size_t>>();
        else if (k == "batch") c.bench.batch = v.get<std::size_t>();
        else if (k == "repeats") c.bench.repeats = v.get<std::size_t>();
        else return false;
        return true;
      });
    } else if (key == "laws") {
      detail::for_keys(value, "laws", [&](const std::string& k, const nlohmann::json& v) {
        if (k == "seed") c.laws.seed = v.get<std::uint64_t>();
        else if (k == "trials") c.laws.trials = v.get<std::size_t>();
        else if (k == "homomorphism_trials") c.laws.homomorphism_trials = v.get<std::size_t>();
        else return false;
        return true;
      });
    } else if (key == "output_dir") {
      c.output_dir = value.get<std::string>();
    } else {
      return false;
    }
    return true;
  });
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path, bool paper_scale = false) {
  std::ifstream in(path);
  if (!in) throw Error("config: cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("config: " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j, paper_scale);
}

/// Writes `content` to path.partial, then renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  auto partial = path;
  partial += ".partial";
  {
    std::ofstream out(partial, std::ios::trunc);
    out << content;
    if (!out) throw Error("cannot write " + partial.string());
  }
  std::filesystem::rename(partial, path);
}

}  // namespace lcm
