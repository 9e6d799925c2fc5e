#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lcm/bench/run_config.hpp"
#include "lcm/graph/mpnn.hpp"
#include "lcm/monoid/law_suite.hpp"
#include "lcm/secondmin/train.hpp"

// Subcommand bodies shared by the CLI and the acceptance runner. Every
// artifact directory gets a config.json echo; files are written as *.partial
// and renamed, and a training directory stays *.partial until its run
// finishes.

namespace lcm {

inline std::string json_text(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline void echo_config(const RunConfig& cfg, const std::filesystem::path& dir) {
  write_file_atomic(dir / "config.json", json_text(nlohmann::json(cfg)));
}

inline std::filesystem::path seed_dir(const RunConfig& cfg, std::uint64_t seed) {
  return std::filesystem::path(cfg.output_dir) / ("seed_" + std::to_string(seed));
}

// ------------------------------------------------------------------ gen-data

inline nlohmann::json sample_json(const SecondMinSample& s) { return {{"values", s.values}, {"label", s.label}}; }

inline nlohmann::json sample_json(const NodeTaskSample& s) {
  nlohmann::json edges = nlohmann::json::array();
  for (auto [u, v] : s.graph.edges) edges.push_back({u, v});
  std::vector<long> dist;
  for (double t : s.targets) dist.push_back(std::lround(t * s.scale));
  return {{"n", s.graph.n}, {"edges", edges}, {"source", s.source}, {"distances", dist}};
}

template <class Sample>
void write_jsonl(const std::filesystem::path& path, const std::vector<Sample>& samples) {
  std::ostringstream out;
  for (const auto& s : samples) out << sample_json(s).dump() << '\n';
  write_file_atomic(path, out.str());
}

/// Writes the generated splits as JSON lines, one sample per line.
inline std::vector<std::filesystem::path> run_gen_data(const RunConfig& cfg) {
  const std::filesystem::path out(cfg.output_dir);
  echo_config(cfg, out);
  std::vector<std::filesystem::path> files;
  if (cfg.task == TaskKind::SecondMin) {
    files = {out / "train.jsonl", out / "val.jsonl"};
    write_jsonl(files[0], gen_dataset(cfg.dataset));
    write_jsonl(files[1], gen_validation_set(cfg.dataset));
    for (auto n : cfg.dataset.eval_sizes) {
      files.push_back(out / ("eval_n" + std::to_string(n) + ".jsonl"));
      write_jsonl(files.back(), gen_eval_set(cfg.dataset, n, cfg.dataset.eval_per_size));
    }
  } else if (cfg.task == TaskKind::Sssp) {
    const std::pair<const char*, GraphSplit> splits[] = {
        {"train.jsonl", GraphSplit::Train}, {"val.jsonl", GraphSplit::Val}, {"test.jsonl", GraphSplit::Test}};
    for (const auto& [name, split] : splits) {
      files.push_back(out / name);
      write_jsonl(files.back(), gen_graph_split(cfg.graph, split));
    }
  } else {
    throw Error("gen-data: task " + std::string(to_string(cfg.task)) + " has no dataset");
  }
  return files;
}

// --------------------------------------------------------------------- train

struct SeedRun {
  std::uint64_t seed = 0;
  std::filesystem::path dir;
  std::size_t best_epoch = 0;
  double mean_epoch_ms = 0.0;
};

/// Trains one model per configured seed into output_dir/seed_N.
inline std::vector<SeedRun> run_train(const RunConfig& cfg, std::ostream* log = nullptr) {
  if (cfg.task != TaskKind::SecondMin && cfg.task != TaskKind::Sssp) {
    throw Error("train: task must be secondmin or sssp");
  }
  echo_config(cfg, cfg.output_dir);
  std::vector<SeedRun> runs;
  for (auto seed : cfg.train.seeds) {
    const std::filesystem::path final_dir = seed_dir(cfg, seed);
    std::filesystem::path partial = final_dir;
    partial += ".partial";
    std::filesystem::remove_all(partial);
    RunConfig one = cfg;
    one.train.seeds = {seed};
    one.output_dir = final_dir.string();
    echo_config(one, partial);
    SeedRun run{seed, final_dir};
    if (cfg.task == TaskKind::SecondMin) {
      SecondMinTrainOptions options;
      options.out_dir = partial;
      options.log = log;
      const auto r = train_secondmin(cfg.aggregator, cfg.dataset, cfg.train, seed, options);
      run.best_epoch = r.best_epoch;
      run.mean_epoch_ms = r.mean_epoch_ms;
    } else {
      GnnTrainOptions options;
      options.out_dir = partial;
      options.log = log;
      const auto r = train_gnn(cfg.mpnn(), cfg.graph, cfg.train, seed, options);
      run.best_epoch = r.best_epoch;
      run.mean_epoch_ms = r.mean_epoch_ms;
    }
    std::filesystem::remove_all(final_dir);
    std::filesystem::rename(partial, final_dir);
    runs.push_back(run);
  }
  return runs;
}

// ---------------------------------------------------------------------- eval

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + " is not valid JSON: " + e.what());
  }
}

/// Evaluates the best checkpoint in `run_dir` on the task's evaluation data and
/// writes run_dir/eval.json. The task comes from `cfg`.
inline nlohmann::json run_eval(const RunConfig& cfg, const std::filesystem::path& run_dir) {
  const auto model_json = read_json(run_dir / "model.json");
  const auto seed = model_json.at("seed").get<std::uint64_t>();
  ParameterStore<float> store = load_checkpoint(run_dir / "checkpoint");
  nlohmann::json report;
  if (cfg.task == TaskKind::SecondMin) {
    const SecondMinModel<float> model(model_json.at("aggregator").get<AggregatorConfig>());
    report = evaluate_secondmin(model, store, cfg.dataset, cfg.dataset.eval_sizes, cfg.dataset.eval_per_size, seed);
  } else if (cfg.task == TaskKind::Sssp) {
    const Mpnn<float> model(model_json.at("mpnn").get<MpnnConfig>());
    report = eval_gnn(model, store, cfg.graph, seed);
  } else {
    throw Error("eval: task must be secondmin or sssp");
  }
  write_file_atomic(run_dir / "eval.json", json_text(report));
  return report;
}

// --------------------------------------------------------------------- sweep

struct SweepResult {
  std::vector<double> lambdas;
  std::vector<std::vector<nlohmann::json>> reports;  // [lambda][seed]
  std::filesystem::path summary_csv;
};

inline std::string lambda_label(double lambda) {
  std::ostringstream s;
  s << lambda;
  return s.str();
}

/// Binary-GRU with lambda_assoc taken from sweep.lambda_assoc: train and eval
/// per value, then summary.csv with one row per (lambda, seed).
inline SweepResult run_sweep(const RunConfig& cfg, std::ostream* log = nullptr) {
  if (cfg.task != TaskKind::SecondMin && cfg.task != TaskKind::Sssp) {
    throw Error("sweep: task must be secondmin or sssp");
  }
  const std::filesystem::path out(cfg.output_dir);
  echo_config(cfg, out);
  SweepResult result;
  std::ostringstream csv;
  if (cfg.task == TaskKind::SecondMin) {
    csv << "lambda_assoc,seed,id_accuracy";
    for (auto n : cfg.dataset.eval_sizes) csv << ",acc_n" << n;
  } else {
    csv << "lambda_assoc,seed,mse,log10_mse,ratio";
  }
  csv << '\n';
  for (double lambda : cfg.sweep.lambda_assoc) {
    RunConfig one = cfg;
    one.aggregator.kind = AggKind::BinaryGru;
    one.aggregator.lambda_assoc = lambda;
    one.output_dir = (out / ("lambda_" + lambda_label(lambda))).string();
    one.validate();
    result.lambdas.push_back(lambda);
    result.reports.emplace_back();
    for (const auto& run : run_train(one, log)) {
      const auto report = run_eval(one, run.dir);
      result.reports.back().push_back(report);
      csv << format_number(lambda) << ',' << run.seed;
      if (cfg.task == TaskKind::SecondMin) {
        const auto r = report.get<EvalReport>();
        csv << ',' << format_number(r.mean_accuracy(cfg.dataset.size_low, cfg.dataset.size_high));
        for (const auto& s : r.per_size) csv << ',' << format_number(s.accuracy);
      } else {
        csv << ',' << format_number(report["mse"].get<double>()) << ','
            << format_number(report["log10_mse"].get<double>()) << ',' << format_number(report["ratio"].get<double>());
      }
      csv << '\n';
    }
  }
  result.summary_csv = out / "summary.csv";
  write_file_atomic(result.summary_csv, csv.str());
  return result;
}

// --------------------------------------------------------------- bench-speed

inline std::filesystem::path run_bench_speed(const RunConfig& cfg) {
  const std::filesystem::path out(cfg.output_dir);
  echo_config(cfg, out);
  std::vector<AggregatorConfig> kinds;
  for (const auto& k : cfg.bench.kinds) kinds.push_back(cfg.bench_aggregator(k));
  const auto steps = (cfg.dataset.count + cfg.train.batch - 1) / cfg.train.batch;
  const auto rows = bench_speed(kinds, cfg.bench.sizes, cfg.bench.batch, cfg.bench.repeats, steps, cfg.dataset.seed);
  std::ostringstream csv;
  csv << kSpeedHeader << '\n';
  for (const auto& r : rows) csv << to_csv_line(r) << '\n';
  write_file_atomic(out / "speed.csv", csv.str());
  return out / "speed.csv";
}

// ---------------------------------------------------------------- check-laws

inline LawSuiteReport run_check_laws(const RunConfig& cfg) {
  const std::filesystem::path out(cfg.output_dir);
  echo_config(cfg, out);
  const auto report = run_law_suite(cfg.laws.seed, cfg.laws.trials, cfg.laws.homomorphism_trials);
  write_file_atomic(out / "laws.json", json_text(report));
  return report;
}

}  // namespace lcm
