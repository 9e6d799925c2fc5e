#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lcm/bench/runner.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string agg;
  std::optional<double> lambda_assoc;
  std::optional<std::size_t> epochs;
  std::string task;
  std::string checkpoint;
  bool paper_scale = false;
  bool quiet = false;
};

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "JSON run configuration");
  sub->add_option("--seed", f.seed, "Single training seed (replaces train.seeds)");
  sub->add_option("--out", f.out, "Output directory (replaces output_dir)");
  sub->add_option("--agg", f.agg, "Aggregator kind: sum, max, mean, pna-lite, gru, binary-gru");
  sub->add_option("--lambda-assoc", f.lambda_assoc, "Associativity regularizer weight");
  sub->add_option("--epochs", f.epochs, "Training epochs");
  sub->add_option("--task", f.task, "secondmin, sssp, laws or bench (when no --config sets it)");
  sub->add_flag("--paper-scale", f.paper_scale, "Full-size configuration: hidden 128, 1000 epochs");
  sub->add_flag("--quiet", f.quiet, "No per-epoch progress on stderr");
}

lcm::RunConfig resolve(const Flags& f, lcm::TaskKind default_task) {
  nlohmann::json j = nlohmann::json::object();
  if (!f.config.empty()) j = lcm::read_json(f.config);
  if (!f.task.empty()) j["task"] = f.task;
  else if (!j.contains("task")) j["task"] = std::string(lcm::to_string(default_task));
  lcm::RunConfig cfg = lcm::parse_run_config(j, f.paper_scale);
  if (f.seed) cfg.train.seeds = {*f.seed};
  if (!f.out.empty()) cfg.output_dir = f.out;
  if (!f.agg.empty()) cfg.aggregator.kind = lcm::parse_agg_kind(f.agg);
  if (f.lambda_assoc) cfg.aggregator.lambda_assoc = *f.lambda_assoc;
  if (f.epochs) cfg.train.epochs = *f.epochs;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learnable commutative monoid aggregators: training, evaluation and law checks"};
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("gen-data", "Write the task's dataset splits as JSON lines");
  auto* train = app.add_subcommand("train", "Train one model per seed; writes checkpoint and metrics.csv");
  auto* eval = app.add_subcommand("eval", "Evaluate a trained run directory; writes eval.json");
  auto* bench = app.add_subcommand("bench-speed", "Time training steps per aggregator and set size");
  auto* laws = app.add_subcommand("check-laws", "Check monoid laws and homomorphism clauses");
  auto* sweep = app.add_subcommand("sweep", "Train and evaluate Binary-GRU over sweep.lambda_assoc");
  for (auto* sub : {gen, train, eval, bench, laws, sweep}) add_common(sub, f);
  eval->add_option("--checkpoint", f.checkpoint, "Run directory holding model.json and checkpoint/")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    std::ostream* log = nullptr;
    if (gen->parsed()) {
      const auto cfg = resolve(f, lcm::TaskKind::SecondMin);
      for (const auto& p : lcm::run_gen_data(cfg)) std::cout << p.string() << '\n';
    } else if (train->parsed()) {
      const auto cfg = resolve(f, lcm::TaskKind::SecondMin);
      if (!f.quiet) log = &std::cerr;
      for (const auto& r : lcm::run_train(cfg, log)) {
        std::cout << r.dir.string() << " best_epoch " << r.best_epoch << '\n';
      }
    } else if (eval->parsed()) {
      // Without --config the run's echoed config supplies the task and data.
      Flags g = f;
      if (g.config.empty()) g.config = (std::filesystem::path(f.checkpoint) / "config.json").string();
      auto cfg = resolve(g, lcm::TaskKind::SecondMin);
      std::cout << lcm::run_eval(cfg, f.checkpoint).dump(2) << '\n';
    } else if (bench->parsed()) {
      const auto cfg = resolve(f, lcm::TaskKind::Bench);
      std::cout << lcm::run_bench_speed(cfg).string() << '\n';
    } else if (laws->parsed()) {
      const auto cfg = resolve(f, lcm::TaskKind::Laws);
      const auto report = lcm::run_check_laws(cfg);
      for (const auto& m : report.monoids) {
        std::cout << (m.as_expected() ? "ok   " : "FAIL ") << m.name << ": laws "
                  << (m.report.all_passed() ? "hold" : "fail") << '\n';
      }
      for (const auto& h : report.homomorphisms) {
        std::cout << (h.as_expected() ? "ok   " : "FAIL ") << h.name << ": "
                  << (h.report.all_passed() ? "homomorphism" : "not a homomorphism") << '\n';
      }
      return report.as_expected() ? EXIT_SUCCESS : EXIT_FAILURE;
    } else if (sweep->parsed()) {
      const auto cfg = resolve(f, lcm::TaskKind::SecondMin);
      if (!f.quiet) log = &std::cerr;
      std::cout << lcm::run_sweep(cfg, log).summary_csv.string() << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return EXIT_FAILURE;
  }
  return EXIT_SUCCESS;
}
