#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "lcm/bench/runner.hpp"

using namespace lcm;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("lcm_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct Result {
  int status = 0;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Result run_cli(const std::string& args, const fs::path& dir) {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string(LCM_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(out), slurp(err)};
}

fs::path write_config(const fs::path& dir, const std::string& name, const std::string& text) {
  const auto p = dir / name;
  std::ofstream(p) << text;
  return p;
}

const char* kTinySecondMin = R"({
  "dataset": {"count": 64, "val_count": 32, "val_size": 8, "eval_sizes": [2, 16, 32], "eval_per_size": 64},
  "aggregator": {"hidden_dim": 8},
  "train": {"seeds": [1]}
})";

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

// Metrics without the wall_ms column, which is timing.
std::vector<std::string> metrics_without_time(const fs::path& csv) {
  std::vector<std::string> out;
  for (auto line : lines(slurp(csv))) out.push_back(line.substr(0, line.rfind(',')));
  return out;
}

}  // namespace

TEST(RunConfig, MinimalConfigGetsDefaults) {
  const auto c = parse_run_config(nlohmann::json::parse(R"({"task": "secondmin"})"));
  EXPECT_EQ(c.task, TaskKind::SecondMin);
  EXPECT_EQ(c.aggregator.kind, AggKind::BinaryGru);
  EXPECT_EQ(c.aggregator.hidden_dim, 64u);
  EXPECT_EQ(c.dataset.count, 8192u);
  EXPECT_EQ(c.train.epochs, 200u);
  EXPECT_EQ(c.train.batch, 32u);
  EXPECT_EQ(c.train.lr, 1e-4);
  EXPECT_EQ(c.train.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(c.sweep.lambda_assoc, (std::vector<double>{1.0, 1e-3, 1e-6}));

  const auto g = parse_run_config(nlohmann::json::parse(R"({"task": "sssp", "mpnn": {"hidden_dim": 16}})"));
  EXPECT_EQ(g.graph.train_count, 2000u);
  EXPECT_EQ(g.mpnn().layers, 6u);
  EXPECT_EQ(g.mpnn().aggregator.hidden_dim, 16u);
}

TEST(RunConfig, FullScaleSettings) {
  auto c = parse_run_config(nlohmann::json::parse(R"({"train": {"epochs": 7}})"), true);
  EXPECT_EQ(c.aggregator.hidden_dim, 128u);
  EXPECT_EQ(c.dataset.count, 65536u);
  EXPECT_EQ(c.dataset.eval_sizes.size(), 200u);
  EXPECT_EQ(c.train.epochs, 7u);  // explicit keys win
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
  for (const char* text : {R"({"bogus": 1})", R"({"train": {"epoch": 3}})", R"({"aggregator": {"knd": "sum"}})",
                           R"({"mpnn": {"depth": 2}})", R"({"task": "sssp", "dataset": {"count": 3}})"}) {
    EXPECT_THROW(parse_run_config(nlohmann::json::parse(text)), Error) << text;
  }
  try {
    parse_run_config(nlohmann::json::parse(R"({"train": {"epoch": 3}})"));
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("'epoch'"), std::string::npos);
  }
  auto c = parse_run_config(nlohmann::json::parse(R"({"aggregator": {"kind": "binary-gru", "lambda_swap": 1}})"));
  EXPECT_THROW(c.validate(), Error);
}

TEST(RunConfig, JsonRoundTrip) {
  auto c = parse_run_config(nlohmann::json::parse(kTinySecondMin));
  c.validate();
  const nlohmann::json j = c;
  const auto back = parse_run_config(j);
  EXPECT_EQ(nlohmann::json(back), j);
}

TEST(Cli, CheckLawsPasses) {
  const auto dir = scratch_dir("laws");
  const auto r = run_cli("check-laws --out " + (dir / "run").string(), dir);
  EXPECT_EQ(r.status, 0) << r.err;
  const auto report = read_json(dir / "run" / "laws.json");
  EXPECT_EQ(report["as_expected"], true);
  EXPECT_EQ(report["monoids"].size(), 6u);
  EXPECT_TRUE(fs::exists(dir / "run" / "config.json"));
  fs::remove_all(dir);
}

TEST(Cli, TrainSmokeEchoesOverrides) {
  const auto dir = scratch_dir("train");
  const auto cfg = write_config(dir, "c.json", kTinySecondMin);
  const auto out = dir / "run";
  const auto r = run_cli("train --quiet --config " + cfg.string() + " --epochs 1 --out " + out.string(), dir);
  ASSERT_EQ(r.status, 0) << r.err;
  const auto echoed = read_json(out / "config.json");
  EXPECT_EQ(echoed["train"]["epochs"], 1);
  EXPECT_EQ(echoed["output_dir"], out.string());
  const auto csv = lines(slurp(out / "seed_1" / "metrics.csv"));
  ASSERT_EQ(csv.size(), 3u);  // header, train row, val row
  EXPECT_EQ(csv[0], kMetricsHeader);
  EXPECT_EQ(csv[1].rfind("1,train,", 0), 0u);
  EXPECT_EQ(csv[2].rfind("1,val,", 0), 0u);
  EXPECT_TRUE(fs::exists(out / "seed_1" / "config.json"));
  EXPECT_TRUE(fs::exists(out / "seed_1" / "checkpoint" / "manifest.json"));
  fs::remove_all(dir);
}

TEST(Cli, InvalidConfigsExitNonzero) {
  const auto dir = scratch_dir("invalid");
  const auto swap = write_config(dir, "swap.json", R"({"aggregator": {"kind": "binary-gru", "lambda_swap": 1}})");
  auto r = run_cli("train --config " + swap.string() + " --out " + (dir / "a").string(), dir);
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.err.find("lambda_swap"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir / "a"));

  const auto unknown = write_config(dir, "unknown.json", R"({"dataset": {"size": 3}})");
  r = run_cli("train --config " + unknown.string() + " --out " + (dir / "b").string(), dir);
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.err.find("'size'"), std::string::npos) << r.err;

  r = run_cli("train --agg median --out " + (dir / "c").string(), dir);
  EXPECT_NE(r.status, 0);
  r = run_cli("frobnicate", dir);
  EXPECT_NE(r.status, 0);
  fs::remove_all(dir);
}

TEST(Cli, DivergentRunStaysPartial) {
  const auto dir = scratch_dir("nan");
  const auto cfg = write_config(
      dir, "c.json", R"({"dataset": {"count": 64, "val_count": 32}, "aggregator": {"hidden_dim": 8}, "train": {"lr": 1e30}})");
  const auto r = run_cli("train --quiet --seed 1 --epochs 2 --config " + cfg.string() + " --out " + (dir / "run").string(), dir);
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.err.find("non-finite loss"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir / "run" / "seed_1"));
  EXPECT_TRUE(fs::exists(dir / "run" / "seed_1.partial" / "diagnostic.json"));
  fs::remove_all(dir);
}

TEST(Cli, IdenticalConfigReproducesMetricsAndEval) {
  const auto dir = scratch_dir("repro");
  const auto cfg = write_config(dir, "c.json", kTinySecondMin);
  for (const char* name : {"a", "b"}) {
    const auto r = run_cli("train --quiet --epochs 2 --config " + cfg.string() + " --out " + (dir / name).string(), dir);
    ASSERT_EQ(r.status, 0) << r.err;
    const auto e = run_cli("eval --checkpoint " + (dir / name / "seed_1").string(), dir);
    ASSERT_EQ(e.status, 0) << e.err;
  }
  EXPECT_EQ(metrics_without_time(dir / "a" / "seed_1" / "metrics.csv"),
            metrics_without_time(dir / "b" / "seed_1" / "metrics.csv"));
  auto ea = read_json(dir / "a" / "seed_1" / "eval.json");
  auto eb = read_json(dir / "b" / "seed_1" / "eval.json");
  ASSERT_EQ(ea["per_size"].size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(ea["per_size"][i]["acc"], eb["per_size"][i]["acc"]);
    EXPECT_EQ(ea["per_size"][i]["n"], eb["per_size"][i]["n"]);
  }
  // Same keys in every report.
  for (auto* e : {&ea, &eb}) {
    for (auto& s : (*e)["per_size"]) s.erase("wall_ms");
  }
  EXPECT_EQ(ea, eb);
  const auto wa = slurp(dir / "a" / "seed_1" / "checkpoint" / "weights.bin");
  const auto wb = slurp(dir / "b" / "seed_1" / "checkpoint" / "weights.bin");
  EXPECT_EQ(wa, wb);
  fs::remove_all(dir);
}

TEST(Cli, SweepWritesOneReportPerLambda) {
  const auto dir = scratch_dir("sweep");
  const auto cfg = write_config(dir, "c.json", kTinySecondMin);
  const auto out = dir / "sweep";
  const auto r = run_cli("sweep --quiet --epochs 1 --config " + cfg.string() + " --out " + out.string(), dir);
  ASSERT_EQ(r.status, 0) << r.err;
  for (const char* l : {"lambda_1", "lambda_0.001", "lambda_1e-06"}) {
    const auto report = read_json(out / l / "seed_1" / "eval.json");
    EXPECT_EQ(report["kind"], "binary-gru-assoc") << l;
    EXPECT_TRUE(fs::exists(out / l / "config.json"));
  }
  const auto summary = lines(slurp(out / "summary.csv"));
  ASSERT_EQ(summary.size(), 4u);
  EXPECT_EQ(summary[0], "lambda_assoc,seed,id_accuracy,acc_n2,acc_n16,acc_n32");
  EXPECT_EQ(summary[1].rfind("1,1,", 0), 0u);
  EXPECT_EQ(summary[2].rfind("0.001,1,", 0), 0u);
  EXPECT_EQ(summary[3].rfind("1e-06,1,", 0), 0u);
  fs::remove_all(dir);
}

TEST(Cli, GenDataAndBench) {
  const auto dir = scratch_dir("gen");
  auto r = run_cli("gen-data --task sssp --out " + (dir / "g").string(), dir);
  ASSERT_EQ(r.status, 0) << r.err;
  const auto train = lines(slurp(dir / "g" / "train.jsonl"));
  EXPECT_EQ(train.size(), 2000u);
  const auto first = nlohmann::json::parse(train[0]);
  for (const char* key : {"n", "edges", "source", "distances"}) EXPECT_TRUE(first.contains(key)) << key;

  const auto cfg = write_config(dir, "bench.json",
                                R"({"task": "bench", "aggregator": {"hidden_dim": 8},
                                    "bench": {"kinds": ["gru", "binary-gru", "max"], "sizes": [8], "repeats": 1}})");
  r = run_cli("bench-speed --config " + cfg.string() + " --out " + (dir / "b").string(), dir);
  ASSERT_EQ(r.status, 0) << r.err;
  const auto csv = lines(slurp(dir / "b" / "speed.csv"));
  ASSERT_EQ(csv.size(), 4u);
  EXPECT_EQ(csv[0], kSpeedHeader);
  EXPECT_EQ(csv[1].substr(csv[1].rfind(',') + 1), "8");  // gru depth
  EXPECT_EQ(csv[2].substr(csv[2].rfind(',') + 1), "3");  // binary-gru depth
  fs::remove_all(dir);
}
