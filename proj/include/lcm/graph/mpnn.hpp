#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <memory>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lcm/aggregators/aggregator.hpp"
#include "lcm/bench/common.hpp"
#include "lcm/core/adam.hpp"
#include "lcm/core/checkpoint.hpp"
#include "lcm/core/parallel.hpp"
#include "lcm/graph/task.hpp"

namespace lcm {

struct MpnnConfig {
  std::size_t layers = 6;
  std::size_t hidden_dim = 32;
  AggregatorConfig aggregator;  // hidden_dim is overridden by the MPNN's

  void validate() const {
    if (layers < 1) throw Error("mpnn.layers must be at least 1");
    if (hidden_dim < 1) throw Error("mpnn.hidden_dim must be positive");
    AggregatorConfig a = aggregator;
    a.hidden_dim = hidden_dim;
    a.validate();
  }
};

inline void to_json(nlohmann::json& j, const MpnnConfig& c) {
  j = {{"layers", c.layers}, {"hidden_dim", c.hidden_dim}, {"aggregator", c.aggregator}};
}

inline void from_json(const nlohmann::json& j, MpnnConfig& c) {
  if (!j.is_object()) throw Error("mpnn: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "layers") c.layers = value.get<std::size_t>();
    else if (key == "hidden_dim") c.hidden_dim = value.get<std::size_t>();
    else if (key == "aggregator") c.aggregator = value.get<AggregatorConfig>();
    else throw Error("mpnn: unknown key '" + key + "'");
  }
}

/// Disjoint union of graphs. Incoming messages of node u occupy rows
/// msg_offsets[u] .. msg_offsets[u+1] of the message matrix, one per
/// neighbour in ascending neighbour order.
struct GraphBatch {
  std::size_t nodes = 0;
  std::vector<std::size_t> receivers, senders;  // per message row
  std::vector<std::size_t> msg_offsets{0};
  std::vector<std::size_t> graph_offsets{0};  // node ranges per graph
  std::vector<std::size_t> degrees;
  Tensor<double> features;  // [nodes, 2]
  std::vector<double> targets;
  std::vector<double> scales;  // per node: max hop distance of its graph
};

inline GraphBatch make_graph_batch(std::span<const NodeTaskSample> samples) {
  GraphBatch b;
  std::vector<double> feats;
  for (const auto& s : samples) {
    const std::size_t base = b.nodes;
    const auto adj = s.graph.adjacency();
    for (std::size_t u = 0; u < s.graph.n; ++u) {
      for (auto v : adj[u]) {
        b.receivers.push_back(base + u);
        b.senders.push_back(base + v);
      }
      b.msg_offsets.push_back(b.receivers.size());
      b.degrees.push_back(adj[u].size());
      feats.push_back(u == s.source ? 1.0 : 0.0);
      feats.push_back(1.0);
      b.targets.push_back(s.targets[u]);
      b.scales.push_back(s.scale);
    }
    b.nodes += s.graph.n;
    b.graph_offsets.push_back(b.nodes);
  }
  b.features = Tensor<double>({b.nodes, 2}, std::move(feats));
  return b;
}

/// h_u <- phi(h_u, agg_{v in N(u)} psi(h_u, h_v)) for L layers after a linear
/// input projection, with psi and phi single dense+gelu layers and a linear
/// scalar readout per node. Each layer owns its aggregator parameters.
template <class T>
class Mpnn {
 public:
  explicit Mpnn(MpnnConfig config) : config_(std::move(config)) {
    config_.validate();
    config_.aggregator.hidden_dim = config_.hidden_dim;
    for (std::size_t l = 0; l < config_.layers; ++l) {
      aggs_.emplace_back(config_.aggregator, layer_prefix(l) + ".agg");
    }
  }

  const MpnnConfig& config() const { return config_; }
  const Aggregator<T>& aggregator(std::size_t layer) const { return aggs_.at(layer); }

  void add_parameters(ParameterStore<T>& store, Prng& prng) const {
    const std::size_t h = config_.hidden_dim;
    store.add("in.W", init_params<T>({2, h}, InitScheme::GlorotUniform, prng));
    store.add("in.b", init_params<T>({h}, InitScheme::Zeros, prng));
    for (std::size_t l = 0; l < config_.layers; ++l) {
      const auto p = layer_prefix(l);
      store.add(p + ".msg.W", init_params<T>({2 * h, h}, InitScheme::GlorotUniform, prng));
      store.add(p + ".msg.b", init_params<T>({h}, InitScheme::Zeros, prng));
      store.add(p + ".upd.W", init_params<T>({2 * h, h}, InitScheme::GlorotUniform, prng));
      store.add(p + ".upd.b", init_params<T>({h}, InitScheme::Zeros, prng));
      aggs_[l].add_parameters(store, prng);
    }
    store.add("head.W", init_params<T>({h, 1}, InitScheme::GlorotUniform, prng));
    store.add("head.b", init_params<T>({1}, InitScheme::Zeros, prng));
  }

  struct Output {
    Var<T> predictions;  // [nodes, 1]
    std::array<double, kRegKinds> reg_values{};  // per-kind regularizer means, summed over layers
    Var<T> reg_total;                           // weighted regularization, summed over layers
  };

  Output forward(Tape<T>& tape, ParameterStore<T>& store, const GraphBatch& batch, Prng* rng = nullptr) const {
    Output out;
    Var<T> h = dense(tape.constant(batch.features.template cast<T>()), tape.param(store, "in.W"),
                     tape.param(store, "in.b"));
    out.reg_total = tape.constant(Tensor<T>::scalar(T{0}));
    for (std::size_t l = 0; l < config_.layers; ++l) {
      const auto p = layer_prefix(l);
      AggregateOutput<T> agg;
      if (batch.receivers.empty()) {
        agg = aggs_[l].apply(tape, store, nullptr, batch.msg_offsets, rng);
      } else {
        const Var<T> pair = concat<T>({gather_rows(h, batch.receivers), gather_rows(h, batch.senders)});
        const Var<T> messages = gelu(dense(pair, tape.param(store, p + ".msg.W"), tape.param(store, p + ".msg.b")));
        agg = aggs_[l].apply(tape, store, &messages, batch.msg_offsets, rng);
      }
      out.reg_total = add(out.reg_total, aggs_[l].regularization(tape, agg.reg));
      for (std::size_t k = 0; k < kRegKinds; ++k) out.reg_values[k] += agg.reg.value(static_cast<RegKind>(k));
      h = gelu(dense(concat<T>({h, agg.value}), tape.param(store, p + ".upd.W"), tape.param(store, p + ".upd.b")));
    }
    out.predictions = dense(h, tape.param(store, "head.W"), tape.param(store, "head.b"));
    return out;
  }

  /// Resolves pna_delta from training degrees when left at 0.
  static MpnnConfig resolve(MpnnConfig cfg, std::span<const NodeTaskSample> train) {
    cfg.aggregator.hidden_dim = cfg.hidden_dim;
    if (cfg.aggregator.kind == AggKind::PnaLite && cfg.aggregator.pna_delta == 0.0) {
      std::vector<std::size_t> degrees;
      for (const auto& s : train) {
        for (const auto& a : s.graph.adjacency()) degrees.push_back(a.size());
      }
      cfg.aggregator.pna_delta = mean_log_degree(degrees);
    }
    return cfg;
  }

 private:
  static std::string layer_prefix(std::size_t l) { return "layer" + std::to_string(l); }

  MpnnConfig config_;
  std::vector<Aggregator<T>> aggs_;
};

struct GnnScore {
  double mse = 0.0;
  double accuracy = 0.0;  // nodes whose rescaled prediction rounds to the true hop count
  std::size_t nodes = 0;
};

inline GnnScore score_graphs(const Mpnn<float>& model, ParameterStore<float>& store,
                             std::span<const NodeTaskSample> samples, std::size_t chunk = 64) {
  const std::size_t chunks = (samples.size() + chunk - 1) / chunk;
  std::vector<double> sq(chunks, 0.0);
  std::vector<std::size_t> hits(chunks, 0), nodes(chunks, 0);
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t begin = c * chunk, end = std::min(samples.size(), begin + chunk);
    const auto batch = make_graph_batch(samples.subspan(begin, end - begin));
    Tape<float> tape;
    const auto pred = model.forward(tape, store, batch).predictions.value();
    for (std::size_t u = 0; u < batch.nodes; ++u) {
      const double d = static_cast<double>(pred[u]) - batch.targets[u];
      sq[c] += d * d;
      hits[c] += std::lround(static_cast<double>(pred[u]) * batch.scales[u]) ==
                 std::lround(batch.targets[u] * batch.scales[u]);
    }
    nodes[c] = batch.nodes;
  });
  GnnScore s;
  double total = 0.0;
  std::size_t correct = 0;
  for (std::size_t c = 0; c < chunks; ++c) {
    total += sq[c];
    correct += hits[c];
    s.nodes += nodes[c];
  }
  s.mse = total / static_cast<double>(s.nodes);
  s.accuracy = static_cast<double>(correct) / static_cast<double>(s.nodes);
  return s;
}

/// Mean node target over a sample set: the constant predictor used as baseline.
inline double mean_target(std::span<const NodeTaskSample> samples) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& s : samples) {
    for (double t : s.targets) {
      total += t;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

inline double constant_mse(std::span<const NodeTaskSample> samples, double value) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& s : samples) {
    for (double t : s.targets) {
      total += (t - value) * (t - value);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

struct GnnEvalReport {
  std::string kind;
  std::uint64_t seed = 0;
  double mse = 0.0;
  double log10_mse = 0.0;
  double baseline_mse = 0.0;
  double ratio = 0.0;  // mse / baseline_mse
  double accuracy = 0.0;
};

inline void to_json(nlohmann::json& j, const GnnEvalReport& r) {
  j = {{"task", "sssp"},          {"kind", r.kind},         {"seed", r.seed},   {"mse", r.mse},
       {"log10_mse", r.log10_mse}, {"baseline_mse", r.baseline_mse}, {"ratio", r.ratio}, {"accuracy", r.accuracy}};
}

/// Test-set MSE on normalized distances against the predict-the-training-mean baseline.
inline GnnEvalReport eval_gnn(const Mpnn<float>& model, ParameterStore<float>& store, const GraphTaskConfig& task,
                              std::uint64_t seed) {
  const auto train = gen_graph_split(task, GraphSplit::Train);
  const auto test = gen_graph_split(task, GraphSplit::Test);
  const auto score = score_graphs(model, store, test);
  GnnEvalReport r;
  r.kind = std::string(to_string(model.config().aggregator.kind));
  if (model.config().aggregator.lambda_assoc > 0) r.kind += "-assoc";
  r.seed = seed;
  r.mse = score.mse;
  r.log10_mse = std::log10(score.mse);
  r.baseline_mse = constant_mse(test, mean_target(train));
  r.ratio = r.mse / r.baseline_mse;
  r.accuracy = score.accuracy;
  return r;
}

struct GnnTrainOptions {
  std::filesystem::path out_dir;
  std::ostream* log = nullptr;
  std::function<void(ParameterStore<float>&, std::size_t step)> before_step;
};

struct GnnTrainResult {
  MpnnConfig config;  // resolved
  std::vector<MetricsRow> metrics;
  std::size_t best_epoch = 0;
  double best_val_mse = 0.0;
  ParameterStore<float> best;
  double mean_epoch_ms = 0.0;
};

/// Adam on node MSE plus weighted regularizers; keeps the lowest validation MSE.
inline GnnTrainResult train_gnn(const MpnnConfig& config, const GraphTaskConfig& task, const TrainConfig& train,
                                std::uint64_t seed, const GnnTrainOptions& options = {}) {
  train.validate();
  const auto train_set = gen_graph_split(task, GraphSplit::Train);
  const auto val_set = gen_graph_split(task, GraphSplit::Val);

  GnnTrainResult result;
  result.config = Mpnn<float>::resolve(config, train_set);
  result.best_val_mse = std::numeric_limits<double>::infinity();
  const Mpnn<float> model(result.config);
  ParameterStore<float> store;
  Prng init_rng(seed, 0), order_rng(seed, 1), agg_rng(seed, 2);
  model.add_parameters(store, init_rng);

  MetricsWriter writer;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    writer = MetricsWriter(options.out_dir / "metrics.csv");
  }
  const AdamConfig adam{train.lr};
  std::size_t step = 0;
  double total_ms = 0.0;
  const RegKind kinds[] = {RegKind::Comm, RegKind::Assoc, RegKind::Swap};

  for (std::size_t epoch = 1; epoch <= train.epochs; ++epoch) {
    Stopwatch clock;
    const auto order = order_rng.permutation(train_set.size());
    double loss_sum = 0.0;
    std::size_t hits = 0, nodes = 0, batches = 0;
    std::array<double, 3> reg_sum{};
    for (std::size_t begin = 0; begin < order.size(); begin += train.batch) {
      const std::size_t end = std::min(order.size(), begin + train.batch);
      std::vector<NodeTaskSample> chosen;
      for (std::size_t i = begin; i < end; ++i) chosen.push_back(train_set[order[i]]);
      const auto batch = make_graph_batch(chosen);
      if (options.before_step) options.before_step(store, step);

      Tape<float> tape;
      auto out = model.forward(tape, store, batch, &agg_rng);
      Tensor<float> y({batch.nodes, 1});
      for (std::size_t u = 0; u < batch.nodes; ++u) y[u] = static_cast<float>(batch.targets[u]);
      const Var<float> task_loss = mse(out.predictions, tape.constant(std::move(y)));
      const Var<float> total = add(task_loss, out.reg_total);
      const double loss = total.value().item();
      if (!std::isfinite(loss)) {
        if (!options.out_dir.empty()) write_diagnostic(options.out_dir, epoch, step, loss, store);
        throw TrainingError("non-finite loss " + std::to_string(loss) + " at epoch " + std::to_string(epoch) +
                            ", step " + std::to_string(step));
      }
      const auto& pred = out.predictions.value();
      for (std::size_t u = 0; u < batch.nodes; ++u) {
        hits += std::lround(static_cast<double>(pred[u]) * batch.scales[u]) ==
                std::lround(batch.targets[u] * batch.scales[u]);
      }
      nodes += batch.nodes;
      loss_sum += task_loss.value().item();
      for (int k = 0; k < 3; ++k) reg_sum[k] += out.reg_values[static_cast<std::size_t>(kinds[k])];
      tape.backward(total);
      adam_step(store, adam);
      ++batches;
      ++step;
    }
    const double train_ms = clock.ms();
    total_ms += train_ms;

    MetricsRow tr;
    tr.epoch = epoch;
    tr.split = "train";
    tr.loss = loss_sum / static_cast<double>(batches);
    tr.accuracy = static_cast<double>(hits) / static_cast<double>(nodes);
    std::optional<double>* cols[] = {&tr.comm_loss, &tr.assoc_loss, &tr.swap_loss};
    for (int k = 0; k < 3; ++k) {
      if (model.aggregator(0).computes(kinds[k])) *cols[k] = reg_sum[k] / static_cast<double>(batches);
    }
    tr.wall_ms = train_ms;

    Stopwatch val_clock;
    const auto score = score_graphs(model, store, val_set);
    MetricsRow va;
    va.epoch = epoch;
    va.split = "val";
    va.loss = score.mse;
    va.accuracy = score.accuracy;
    va.wall_ms = val_clock.ms();
    for (const auto& row : {tr, va}) {
      writer.write(row);
      result.metrics.push_back(row);
    }
    if (va.loss < result.best_val_mse) {
      result.best_val_mse = va.loss;
      result.best_epoch = epoch;
      result.best = store;
    }
    if (options.log != nullptr) {
      *options.log << "sssp " << to_string(result.config.aggregator.kind) << " seed " << seed << " epoch " << epoch
                   << " train_mse " << tr.loss << " val_mse " << va.loss << " (" << static_cast<long>(train_ms)
                   << " ms)\n";
      options.log->flush();
    }
  }
  result.mean_epoch_ms = total_ms / static_cast<double>(train.epochs);
  if (!options.out_dir.empty()) {
    save_checkpoint(result.best, options.out_dir / "checkpoint");
    const nlohmann::json model_json = {{"mpnn", result.config},
                                       {"best_epoch", result.best_epoch},
                                       {"best_val_mse", result.best_val_mse},
                                       {"mean_epoch_ms", result.mean_epoch_ms},
                                       {"seed", seed}};
    std::ofstream(options.out_dir / "model.json") << model_json.dump(2) << '\n';
  }
  return result;
}

}  // namespace lcm
