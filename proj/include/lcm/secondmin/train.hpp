#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lcm/bench/common.hpp"
#include "lcm/core/adam.hpp"
#include "lcm/core/checkpoint.hpp"
#include "lcm/core/parallel.hpp"
#include "lcm/secondmin/model.hpp"

namespace lcm {

/// Name used in reports: the kind, with "-assoc" / "-swap" when the
/// corresponding regularizer is active.
inline std::string display_name(const AggregatorConfig& c) {
  std::string name(to_string(c.kind));
  if (c.lambda_assoc > 0) name += "-assoc";
  if (c.lambda_comm > 0) name += "-comm";
  if (c.lambda_swap > 0) name += "-swap";
  return name;
}

/// Decoded predictions for one batch plus the aggregation counters.
struct Prediction {
  std::vector<Bits8> bits;
  std::vector<double> bce;  // per-sample mean bit cross-entropy; empty if unavailable
  AggStats stats;
};

using Predictor = std::function<Prediction(const MultisetBatch&)>;

/// Forward pass without training behaviour. Safe to call concurrently on one
/// store: each call records on its own tape and only reads parameters.
inline Prediction predict_batch(const SecondMinModel<float>& model, ParameterStore<float>& store,
                                const MultisetBatch& batch) {
  Tape<float> tape;
  auto out = model.forward(tape, store, batch);
  const auto& z = out.logits.value();
  Prediction p;
  p.stats = out.agg.stats;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    p.bits.push_back(decode_prediction(z, s));
    double total = 0.0;
    for (int i = 0; i < 8; ++i) {
      const double zi = z[s * 8 + i], yi = batch.labels[s][i];
      total += std::max(zi, 0.0) - zi * yi + std::log1p(std::exp(-std::abs(zi)));
    }
    p.bce.push_back(total / 8.0);
  }
  return p;
}

inline Predictor model_predictor(const SecondMinModel<float>& model, ParameterStore<float>& store) {
  return [&model, &store](const MultisetBatch& b) { return predict_batch(model, store, b); };
}

struct SetScore {
  std::size_t count = 0;
  std::size_t correct = 0;
  double loss = 0.0;  // mean BCE, NaN if the predictor gives none
  AggStats stats;     // from the first chunk (all chunks share the size profile for fixed-size sets)
  double accuracy() const { return count == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(count); }
};

/// Scores a sample set in chunks, in parallel across chunks; the result does
/// not depend on the worker count.
inline SetScore score_samples(const Predictor& predict, std::span<const SecondMinSample> samples,
                              std::size_t chunk = 128) {
  const std::size_t chunks = (samples.size() + chunk - 1) / chunk;
  std::vector<Prediction> parts(chunks);
  std::vector<MultisetBatch> batches(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t begin = c * chunk, end = std::min(samples.size(), begin + chunk);
    std::vector<std::size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    batches[c] = make_batch(samples, idx);
    parts[c] = predict(batches[c]);
  });
  SetScore score;
  score.count = samples.size();
  double loss = 0.0;
  bool has_loss = true;
  for (std::size_t c = 0; c < chunks; ++c) {
    for (std::size_t s = 0; s < batches[c].size(); ++s) score.correct += parts[c].bits.at(s) == batches[c].labels[s];
    if (parts[c].bce.size() != batches[c].size()) has_loss = false;
    for (double l : parts[c].bce) loss += l;
  }
  score.loss = has_loss && score.count > 0 ? loss / static_cast<double>(score.count) : std::nan("");
  if (chunks > 0) score.stats = parts[0].stats;
  return score;
}

struct SizeResult {
  std::size_t n = 0;
  double accuracy = 0.0;
  std::size_t depth = 0;  // critical path of one aggregation
  double ops = 0.0;       // learned-operator applications per multiset
  double wall_ms = 0.0;
};

struct EvalReport {
  std::string kind;
  std::uint64_t seed = 0;
  std::vector<SizeResult> per_size;

  const SizeResult& at(std::size_t n) const {
    for (const auto& r : per_size) {
      if (r.n == n) return r;
    }
    throw Error("EvalReport: no result for size " + std::to_string(n));
  }

  /// Mean per-size accuracy over the sizes in [lo, hi] that were evaluated.
  double mean_accuracy(std::size_t lo, std::size_t hi) const {
    double total = 0.0;
    std::size_t k = 0;
    for (const auto& r : per_size) {
      if (r.n >= lo && r.n <= hi) {
        total += r.accuracy;
        ++k;
      }
    }
    if (k == 0) throw Error("EvalReport: no sizes in range");
    return total / static_cast<double>(k);
  }
};

inline void to_json(nlohmann::json& j, const SizeResult& r) {
  j = {{"n", r.n}, {"acc", r.accuracy}, {"depth", r.depth}, {"ops", r.ops}, {"wall_ms", r.wall_ms}};
}
inline void from_json(const nlohmann::json& j, SizeResult& r) {
  r.n = j.at("n").get<std::size_t>();
  r.accuracy = j.at("acc").get<double>();
  r.depth = j.at("depth").get<std::size_t>();
  r.ops = j.at("ops").get<double>();
  r.wall_ms = j.at("wall_ms").get<double>();
}
inline void to_json(nlohmann::json& j, const EvalReport& r) {
  j = {{"task", "secondmin"}, {"kind", r.kind}, {"seed", r.seed}, {"per_size", r.per_size}};
}
inline void from_json(const nlohmann::json& j, EvalReport& r) {
  r.kind = j.at("kind").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.per_size = j.at("per_size").get<std::vector<SizeResult>>();
}

/// Accuracy per multiset size on fresh sets of `n_per_size` samples drawn
/// from the dataset seed.
inline EvalReport evaluate_predictor(const Predictor& predict, const DatasetConfig& data,
                                     std::span<const std::size_t> sizes, std::size_t n_per_size) {
  EvalReport report;
  for (auto n : sizes) {
    const auto samples = gen_eval_set(data, n, n_per_size);
    Stopwatch clock;
    const auto score = score_samples(predict, samples);
    SizeResult r;
    r.n = n;
    r.accuracy = score.accuracy();
    r.depth = score.stats.critical_path;
    const std::size_t first_chunk = std::min<std::size_t>(128, samples.size());
    r.ops = static_cast<double>(score.stats.operator_applications) / static_cast<double>(first_chunk);
    r.wall_ms = clock.ms();
    report.per_size.push_back(r);
  }
  return report;
}

inline EvalReport evaluate_secondmin(const SecondMinModel<float>& model, ParameterStore<float>& store,
                                     const DatasetConfig& data, std::span<const std::size_t> sizes,
                                     std::size_t n_per_size, std::uint64_t seed) {
  auto report = evaluate_predictor(model_predictor(model, store), data, sizes, n_per_size);
  report.kind = display_name(model.aggregator().config());
  report.seed = seed;
  return report;
}

struct SecondMinTrainOptions {
  std::filesystem::path out_dir;  // empty: keep everything in memory
  std::ostream* log = nullptr;
  // Test hook, called before every optimizer step.
  std::function<void(ParameterStore<float>&, std::size_t step)> before_step;
};

struct SecondMinTrainResult {
  AggregatorConfig aggregator;  // resolved, e.g. with pna_delta filled in
  std::vector<MetricsRow> metrics;
  std::size_t best_epoch = 0;
  double best_val_accuracy = -1.0;
  ParameterStore<float> best;
  double mean_epoch_ms = 0.0;
};

/// Fills pna_delta from the training sizes when it is left at 0.
inline AggregatorConfig resolve_aggregator(AggregatorConfig agg, std::span<const SecondMinSample> train) {
  if (agg.kind == AggKind::PnaLite && agg.pna_delta == 0.0) {
    std::vector<std::size_t> sizes;
    for (const auto& s : train) sizes.push_back(s.values.size());
    agg.pna_delta = mean_log_degree(sizes);
  }
  return agg;
}

/// Adam on mean per-bit cross-entropy plus the weighted regularizer means.
/// Keeps the parameters of the epoch with the best validation accuracy.
inline SecondMinTrainResult train_secondmin(const AggregatorConfig& agg_config, const DatasetConfig& data,
                                            const TrainConfig& train, std::uint64_t seed,
                                            const SecondMinTrainOptions& options = {}) {
  train.validate();
  const auto train_set = gen_dataset(data);
  const auto val_set = gen_validation_set(data);

  SecondMinTrainResult result;
  result.aggregator = resolve_aggregator(agg_config, train_set);
  const SecondMinModel<float> model(result.aggregator);
  const auto& agg = model.aggregator();
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
  double total_epoch_ms = 0.0;
  const RegKind reg_kinds[] = {RegKind::Comm, RegKind::Assoc, RegKind::Swap};

  for (std::size_t epoch = 1; epoch <= train.epochs; ++epoch) {
    Stopwatch clock;
    const auto order = order_rng.permutation(train_set.size());
    double loss_sum = 0.0;
    std::size_t correct = 0, batches = 0;
    std::array<double, 3> reg_sum{};

    for (std::size_t begin = 0; begin < order.size(); begin += train.batch) {
      const std::size_t end = std::min(order.size(), begin + train.batch);
      const auto batch = make_batch(train_set, std::span<const std::size_t>(order.data() + begin, end - begin));
      if (options.before_step) options.before_step(store, step);

      Tape<float> tape;
      auto out = model.forward(tape, store, batch, &agg_rng);
      const Var<float> task = bce_with_logits(out.logits, tape.constant(label_tensor<float>(batch)));
      const Var<float> total = add(task, agg.regularization(tape, out.agg.reg));
      const double loss = total.value().item();
      if (!std::isfinite(loss)) {
        if (!options.out_dir.empty()) write_diagnostic(options.out_dir, epoch, step, loss, store);
        throw TrainingError("non-finite loss " + std::to_string(loss) + " at epoch " + std::to_string(epoch) +
                            ", step " + std::to_string(step));
      }
      loss_sum += task.value().item();
      correct += count_correct(out.logits.value(), batch);
      for (int k = 0; k < 3; ++k) reg_sum[k] += out.agg.reg.value(reg_kinds[k]);
      tape.backward(total);
      adam_step(store, adam);
      ++batches;
      ++step;
    }
    const double train_ms = clock.ms();
    total_epoch_ms += train_ms;

    MetricsRow tr;
    tr.epoch = epoch;
    tr.split = "train";
    tr.loss = loss_sum / static_cast<double>(batches);
    tr.accuracy = static_cast<double>(correct) / static_cast<double>(train_set.size());
    std::optional<double>* cols[] = {&tr.comm_loss, &tr.assoc_loss, &tr.swap_loss};
    for (int k = 0; k < 3; ++k) {
      if (agg.computes(reg_kinds[k])) *cols[k] = reg_sum[k] / static_cast<double>(batches);
    }
    tr.wall_ms = train_ms;

    Stopwatch val_clock;
    const auto score = score_samples(model_predictor(model, store), val_set);
    MetricsRow va;
    va.epoch = epoch;
    va.split = "val";
    va.loss = score.loss;
    va.accuracy = score.accuracy();
    va.wall_ms = val_clock.ms();

    for (const auto& row : {tr, va}) {
      writer.write(row);
      result.metrics.push_back(row);
    }
    if (va.accuracy > result.best_val_accuracy) {
      result.best_val_accuracy = va.accuracy;
      result.best_epoch = epoch;
      result.best = store;
    }
    if (options.log != nullptr) {
      *options.log << display_name(result.aggregator) << " seed " << seed << " epoch " << epoch << " loss "
                   << tr.loss << " train_acc " << tr.accuracy << " val_acc " << va.accuracy << " ("
                   << static_cast<long>(train_ms) << " ms)\n";
      options.log->flush();
    }
  }
  result.mean_epoch_ms = total_epoch_ms / static_cast<double>(train.epochs);

  if (!options.out_dir.empty()) {
    save_checkpoint(result.best, options.out_dir / "checkpoint");
    const nlohmann::json model_json = {{"aggregator", result.aggregator},
                                       {"best_epoch", result.best_epoch},
                                       {"best_val_accuracy", result.best_val_accuracy},
                                       {"mean_epoch_ms", result.mean_epoch_ms},
                                       {"seed", seed}};
    std::ofstream(options.out_dir / "model.json") << model_json.dump(2) << '\n';
  }
  return result;
}

struct SpeedRow {
  std::string kind;
  std::size_t n = 0;
  std::size_t batch = 0;
  double ms_per_step = 0.0;
  double epoch_s = 0.0;  // ms_per_step scaled to steps_per_epoch
  double ops = 0.0;
  std::size_t depth = 0;
};

inline constexpr const char* kSpeedHeader = "kind,n,batch,ms_per_step,epoch_s,ops,depth";

inline std::string to_csv_line(const SpeedRow& r) {
  return r.kind + "," + std::to_string(r.n) + "," + std::to_string(r.batch) + "," + format_number(r.ms_per_step) +
         "," + format_number(r.epoch_s) + "," + format_number(r.ops) + "," + std::to_string(r.depth);
}

/// Times full training steps (forward, backward, Adam) on batches of
/// fixed-size multisets. Depth and operation counts are exact; timings are
/// CPU wall-clock and informational.
inline std::vector<SpeedRow> bench_speed(std::span<const AggregatorConfig> kinds, std::span<const std::size_t> sizes,
                                         std::size_t batch, std::size_t repeats, std::size_t steps_per_epoch = 256,
                                         std::uint64_t seed = 1) {
  if (repeats == 0 || batch == 0) throw Error("bench_speed: batch and repeats must be positive");
  std::vector<SpeedRow> rows;
  DatasetConfig data;
  data.seed = seed;
  for (const auto& cfg : kinds) {
    for (auto n : sizes) {
      AggregatorConfig c = cfg;
      if (c.kind == AggKind::PnaLite && c.pna_delta == 0.0) c.pna_delta = std::log(static_cast<double>(n) + 1.0);
      const SecondMinModel<float> model(c);
      ParameterStore<float> store;
      Prng init(seed, 0), rng(seed, 2);
      model.add_parameters(store, init);
      const auto samples = gen_eval_set(data, n, batch);
      const auto mb = make_batch(samples);
      const auto labels = label_tensor<float>(mb);
      SpeedRow row;
      row.kind = display_name(c);
      row.n = n;
      row.batch = batch;
      Stopwatch clock;
      for (std::size_t r = 0; r < repeats; ++r) {
        Tape<float> tape;
        auto out = model.forward(tape, store, mb, &rng);
        const auto loss =
            add(bce_with_logits(out.logits, tape.constant(labels)), model.aggregator().regularization(tape, out.agg.reg));
        tape.backward(loss);
        adam_step(store, AdamConfig{});
        row.ops = static_cast<double>(out.agg.stats.operator_applications) / static_cast<double>(batch);
        row.depth = out.agg.stats.critical_path;
      }
      row.ms_per_step = clock.ms() / static_cast<double>(repeats);
      row.epoch_s = row.ms_per_step * static_cast<double>(steps_per_epoch) / 1000.0;
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace lcm
