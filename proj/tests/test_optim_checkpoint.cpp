#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include <json.hpp>

#include "lcm/core/adam.hpp"
#include "lcm/core/checkpoint.hpp"
#include "lcm/core/ops.hpp"

using namespace lcm;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("lcm_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  return dir;
}

void set_grad(ParameterStore<double>& store, const std::string& name, double g) {
  auto& e = store.entry(store.index_of(name));
  e.grad.fill(g);
  e.has_grad = true;
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParameterStore<float> store;
  store.add("p", Tensor<float>::vector({0.25f, -3.0f}));
  store.entry(0).has_grad = true;
  adam_step(store, AdamConfig{});
  EXPECT_EQ(store.value("p")[0], 0.25f);
  EXPECT_EQ(store.value("p")[1], -3.0f);
  EXPECT_EQ(store.step(), 1);
}

TEST(Adam, FirstStepOnUnitGradient) {
  // m_hat = g = 1 and sqrt(v_hat) = 1, so the update is lr / (1 + eps).
  ParameterStore<double> store;
  store.add("p", Tensor<double>::scalar(1.0));
  set_grad(store, "p", 1.0);
  adam_step(store, AdamConfig{1e-4});
  EXPECT_NEAR(store.value("p")[0], 1.0 - 1e-4 / (1.0 + 1e-8), 1e-15);
  EXPECT_FALSE(store.entry(0).has_grad);
  EXPECT_EQ(store.grad("p")[0], 0.0);
}

TEST(Adam, ConstantGradientDriftsByLearningRatePerStep) {
  ParameterStore<double> store;
  store.add("p", Tensor<double>::scalar(0.0));
  double previous = 0.0;
  for (int step = 1; step <= 500; ++step) {
    set_grad(store, "p", 0.3);
    adam_step(store, AdamConfig{1e-3});
    const double now = store.value("p")[0];
    ASSERT_LT(now, previous);
    ASSERT_NEAR(previous - now, 1e-3, 1e-7);
    previous = now;
  }
  EXPECT_NEAR(previous, -0.5, 1e-4);
}

TEST(Adam, MissingGradientNamesParameter) {
  ParameterStore<float> store;
  store.add("encoder.W", Tensor<float>::vector({1.0f}));
  try {
    adam_step(store, AdamConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("encoder.W"), std::string::npos);
  }
}

TEST(Init, ZerosGlorotAndDeterminism) {
  Prng a(1, 2);
  EXPECT_EQ(init_params<float>({4}, "zeros", a), Tensor<float>::zeros({4}));

  Prng prng(5);
  const double bound = std::sqrt(6.0 / 16.0);
  std::size_t samples = 0;
  while (samples < 10000) {
    auto t = init_params<float>({8, 8}, InitScheme::GlorotUniform, prng);
    for (float v : t.values()) {
      ASSERT_LE(std::abs(v), bound);
      ++samples;
    }
  }

  Prng s1(9, 3), s2(9, 3);
  EXPECT_TRUE(bit_identical(init_params<float>({5, 7}, "glorot-uniform", s1),
                            init_params<float>({5, 7}, "glorot-uniform", s2)));
  Prng s3(9, 3), s4(9, 3);
  EXPECT_TRUE(bit_identical(init_params<float>({64}, "small-normal", s3), init_params<float>({64}, "small-normal", s4)));
  EXPECT_THROW(init_params<float>({3}, "he-normal", s1), Error);
}

TEST(Init, SmallNormalHasRoughlyTheStatedSpread) {
  Prng prng(12);
  auto t = init_params<double>({20000}, InitScheme::SmallNormal, prng);
  double sum = 0, sq = 0;
  for (double v : t.values()) {
    sum += v;
    sq += v * v;
  }
  const double mean = sum / 20000.0;
  EXPECT_NEAR(mean, 0.0, 1e-3);
  EXPECT_NEAR(std::sqrt(sq / 20000.0 - mean * mean), 0.02, 1e-3);
}

TEST(Prng, StreamsAreReproducibleAndDistinct) {
  Prng a(42, 0), b(42, 0), c(42, 1);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs = differs || x != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Prng prng(3);
  ParameterStore<float> store;
  store.add("a.W", init_params<float>({5, 3}, InitScheme::GlorotUniform, prng));
  store.add("a.b", init_params<float>({3}, InitScheme::SmallNormal, prng));
  store.add("odd", Tensor<float>::vector({-0.0f, 1e-38f, 3.4e38f}));
  const auto dir = scratch_dir("roundtrip");
  save_checkpoint(store, dir);
  const auto loaded = load_checkpoint(dir);
  ASSERT_EQ(loaded.size(), store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    EXPECT_EQ(loaded.entry(i).name, store.entry(i).name);
    EXPECT_TRUE(bit_identical(loaded.entry(i).value, store.entry(i).value));
  }
  const auto manifest = nlohmann::json::parse(std::ifstream(dir / "manifest.json"));
  EXPECT_EQ(manifest["version"], 1);
  EXPECT_EQ(manifest["params"][1]["offset"], 60);
  EXPECT_EQ(manifest["params"][1]["len"], 12);
  EXPECT_EQ(fs::file_size(dir / "weights.bin"), 4u * (15 + 3 + 3));
  fs::remove_all(dir);
}

TEST(Checkpoint, TruncatedBlobFails) {
  ParameterStore<float> store;
  store.add("w", Tensor<float>({4, 4}, 1.5f));
  const auto dir = scratch_dir("truncated");
  save_checkpoint(store, dir);
  fs::resize_file(dir / "weights.bin", 40);
  EXPECT_THROW(load_checkpoint(dir), CheckpointError);
  fs::remove_all(dir);
}

TEST(Checkpoint, DuplicateNameAndUnknownVersionFail) {
  ParameterStore<float> store;
  store.add("w", Tensor<float>({2}, 1.0f));
  const auto dir = scratch_dir("manifest");
  save_checkpoint(store, dir);
  auto manifest = nlohmann::json::parse(std::ifstream(dir / "manifest.json"));

  auto dup = manifest;
  dup["params"].push_back(dup["params"][0]);
  std::ofstream(dir / "manifest.json") << dup.dump();
  EXPECT_THROW(load_checkpoint(dir), CheckpointError);

  auto ver = manifest;
  ver["version"] = 2;
  std::ofstream(dir / "manifest.json") << ver.dump();
  EXPECT_THROW(load_checkpoint(dir), CheckpointError);
  fs::remove_all(dir);
}

TEST(Checkpoint, LoadIntoMatchingStore) {
  ParameterStore<float> src, dst;
  src.add("x", Tensor<float>::vector({1, 2, 3}));
  dst.add("x", Tensor<float>::zeros({3}));
  const auto dir = scratch_dir("into");
  save_checkpoint(src, dir);
  load_checkpoint_into(dst, dir);
  EXPECT_TRUE(bit_identical(dst.value("x"), src.value("x")));
  fs::remove_all(dir);
}
