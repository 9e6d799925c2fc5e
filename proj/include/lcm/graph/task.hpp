#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lcm/core/prng.hpp"
#include "lcm/core/tensor.hpp"

namespace lcm {

/// Undirected simple graph. Node features are [is_source, 1] per node.
struct Graph {
  std::size_t n = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;

  /// Sorted neighbour lists.
  std::vector<std::vector<std::size_t>> adjacency() const {
    std::vector<std::vector<std::size_t>> adj(n);
    for (const auto& [u, v] : edges) {
      adj[u].push_back(v);
      adj[v].push_back(u);
    }
    for (auto& a : adj) std::sort(a.begin(), a.end());
    return adj;
  }

  /// Throws on self-loops, duplicate edges or out-of-range endpoints.
  void validate() const {
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (auto [u, v] : edges) {
      if (u >= n || v >= n) throw Error("graph: edge endpoint out of range");
      if (u == v) throw Error("graph: self-loop at node " + std::to_string(u));
      if (u > v) std::swap(u, v);
      if (!seen.emplace(u, v).second) {
        throw Error("graph: duplicate edge (" + std::to_string(u) + ", " + std::to_string(v) + ")");
      }
    }
  }
};

inline bool is_connected(const Graph& g) {
  if (g.n == 0) return false;
  const auto adj = g.adjacency();
  std::vector<bool> seen(g.n, false);
  std::vector<std::size_t> stack{0};
  seen[0] = true;
  std::size_t count = 1;
  while (!stack.empty()) {
    const auto u = stack.back();
    stack.pop_back();
    for (auto v : adj[u]) {
      if (!seen[v]) {
        seen[v] = true;
        ++count;
        stack.push_back(v);
      }
    }
  }
  return count == g.n;
}

/// Breadth-first hop distances from `source`.
inline std::vector<std::size_t> sssp_oracle(const Graph& g, std::size_t source) {
  if (source >= g.n) throw Error("sssp_oracle: source out of range");
  constexpr auto kUnreached = std::numeric_limits<std::size_t>::max();
  const auto adj = g.adjacency();
  std::vector<std::size_t> dist(g.n, kUnreached);
  std::deque<std::size_t> queue{source};
  dist[source] = 0;
  while (!queue.empty()) {
    const auto u = queue.front();
    queue.pop_front();
    for (auto v : adj[u]) {
      if (dist[v] == kUnreached) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
    }
  }
  for (std::size_t u = 0; u < g.n; ++u) {
    if (dist[u] == kUnreached) throw Error("sssp_oracle: node " + std::to_string(u) + " is unreachable");
  }
  return dist;
}

struct NodeTaskSample {
  Graph graph;
  std::size_t source = 0;
  std::vector<double> targets;  // hop distance / max hop distance
  double scale = 1.0;           // max hop distance (1 for a single node)
};

inline NodeTaskSample make_node_task(Graph g, std::size_t source) {
  g.validate();
  NodeTaskSample s;
  const auto dist = sssp_oracle(g, source);
  const auto max_dist = *std::max_element(dist.begin(), dist.end());
  s.scale = max_dist == 0 ? 1.0 : static_cast<double>(max_dist);
  for (auto d : dist) s.targets.push_back(static_cast<double>(d) / s.scale);
  s.graph = std::move(g);
  s.source = source;
  return s;
}

/// Connected Erdos-Renyi graph with node count uniform in [n_low, n_high] and a
/// uniform source. Gives up after 1000 disconnected draws.
inline NodeTaskSample gen_graph_task(Prng& prng, std::size_t n_low = 8, std::size_t n_high = 16,
                                     double edge_prob = 0.3) {
  if (n_low < 1 || n_low > n_high) throw Error("gen_graph_task: need 1 <= n_low <= n_high");
  if (!(edge_prob >= 0.0 && edge_prob <= 1.0)) throw Error("gen_graph_task: edge_prob must lie in [0, 1]");
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Graph g;
    g.n = static_cast<std::size_t>(prng.uniform_int(static_cast<std::int64_t>(n_low), static_cast<std::int64_t>(n_high)));
    for (std::size_t u = 0; u < g.n; ++u) {
      for (std::size_t v = u + 1; v < g.n; ++v) {
        if (prng.uniform() < edge_prob) g.edges.emplace_back(u, v);
      }
    }
    if (!is_connected(g)) continue;
    const std::size_t source = prng.index(g.n);
    return make_node_task(std::move(g), source);
  }
  throw Error("gen_graph_task: no connected graph in 1000 attempts (edge_prob too small?)");
}

struct GraphTaskConfig {
  std::uint64_t seed = 0;
  std::size_t train_count = 2000;
  std::size_t val_count = 200;
  std::size_t test_count = 500;
  std::size_t n_low = 8;
  std::size_t n_high = 16;
  double edge_prob = 0.3;

  void validate() const {
    if (train_count == 0 || test_count == 0 || val_count == 0) throw Error("graph task: split sizes must be positive");
    if (n_low < 2 || n_low > n_high) throw Error("graph task: need 2 <= n_low <= n_high");
    if (!(edge_prob > 0.0 && edge_prob <= 1.0)) throw Error("graph task: edge_prob must lie in (0, 1]");
  }
};

inline void to_json(nlohmann::json& j, const GraphTaskConfig& c) {
  j = {{"seed", c.seed},           {"train_count", c.train_count}, {"val_count", c.val_count},
       {"test_count", c.test_count}, {"n_low", c.n_low},             {"n_high", c.n_high},
       {"edge_prob", c.edge_prob}};
}

inline void from_json(const nlohmann::json& j, GraphTaskConfig& c) {
  if (!j.is_object()) throw Error("dataset: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "train_count") c.train_count = value.get<std::size_t>();
      else if (key == "val_count") c.val_count = value.get<std::size_t>();
      else if (key == "test_count") c.test_count = value.get<std::size_t>();
      else if (key == "n_low") c.n_low = value.get<std::size_t>();
      else if (key == "n_high") c.n_high = value.get<std::size_t>();
      else if (key == "edge_prob") c.edge_prob = value.get<double>();
      else throw Error("dataset: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw Error("dataset." + key + ": " + e.what());
    }
  }
}

enum class GraphSplit : std::uint64_t { Train = 1, Val = 2, Test = 3 };

/// Splits draw from separate streams of the task seed, so they are disjoint
/// in generation and stable when another split's size changes.
inline std::vector<NodeTaskSample> gen_graph_split(const GraphTaskConfig& cfg, GraphSplit split) {
  cfg.validate();
  const std::size_t count = split == GraphSplit::Train ? cfg.train_count
                            : split == GraphSplit::Val ? cfg.val_count
                                                       : cfg.test_count;
  Prng prng(cfg.seed, static_cast<std::uint64_t>(split));
  std::vector<NodeTaskSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(gen_graph_task(prng, cfg.n_low, cfg.n_high, cfg.edge_prob));
  return out;
}

}  // namespace lcm
