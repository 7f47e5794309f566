#pragma once

// Small graph builders shared by the unit and acceptance tests.

#include "procgraph/agent.hpp"
#include "procgraph/graph.hpp"

#include <string>
#include <utility>
#include <vector>

namespace procgraph::testing {

inline ProcessNode make_node(std::string key, int integrity = 2, std::int64_t first_seen_s = 0,
                             std::int64_t last_seen_s = 0) {
  ProcessNode n;
  n.label = key;
  n.key = std::move(key);
  n.integrity_ordinal = integrity;
  n.first_seen = UtcTime{first_seen_s * 1'000'000};
  n.last_seen = UtcTime{last_seen_s * 1'000'000};
  return n;
}

inline CausalEdge make_edge(NodeId s, NodeId t, double weight = 1.0) {
  CausalEdge e;
  e.source = s;
  e.target = t;
  e.weight = weight;
  e.kinds[EventKind::ProcessCreate] = static_cast<std::size_t>(weight);
  return e;
}

/// n0 -> n1 -> ... -> n{n-1}, unit weights, equal integrity.
inline EventGraph chain_graph(std::size_t n) {
  std::vector<ProcessNode> nodes;
  std::vector<CausalEdge> edges;
  for (std::size_t i = 0; i < n; ++i) nodes.push_back(make_node("n" + std::to_string(i), 2, i, i));
  for (std::size_t i = 0; i + 1 < n; ++i) edges.push_back(make_edge(i, i + 1));
  return EventGraph(std::move(nodes), std::move(edges));
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(rng.uniform() * static_cast<double>(n)) % n;
}

/// Random digraph with integer weights 1..4, random integrity in -1..4 and
/// optional self-loops.
inline EventGraph random_graph(Rng& rng, std::size_t n, double edge_p, bool self_loops = false) {
  std::vector<ProcessNode> nodes;
  std::vector<CausalEdge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    const int integrity = static_cast<int>(uniform_index(rng, 6)) - 1;
    const auto t0 = static_cast<std::int64_t>(uniform_index(rng, 100));
    nodes.push_back(make_node("v" + std::to_string(i), integrity, t0, t0 + uniform_index(rng, 50)));
  }
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t t = 0; t < n; ++t) {
      if (s == t && !self_loops) continue;
      if (rng.uniform() < edge_p) edges.push_back(make_edge(s, t, 1.0 + static_cast<double>(uniform_index(rng, 4))));
    }
  }
  return EventGraph(std::move(nodes), std::move(edges));
}

/// Random DAG: edges only from lower to higher index.
inline EventGraph random_dag(Rng& rng, std::size_t n, double edge_p) {
  std::vector<ProcessNode> nodes;
  std::vector<CausalEdge> edges;
  for (std::size_t i = 0; i < n; ++i) nodes.push_back(make_node("d" + std::to_string(i), 2, uniform_index(rng, 5)));
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t t = s + 1; t < n; ++t) {
      if (rng.uniform() < edge_p) edges.push_back(make_edge(s, t));
    }
  }
  return EventGraph(std::move(nodes), std::move(edges));
}

}  // namespace procgraph::testing
