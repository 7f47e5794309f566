#pragma once

#include "procgraph/common.hpp"
#include "procgraph/ingest.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace procgraph {

using NodeId = std::size_t;

struct ProcessNode {
  std::string key;
  std::string label;
  int integrity_ordinal = -1;  // -1 Unknown, 0..4 Untrusted..System
  UtcTime first_seen;
  UtcTime last_seen;
  std::map<std::string, std::string> attributes;

  double event_duration() const { return last_seen.seconds_since(first_seen); }

  friend bool operator==(const ProcessNode&, const ProcessNode&) = default;
};

struct CausalEdge {
  NodeId source = 0;
  NodeId target = 0;
  double weight = 1.0;             // occurrence count
  double normalized_weight = 1.0;  // weight / max weight in the graph
  std::map<EventKind, std::size_t> kinds;
  UtcTime first_seen;

  friend bool operator==(const CausalEdge&, const CausalEdge&) = default;
};

/// Immutable weighted directed graph. Node ids are dense indices into
/// nodes(); they define the action numbering of the environment.
class EventGraph {
 public:
  EventGraph() = default;

  /// Parallel (source, target) entries are merged: weights and kind counts
  /// sum, first_seen takes the minimum. Throws ConfigError on duplicate keys
  /// or out-of-range endpoints.
  EventGraph(std::vector<ProcessNode> nodes, std::vector<CausalEdge> edges);

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  bool empty() const { return nodes_.empty(); }

  const std::vector<ProcessNode>& nodes() const { return nodes_; }
  const ProcessNode& node(NodeId id) const { return nodes_.at(id); }
  /// Sorted by (source, target).
  const std::vector<CausalEdge>& edges() const { return edges_; }

  std::optional<NodeId> find(const std::string& key) const;
  const CausalEdge* edge_between(NodeId source, NodeId target) const;
  bool has_edge(NodeId source, NodeId target) const { return edge_between(source, target) != nullptr; }

  /// Sorted successor / predecessor ids.
  std::span<const NodeId> successors(NodeId id) const { return successors_.at(id); }
  std::span<const NodeId> predecessors(NodeId id) const { return predecessors_.at(id); }
  std::size_t out_degree(NodeId id) const { return successors_.at(id).size(); }
  std::size_t in_degree(NodeId id) const { return predecessors_.at(id).size(); }

  double max_weight() const { return max_weight_; }

  friend bool operator==(const EventGraph& a, const EventGraph& b) {
    return a.nodes_ == b.nodes_ && a.edges_ == b.edges_;
  }

 private:
  std::vector<ProcessNode> nodes_;
  std::vector<CausalEdge> edges_;
  std::vector<std::vector<NodeId>> successors_;
  std::vector<std::vector<NodeId>> predecessors_;
  std::vector<std::vector<std::size_t>> out_edge_index_;  // parallel to successors_
  std::unordered_map<std::string, NodeId> index_;
  double max_weight_ = 0.0;
};

enum class NodeKeying { Label, LabelPid };

std::optional<NodeKeying> node_keying_from_name(std::string_view name);

/// One node per distinct key, ordered by (first_seen, key). Node attributes
/// aggregate across relations: earliest first_seen, latest last_seen, highest
/// integrity, first-seen value per attribute name.
EventGraph build_graph(std::span<const ParentChildRelation> relations,
                       NodeKeying keying = NodeKeying::Label);

/// Drops nodes with neither in- nor out-edges. Survivors keep relative order.
EventGraph prune_isolated(const EventGraph& g);

// --- features ---------------------------------------------------------------

struct EncoderConfig {
  std::size_t label_buckets = 32;
  std::size_t user_buckets = 8;
  std::size_t host_buckets = 8;
  std::optional<std::size_t> feature_dim;  // when set, must equal expected_dim()

  static constexpr std::size_t kScalarFeatures = 4;

  std::size_t expected_dim() const {
    return kScalarFeatures + label_buckets + user_buckets + host_buckets;
  }
  /// Throws ConfigError.
  void validate() const;
};

/// Row-major dense matrix of node features.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * cols, cols};
  }
};

/// 64-bit FNV-1a. Used for the hash one-hot buckets.
std::uint64_t fnv1a64(std::string_view text);

/// Per-node layout:
///   [0] integrity ordinal / 4 (Unknown -> 0)
///   [1] log1p(in-degree) / log1p(max in-degree)
///   [2] log1p(out-degree) / log1p(max out-degree)
///   [3] event duration, min-max normalized over the graph
///   then one-hot fnv1a64(label) % B_label, fnv1a64(user) % B_user,
///   fnv1a64(host) % B_host. Absent user/host leave their block zero.
FeatureMatrix encode_features(const EventGraph& g, const EncoderConfig& enc = {});

struct GraphSnapshot {
  std::size_t max_nodes = 0;
  std::size_t max_edges = 0;
  std::size_t feature_dim = 0;
  std::vector<double> node_features;    // max_nodes x feature_dim, row-major
  std::vector<std::int64_t> edge_index;  // 2 x max_edges: sources then targets
  std::size_t num_nodes = 0;
  std::size_t num_edges = 0;
  std::vector<std::uint8_t> node_mask;  // max_nodes
  NodeId current_node = 0;

  std::int64_t edge_source(std::size_t e) const { return edge_index[e]; }
  std::int64_t edge_target(std::size_t e) const { return edge_index[max_edges + e]; }
  double feature(std::size_t node, std::size_t col) const {
    return node_features[node * feature_dim + col];
  }

  friend bool operator==(const GraphSnapshot&, const GraphSnapshot&) = default;
};

/// Throws SizingError when the graph does not fit the capacities and
/// UsageError when `current` is not a node of the graph.
GraphSnapshot snapshot(const EventGraph& g, const FeatureMatrix& features, NodeId current,
                       std::size_t max_nodes, std::size_t max_edges);
GraphSnapshot snapshot(const EventGraph& g, NodeId current, std::size_t max_nodes,
                       std::size_t max_edges, const EncoderConfig& enc = {});

// --- import / export -----------------------------------------------------------

enum class GraphFormat { NodeLinkJson, Dot };

/// Node-link JSON:
///   {"directed": true,
///    "nodes": [{"key","label","integrity","first_seen","last_seen","attrs"}],
///    "edges": [{"source","target","weight","kinds","first_seen"}]}
/// Edge endpoints are node keys. DOT output uses label="<name>" and a
/// penwidth proportional to the normalized weight.
std::string export_graph(const EventGraph& g, GraphFormat format);
void export_graph(std::ostream& out, const EventGraph& g, GraphFormat format);

/// Throws ParseError with a JSON-pointer-style location.
EventGraph import_graph(std::string_view node_link_json);

}  // namespace procgraph
