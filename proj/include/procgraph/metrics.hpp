#pragma once

#include "procgraph/graph.hpp"

#include <map>
#include <string>
#include <vector>

namespace procgraph {

/// m / (n (n - 1)); 0 when n < 2.
double edge_density(std::size_t n, std::size_t m);

/// Undirected view used by clustering and degree connectivity: antiparallel
/// edges merge with summed weight, self-loops are dropped.
struct UndirectedView {
  std::vector<std::map<NodeId, double>> neighbors;  // neighbor -> weight
  double max_weight = 0.0;

  explicit UndirectedView(const EventGraph& g);
  std::size_t degree(NodeId u) const { return neighbors[u].size(); }
};

/// Weighted clustering with geometric-mean triangle intensity
///   c_u = 1/(k(k-1)) * sum over ordered neighbor pairs (v, w) of
///         (w_uv * w_uw * w_vw)^(1/3),  weights divided by the maximum weight.
/// Zero when deg(u) < 2.
double clustering_coefficient(const EventGraph& g, NodeId u);
std::vector<double> clustering_coefficients(const EventGraph& g);

/// Mean weighted average nearest-neighbor degree grouped by node degree.
/// k_nn,i = (1/s_i) sum_j w_ij k_j, s_i = sum_j w_ij; `weighted = false`
/// uses unit weights. Nodes with s_i = 0 are left out.
std::map<std::size_t, double> avg_degree_connectivity(const EventGraph& g, bool weighted = true);

/// deg_in(v) / (n - 1); all zeros when n < 2.
std::vector<double> in_degree_centrality(const EventGraph& g);

struct StronglyConnectedComponents {
  std::vector<std::size_t> component_of;           // node -> component id
  std::vector<std::vector<NodeId>> members;         // component -> sorted node ids
};

/// Components are numbered in reverse topological order of the condensation
/// (Tarjan's completion order): every condensation edge goes from a higher
/// to a lower component id.
StronglyConnectedComponents strongly_connected_components(const EventGraph& g);

/// Longest path (edge count) in the condensation DAG, each component
/// replaced by its earliest-first_seen member (ties: smaller key). Ties
/// between equally long paths resolve to the lexicographically smallest key
/// sequence. Empty graph -> empty path.
std::vector<std::string> longest_path_via_condensation(const EventGraph& g);

struct CentralityEntry {
  std::string key;
  double value = 0.0;
};

struct MetricsReport {
  std::size_t node_count = 0;
  std::size_t edge_count = 0;
  double density = 0.0;
  std::map<std::string, double> clustering;
  double avg_clustering = 0.0;
  std::map<std::size_t, double> degree_connectivity;
  std::map<std::string, double> in_degree_centrality;
  std::vector<CentralityEntry> top_central_nodes;  // all nodes, ranked
  std::vector<std::string> longest_path;
};

MetricsReport metrics_report(const EventGraph& g, bool weighted_connectivity = true);

/// Reference figures a dataset reproduction is checked against.
struct ReferenceTargets {
  std::string name;
  std::size_t nodes = 0;
  std::size_t edges = 0;
  std::map<std::string, double> centrality;  // node key -> expected c_in
  double centrality_tolerance = 0.002;
};

/// BRAWL: 104 nodes, 227 edges, c_in(conhost) = 0.136.
ReferenceTargets brawl_reference();

struct ReferenceCheck {
  std::string name;
  bool nodes_match = false;
  bool edges_match = false;
  std::map<std::string, std::optional<double>> centrality_observed;
  std::vector<std::string> discrepancies;  // empty when everything matches
  bool passed() const { return discrepancies.empty(); }
};

ReferenceCheck check_reference(const MetricsReport& report, const ReferenceTargets& targets);

std::string report_to_json(const MetricsReport& report, std::size_t top_k = 10,
                           const ReferenceCheck* reference = nullptr);
/// "degree,k_nn" rows ascending by degree.
std::string degree_connectivity_csv(const MetricsReport& report);
/// "node,in_degree_centrality" rows, ranked, first `top_k`.
std::string centrality_csv(const MetricsReport& report, std::size_t top_k = 10);

}  // namespace procgraph
