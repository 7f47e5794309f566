#include "procgraph/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace procgraph {

using nlohmann::json;

double edge_density(std::size_t n, std::size_t m) {
  if (n < 2) return 0.0;
  const double nd = static_cast<double>(n);
  return static_cast<double>(m) / (nd * (nd - 1.0));
}

UndirectedView::UndirectedView(const EventGraph& g) : neighbors(g.node_count()) {
  for (const auto& e : g.edges()) {
    if (e.source == e.target) continue;
    neighbors[e.source][e.target] += e.weight;
    neighbors[e.target][e.source] += e.weight;
  }
  for (const auto& adj : neighbors) {
    for (const auto& [v, w] : adj) max_weight = std::max(max_weight, w);
  }
}

namespace {

double clustering_in_view(const UndirectedView& view, NodeId u) {
  const auto& adj = view.neighbors[u];
  const std::size_t k = adj.size();
  if (k < 2) return 0.0;
  double sum = 0.0;
  for (auto vi = adj.begin(); vi != adj.end(); ++vi) {
    const auto& vadj = view.neighbors[vi->first];
    for (auto wi = std::next(vi); wi != adj.end(); ++wi) {
      auto vw = vadj.find(wi->first);
      if (vw == vadj.end()) continue;
      const double product = (vi->second / view.max_weight) * (wi->second / view.max_weight) *
                             (vw->second / view.max_weight);
      sum += 2.0 * std::cbrt(product);  // (v, w) and (w, v)
    }
  }
  return sum / (static_cast<double>(k) * static_cast<double>(k - 1));
}

}  // namespace

double clustering_coefficient(const EventGraph& g, NodeId u) {
  if (u >= g.node_count()) throw UsageError("node id out of range");
  return clustering_in_view(UndirectedView(g), u);
}

std::vector<double> clustering_coefficients(const EventGraph& g) {
  const UndirectedView view(g);
  std::vector<double> out(g.node_count());
  for (NodeId u = 0; u < g.node_count(); ++u) out[u] = clustering_in_view(view, u);
  return out;
}

std::map<std::size_t, double> avg_degree_connectivity(const EventGraph& g, bool weighted) {
  const UndirectedView view(g);
  std::map<std::size_t, std::pair<double, std::size_t>> groups;  // degree -> (sum k_nn, count)
  for (NodeId i = 0; i < g.node_count(); ++i) {
    double strength = 0.0;
    double acc = 0.0;
    for (const auto& [j, w] : view.neighbors[i]) {
      const double wij = weighted ? w : 1.0;
      strength += wij;
      acc += wij * static_cast<double>(view.degree(j));
    }
    if (strength <= 0.0) continue;
    auto& group = groups[view.degree(i)];
    group.first += acc / strength;
    group.second += 1;
  }
  std::map<std::size_t, double> out;
  for (const auto& [k, group] : groups) out[k] = group.first / static_cast<double>(group.second);
  return out;
}

std::vector<double> in_degree_centrality(const EventGraph& g) {
  const std::size_t n = g.node_count();
  std::vector<double> out(n, 0.0);
  if (n < 2) return out;
  const double denom = static_cast<double>(n - 1);
  for (NodeId v = 0; v < n; ++v) out[v] = static_cast<double>(g.in_degree(v)) / denom;
  return out;
}

StronglyConnectedComponents strongly_connected_components(const EventGraph& g) {
  const std::size_t n = g.node_count();
  constexpr std::size_t kUnvisited = static_cast<std::size_t>(-1);
  std::vector<std::size_t> index(n, kUnvisited), low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<NodeId> stack;
  StronglyConnectedComponents scc;
  scc.component_of.assign(n, 0);
  std::size_t counter = 0;

  struct Frame {
    NodeId node;
    std::size_t next_child;
  };
  std::vector<Frame> call;
  for (NodeId root = 0; root < n; ++root) {
    if (index[root] != kUnvisited) continue;
    call.push_back({root, 0});
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!call.empty()) {
      auto& frame = call.back();
      const auto succ = g.successors(frame.node);
      if (frame.next_child < succ.size()) {
        const NodeId w = succ[frame.next_child++];
        if (index[w] == kUnvisited) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = true;
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[frame.node] = std::min(low[frame.node], index[w]);
        }
        continue;
      }
      const NodeId v = frame.node;
      call.pop_back();
      if (!call.empty()) low[call.back().node] = std::min(low[call.back().node], low[v]);
      if (low[v] == index[v]) {
        std::vector<NodeId> members;
        NodeId w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          scc.component_of[w] = scc.members.size();
          members.push_back(w);
        } while (w != v);
        std::sort(members.begin(), members.end());
        scc.members.push_back(std::move(members));
      }
    }
  }
  return scc;
}

std::vector<std::string> longest_path_via_condensation(const EventGraph& g) {
  if (g.empty()) return {};
  const auto scc = strongly_connected_components(g);
  const std::size_t c = scc.members.size();

  std::vector<NodeId> rep(c);
  for (std::size_t comp = 0; comp < c; ++comp) {
    rep[comp] = *std::min_element(scc.members[comp].begin(), scc.members[comp].end(),
                                  [&](NodeId a, NodeId b) {
                                    const auto& na = g.node(a);
                                    const auto& nb = g.node(b);
                                    return std::tie(na.first_seen, na.key) <
                                           std::tie(nb.first_seen, nb.key);
                                  });
  }
  std::vector<std::vector<std::size_t>> dag(c);
  for (const auto& e : g.edges()) {
    const auto a = scc.component_of[e.source];
    const auto b = scc.component_of[e.target];
    if (a != b) dag[a].push_back(b);
  }

  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> length(c, 0), next(c, kNone);
  // Lexicographic comparison of the chains starting at a and b.
  auto chain_less = [&](std::size_t a, std::size_t b) {
    while (a != kNone && b != kNone) {
      const auto& ka = g.node(rep[a]).key;
      const auto& kb = g.node(rep[b]).key;
      if (ka != kb) return ka < kb;
      a = next[a];
      b = next[b];
    }
    return a == kNone && b != kNone;
  };

  // Tarjan numbering: successors always carry smaller ids.
  for (std::size_t comp = 0; comp < c; ++comp) {
    for (const auto d : dag[comp]) {
      if (next[comp] == kNone || length[d] + 1 > length[comp] ||
          (length[d] + 1 == length[comp] && chain_less(d, next[comp]))) {
        length[comp] = length[d] + 1;
        next[comp] = d;
      }
    }
  }
  std::size_t best = 0;
  for (std::size_t comp = 1; comp < c; ++comp) {
    if (length[comp] > length[best] || (length[comp] == length[best] && chain_less(comp, best))) {
      best = comp;
    }
  }
  std::vector<std::string> path;
  for (std::size_t comp = best; comp != kNone; comp = next[comp]) path.push_back(g.node(rep[comp]).key);
  return path;
}

MetricsReport metrics_report(const EventGraph& g, bool weighted_connectivity) {
  MetricsReport r;
  r.node_count = g.node_count();
  r.edge_count = g.edge_count();
  r.density = edge_density(r.node_count, r.edge_count);

  const auto clustering = clustering_coefficients(g);
  const auto centrality = in_degree_centrality(g);
  double total = 0.0;
  for (NodeId id = 0; id < g.node_count(); ++id) {
    r.clustering[g.node(id).key] = clustering[id];
    r.in_degree_centrality[g.node(id).key] = centrality[id];
    r.top_central_nodes.push_back({g.node(id).key, centrality[id]});
    total += clustering[id];
  }
  r.avg_clustering = g.empty() ? 0.0 : total / static_cast<double>(g.node_count());
  std::sort(r.top_central_nodes.begin(), r.top_central_nodes.end(),
            [](const CentralityEntry& a, const CentralityEntry& b) {
              if (a.value != b.value) return a.value > b.value;
              return a.key < b.key;
            });
  r.degree_connectivity = avg_degree_connectivity(g, weighted_connectivity);
  r.longest_path = longest_path_via_condensation(g);
  return r;
}

ReferenceTargets brawl_reference() {
  ReferenceTargets t;
  t.name = "BRAWL";
  t.nodes = 104;
  t.edges = 227;
  t.centrality["conhost"] = 0.136;
  t.centrality_tolerance = 0.002;
  return t;
}

ReferenceCheck check_reference(const MetricsReport& report, const ReferenceTargets& targets) {
  ReferenceCheck check;
  check.name = targets.name;
  check.nodes_match = report.node_count == targets.nodes;
  check.edges_match = report.edge_count == targets.edges;
  if (!check.nodes_match) {
    check.discrepancies.push_back("node count " + std::to_string(report.node_count) + " != expected " +
                                  std::to_string(targets.nodes) +
                                  " (keying or filtering assumptions may differ)");
  }
  if (!check.edges_match) {
    check.discrepancies.push_back("edge count " + std::to_string(report.edge_count) + " != expected " +
                                  std::to_string(targets.edges) +
                                  " (keying or filtering assumptions may differ)");
  }
  for (const auto& [key, expected] : targets.centrality) {
    auto it = report.in_degree_centrality.find(key);
    if (it == report.in_degree_centrality.end()) {
      check.centrality_observed[key] = std::nullopt;
      check.discrepancies.push_back("node '" + key + "' not present in graph");
      continue;
    }
    check.centrality_observed[key] = it->second;
    if (std::abs(it->second - expected) > targets.centrality_tolerance) {
      std::ostringstream msg;
      msg << "in-degree centrality of '" << key << "' is " << it->second << ", expected " << expected
          << " +/- " << targets.centrality_tolerance;
      check.discrepancies.push_back(msg.str());
    }
  }
  return check;
}

std::string report_to_json(const MetricsReport& r, std::size_t top_k, const ReferenceCheck* reference) {
  json doc;
  doc["node_count"] = r.node_count;
  doc["edge_count"] = r.edge_count;
  doc["density"] = r.density;
  doc["avg_clustering"] = r.avg_clustering;
  doc["clustering"] = r.clustering;
  json knn = json::object();
  for (const auto& [k, v] : r.degree_connectivity) knn[std::to_string(k)] = v;
  doc["degree_connectivity"] = knn;
  doc["in_degree_centrality"] = r.in_degree_centrality;
  json top = json::array();
  for (std::size_t i = 0; i < std::min(top_k, r.top_central_nodes.size()); ++i) {
    top.push_back({{"node", r.top_central_nodes[i].key}, {"in_degree_centrality", r.top_central_nodes[i].value}});
  }
  doc["top_central_nodes"] = top;
  doc["longest_path"] = r.longest_path;
  if (reference) {
    json ref;
    ref["name"] = reference->name;
    ref["nodes_match"] = reference->nodes_match;
    ref["edges_match"] = reference->edges_match;
    json observed = json::object();
    for (const auto& [k, v] : reference->centrality_observed) {
      observed[k] = v ? json(*v) : json(nullptr);
    }
    ref["centrality_observed"] = observed;
    ref["discrepancies"] = reference->discrepancies;
    ref["passed"] = reference->passed();
    doc["reference_check"] = ref;
  }
  return doc.dump(2);
}

std::string degree_connectivity_csv(const MetricsReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "degree,k_nn\n";
  for (const auto& [k, v] : r.degree_connectivity) out << k << ',' << v << '\n';
  return out.str();
}

std::string centrality_csv(const MetricsReport& r, std::size_t top_k) {
  std::ostringstream out;
  out.precision(17);
  out << "node,in_degree_centrality\n";
  for (std::size_t i = 0; i < std::min(top_k, r.top_central_nodes.size()); ++i) {
    const auto& key = r.top_central_nodes[i].key;
    const bool quote = key.find_first_of(",\"\n") != std::string::npos;
    if (quote) {
      out << '"';
      for (char ch : key) {
        if (ch == '"') out << '"';
        out << ch;
      }
      out << '"';
    } else {
      out << key;
    }
    out << ',' << r.top_central_nodes[i].value << '\n';
  }
  return out.str();
}

}  // namespace procgraph
