#include "procgraph/graph.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

namespace procgraph {

using nlohmann::json;

EventGraph::EventGraph(std::vector<ProcessNode> nodes, std::vector<CausalEdge> edges)
    : nodes_(std::move(nodes)) {
  const std::size_t n = nodes_.size();
  for (NodeId id = 0; id < n; ++id) {
    if (!index_.emplace(nodes_[id].key, id).second) {
      throw ConfigError("duplicate node key '" + nodes_[id].key + "'");
    }
  }
  for (const auto& e : edges) {
    if (e.source >= n || e.target >= n) throw ConfigError("edge endpoint out of range");
    if (!(e.weight > 0.0) || !std::isfinite(e.weight)) {
      throw ConfigError("edge weight must be positive and finite");
    }
  }

  std::stable_sort(edges.begin(), edges.end(), [](const CausalEdge& a, const CausalEdge& b) {
    return std::tie(a.source, a.target) < std::tie(b.source, b.target);
  });
  for (auto& e : edges) {
    if (!edges_.empty() && edges_.back().source == e.source && edges_.back().target == e.target) {
      auto& merged = edges_.back();
      merged.weight += e.weight;
      for (const auto& [kind, count] : e.kinds) merged.kinds[kind] += count;
      merged.first_seen = std::min(merged.first_seen, e.first_seen);
    } else {
      edges_.push_back(std::move(e));
    }
  }

  successors_.assign(n, {});
  predecessors_.assign(n, {});
  out_edge_index_.assign(n, {});
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const auto& e = edges_[i];
    successors_[e.source].push_back(e.target);
    out_edge_index_[e.source].push_back(i);
    predecessors_[e.target].push_back(e.source);
    max_weight_ = std::max(max_weight_, e.weight);
  }
  for (auto& preds : predecessors_) std::sort(preds.begin(), preds.end());
  for (auto& e : edges_) e.normalized_weight = e.weight / max_weight_;
}

std::optional<NodeId> EventGraph::find(const std::string& key) const {
  auto it = index_.find(key);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const CausalEdge* EventGraph::edge_between(NodeId source, NodeId target) const {
  if (source >= nodes_.size()) return nullptr;
  const auto& succ = successors_[source];
  auto it = std::lower_bound(succ.begin(), succ.end(), target);
  if (it == succ.end() || *it != target) return nullptr;
  return &edges_[out_edge_index_[source][static_cast<std::size_t>(it - succ.begin())]];
}

std::optional<NodeKeying> node_keying_from_name(std::string_view name) {
  if (name == "label") return NodeKeying::Label;
  if (name == "label+pid") return NodeKeying::LabelPid;
  return std::nullopt;
}

namespace {

std::string endpoint_key(const RelationEndpoint& ep, NodeKeying keying) {
  if (keying == NodeKeying::LabelPid && ep.pid) return ep.key + "|" + std::to_string(*ep.pid);
  return ep.key;
}

struct NodeAccumulator {
  ProcessNode node;
  bool seen = false;

  void observe(const RelationEndpoint& ep, UtcTime t) {
    if (!seen) {
      node.label = ep.label;
      node.first_seen = t;
      node.last_seen = t;
      seen = true;
    }
    node.first_seen = std::min(node.first_seen, t);
    node.last_seen = std::max(node.last_seen, t);
    node.integrity_ordinal = std::max(node.integrity_ordinal, static_cast<int>(ep.integrity));
    for (const auto& [name, value] : ep.attributes) node.attributes.emplace(name, value);
  }
};

}  // namespace

EventGraph build_graph(std::span<const ParentChildRelation> relations, NodeKeying keying) {
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<NodeAccumulator> acc;
  struct RawEdge {
    std::size_t source, target;
    EventKind kind;
    UtcTime time;
  };
  std::vector<RawEdge> raw;
  raw.reserve(relations.size());

  auto touch = [&](const RelationEndpoint& ep, UtcTime t) {
    std::string key = endpoint_key(ep, keying);
    auto [it, inserted] = slot.emplace(key, acc.size());
    if (inserted) {
      acc.emplace_back();
      acc.back().node.key = std::move(key);
    }
    acc[it->second].observe(ep, t);
    return it->second;
  };

  for (const auto& rel : relations) {
    const auto s = touch(rel.parent, rel.timestamp);
    const auto t = touch(rel.child, rel.timestamp);
    raw.push_back({s, t, rel.relation_kind, rel.timestamp});
  }

  std::vector<std::size_t> order(acc.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(acc[a].node.first_seen, acc[a].node.key) <
           std::tie(acc[b].node.first_seen, acc[b].node.key);
  });
  std::vector<NodeId> new_id(acc.size());
  std::vector<ProcessNode> nodes;
  nodes.reserve(acc.size());
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    new_id[order[rank]] = rank;
    nodes.push_back(std::move(acc[order[rank]].node));
  }

  std::vector<CausalEdge> edges;
  edges.reserve(raw.size());
  for (const auto& r : raw) {
    CausalEdge e;
    e.source = new_id[r.source];
    e.target = new_id[r.target];
    e.weight = 1.0;
    e.kinds[r.kind] = 1;
    e.first_seen = r.time;
    edges.push_back(std::move(e));
  }
  return EventGraph(std::move(nodes), std::move(edges));
}

EventGraph prune_isolated(const EventGraph& g) {
  constexpr NodeId kDropped = static_cast<NodeId>(-1);
  std::vector<NodeId> remap(g.node_count(), kDropped);
  std::vector<ProcessNode> nodes;
  for (NodeId id = 0; id < g.node_count(); ++id) {
    if (g.in_degree(id) == 0 && g.out_degree(id) == 0) continue;
    remap[id] = nodes.size();
    nodes.push_back(g.node(id));
  }
  std::vector<CausalEdge> edges = g.edges();
  for (auto& e : edges) {
    e.source = remap[e.source];
    e.target = remap[e.target];
  }
  return EventGraph(std::move(nodes), std::move(edges));
}

// --- features -------------------------------------------------------------------

void EncoderConfig::validate() const {
  if (label_buckets == 0 || user_buckets == 0 || host_buckets == 0) {
    throw ConfigError("encoder bucket counts must be positive");
  }
  if (feature_dim && *feature_dim != expected_dim()) {
    throw ConfigError("feature_dim " + std::to_string(*feature_dim) +
                      " does not match encoder layout (" + std::to_string(expected_dim()) + ")");
  }
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

FeatureMatrix encode_features(const EventGraph& g, const EncoderConfig& enc) {
  enc.validate();
  const std::size_t n = g.node_count();
  FeatureMatrix out;
  out.rows = n;
  out.cols = enc.expected_dim();
  out.values.assign(n * out.cols, 0.0);
  if (n == 0) return out;

  std::size_t max_in = 0, max_out = 0;
  double min_dur = g.node(0).event_duration(), max_dur = min_dur;
  for (NodeId id = 0; id < n; ++id) {
    max_in = std::max(max_in, g.in_degree(id));
    max_out = std::max(max_out, g.out_degree(id));
    min_dur = std::min(min_dur, g.node(id).event_duration());
    max_dur = std::max(max_dur, g.node(id).event_duration());
  }
  const double log_max_in = std::log1p(static_cast<double>(max_in));
  const double log_max_out = std::log1p(static_cast<double>(max_out));

  const std::size_t user_base = EncoderConfig::kScalarFeatures + enc.label_buckets;
  const std::size_t host_base = user_base + enc.user_buckets;
  for (NodeId id = 0; id < n; ++id) {
    const auto& node = g.node(id);
    double* row = out.values.data() + id * out.cols;
    row[0] = node.integrity_ordinal < 0 ? 0.0 : node.integrity_ordinal / 4.0;
    row[1] = max_in == 0 ? 0.0 : std::log1p(static_cast<double>(g.in_degree(id))) / log_max_in;
    row[2] = max_out == 0 ? 0.0 : std::log1p(static_cast<double>(g.out_degree(id))) / log_max_out;
    row[3] = max_dur > min_dur ? (node.event_duration() - min_dur) / (max_dur - min_dur) : 0.0;
    row[EncoderConfig::kScalarFeatures + fnv1a64(node.label) % enc.label_buckets] = 1.0;
    if (auto it = node.attributes.find("user"); it != node.attributes.end()) {
      row[user_base + fnv1a64(it->second) % enc.user_buckets] = 1.0;
    }
    if (auto it = node.attributes.find("host"); it != node.attributes.end()) {
      row[host_base + fnv1a64(it->second) % enc.host_buckets] = 1.0;
    }
  }
  return out;
}

GraphSnapshot snapshot(const EventGraph& g, const FeatureMatrix& features, NodeId current,
                       std::size_t max_nodes, std::size_t max_edges) {
  const std::size_t n = g.node_count();
  const std::size_t m = g.edge_count();
  if (n > max_nodes) {
    throw SizingError("graph has " + std::to_string(n) + " nodes but max_nodes is " +
                          std::to_string(max_nodes) + "; required capacity " + std::to_string(n),
                      n);
  }
  if (m > max_edges) {
    throw SizingError("graph has " + std::to_string(m) + " edges but max_edges is " +
                          std::to_string(max_edges) + "; required capacity " + std::to_string(m),
                      m);
  }
  if (current >= n) throw UsageError("current node " + std::to_string(current) + " is not in the graph");
  if (features.rows != n) throw UsageError("feature matrix row count does not match graph");

  GraphSnapshot snap;
  snap.max_nodes = max_nodes;
  snap.max_edges = max_edges;
  snap.feature_dim = features.cols;
  snap.node_features.assign(max_nodes * features.cols, 0.0);
  std::copy(features.values.begin(), features.values.end(), snap.node_features.begin());
  snap.edge_index.assign(2 * max_edges, 0);
  for (std::size_t e = 0; e < m; ++e) {
    snap.edge_index[e] = static_cast<std::int64_t>(g.edges()[e].source);
    snap.edge_index[max_edges + e] = static_cast<std::int64_t>(g.edges()[e].target);
  }
  snap.num_nodes = n;
  snap.num_edges = m;
  snap.node_mask.assign(max_nodes, 0);
  std::fill_n(snap.node_mask.begin(), n, std::uint8_t{1});
  snap.current_node = current;
  return snap;
}

GraphSnapshot snapshot(const EventGraph& g, NodeId current, std::size_t max_nodes,
                       std::size_t max_edges, const EncoderConfig& enc) {
  return snapshot(g, encode_features(g, enc), current, max_nodes, max_edges);
}

// --- import / export --------------------------------------------------------------

namespace {

json node_link_document(const EventGraph& g) {
  json doc;
  doc["directed"] = true;
  doc["nodes"] = json::array();
  doc["edges"] = json::array();
  for (const auto& node : g.nodes()) {
    doc["nodes"].push_back({{"key", node.key},
                            {"label", node.label},
                            {"integrity", node.integrity_ordinal},
                            {"first_seen", format_utc_time(node.first_seen)},
                            {"last_seen", format_utc_time(node.last_seen)},
                            {"attrs", node.attributes}});
  }
  for (const auto& e : g.edges()) {
    json kinds = json::object();
    for (const auto& [kind, count] : e.kinds) kinds[std::string(event_kind_name(kind))] = count;
    doc["edges"].push_back({{"source", g.node(e.source).key},
                            {"target", g.node(e.target).key},
                            {"weight", e.weight},
                            {"kinds", kinds},
                            {"first_seen", format_utc_time(e.first_seen)}});
  }
  return doc;
}

std::string dot_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out.push_back(c);
  }
  return out;
}

void write_dot(std::ostream& out, const EventGraph& g) {
  out << "digraph events {\n";
  for (NodeId id = 0; id < g.node_count(); ++id) {
    out << "  n" << id << " [label=\"" << dot_escape(g.node(id).label) << "\"];\n";
  }
  out << std::setprecision(4);
  for (const auto& e : g.edges()) {
    out << "  n" << e.source << " -> n" << e.target << " [weight=" << e.weight
        << ", penwidth=" << 0.5 + 4.5 * e.normalized_weight << "];\n";
  }
  out << "}\n";
}

[[noreturn]] void fail(const std::string& what, const std::string& where) {
  throw ParseError(what, where);
}

const json& member(const json& obj, const char* name, const std::string& where) {
  auto it = obj.find(name);
  if (it == obj.end()) fail(std::string("missing member '") + name + "'", where);
  return *it;
}

std::string string_member(const json& obj, const char* name, const std::string& where) {
  const auto& v = member(obj, name, where);
  if (!v.is_string()) fail(std::string("member '") + name + "' must be a string", where + "/" + name);
  return v.get<std::string>();
}

UtcTime time_member(const json& obj, const char* name, const std::string& where) {
  auto t = parse_utc_time(string_member(obj, name, where));
  if (!t) fail(std::string("member '") + name + "' is not a timestamp", where + "/" + name);
  return *t;
}

}  // namespace

void export_graph(std::ostream& out, const EventGraph& g, GraphFormat format) {
  if (format == GraphFormat::Dot) {
    write_dot(out, g);
  } else {
    out << node_link_document(g).dump(1) << '\n';
  }
}

std::string export_graph(const EventGraph& g, GraphFormat format) {
  std::ostringstream out;
  export_graph(out, g, format);
  return out.str();
}

EventGraph import_graph(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(std::string("invalid JSON: ") + e.what(), "byte " + std::to_string(e.byte));
  }
  if (!doc.is_object()) fail("document must be an object", "/");
  const auto& jnodes = member(doc, "nodes", "/");
  const auto& jedges = member(doc, "edges", "/");
  if (!jnodes.is_array()) fail("'nodes' must be an array", "/nodes");
  if (!jedges.is_array()) fail("'edges' must be an array", "/edges");

  std::vector<ProcessNode> nodes;
  std::unordered_map<std::string, NodeId> ids;
  for (std::size_t i = 0; i < jnodes.size(); ++i) {
    const std::string where = "/nodes/" + std::to_string(i);
    const auto& jn = jnodes[i];
    if (!jn.is_object()) fail("node must be an object", where);
    ProcessNode node;
    node.key = string_member(jn, "key", where);
    node.label = jn.contains("label") ? string_member(jn, "label", where) : node.key;
    if (jn.contains("integrity")) {
      const auto& lvl = jn["integrity"];
      if (!lvl.is_number_integer() || lvl.get<int>() < -1 || lvl.get<int>() > 4) {
        fail("'integrity' must be an integer in [-1, 4]", where + "/integrity");
      }
      node.integrity_ordinal = lvl.get<int>();
    }
    node.first_seen = time_member(jn, "first_seen", where);
    node.last_seen = time_member(jn, "last_seen", where);
    if (node.last_seen < node.first_seen) fail("last_seen precedes first_seen", where);
    if (jn.contains("attrs")) {
      const auto& attrs = jn["attrs"];
      if (!attrs.is_object()) fail("'attrs' must be an object", where + "/attrs");
      for (const auto& [k, v] : attrs.items()) {
        if (!v.is_string()) fail("attribute values must be strings", where + "/attrs/" + k);
        node.attributes.emplace(k, v.get<std::string>());
      }
    }
    if (!ids.emplace(node.key, nodes.size()).second) fail("duplicate node key '" + node.key + "'", where);
    nodes.push_back(std::move(node));
  }

  std::vector<CausalEdge> edges;
  for (std::size_t i = 0; i < jedges.size(); ++i) {
    const std::string where = "/edges/" + std::to_string(i);
    const auto& je = jedges[i];
    if (!je.is_object()) fail("edge must be an object", where);
    CausalEdge e;
    const auto src = string_member(je, "source", where);
    const auto dst = string_member(je, "target", where);
    auto s = ids.find(src);
    auto t = ids.find(dst);
    if (s == ids.end()) fail("unknown source node '" + src + "'", where + "/source");
    if (t == ids.end()) fail("unknown target node '" + dst + "'", where + "/target");
    e.source = s->second;
    e.target = t->second;
    const auto& w = member(je, "weight", where);
    if (!w.is_number() || !(w.get<double>() > 0.0)) fail("'weight' must be a positive number", where + "/weight");
    e.weight = w.get<double>();
    if (je.contains("kinds")) {
      const auto& kinds = je["kinds"];
      if (!kinds.is_object()) fail("'kinds' must be an object", where + "/kinds");
      for (const auto& [name, count] : kinds.items()) {
        auto kind = event_kind_from_name(name);
        if (!kind) fail("unknown relation kind '" + name + "'", where + "/kinds");
        if (!count.is_number_unsigned()) fail("kind counts must be non-negative integers", where + "/kinds/" + name);
        e.kinds[*kind] = count.get<std::size_t>();
      }
    }
    e.first_seen = je.contains("first_seen") ? time_member(je, "first_seen", where)
                                             : std::min(nodes[e.source].first_seen, nodes[e.target].first_seen);
    edges.push_back(std::move(e));
  }
  try {
    return EventGraph(std::move(nodes), std::move(edges));
  } catch (const ConfigError& err) {
    fail(err.what(), "/");
  }
}

}  // namespace procgraph
