#include "procgraph/env.hpp"

#include "procgraph/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace procgraph {

using nlohmann::json;

std::optional<RewardMode> reward_mode_from_name(std::string_view name) {
  if (name == "baseline") return RewardMode::Baseline;
  if (name == "refined") return RewardMode::Refined;
  return std::nullopt;
}

std::string_view reward_mode_name(RewardMode mode) {
  return mode == RewardMode::Baseline ? "baseline" : "refined";
}

void RewardConfig::validate() const {
  const double all[] = {r_step, r_term, r_escalate, r_downgrade, alpha, beta, invalid_penalty,
                        nonadjacent_penalty_offset, refined_invalid_multiplier,
                        refined_downgrade_divisor, node_frequency_penalty_scale};
  for (double v : all) {
    if (!std::isfinite(v)) throw ConfigError("reward constants must be finite");
  }
  if (!(r_term > 0.0)) throw ConfigError("r_term must be positive");
  if (!(r_escalate > 0.0)) throw ConfigError("r_escalate must be positive");
  if (r_step > 0.0) throw ConfigError("r_step must not be positive");
  if (alpha < 0.0 || beta < 0.0 || node_frequency_penalty_scale < 0.0 || refined_invalid_multiplier < 0.0) {
    throw ConfigError("reward scales must be non-negative");
  }
  if (!(refined_downgrade_divisor > 0.0)) throw ConfigError("refined_downgrade_divisor must be positive");
}

std::map<std::string, double> RewardBreakdown::as_map() const {
  return {{"step", step},           {"invalid", invalid},         {"nonadjacent", nonadjacent},
          {"edge_weight", edge_weight}, {"edge_penalty", edge_penalty}, {"escalate", escalate},
          {"downgrade", downgrade}, {"centrality", centrality},   {"terminal", terminal},
          {"revisit", revisit}};
}

RewardContext::RewardContext(const EventGraph& g, NodeId terminal)
    : graph(&g), in_degree_centrality(procgraph::in_degree_centrality(g)), terminal_node(terminal) {}

namespace {

RewardOutcome shaped_reward(std::int64_t s, std::int64_t s_prime, const RewardContext& ctx,
                            const RewardConfig& cfg, const EpisodeState& state, bool refined) {
  const auto& g = *ctx.graph;
  const auto n = static_cast<std::int64_t>(g.node_count());
  const double penalty_scale = refined ? cfg.refined_invalid_multiplier : 1.0;
  RewardOutcome out;
  auto& b = out.breakdown;

  if (s < 0 || s >= n || s_prime < 0 || s_prime >= n) {
    b.invalid = cfg.invalid_penalty * penalty_scale;
    out.reward = b.total();
    return out;
  }
  const auto from = static_cast<NodeId>(s);
  const auto to = static_cast<NodeId>(s_prime);
  const CausalEdge* edge = g.edge_between(from, to);
  if (edge == nullptr) {
    b.step = cfg.r_step * penalty_scale;
    b.nonadjacent = cfg.nonadjacent_penalty_offset * penalty_scale;
    out.reward = b.total();
    return out;
  }

  out.valid_move = true;
  const double w = edge->normalized_weight;
  b.step = cfg.r_step;
  b.edge_weight = w;
  if (refined) {
    const std::size_t prior = to < state.visit_counts.size() ? state.visit_counts[to] : 0;
    b.revisit = -cfg.node_frequency_penalty_scale * static_cast<double>(prior);
  } else {
    b.edge_penalty = -cfg.alpha * w;
  }
  const int level_from = g.node(from).integrity_ordinal;
  const int level_to = g.node(to).integrity_ordinal;
  if (level_to > level_from) {
    b.escalate = cfg.r_escalate;
  } else if (level_to < level_from) {
    b.downgrade = refined ? cfg.r_downgrade / cfg.refined_downgrade_divisor : cfg.r_downgrade;
  }
  b.centrality = cfg.beta * ctx.in_degree_centrality[to];
  if (to == ctx.terminal_node) {
    b.terminal = cfg.r_term;
    out.terminated = true;
  }
  out.reward = b.total();
  return out;
}

}  // namespace

RewardOutcome baseline_reward(std::int64_t s, std::int64_t s_prime, const RewardContext& ctx,
                              const RewardConfig& cfg, const EpisodeState& state) {
  return shaped_reward(s, s_prime, ctx, cfg, state, false);
}

RewardOutcome refined_reward(std::int64_t s, std::int64_t s_prime, const RewardContext& ctx,
                             const RewardConfig& cfg, const EpisodeState& state) {
  return shaped_reward(s, s_prime, ctx, cfg, state, true);
}

RewardOutcome compute_reward(std::int64_t s, std::int64_t s_prime, const RewardContext& ctx,
                             const RewardConfig& cfg, const EpisodeState& state) {
  return cfg.mode == RewardMode::Refined ? refined_reward(s, s_prime, ctx, cfg, state)
                                         : baseline_reward(s, s_prime, ctx, cfg, state);
}

// --- config file ------------------------------------------------------------------

namespace {

double number_field(const json& obj, const std::string& name) {
  const auto& v = obj.at(name);
  if (!v.is_number()) throw ConfigError("'" + name + "' must be a number");
  return v.get<double>();
}

std::size_t count_field(const json& obj, const std::string& name) {
  const auto& v = obj.at(name);
  if (!v.is_number_unsigned()) throw ConfigError("'" + name + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

void read_reward(const json& j, RewardConfig& r) {
  if (!j.is_object()) throw ConfigError("'reward' must be an object");
  const std::map<std::string, double*> numbers = {
      {"r_step", &r.r_step},
      {"r_term", &r.r_term},
      {"r_escalate", &r.r_escalate},
      {"r_downgrade", &r.r_downgrade},
      {"alpha", &r.alpha},
      {"beta", &r.beta},
      {"invalid_penalty", &r.invalid_penalty},
      {"nonadjacent_penalty_offset", &r.nonadjacent_penalty_offset},
      {"refined_invalid_multiplier", &r.refined_invalid_multiplier},
      {"refined_downgrade_divisor", &r.refined_downgrade_divisor},
      {"node_frequency_penalty_scale", &r.node_frequency_penalty_scale},
  };
  for (const auto& [key, value] : j.items()) {
    if (key == "mode") {
      if (!value.is_string()) throw ConfigError("'reward.mode' must be a string");
      auto mode = reward_mode_from_name(value.get<std::string>());
      if (!mode) throw ConfigError("unknown reward mode '" + value.get<std::string>() + "'");
      r.mode = *mode;
    } else if (auto it = numbers.find(key); it != numbers.end()) {
      *it->second = number_field(j, key);
    } else {
      throw ConfigError("unknown reward field '" + key + "'");
    }
  }
}

}  // namespace

EnvConfig env_config_from_json(std::string_view text) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw ConfigError("environment config must be a JSON object");
  EnvConfig cfg;
  for (const auto& [key, value] : doc.items()) {
    if (key == "start_node" || key == "terminal_node") {
      if (value.is_null()) continue;
      if (!value.is_string()) throw ConfigError("'" + key + "' must be a node key string");
      (key == "start_node" ? cfg.start_node : cfg.terminal_node) = value.get<std::string>();
    } else if (key == "max_steps") {
      if (!value.is_null()) cfg.max_steps = count_field(doc, key);
    } else if (key == "max_nodes") {
      if (!value.is_null()) cfg.max_nodes = count_field(doc, key);
    } else if (key == "max_edges") {
      if (!value.is_null()) cfg.max_edges = count_field(doc, key);
    } else if (key == "reward") {
      read_reward(value, cfg.reward);
    } else {
      throw ConfigError("unknown environment config field '" + key + "'");
    }
  }
  cfg.reward.validate();
  return cfg;
}

std::string env_config_to_json(const EnvConfig& cfg) {
  json doc;
  auto opt = [](const auto& v) { return v ? json(*v) : json(nullptr); };
  doc["start_node"] = opt(cfg.start_node);
  doc["terminal_node"] = opt(cfg.terminal_node);
  doc["max_steps"] = opt(cfg.max_steps);
  doc["max_nodes"] = opt(cfg.max_nodes);
  doc["max_edges"] = opt(cfg.max_edges);
  const auto& r = cfg.reward;
  doc["reward"] = {{"r_step", r.r_step},
                   {"r_term", r.r_term},
                   {"r_escalate", r.r_escalate},
                   {"r_downgrade", r.r_downgrade},
                   {"alpha", r.alpha},
                   {"beta", r.beta},
                   {"invalid_penalty", r.invalid_penalty},
                   {"nonadjacent_penalty_offset", r.nonadjacent_penalty_offset},
                   {"mode", std::string(reward_mode_name(r.mode))},
                   {"refined_invalid_multiplier", r.refined_invalid_multiplier},
                   {"refined_downgrade_divisor", r.refined_downgrade_divisor},
                   {"node_frequency_penalty_scale", r.node_frequency_penalty_scale}};
  return doc.dump(2);
}

// --- environment --------------------------------------------------------------------

GraphEnv::GraphEnv(std::shared_ptr<const EventGraph> graph, EnvConfig config)
    : graph_(std::move(graph)), config_(std::move(config)) {
  if (!graph_ || graph_->empty()) throw ConfigError("environment needs a non-empty graph");
  config_.reward.validate();
  const auto& g = *graph_;

  const auto path = longest_path_via_condensation(g);
  auto resolve = [&](const std::optional<std::string>& key, const std::string& fallback,
                     const char* role) {
    const std::string& wanted = key ? *key : fallback;
    auto id = g.find(wanted);
    if (!id) throw ConfigError(std::string(role) + " node '" + wanted + "' is not in the graph");
    return *id;
  };
  start_ = resolve(config_.start_node, path.front(), "start");
  terminal_ = resolve(config_.terminal_node, path.back(), "terminal");
  if (start_ == terminal_) {
    throw ConfigError("start and terminal node are both '" + g.node(start_).key + "' (degenerate episode)");
  }
  const std::size_t path_edges = path.size() - 1;
  max_steps_ = config_.max_steps.value_or(std::max<std::size_t>(64, 4 * path_edges));
  if (max_steps_ == 0) throw ConfigError("max_steps must be positive");

  max_nodes_ = config_.max_nodes.value_or(g.node_count());
  max_edges_ = config_.max_edges.value_or(g.edge_count());
  features_ = encode_features(g, config_.encoder);
  reward_ctx_.emplace(g, terminal_);
  // Validates capacities up front.
  (void)snapshot(g, features_, start_, max_nodes_, max_edges_);
}

GraphSnapshot GraphEnv::observation() const {
  return snapshot(*graph_, features_, state_.current_node, max_nodes_, max_edges_);
}

GraphSnapshot GraphEnv::reset(std::uint64_t seed) {
  state_ = EpisodeState{};
  state_.seed = seed;
  state_.start_node = start_;
  state_.terminal_node = terminal_;
  state_.current_node = start_;
  state_.visit_counts.assign(graph_->node_count(), 0);
  state_.visit_counts[start_] = 1;
  ready_ = true;
  return observation();
}

StepResult GraphEnv::step(std::int64_t action) {
  if (!ready_) throw UsageError("step() called before reset()");
  if (state_.terminated || state_.truncated) throw UsageError("step() called after the episode ended; call reset()");

  const auto outcome = compute_reward(static_cast<std::int64_t>(state_.current_node), action, *reward_ctx_,
                                      config_.reward, state_);
  if (outcome.valid_move) {
    state_.current_node = static_cast<NodeId>(action);
    ++state_.visit_counts[state_.current_node];
  }
  ++state_.step_count;
  state_.terminated = outcome.terminated;
  state_.truncated = !state_.terminated && state_.step_count >= max_steps_;

  StepResult r;
  r.observation = observation();
  r.reward = outcome.reward;
  r.terminated = state_.terminated;
  r.truncated = state_.truncated;
  r.valid_action = outcome.valid_move;
  r.breakdown = outcome.breakdown;
  return r;
}

std::vector<std::uint8_t> GraphEnv::valid_action_mask() const {
  std::vector<std::uint8_t> mask(max_nodes_, 0);
  if (!ready_) return mask;
  for (NodeId v : graph_->successors(state_.current_node)) mask[v] = 1;
  return mask;
}

}  // namespace procgraph
