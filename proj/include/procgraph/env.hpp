#pragma once

#include "procgraph/graph.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace procgraph {

enum class RewardMode { Baseline, Refined };

std::optional<RewardMode> reward_mode_from_name(std::string_view name);
std::string_view reward_mode_name(RewardMode mode);

struct RewardConfig {
  double r_step = -0.1;
  double r_term = 5000.0;
  double r_escalate = 100.0;
  double r_downgrade = -1.0;
  double alpha = 0.01;  // edge-weight penalty scale
  double beta = 10.0;   // in-degree centrality bonus scale
  double invalid_penalty = -1.0;
  double nonadjacent_penalty_offset = -0.5;
  RewardMode mode = RewardMode::Baseline;
  double refined_invalid_multiplier = 10.0;
  double refined_downgrade_divisor = 100.0;
  double node_frequency_penalty_scale = 0.5;

  /// Throws ConfigError.
  void validate() const;
};

/// Additive reward terms; `total()` reproduces the returned reward.
struct RewardBreakdown {
  double step = 0.0;
  double invalid = 0.0;
  double nonadjacent = 0.0;
  double edge_weight = 0.0;
  double edge_penalty = 0.0;
  double escalate = 0.0;
  double downgrade = 0.0;
  double centrality = 0.0;
  double terminal = 0.0;
  double revisit = 0.0;

  double total() const {
    return step + invalid + nonadjacent + edge_weight + edge_penalty + escalate + downgrade +
           centrality + terminal + revisit;
  }
  std::map<std::string, double> as_map() const;
};

struct RewardOutcome {
  double reward = 0.0;
  bool terminated = false;
  bool valid_move = false;  // adjacent move that relocates the agent
  RewardBreakdown breakdown;
};

/// Graph-derived quantities the reward reads; computed once per graph.
struct RewardContext {
  const EventGraph* graph = nullptr;
  std::vector<double> in_degree_centrality;
  NodeId terminal_node = 0;

  RewardContext(const EventGraph& g, NodeId terminal);
};

struct EpisodeState {
  NodeId current_node = 0;
  std::size_t step_count = 0;
  std::vector<std::size_t> visit_counts;  // per node id
  bool terminated = false;
  bool truncated = false;
  NodeId start_node = 0;
  NodeId terminal_node = 0;
  std::uint64_t seed = 0;
};

/// Baseline reward; `s` and `s_prime` are signed so out-of-range actions can
/// be expressed.
RewardOutcome baseline_reward(std::int64_t s, std::int64_t s_prime, const RewardContext& ctx,
                              const RewardConfig& cfg, const EpisodeState& state);
/// Refined variant: x10 invalid/non-adjacent, /100 downgrade, linear
/// node-revisit penalty in place of the alpha * w term.
RewardOutcome refined_reward(std::int64_t s, std::int64_t s_prime, const RewardContext& ctx,
                             const RewardConfig& cfg, const EpisodeState& state);
/// Dispatches on cfg.mode.
RewardOutcome compute_reward(std::int64_t s, std::int64_t s_prime, const RewardContext& ctx,
                             const RewardConfig& cfg, const EpisodeState& state);

struct EnvConfig {
  std::optional<std::string> start_node;     // node key; default: longest path start
  std::optional<std::string> terminal_node;  // node key; default: longest path end
  std::optional<std::size_t> max_steps;      // default: max(64, 4 * path edges)
  RewardConfig reward;
  std::optional<std::size_t> max_nodes;  // default: node count
  std::optional<std::size_t> max_edges;  // default: edge count
  EncoderConfig encoder;
};

/// {start_node, terminal_node, max_steps, reward:{...}, max_nodes, max_edges}
EnvConfig env_config_from_json(std::string_view text);
std::string env_config_to_json(const EnvConfig& cfg);

struct StepResult {
  GraphSnapshot observation;
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;
  bool valid_action = false;
  RewardBreakdown breakdown;
};

/// Episodic environment over a shared immutable graph. One instance per
/// worker; instances never share mutable state.
class GraphEnv {
 public:
  /// Resolves start/terminal and capacities. Throws ConfigError for unknown
  /// node keys, start == terminal or an empty graph; SizingError when the
  /// capacities are too small.
  GraphEnv(std::shared_ptr<const EventGraph> graph, EnvConfig config);

  GraphSnapshot reset(std::uint64_t seed = 0);
  /// Throws UsageError before reset or after the episode ended.
  StepResult step(std::int64_t action);
  std::vector<std::uint8_t> valid_action_mask() const;

  const EpisodeState& state() const { return state_; }
  const EventGraph& graph() const { return *graph_; }
  const EnvConfig& config() const { return config_; }
  std::size_t max_nodes() const { return max_nodes_; }
  std::size_t max_edges() const { return max_edges_; }
  std::size_t max_steps() const { return max_steps_; }
  std::size_t feature_dim() const { return features_.cols; }
  NodeId start_node() const { return start_; }
  NodeId terminal_node() const { return terminal_; }
  GraphSnapshot observation() const;

 private:
  std::shared_ptr<const EventGraph> graph_;
  EnvConfig config_;
  FeatureMatrix features_;
  std::optional<RewardContext> reward_ctx_;
  std::size_t max_nodes_ = 0;
  std::size_t max_edges_ = 0;
  std::size_t max_steps_ = 0;
  NodeId start_ = 0;
  NodeId terminal_ = 0;
  EpisodeState state_;
  bool ready_ = false;
};

}  // namespace procgraph
