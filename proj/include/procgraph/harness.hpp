#pragma once

#include "procgraph/agent.hpp"
#include "procgraph/env.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace procgraph {

struct AgentHyperparameters {
  std::size_t model_output_dim = 64;
  double value_loss_coef = 0.5;
  double entropy_coef = 0.01;
  double learning_rate = 0.001;
  double dropout_rate = 0.1;
  bool normalize_advantage = false;
  double value_scale = 1000.0;
  double max_grad_norm = 0.0;  // global gradient norm clip; 0 disables
};

struct RunConfig {
  std::size_t total_training_steps = 1000;
  std::size_t num_parallel_envs = 1;
  std::size_t trainer_n_steps = 3;
  double gamma = 0.99;
  std::uint64_t seed = 0;
  std::uint64_t memory_budget_bytes = std::uint64_t{4} << 30;
  std::optional<double> max_wall_seconds;  // run stops as "truncated" when exceeded

  void validate() const;
};

/// Per-worker running sums. Loss sums add per-sample loss contributions.
struct WorkerStats {
  double policy_loss_sum = 0.0;
  double value_loss_sum = 0.0;
  double entropy_sum = 0.0;
  double reward_sum = 0.0;
  std::size_t steps = 0;
  std::size_t episodes = 0;
  std::vector<double> episode_rewards;  // completed episodes
  double current_episode_reward = 0.0;  // episode in progress at the end
  std::size_t current_episode_steps = 0;
};

struct SeriesPoint {
  std::size_t step = 0;  // global steps after the update
  double value_loss = 0.0;
  double policy_loss = 0.0;
  double reward = 0.0;  // mean per-step reward of the update round

  friend bool operator==(const SeriesPoint&, const SeriesPoint&) = default;
};

struct TrainingMetrics {
  std::size_t global_step_count = 0;
  std::size_t episode_count = 0;
  double avg_reward = 0.0;
  double avg_policy_loss = 0.0;
  double avg_value_loss = 0.0;
  double avg_entropy = 0.0;
  std::optional<double> min_episode_reward;  // absent when no episode finished
  std::optional<double> max_episode_reward;
  double current_run_reward = 0.0;
  std::size_t current_run_steps = 0;
  std::size_t rejected_updates = 0;
  std::vector<SeriesPoint> series;

  friend bool operator==(const TrainingMetrics&, const TrainingMetrics&) = default;
};

/// avg_X = sum over workers of X_sum / sum of steps. Throws UsageError for
/// no workers or zero total steps.
TrainingMetrics aggregate_worker_metrics(std::span<const WorkerStats> workers);

struct EpisodeRecord {
  std::size_t worker = 0;
  std::size_t end_step = 0;  // global step count when the episode ended
  double reward = 0.0;
  std::size_t length = 0;
  bool reached_terminal = false;

  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

enum class RunStatus { Completed, Truncated, Failed };
std::string_view run_status_name(RunStatus status);

struct RunReport {
  std::size_t run_index = 0;
  AgentHyperparameters agent;
  RunConfig run;
  EnvConfig env;
  TrainingMetrics metrics;
  std::vector<EpisodeRecord> episodes;  // in completion order
  double wall_clock_seconds = 0.0;
  std::uint64_t seed = 0;
  RunStatus status = RunStatus::Completed;
  std::string failure;
};

struct RunResult {
  RunReport report;
  AgentParams params;
  OptimizerState optimizer;
};

/// Estimated peak bytes for activations, snapshots and parameters.
std::uint64_t estimate_run_memory(std::size_t max_nodes, std::size_t max_edges, std::size_t feature_dim,
                                  std::size_t m_dim, std::size_t workers, std::size_t n_steps);

/// Synchronous A2C. Throws ConfigError / ResourceBudgetError before the
/// first step; failures during the loop end the run with status Failed and
/// the metrics gathered so far.
RunResult run_training(std::shared_ptr<const EventGraph> graph, const EnvConfig& env_cfg,
                       const AgentHyperparameters& agent_cfg, const RunConfig& run_cfg);

// --- sweeps ----------------------------------------------------------------------

struct SweepPoint {
  std::size_t index = 0;
  std::size_t model_output_dim = 64;
  double value_loss_coef = 0.5;
  double entropy_coef = 0.01;
  double learning_rate = 0.001;
  std::size_t total_training_steps = 1000;
  double node_frequency_penalty_scale = 0.5;
  std::size_t num_parallel_envs = 2;
};

struct SweepGrid {
  std::vector<std::size_t> model_output_dim{64};
  std::vector<double> value_loss_coef{0.5, 1.0, 2.0};
  std::vector<double> entropy_coef{0.001, 0.01, 0.05, 0.1};
  std::vector<double> learning_rate{0.0001, 0.001, 0.005, 0.01};
  std::vector<std::size_t> total_training_steps{1000, 2000, 5000};
  std::vector<double> node_frequency_penalty_scale{0.5, 5.0, 20.0};
  std::vector<std::size_t> num_parallel_envs{2, 3, 12, 16, 32};
  double gamma = 0.99;
  std::size_t trainer_n_steps = 3;

  void validate() const;
  std::size_t combination_count() const;
  /// Fixed nesting order: model_output_dim outermost, num_parallel_envs innermost.
  std::vector<SweepPoint> combinations() const;
};

struct SweepOptions {
  std::optional<std::filesystem::path> out_dir;  // incremental report files
  bool resume = true;
  EnvConfig base_env;  // reward mode is forced to refined
  AgentHyperparameters base_agent;
  RunConfig base_run;  // seed, steps, workers and coefficients come from the grid
  std::function<void(std::size_t)> announce;  // called with the combination count
  std::function<void(const RunReport&)> on_report;
};

/// One run per combination with seed base_seed + index. With out_dir set,
/// completed combinations found on disk are loaded instead of rerun.
std::vector<RunReport> run_sweep(std::shared_ptr<const EventGraph> graph, const SweepGrid& grid,
                                 std::uint64_t base_seed, const SweepOptions& options = {});

// --- reports --------------------------------------------------------------------

std::string run_report_to_json(const RunReport& report);
/// Throws ParseError.
RunReport run_report_from_json(std::string_view text);

const std::vector<std::string>& summary_hyperparameter_columns();
const std::vector<std::string>& summary_metric_columns();
std::string summary_csv(std::span<const RunReport> reports);
std::string series_csv(const RunReport& report);

/// Mean/std over runs of the per-run averages, in the shape of a per-dataset
/// comparison table. "reward_std" is the standard deviation of avg_reward.
struct SweepSummary {
  std::size_t runs = 0;
  double avg_reward_mean = 0.0;
  double avg_reward_std = 0.0;
  double avg_policy_loss_mean = 0.0;
  double avg_policy_loss_std = 0.0;
  double avg_value_loss_mean = 0.0;
  double avg_value_loss_std = 0.0;
};

SweepSummary summarize_sweep(std::span<const RunReport> reports);
std::string sweep_summary_csv(const SweepSummary& summary);

/// Writes run_<i>.json and series_<i>.csv per run, plus sweep_summary.csv
/// and summary_table.csv. Files are written through a temporary name and
/// renamed. Throws IoError.
void emit_reports(std::span<const RunReport> reports, const std::filesystem::path& out_dir);

std::string run_file_stem(std::size_t run_index);

}  // namespace procgraph
