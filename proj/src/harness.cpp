#include "procgraph/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

namespace procgraph {

using nlohmann::json;

void RunConfig::validate() const {
  if (total_training_steps == 0) throw ConfigError("total_training_steps must be positive");
  if (num_parallel_envs == 0) throw ConfigError("num_parallel_envs must be at least 1");
  if (trainer_n_steps == 0) throw ConfigError("trainer_n_steps must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in [0, 1]");
}

std::string_view run_status_name(RunStatus status) {
  switch (status) {
    case RunStatus::Completed: return "completed";
    case RunStatus::Truncated: return "truncated";
    case RunStatus::Failed: return "failed";
  }
  return "failed";
}

namespace {

std::optional<RunStatus> run_status_from_name(std::string_view name) {
  if (name == "completed") return RunStatus::Completed;
  if (name == "truncated") return RunStatus::Truncated;
  if (name == "failed") return RunStatus::Failed;
  return std::nullopt;
}

}  // namespace

TrainingMetrics aggregate_worker_metrics(std::span<const WorkerStats> workers) {
  if (workers.empty()) throw UsageError("aggregate_worker_metrics needs at least one worker");
  TrainingMetrics m;
  double policy = 0.0, value = 0.0, entropy = 0.0, reward = 0.0;
  std::size_t steps = 0;
  for (const auto& w : workers) {
    policy += w.policy_loss_sum;
    value += w.value_loss_sum;
    entropy += w.entropy_sum;
    reward += w.reward_sum;
    steps += w.steps;
    m.episode_count += w.episodes;
    m.current_run_reward += w.current_episode_reward;
    m.current_run_steps += w.current_episode_steps;
    for (double r : w.episode_rewards) {
      if (!m.min_episode_reward || r < *m.min_episode_reward) m.min_episode_reward = r;
      if (!m.max_episode_reward || r > *m.max_episode_reward) m.max_episode_reward = r;
    }
  }
  if (steps == 0) throw UsageError("aggregate_worker_metrics: workers report zero total steps");
  const auto total = static_cast<double>(steps);
  m.global_step_count = steps;
  m.avg_policy_loss = policy / total;
  m.avg_value_loss = value / total;
  m.avg_entropy = entropy / total;
  m.avg_reward = reward / total;
  return m;
}

std::uint64_t estimate_run_memory(std::size_t max_nodes, std::size_t max_edges, std::size_t feature_dim,
                                  std::size_t m_dim, std::size_t workers, std::size_t n_steps) {
  const std::uint64_t n = max_nodes, e = max_edges, f = feature_dim, m = m_dim;
  const std::uint64_t snapshot_bytes = 8 * (n * f + 2 * e) + n;
  // input, h0, agg0, z1, keep1, h1, agg1, z2, keep2, h2 plus adjacency.
  const std::uint64_t cache_bytes = 8 * (n * (f + 1) + 9 * n * m) + 16 * (2 * e + n) + 8 * (3 * m + n);
  const std::uint64_t params = (f + 1) * m + 2 * m * m + 2 * m * n + 2 * m + 3 * m + n + 1;
  // Parameters, gradients and two Adam moments, plus one read-only copy per worker.
  const std::uint64_t param_bytes = 8 * params * (4 + workers);
  return workers * (n_steps * (cache_bytes + snapshot_bytes) + snapshot_bytes) + param_bytes;
}

namespace {

struct Worker {
  std::size_t id = 0;
  GraphEnv env;
  Rng rng;
  GraphSnapshot obs;
  WorkerStats stats;
  std::size_t episodes_started = 0;
  std::uint64_t reset_seed_base = 0;

  std::vector<TrainingSample> samples;
  std::vector<double> rewards;
  std::vector<std::uint8_t> dones;
  std::vector<EpisodeRecord> finished;

  Worker(std::size_t worker_id, GraphEnv environment, std::uint64_t seed)
      : id(worker_id), env(std::move(environment)), rng(mix_seed(seed, 1 + worker_id)),
        reset_seed_base(mix_seed(seed, 1'000'000 + worker_id)) {
    obs = env.reset(reset_seed_base);
    episodes_started = 1;
  }

  // Steps the environment `count` times under `params` and fills the sample
  // buffers with n-step return targets.
  void collect(std::size_t count, std::size_t step_offset, const AgentParams& params, double gamma) {
    samples.clear();
    rewards.clear();
    dones.clear();
    finished.clear();
    for (std::size_t t = 0; t < count; ++t) {
      TrainingSample sample;
      sample.cache = forward(obs, params, true, rng);
      const ActionSample choice = sample_action(sample.cache.logits, rng);
      sample.action = choice.action;
      const StepResult res = env.step(static_cast<std::int64_t>(choice.action));
      samples.push_back(std::move(sample));
      rewards.push_back(res.reward);
      const bool done = res.terminated || res.truncated;
      dones.push_back(done ? 1 : 0);

      stats.reward_sum += res.reward;
      stats.steps += 1;
      stats.current_episode_reward += res.reward;
      stats.current_episode_steps += 1;
      if (done) {
        finished.push_back({id, step_offset + t + 1, stats.current_episode_reward, stats.current_episode_steps,
                            res.terminated});
        stats.episodes += 1;
        stats.episode_rewards.push_back(stats.current_episode_reward);
        stats.current_episode_reward = 0.0;
        stats.current_episode_steps = 0;
        obs = env.reset(reset_seed_base + episodes_started++);
      } else {
        obs = res.observation;
      }
    }
    double bootstrap = 0.0;
    if (!dones.back()) bootstrap = forward(obs, params, false, rng).value;
    const auto returns = n_step_returns(rewards, bootstrap, gamma, dones);
    for (std::size_t t = 0; t < samples.size(); ++t) samples[t].target_return = returns[t];
  }
};

}  // namespace

RunResult run_training(std::shared_ptr<const EventGraph> graph, const EnvConfig& env_cfg,
                       const AgentHyperparameters& agent_cfg, const RunConfig& run_cfg) {
  run_cfg.validate();
  if (agent_cfg.model_output_dim == 0) throw ConfigError("model_output_dim must be positive");
  if (!(agent_cfg.max_grad_norm >= 0.0)) throw ConfigError("max_grad_norm must be non-negative");
  const auto started = std::chrono::steady_clock::now();

  std::vector<Worker> workers;
  workers.reserve(run_cfg.num_parallel_envs);
  {
    GraphEnv probe(graph, env_cfg);
    const auto need = estimate_run_memory(probe.max_nodes(), probe.max_edges(), probe.feature_dim(),
                                          agent_cfg.model_output_dim, run_cfg.num_parallel_envs,
                                          run_cfg.trainer_n_steps);
    if (need > run_cfg.memory_budget_bytes) {
      throw ResourceBudgetError("estimated memory " + std::to_string(need) + " bytes exceeds budget of " +
                                    std::to_string(run_cfg.memory_budget_bytes) +
                                    " bytes; lower --num-parallel-envs or --model-output-dim",
                                need, run_cfg.memory_budget_bytes);
    }
  }
  for (std::size_t w = 0; w < run_cfg.num_parallel_envs; ++w) {
    workers.emplace_back(w, GraphEnv(graph, env_cfg), run_cfg.seed);
  }

  AgentConfig acfg;
  acfg.feature_dim = workers.front().env.feature_dim();
  acfg.m_dim = agent_cfg.model_output_dim;
  acfg.n_actions = workers.front().env.max_nodes();
  acfg.dropout_rate = agent_cfg.dropout_rate;
  acfg.value_scale = agent_cfg.value_scale;
  Rng init_rng(mix_seed(run_cfg.seed, 0));

  RunResult result;
  result.params = AgentParams::initialize(acfg, init_rng);
  result.optimizer = OptimizerState::for_params(result.params, agent_cfg.learning_rate);
  RunReport& report = result.report;
  report.agent = agent_cfg;
  report.run = run_cfg;
  report.env = env_cfg;
  report.seed = run_cfg.seed;

  const LossCoefficients coefs{agent_cfg.value_loss_coef, agent_cfg.entropy_coef, agent_cfg.normalize_advantage};
  std::size_t global_steps = 0;
  std::size_t rejected = 0;
  std::vector<SeriesPoint> series;
  std::vector<TrainingSample> batch;

  try {
    while (global_steps < run_cfg.total_training_steps) {
      if (run_cfg.max_wall_seconds) {
        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;
        if (elapsed.count() > *run_cfg.max_wall_seconds) {
          report.status = RunStatus::Truncated;
          break;
        }
      }
      // Per-round allotment; only the last round can be short.
      std::vector<std::size_t> allot(workers.size(), 0), offset(workers.size(), 0);
      std::size_t remaining = run_cfg.total_training_steps - global_steps;
      std::size_t running = global_steps;
      for (std::size_t w = 0; w < workers.size(); ++w) {
        allot[w] = std::min(run_cfg.trainer_n_steps, remaining);
        remaining -= allot[w];
        offset[w] = running;
        running += allot[w];
      }

      const AgentParams& params = result.params;
      std::vector<std::exception_ptr> errors(workers.size());
      auto work = [&](std::size_t w) {
        try {
          if (allot[w] > 0) workers[w].collect(allot[w], offset[w], params, run_cfg.gamma);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      };
      if (workers.size() == 1) {
        work(0);
      } else {
        std::vector<std::thread> threads;
        threads.reserve(workers.size());
        for (std::size_t w = 0; w < workers.size(); ++w) threads.emplace_back(work, w);
        for (auto& t : threads) t.join();
      }
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }

      batch.clear();
      double round_reward = 0.0;
      std::size_t round_steps = 0;
      for (std::size_t w = 0; w < workers.size(); ++w) {
        if (allot[w] == 0) continue;
        auto& wk = workers[w];
        for (auto& s : wk.samples) batch.push_back(std::move(s));
        for (double r : wk.rewards) round_reward += r;
        round_steps += allot[w];
        report.episodes.insert(report.episodes.end(), wk.finished.begin(), wk.finished.end());
      }

      const LossBreakdown losses = compute_losses(batch, coefs);
      std::size_t cursor = 0;
      for (std::size_t w = 0; w < workers.size(); ++w) {
        auto& st = workers[w].stats;
        for (std::size_t k = 0; k < allot[w]; ++k, ++cursor) {
          st.policy_loss_sum += losses.policy_terms[cursor];
          st.value_loss_sum += losses.value_terms[cursor];
          st.entropy_sum += losses.entropy_terms[cursor];
        }
      }
      TensorSet grads = backward(batch, losses, result.params);
      if (agent_cfg.max_grad_norm > 0.0) clip_global_norm(grads, agent_cfg.max_grad_norm);
      const AdamOutcome step = adam_step(result.params, grads, result.optimizer);
      if (!step.applied) ++rejected;

      global_steps += round_steps;
      series.push_back({global_steps, losses.value_loss, losses.policy_loss,
                        round_reward / static_cast<double>(round_steps)});
    }
  } catch (const std::exception& e) {
    report.status = RunStatus::Failed;
    report.failure = e.what();
  }

  std::vector<WorkerStats> stats;
  for (const auto& w : workers) stats.push_back(w.stats);
  std::size_t counted = 0;
  for (const auto& s : stats) counted += s.steps;
  if (counted > 0) report.metrics = aggregate_worker_metrics(stats);
  report.metrics.rejected_updates = rejected;
  report.metrics.series = std::move(series);
  std::stable_sort(report.episodes.begin(), report.episodes.end(),
                   [](const EpisodeRecord& a, const EpisodeRecord& b) { return a.end_step < b.end_step; });
  if (report.status == RunStatus::Completed && report.metrics.global_step_count != run_cfg.total_training_steps) {
    report.status = RunStatus::Failed;
    if (report.failure.empty()) report.failure = "step budget not reached";
  }
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;
  report.wall_clock_seconds = elapsed.count();
  return result;
}

// --- sweeps --------------------------------------------------------------------

void SweepGrid::validate() const {
  if (model_output_dim.empty() || value_loss_coef.empty() || entropy_coef.empty() || learning_rate.empty() ||
      total_training_steps.empty() || node_frequency_penalty_scale.empty() || num_parallel_envs.empty()) {
    throw ConfigError("every sweep grid list must be non-empty");
  }
  if (trainer_n_steps == 0) throw ConfigError("trainer_n_steps must be positive");
}

std::size_t SweepGrid::combination_count() const {
  return model_output_dim.size() * value_loss_coef.size() * entropy_coef.size() * learning_rate.size() *
         total_training_steps.size() * node_frequency_penalty_scale.size() * num_parallel_envs.size();
}

std::vector<SweepPoint> SweepGrid::combinations() const {
  validate();
  std::vector<SweepPoint> out;
  out.reserve(combination_count());
  for (auto dim : model_output_dim)
    for (auto cv : value_loss_coef)
      for (auto ce : entropy_coef)
        for (auto lr : learning_rate)
          for (auto steps : total_training_steps)
            for (auto scale : node_frequency_penalty_scale)
              for (auto envs : num_parallel_envs) {
                SweepPoint p;
                p.index = out.size();
                p.model_output_dim = dim;
                p.value_loss_coef = cv;
                p.entropy_coef = ce;
                p.learning_rate = lr;
                p.total_training_steps = steps;
                p.node_frequency_penalty_scale = scale;
                p.num_parallel_envs = envs;
                out.push_back(p);
              }
  return out;
}

namespace {

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

std::optional<std::string> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

}  // namespace

std::string run_file_stem(std::size_t run_index) {
  std::ostringstream ss;
  ss << "run_";
  ss.width(5);
  ss.fill('0');
  ss << run_index;
  return ss.str();
}

std::vector<RunReport> run_sweep(std::shared_ptr<const EventGraph> graph, const SweepGrid& grid,
                                 std::uint64_t base_seed, const SweepOptions& options) {
  grid.validate();
  const auto points = grid.combinations();
  if (options.announce) options.announce(points.size());
  if (options.out_dir) ensure_dir(*options.out_dir);

  std::vector<RunReport> reports;
  reports.reserve(points.size());
  for (const auto& p : points) {
    const std::string stem = run_file_stem(p.index);
    if (options.out_dir && options.resume) {
      if (auto text = read_file(*options.out_dir / (stem + ".json"))) {
        try {
          RunReport existing = run_report_from_json(*text);
          if (existing.status == RunStatus::Completed && existing.run_index == p.index) {
            if (options.on_report) options.on_report(existing);
            reports.push_back(std::move(existing));
            continue;
          }
        } catch (const ParseError&) {
          // Unreadable leftovers are rerun and overwritten.
        }
      }
    }

    EnvConfig env = options.base_env;
    env.reward.mode = RewardMode::Refined;
    env.reward.node_frequency_penalty_scale = p.node_frequency_penalty_scale;
    AgentHyperparameters agent = options.base_agent;
    agent.model_output_dim = p.model_output_dim;
    agent.value_loss_coef = p.value_loss_coef;
    agent.entropy_coef = p.entropy_coef;
    agent.learning_rate = p.learning_rate;
    RunConfig run = options.base_run;
    run.total_training_steps = p.total_training_steps;
    run.num_parallel_envs = p.num_parallel_envs;
    run.gamma = grid.gamma;
    run.trainer_n_steps = grid.trainer_n_steps;
    run.seed = base_seed + p.index;

    RunReport report;
    try {
      report = run_training(graph, env, agent, run).report;
    } catch (const std::exception& e) {
      report.agent = agent;
      report.run = run;
      report.env = env;
      report.seed = run.seed;
      report.status = RunStatus::Failed;
      report.failure = e.what();
    }
    report.run_index = p.index;
    if (options.out_dir) {
      write_file_atomic(*options.out_dir / (stem + ".json"), run_report_to_json(report));
      write_file_atomic(*options.out_dir / ("series_" + stem.substr(4) + ".csv"), series_csv(report));
    }
    if (options.on_report) options.on_report(report);
    reports.push_back(std::move(report));
  }
  if (options.out_dir) emit_reports(reports, *options.out_dir);
  return reports;
}

// --- reports --------------------------------------------------------------------

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json metrics_json(const TrainingMetrics& m) {
  json series = json::array();
  for (const auto& p : m.series) {
    series.push_back({{"step", p.step}, {"value_loss", p.value_loss}, {"policy_loss", p.policy_loss},
                      {"reward", p.reward}});
  }
  return {{"global_step_count", m.global_step_count},
          {"episode_count", m.episode_count},
          {"avg_reward", m.avg_reward},
          {"avg_policy_loss", m.avg_policy_loss},
          {"avg_value_loss", m.avg_value_loss},
          {"avg_entropy", m.avg_entropy},
          {"min_episode_reward", optional_json(m.min_episode_reward)},
          {"max_episode_reward", optional_json(m.max_episode_reward)},
          {"current_run_reward", m.current_run_reward},
          {"current_run_steps", m.current_run_steps},
          {"rejected_updates", m.rejected_updates},
          {"series", series}};
}

std::optional<double> optional_double(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

std::string run_report_to_json(const RunReport& r) {
  json doc;
  doc["run_index"] = r.run_index;
  doc["seed"] = r.seed;
  doc["status"] = std::string(run_status_name(r.status));
  doc["failure"] = r.failure;
  doc["wall_clock_seconds"] = r.wall_clock_seconds;
  doc["hyperparameters"] = {{"model_output_dim", r.agent.model_output_dim},
                            {"value_loss_coef", r.agent.value_loss_coef},
                            {"entropy_coef", r.agent.entropy_coef},
                            {"learning_rate", r.agent.learning_rate},
                            {"dropout_rate", r.agent.dropout_rate},
                            {"normalize_advantage", r.agent.normalize_advantage},
                            {"value_scale", r.agent.value_scale},
                            {"max_grad_norm", r.agent.max_grad_norm},
                            {"total_training_steps", r.run.total_training_steps},
                            {"num_parallel_envs", r.run.num_parallel_envs},
                            {"trainer_n_steps", r.run.trainer_n_steps},
                            {"gamma", r.run.gamma},
                            {"memory_budget_bytes", r.run.memory_budget_bytes},
                            {"max_wall_seconds", optional_json(r.run.max_wall_seconds)}};
  doc["environment"] = json::parse(env_config_to_json(r.env));
  doc["metrics"] = metrics_json(r.metrics);
  json episodes = json::array();
  for (const auto& e : r.episodes) {
    episodes.push_back({e.worker, e.end_step, e.reward, e.length, e.reached_terminal});
  }
  doc["episodes"] = episodes;  // [worker, end_step, reward, length, reached_terminal]
  return doc.dump(1);
}

RunReport run_report_from_json(std::string_view text) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw ParseError("run report is not a JSON object", "/");
  RunReport r;
  try {
    r.run_index = doc.at("run_index").get<std::size_t>();
    r.seed = doc.at("seed").get<std::uint64_t>();
    auto status = run_status_from_name(doc.at("status").get<std::string>());
    if (!status) throw ParseError("unknown run status", "/status");
    r.status = *status;
    r.failure = doc.value("failure", "");
    r.wall_clock_seconds = doc.at("wall_clock_seconds").get<double>();
    const auto& h = doc.at("hyperparameters");
    r.agent.model_output_dim = h.at("model_output_dim").get<std::size_t>();
    r.agent.value_loss_coef = h.at("value_loss_coef").get<double>();
    r.agent.entropy_coef = h.at("entropy_coef").get<double>();
    r.agent.learning_rate = h.at("learning_rate").get<double>();
    r.agent.dropout_rate = h.at("dropout_rate").get<double>();
    r.agent.normalize_advantage = h.at("normalize_advantage").get<bool>();
    r.agent.value_scale = h.at("value_scale").get<double>();
    r.agent.max_grad_norm = h.at("max_grad_norm").get<double>();
    r.run.total_training_steps = h.at("total_training_steps").get<std::size_t>();
    r.run.num_parallel_envs = h.at("num_parallel_envs").get<std::size_t>();
    r.run.trainer_n_steps = h.at("trainer_n_steps").get<std::size_t>();
    r.run.gamma = h.at("gamma").get<double>();
    r.run.memory_budget_bytes = h.at("memory_budget_bytes").get<std::uint64_t>();
    r.run.max_wall_seconds = optional_double(h.at("max_wall_seconds"));
    r.run.seed = r.seed;
    r.env = env_config_from_json(doc.at("environment").dump());
    const auto& m = doc.at("metrics");
    r.metrics.global_step_count = m.at("global_step_count").get<std::size_t>();
    r.metrics.episode_count = m.at("episode_count").get<std::size_t>();
    r.metrics.avg_reward = m.at("avg_reward").get<double>();
    r.metrics.avg_policy_loss = m.at("avg_policy_loss").get<double>();
    r.metrics.avg_value_loss = m.at("avg_value_loss").get<double>();
    r.metrics.avg_entropy = m.at("avg_entropy").get<double>();
    r.metrics.min_episode_reward = optional_double(m.at("min_episode_reward"));
    r.metrics.max_episode_reward = optional_double(m.at("max_episode_reward"));
    r.metrics.current_run_reward = m.at("current_run_reward").get<double>();
    r.metrics.current_run_steps = m.at("current_run_steps").get<std::size_t>();
    r.metrics.rejected_updates = m.at("rejected_updates").get<std::size_t>();
    for (const auto& p : m.at("series")) {
      r.metrics.series.push_back({p.at("step").get<std::size_t>(), p.at("value_loss").get<double>(),
                                  p.at("policy_loss").get<double>(), p.at("reward").get<double>()});
    }
    for (const auto& e : doc.at("episodes")) {
      r.episodes.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>(), e.at(2).get<double>(),
                            e.at(3).get<std::size_t>(), e.at(4).get<bool>()});
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed run report: ") + e.what(), "/");
  } catch (const ConfigError& e) {
    throw ParseError(std::string("malformed environment block: ") + e.what(), "/environment");
  }
  return r;
}

const std::vector<std::string>& summary_hyperparameter_columns() {
  static const std::vector<std::string> cols = {
      "run_index",       "seed",          "model_output_dim", "value_loss_coef",
      "entropy_coef",    "learning_rate", "total_training_steps", "node_frequency_penalty_scale",
      "num_parallel_envs", "gamma",       "trainer_n_steps",  "reward_mode"};
  return cols;
}

const std::vector<std::string>& summary_metric_columns() {
  static const std::vector<std::string> cols = {
      "status",           "wall_clock_seconds", "global_step_count", "episode_count",
      "avg_reward",       "avg_policy_loss",    "avg_value_loss",    "avg_entropy",
      "min_episode_reward", "max_episode_reward", "current_run_reward", "current_run_steps",
      "rejected_updates"};
  return cols;
}

namespace {

std::string num(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

}  // namespace

std::string summary_csv(std::span<const RunReport> reports) {
  std::ostringstream out;
  bool first = true;
  for (const auto* cols : {&summary_hyperparameter_columns(), &summary_metric_columns()}) {
    for (const auto& c : *cols) {
      out << (first ? "" : ",") << c;
      first = false;
    }
  }
  out << '\n';
  for (const auto& r : reports) {
    const std::vector<std::string> row = {
        std::to_string(r.run_index),
        std::to_string(r.seed),
        std::to_string(r.agent.model_output_dim),
        num(r.agent.value_loss_coef),
        num(r.agent.entropy_coef),
        num(r.agent.learning_rate),
        std::to_string(r.run.total_training_steps),
        num(r.env.reward.node_frequency_penalty_scale),
        std::to_string(r.run.num_parallel_envs),
        num(r.run.gamma),
        std::to_string(r.run.trainer_n_steps),
        std::string(reward_mode_name(r.env.reward.mode)),
        std::string(run_status_name(r.status)),
        num(r.wall_clock_seconds),
        std::to_string(r.metrics.global_step_count),
        std::to_string(r.metrics.episode_count),
        num(r.metrics.avg_reward),
        num(r.metrics.avg_policy_loss),
        num(r.metrics.avg_value_loss),
        num(r.metrics.avg_entropy),
        opt_num(r.metrics.min_episode_reward),
        opt_num(r.metrics.max_episode_reward),
        num(r.metrics.current_run_reward),
        std::to_string(r.metrics.current_run_steps),
        std::to_string(r.metrics.rejected_updates),
    };
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << '\n';
  }
  return out.str();
}

std::string series_csv(const RunReport& report) {
  std::ostringstream out;
  out << "step,value_loss,policy_loss,reward\n";
  for (const auto& p : report.metrics.series) {
    out << p.step << ',' << num(p.value_loss) << ',' << num(p.policy_loss) << ',' << num(p.reward) << '\n';
  }
  return out.str();
}

SweepSummary summarize_sweep(std::span<const RunReport> reports) {
  SweepSummary s;
  std::vector<const RunReport*> used;
  for (const auto& r : reports) {
    if (r.metrics.global_step_count > 0) used.push_back(&r);
  }
  s.runs = used.size();
  if (used.empty()) return s;
  auto mean_std = [&](auto field, double& mean, double& sd) {
    mean = 0.0;
    for (const auto* r : used) mean += field(*r);
    mean /= static_cast<double>(used.size());
    sd = 0.0;
    if (used.size() > 1) {
      for (const auto* r : used) sd += (field(*r) - mean) * (field(*r) - mean);
      sd = std::sqrt(sd / static_cast<double>(used.size() - 1));
    }
  };
  mean_std([](const RunReport& r) { return r.metrics.avg_reward; }, s.avg_reward_mean, s.avg_reward_std);
  mean_std([](const RunReport& r) { return r.metrics.avg_policy_loss; }, s.avg_policy_loss_mean,
           s.avg_policy_loss_std);
  mean_std([](const RunReport& r) { return r.metrics.avg_value_loss; }, s.avg_value_loss_mean,
           s.avg_value_loss_std);
  return s;
}

std::string sweep_summary_csv(const SweepSummary& s) {
  std::ostringstream out;
  out << "metric,value\n"
      << "runs," << s.runs << '\n'
      << "avg_reward_mean," << num(s.avg_reward_mean) << '\n'
      << "reward_std," << num(s.avg_reward_std) << '\n'
      << "avg_policy_loss_mean," << num(s.avg_policy_loss_mean) << '\n'
      << "avg_policy_loss_std," << num(s.avg_policy_loss_std) << '\n'
      << "avg_value_loss_mean," << num(s.avg_value_loss_mean) << '\n'
      << "avg_value_loss_std," << num(s.avg_value_loss_std) << '\n';
  return out.str();
}

void emit_reports(std::span<const RunReport> reports, const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  for (const auto& r : reports) {
    const std::string stem = run_file_stem(r.run_index);
    write_file_atomic(out_dir / (stem + ".json"), run_report_to_json(r));
    write_file_atomic(out_dir / ("series_" + stem.substr(4) + ".csv"), series_csv(r));
  }
  write_file_atomic(out_dir / "sweep_summary.csv", summary_csv(reports));
  write_file_atomic(out_dir / "summary_table.csv", sweep_summary_csv(summarize_sweep(reports)));
}

}  // namespace procgraph
