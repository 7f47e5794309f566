// procgraph command line: ingest, build-graph, analyze, train, sweep, report.

#include "procgraph/harness.hpp"
#include "procgraph/ingest.hpp"
#include "procgraph/metrics.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace procgraph;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitBudget = 3;

// JSON config files: {"learning-rate": 0.01, "num-parallel-envs": [2, 3]}.
// Keys are long option names. Values given on the command line win.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    nlohmann::json j = nlohmann::json::object();
    for (const CLI::Option* opt : app->get_options({})) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const std::string name = opt->get_lnames().front();
      if (opt->count() > 0) {
        auto res = opt->results();
        j[name] = res.size() == 1 ? nlohmann::json(res.front()) : nlohmann::json(res);
      } else if (default_also && !opt->get_default_str().empty()) {
        j[name] = opt->get_default_str();
      }
    }
    return j.dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j = nlohmann::json::parse(input, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw CLI::ConversionError("config file is not a JSON object");
    std::vector<CLI::ConfigItem> items;
    flatten(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static void flatten(const nlohmann::json& j, std::vector<std::string> parents,
                      std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        auto sub = parents;
        sub.push_back(key);
        flatten(value, sub, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
  }
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed for " + path);
}

InputFormat resolve_format(const std::string& name, const std::string& path) {
  if (name == "auto") {
    return fs::path(path).extension() == ".csv" ? InputFormat::Csv : InputFormat::JsonLines;
  }
  if (auto f = input_format_from_name(name)) return *f;
  throw UsageError("unknown input format '" + name + "'");
}

struct EventInput {
  std::string path;
  std::string format = "auto";
  std::string rejects;
};

ParseResult load_events(const EventInput& in) {
  std::ifstream file(in.path, std::ios::binary);
  if (!file) throw IoError("cannot open " + in.path);
  ParseResult parsed = parse_sysmon_records(file, resolve_format(in.format, in.path));
  if (!in.rejects.empty()) {
    std::ofstream out(in.rejects);
    if (!out) throw IoError("cannot write " + in.rejects);
    write_reject_report(out, parsed.rejects);
  }
  std::cerr << "parsed " << parsed.record_count << " records: " << parsed.events.size() << " events, "
            << parsed.rejects.size() << " rejected\n";
  return parsed;
}

struct GraphInput {
  EventInput events;
  std::string graph_path;
  std::string keying = "label";
  bool keep_isolated = false;

  void add_to(CLI::App* app) {
    auto* g = app->add_option("--graph", graph_path, "Node-link graph JSON");
    auto* e = app->add_option("--events", events.path, "Sysmon export (JSON lines or CSV)");
    g->excludes(e);
    app->add_option("--format", events.format, "Event format: auto, json, csv")
        ->check(CLI::IsMember({"auto", "json", "jsonl", "csv"}));
    app->add_option("--keying", keying, "Node keying for --events: label or label+pid")
        ->check(CLI::IsMember({"label", "label+pid"}));
    app->add_flag("--keep-isolated", keep_isolated, "Do not prune isolated nodes");
    app->add_option("--rejects", events.rejects, "Write the reject report CSV here");
  }

  std::shared_ptr<const EventGraph> load() const {
    if (!graph_path.empty()) return std::make_shared<const EventGraph>(import_graph(read_text(graph_path)));
    if (events.path.empty()) throw UsageError("one of --graph or --events is required");
    const ParseResult parsed = load_events(events);
    const RelationSummary rel = extract_relations(parsed.events);
    if (rel.orphan_count || rel.skipped_count) {
      std::cerr << "relations: " << rel.relations.size() << " kept, " << rel.orphan_count << " orphaned, "
                << rel.skipped_count << " skipped\n";
    }
    EventGraph g = build_graph(rel.relations, *node_keying_from_name(keying));
    if (!keep_isolated) g = prune_isolated(g);
    return std::make_shared<const EventGraph>(std::move(g));
  }
};

struct ModelFlags {
  AgentHyperparameters agent;
  RunConfig run;
  EnvConfig env;
  std::string reward_mode = "baseline";
  std::string start, terminal;
  std::size_t max_steps = 0;
  double max_wall = 0.0;

  void add_env_flags(CLI::App* app, bool with_mode) {
    auto& r = env.reward;
    if (with_mode) {
      app->add_option("--reward-mode", reward_mode, "baseline or refined")
          ->check(CLI::IsMember({"baseline", "refined"}))
          ->capture_default_str();
    }
    app->add_option("--step-reward", r.r_step)->capture_default_str();
    app->add_option("--terminal-reward", r.r_term)->capture_default_str();
    app->add_option("--escalation-reward", r.r_escalate)->capture_default_str();
    app->add_option("--downgrade-penalty", r.r_downgrade)->capture_default_str();
    app->add_option("--edge-weight-alpha", r.alpha)->capture_default_str();
    app->add_option("--centrality-beta", r.beta)->capture_default_str();
    app->add_option("--invalid-penalty", r.invalid_penalty)->capture_default_str();
    app->add_option("--start-node", start, "Start node key (default: longest path start)");
    app->add_option("--terminal-node", terminal, "Terminal node key (default: longest path end)");
    app->add_option("--max-steps", max_steps, "Episode step limit");
    app->add_option("--trainer-n-steps", run.trainer_n_steps)->capture_default_str();
    app->add_option("--gamma", run.gamma)->capture_default_str();
    app->add_option("--dropout", agent.dropout_rate)->capture_default_str();
    app->add_option("--memory-budget", run.memory_budget_bytes, "Bytes")->capture_default_str();
    app->add_option("--max-wall-seconds", max_wall, "Stop a run early (status truncated)");
    app->add_flag("--normalize-advantage", agent.normalize_advantage);
    app->add_option("--value-scale", agent.value_scale, "Critic output multiplier")->capture_default_str();
    app->add_option("--max-grad-norm", agent.max_grad_norm, "Gradient norm clip, 0 disables")
        ->capture_default_str();
    app->add_option("--seed", run.seed)->capture_default_str();
  }

  void add_hyper_flags(CLI::App* app) {
    app->add_option("--model-output-dim", agent.model_output_dim)->capture_default_str();
    app->add_option("--value-loss-coef", agent.value_loss_coef)->capture_default_str();
    app->add_option("--entropy-coef", agent.entropy_coef)->capture_default_str();
    app->add_option("--learning-rate", agent.learning_rate)->capture_default_str();
    app->add_option("--total-training-steps", run.total_training_steps)->capture_default_str();
    app->add_option("--node-frequency-penalty-scale", env.reward.node_frequency_penalty_scale)
        ->capture_default_str();
    app->add_option("--num-parallel-envs", run.num_parallel_envs)->capture_default_str();
  }

  void finish() {
    env.reward.mode = *reward_mode_from_name(reward_mode);
    if (!start.empty()) env.start_node = start;
    if (!terminal.empty()) env.terminal_node = terminal;
    if (max_steps) env.max_steps = max_steps;
    if (max_wall > 0.0) run.max_wall_seconds = max_wall;
    env.reward.validate();
  }
};

void print_run(const RunReport& r) {
  const auto& m = r.metrics;
  std::cout << "run " << r.run_index << " [" << run_status_name(r.status) << "] seed=" << r.seed
            << " steps=" << m.global_step_count << " episodes=" << m.episode_count
            << " avg_reward=" << m.avg_reward << " avg_value_loss=" << m.avg_value_loss
            << " avg_policy_loss=" << m.avg_policy_loss;
  if (m.min_episode_reward) std::cout << " episode_reward=[" << *m.min_episode_reward << ", "
                                      << *m.max_episode_reward << "]";
  std::cout << " wall=" << r.wall_clock_seconds << "s\n";
  if (!r.failure.empty()) std::cout << "  failure: " << r.failure << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"procgraph: Sysmon process graphs and graph RL agents"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Parse a Sysmon export into canonical JSON lines");
  EventInput ingest_in;
  std::string ingest_out = "-";
  ingest->add_option("input", ingest_in.path, "Sysmon export")->required();
  ingest->add_option("--format", ingest_in.format)->check(CLI::IsMember({"auto", "json", "jsonl", "csv"}));
  ingest->add_option("-o,--out", ingest_out, "Canonical JSON lines output")->capture_default_str();
  ingest->add_option("--rejects", ingest_in.rejects, "Reject report CSV");

  // build-graph
  auto* build = app.add_subcommand("build-graph", "Build the process graph");
  GraphInput build_in;
  std::string build_out = "-", build_dot;
  build_in.add_to(build);
  build->add_option("-o,--out", build_out, "Node-link JSON output")->capture_default_str();
  build->add_option("--dot", build_dot, "Graphviz DOT output");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Structural metrics of a graph");
  GraphInput analyze_in;
  std::string analyze_out = "-", knn_csv, central_csv, reference;
  std::size_t top_k = 10;
  bool unweighted = false;
  analyze_in.add_to(analyze);
  analyze->add_option("-o,--out", analyze_out, "Metrics JSON output")->capture_default_str();
  analyze->add_option("--top-k", top_k)->capture_default_str();
  analyze->add_option("--knn-csv", knn_csv, "Degree connectivity CSV");
  analyze->add_option("--centrality-csv", central_csv, "In-degree centrality CSV");
  analyze->add_flag("--unweighted-knn", unweighted);
  analyze->add_option("--reference", reference, "Check against a published dataset profile")
      ->check(CLI::IsMember({"brawl"}));

  // train
  auto* train = app.add_subcommand("train", "Train one agent");
  GraphInput train_in;
  ModelFlags train_flags;
  std::string train_dir, checkpoint;
  train_in.add_to(train);
  train_flags.add_hyper_flags(train);
  train_flags.add_env_flags(train, true);
  train->add_option("--out-dir", train_dir, "Write run JSON and series CSV here");
  train->add_option("--checkpoint", checkpoint, "Write the trained parameters here");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Grid search over hyperparameters");
  GraphInput sweep_in;
  ModelFlags sweep_flags;
  SweepGrid grid;
  std::string sweep_dir;
  bool no_resume = false, dry_run = false;
  sweep_in.add_to(sweep);
  sweep_flags.add_env_flags(sweep, false);
  sweep->add_option("--model-output-dim", grid.model_output_dim)->delimiter(',');
  sweep->add_option("--value-loss-coef", grid.value_loss_coef)->delimiter(',');
  sweep->add_option("--entropy-coef", grid.entropy_coef)->delimiter(',');
  sweep->add_option("--learning-rate", grid.learning_rate)->delimiter(',');
  sweep->add_option("--total-training-steps", grid.total_training_steps)->delimiter(',');
  sweep->add_option("--node-frequency-penalty-scale", grid.node_frequency_penalty_scale)->delimiter(',');
  sweep->add_option("--num-parallel-envs", grid.num_parallel_envs)->delimiter(',');
  sweep->add_option("--out-dir", sweep_dir, "Report directory")->required();
  sweep->add_flag("--no-resume", no_resume, "Rerun combinations that already have reports");
  sweep->add_flag("--dry-run", dry_run, "Print the combination count and exit");

  // report
  auto* report = app.add_subcommand("report", "Rebuild summary CSVs from run reports");
  std::string report_dir;
  report->add_option("dir", report_dir, "Directory with run_*.json")->required()->check(CLI::ExistingDirectory);

  for (auto* sub : {ingest, build, analyze, train, sweep, report}) {
    sub->set_config("--config", "", "JSON config file; command line flags take precedence");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*ingest) {
      const ParseResult parsed = load_events(ingest_in);
      std::ostringstream out;
      write_canonical_jsonl(out, parsed.events);
      write_text(ingest_out, out.str());
    } else if (*build) {
      auto g = build_in.load();
      write_text(build_out, export_graph(*g, GraphFormat::NodeLinkJson));
      if (!build_dot.empty()) write_text(build_dot, export_graph(*g, GraphFormat::Dot));
      std::cerr << "graph: " << g->node_count() << " nodes, " << g->edge_count() << " edges\n";
    } else if (*analyze) {
      auto g = analyze_in.load();
      const MetricsReport rep = metrics_report(*g, !unweighted);
      std::optional<ReferenceCheck> check;
      if (reference == "brawl") {
        check = check_reference(rep, brawl_reference());
        for (const auto& d : check->discrepancies) std::cerr << "reference discrepancy: " << d << '\n';
      }
      write_text(analyze_out, report_to_json(rep, top_k, check ? &*check : nullptr));
      if (!knn_csv.empty()) write_text(knn_csv, degree_connectivity_csv(rep));
      if (!central_csv.empty()) write_text(central_csv, centrality_csv(rep, top_k));
    } else if (*train) {
      train_flags.finish();
      auto g = train_in.load();
      RunResult res = run_training(g, train_flags.env, train_flags.agent, train_flags.run);
      print_run(res.report);
      if (!train_dir.empty()) emit_reports(std::span<const RunReport>(&res.report, 1), train_dir);
      if (!checkpoint.empty()) {
        write_text(checkpoint, checkpoint_to_json(res.params, &res.optimizer, res.report.seed));
      }
      if (res.report.status == RunStatus::Failed) return kExitData;
    } else if (*sweep) {
      sweep_flags.finish();
      grid.trainer_n_steps = sweep_flags.run.trainer_n_steps;
      grid.gamma = sweep_flags.run.gamma;
      grid.validate();
      std::cout << "sweep: " << grid.combination_count() << " combinations\n";
      if (dry_run) return kExitOk;
      auto g = sweep_in.load();
      SweepOptions opts;
      opts.out_dir = fs::path(sweep_dir);
      opts.resume = !no_resume;
      opts.base_env = sweep_flags.env;
      opts.base_agent = sweep_flags.agent;
      opts.base_run = sweep_flags.run;
      opts.on_report = print_run;
      const auto reports = run_sweep(g, grid, sweep_flags.run.seed, opts);
      const SweepSummary s = summarize_sweep(reports);
      std::cout << "summary over " << s.runs << " runs: avg_reward " << s.avg_reward_mean << " (std "
                << s.avg_reward_std << "), value_loss " << s.avg_value_loss_mean << " (std "
                << s.avg_value_loss_std << "), policy_loss " << s.avg_policy_loss_mean << " (std "
                << s.avg_policy_loss_std << ")\n";
    } else if (*report) {
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(report_dir)) {
        const auto name = entry.path().filename().string();
        if (name.rfind("run_", 0) == 0 && entry.path().extension() == ".json") files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
      std::vector<RunReport> reports;
      for (const auto& f : files) reports.push_back(run_report_from_json(read_text(f.string())));
      emit_reports(reports, report_dir);
      for (const auto& r : reports) print_run(r);
      std::cout << sweep_summary_csv(summarize_sweep(reports));
    }
  } catch (const ResourceBudgetError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBudget;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}
