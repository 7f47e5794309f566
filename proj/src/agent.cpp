#include "procgraph/agent.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <set>

namespace procgraph {

using nlohmann::json;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

const char* param_tensor_name(std::size_t index) {
  static constexpr const char* names[kParamTensorCount] = {
      "embed_w", "embed_b", "gcn1_w", "gcn1_b", "gcn2_w", "gcn2_b",
      "actor_w", "actor_b", "critic_w", "critic_b"};
  return names[index];
}

std::size_t AgentParams::parameter_count() const {
  std::size_t total = 0;
  for (const auto& t : tensors) total += static_cast<std::size_t>(t.size());
  return total;
}

TensorSet AgentParams::zeros_like() const {
  TensorSet out;
  for (std::size_t i = 0; i < kParamTensorCount; ++i) {
    out[i] = MatrixXd::Zero(tensors[i].rows(), tensors[i].cols());
  }
  return out;
}

AgentParams AgentParams::initialize(const AgentConfig& cfg, Rng& rng) {
  if (cfg.feature_dim == 0 || cfg.m_dim == 0 || cfg.n_actions == 0) {
    throw ConfigError("agent dimensions must be positive");
  }
  if (!(cfg.dropout_rate >= 0.0 && cfg.dropout_rate < 1.0)) throw ConfigError("dropout_rate must be in [0, 1)");
  if (!(cfg.value_scale > 0.0) || !std::isfinite(cfg.value_scale)) throw ConfigError("value_scale must be positive");
  const auto f = static_cast<Eigen::Index>(cfg.feature_dim + 1);
  const auto m = static_cast<Eigen::Index>(cfg.m_dim);
  const auto a = static_cast<Eigen::Index>(cfg.n_actions);

  auto glorot = [&](Eigen::Index rows, Eigen::Index cols) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    MatrixXd w(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) w(r, c) = (2.0 * rng.uniform() - 1.0) * limit;
    }
    return w;
  };
  AgentParams p;
  p.dropout_rate = cfg.dropout_rate;
  p.value_scale = cfg.value_scale;
  p.tensors[kEmbedW] = glorot(f, m);
  p.tensors[kEmbedB] = MatrixXd::Zero(1, m);
  p.tensors[kGcn1W] = glorot(m, m);
  p.tensors[kGcn1B] = MatrixXd::Zero(1, m);
  p.tensors[kGcn2W] = glorot(m, m);
  p.tensors[kGcn2B] = MatrixXd::Zero(1, m);
  p.tensors[kActorW] = glorot(2 * m, a);
  p.tensors[kActorB] = MatrixXd::Zero(1, a);
  p.tensors[kCriticW] = glorot(2 * m, 1);
  p.tensors[kCriticB] = MatrixXd::Zero(1, 1);
  return p;
}

Eigen::SparseMatrix<double, Eigen::RowMajor> normalized_adjacency(const GraphSnapshot& snap) {
  const std::size_t n = snap.num_nodes;
  std::vector<std::set<std::size_t>> neighbors(n);
  for (std::size_t e = 0; e < snap.num_edges; ++e) {
    const auto s = snap.edge_source(e);
    const auto t = snap.edge_target(e);
    if (s < 0 || t < 0 || static_cast<std::size_t>(s) >= n || static_cast<std::size_t>(t) >= n) {
      throw UsageError("snapshot edge references a node outside the mask");
    }
    const auto su = static_cast<std::size_t>(s);
    const auto tu = static_cast<std::size_t>(t);
    neighbors[su].insert(tu);
    neighbors[tu].insert(su);
  }
  for (std::size_t i = 0; i < n; ++i) neighbors[i].insert(i);  // A + I, one loop per node

  std::vector<double> inv_sqrt_degree(n);
  for (std::size_t i = 0; i < n; ++i) {
    inv_sqrt_degree[i] = 1.0 / std::sqrt(static_cast<double>(neighbors[i].size()));
  }
  std::vector<Eigen::Triplet<double>> triplets;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : neighbors[i]) {
      triplets.emplace_back(static_cast<int>(i), static_cast<int>(j), inv_sqrt_degree[i] * inv_sqrt_degree[j]);
    }
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> adj(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  adj.setFromTriplets(triplets.begin(), triplets.end());
  return adj;
}

namespace {

MatrixXd dropout_keep(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  MatrixXd keep(rows, cols);
  const double scale = 1.0 / (1.0 - rate);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) keep(r, c) = rng.uniform() < rate ? 0.0 : scale;
  }
  return keep;
}

}  // namespace

ForwardCache forward(const GraphSnapshot& snap, const AgentParams& params, bool train_mode, Rng& rng) {
  if (snap.num_nodes == 0) throw UsageError("snapshot has no masked nodes");
  if (snap.feature_dim != params.feature_dim()) {
    throw UsageError("snapshot feature_dim " + std::to_string(snap.feature_dim) + " != agent feature_dim " +
                     std::to_string(params.feature_dim()));
  }
  if (snap.max_nodes != params.n_actions()) {
    throw UsageError("snapshot max_nodes " + std::to_string(snap.max_nodes) + " != agent action count " +
                     std::to_string(params.n_actions()));
  }
  if (snap.current_node >= snap.num_nodes) throw UsageError("current node outside the masked nodes");

  const auto n = static_cast<Eigen::Index>(snap.num_nodes);
  const auto f = static_cast<Eigen::Index>(snap.feature_dim);
  const auto& t = params.tensors;
  ForwardCache c;
  c.num_nodes = snap.num_nodes;
  c.current_node = snap.current_node;
  c.train_mode = train_mode;
  c.adjacency = normalized_adjacency(snap);

  c.input = MatrixXd::Zero(n, f + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < f; ++j) {
      c.input(i, j) = snap.node_features[static_cast<std::size_t>(i * f + j)];
    }
  }
  c.input(static_cast<Eigen::Index>(snap.current_node), f) = 1.0;

  const bool drop = train_mode && params.dropout_rate > 0.0;
  c.h0 = (c.input * t[kEmbedW]).rowwise() + t[kEmbedB].row(0);
  c.agg0 = c.adjacency * c.h0;
  c.z1 = (c.agg0 * t[kGcn1W]).rowwise() + t[kGcn1B].row(0);
  c.h1 = c.z1.cwiseMax(0.0);
  if (drop) {
    c.keep1 = dropout_keep(n, c.h1.cols(), params.dropout_rate, rng);
    c.h1 = c.h1.cwiseProduct(c.keep1);
  }
  c.agg1 = c.adjacency * c.h1;
  c.z2 = (c.agg1 * t[kGcn2W]).rowwise() + t[kGcn2B].row(0);
  c.h2 = c.z2.cwiseMax(0.0);
  if (drop) {
    c.keep2 = dropout_keep(n, c.h2.cols(), params.dropout_rate, rng);
    c.h2 = c.h2.cwiseProduct(c.keep2);
  }
  c.pooled = c.h2.colwise().mean();
  c.readout.resize(2 * c.pooled.size());
  c.readout << c.pooled, c.h2.row(static_cast<Eigen::Index>(c.current_node));
  c.logits = c.readout * t[kActorW] + t[kActorB];
  c.value = params.value_scale * ((c.readout * t[kCriticW])(0, 0) + t[kCriticB](0, 0));
  return c;
}

RowVectorXd log_softmax(const RowVectorXd& logits) {
  const double top = logits.maxCoeff();
  const double lse = top + std::log((logits.array() - top).exp().sum());
  return (logits.array() - lse).matrix();
}

RowVectorXd softmax(const RowVectorXd& logits) {
  return log_softmax(logits).array().exp().matrix();
}

ActionSample sample_action(const RowVectorXd& logits, Rng& rng) {
  const RowVectorXd logp = log_softmax(logits);
  const RowVectorXd p = logp.array().exp().matrix();
  const double u = rng.uniform();
  double cumulative = 0.0;
  Eigen::Index chosen = p.size() - 1;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    cumulative += p[k];
    if (u < cumulative) {
      chosen = k;
      break;
    }
  }
  // Guard against rounding leaving u above the final cumulative sum.
  while (chosen > 0 && p[chosen] == 0.0) --chosen;
  ActionSample s;
  s.action = static_cast<std::size_t>(chosen);
  s.log_prob = logp[chosen];
  double h = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    if (p[k] > 0.0) h -= p[k] * logp[k];
  }
  s.entropy = h;
  return s;
}

std::vector<double> n_step_returns(std::span<const double> rewards, double bootstrap_value, double gamma,
                                   std::span<const std::uint8_t> done_flags) {
  if (rewards.empty()) throw UsageError("n_step_returns needs at least one reward");
  if (rewards.size() != done_flags.size()) throw UsageError("rewards and done flags differ in length");
  std::vector<double> returns(rewards.size());
  double running = bootstrap_value;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    running = done_flags[i] ? rewards[i] : rewards[i] + gamma * running;
    returns[i] = running;
  }
  return returns;
}

LossBreakdown compute_losses(std::span<const TrainingSample> batch, const LossCoefficients& coefs) {
  if (batch.empty()) throw UsageError("compute_losses needs a non-empty batch");
  const auto count = static_cast<double>(batch.size());
  LossBreakdown out;
  out.coefficients = coefs;
  out.advantages.reserve(batch.size());
  for (const auto& s : batch) out.advantages.push_back(s.target_return - s.cache.value);

  double mean = 0.0;
  for (double a : out.advantages) mean += a;
  mean /= count;
  out.advantage_mean = mean;
  if (coefs.normalize_advantage && batch.size() > 1) {
    double var = 0.0;
    for (double a : out.advantages) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / count);
    for (double& a : out.advantages) a = (a - mean) / (sd + 1e-8);
  }

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& s = batch[i];
    if (s.action >= static_cast<std::size_t>(s.cache.logits.size())) throw UsageError("action out of range");
    const RowVectorXd logp = log_softmax(s.cache.logits);
    double h = 0.0;
    for (Eigen::Index k = 0; k < logp.size(); ++k) h -= std::exp(logp[k]) * logp[k];
    const double diff = s.cache.value - s.target_return;
    out.policy_terms.push_back(-logp[static_cast<Eigen::Index>(s.action)] * out.advantages[i]);
    out.value_terms.push_back(diff * diff);
    out.entropy_terms.push_back(h);
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.policy_loss += out.policy_terms[i];
    out.value_loss += out.value_terms[i];
    out.entropy += out.entropy_terms[i];
  }
  out.policy_loss /= count;
  out.value_loss /= count;
  out.entropy /= count;
  out.total = out.policy_loss + coefs.value * out.value_loss - coefs.entropy * out.entropy;
  return out;
}

TensorSet backward(std::span<const TrainingSample> batch, const LossBreakdown& losses, const AgentParams& params) {
  if (batch.size() != losses.advantages.size()) throw UsageError("loss breakdown does not belong to this batch");
  const auto& t = params.tensors;
  TensorSet g = params.zeros_like();
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const double c_v = losses.coefficients.value;
  const double c_e = losses.coefficients.entropy;

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& c = batch[i].cache;
    if (c.readout.size() != t[kActorW].rows() || c.logits.size() != t[kActorW].cols() ||
        c.input.cols() != t[kEmbedW].rows()) {
      throw UsageError("forward cache does not match parameter shapes");
    }
    const RowVectorXd logp = log_softmax(c.logits);
    const RowVectorXd p = logp.array().exp().matrix();
    const double h = losses.entropy_terms[i];
    const double adv = losses.advantages[i];

    // d total / d logits
    RowVectorXd dlogits = c_e * (p.array() * (logp.array() + h)).matrix();
    dlogits += adv * p;
    dlogits[static_cast<Eigen::Index>(batch[i].action)] -= adv;
    dlogits *= inv_n;
    const double dvalue = params.value_scale * inv_n * c_v * 2.0 * (c.value - batch[i].target_return);

    g[kActorW].noalias() += c.readout.transpose() * dlogits;
    g[kActorB] += dlogits;
    g[kCriticW] += c.readout.transpose() * dvalue;
    g[kCriticB](0, 0) += dvalue;

    const RowVectorXd dreadout = dlogits * t[kActorW].transpose() + dvalue * t[kCriticW].transpose();
    const Eigen::Index m = c.pooled.size();
    const auto rows = static_cast<Eigen::Index>(c.num_nodes);
    MatrixXd dz2 = (dreadout.head(m) / static_cast<double>(rows)).replicate(rows, 1);
    dz2.row(static_cast<Eigen::Index>(c.current_node)) += dreadout.tail(m);
    if (c.keep2.size() != 0) dz2 = dz2.cwiseProduct(c.keep2);
    dz2 = dz2.cwiseProduct((c.z2.array() > 0.0).cast<double>().matrix());

    g[kGcn2W].noalias() += c.agg1.transpose() * dz2;
    g[kGcn2B] += dz2.colwise().sum();
    MatrixXd dz1 = c.adjacency * (dz2 * t[kGcn2W].transpose());  // adjacency is symmetric
    if (c.keep1.size() != 0) dz1 = dz1.cwiseProduct(c.keep1);
    dz1 = dz1.cwiseProduct((c.z1.array() > 0.0).cast<double>().matrix());

    g[kGcn1W].noalias() += c.agg0.transpose() * dz1;
    g[kGcn1B] += dz1.colwise().sum();
    const MatrixXd dh0 = c.adjacency * (dz1 * t[kGcn1W].transpose());
    g[kEmbedW].noalias() += c.input.transpose() * dh0;
    g[kEmbedB] += dh0.colwise().sum();
  }
  return g;
}

double clip_global_norm(TensorSet& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (std::isfinite(norm) && norm > max_norm && max_norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto& g : grads) g *= scale;
  }
  return norm;
}

OptimizerState OptimizerState::for_params(const AgentParams& params, double learning_rate) {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be positive");
  OptimizerState s;
  s.first_moment = params.zeros_like();
  s.second_moment = params.zeros_like();
  s.learning_rate = learning_rate;
  return s;
}

AdamOutcome adam_step(AgentParams& params, const TensorSet& grads, OptimizerState& state) {
  AdamOutcome outcome;
  for (std::size_t i = 0; i < kParamTensorCount; ++i) {
    if (grads[i].rows() != params.tensors[i].rows() || grads[i].cols() != params.tensors[i].cols() ||
        state.first_moment[i].rows() != params.tensors[i].rows() ||
        state.first_moment[i].cols() != params.tensors[i].cols()) {
      throw UsageError(std::string("gradient shape mismatch for ") + param_tensor_name(i));
    }
    if (!grads[i].allFinite()) {
      outcome.diagnostic = std::string("non-finite gradient in ") + param_tensor_name(i) + "; update rejected";
      return outcome;
    }
  }
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < kParamTensorCount; ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * grads[i];
    v = state.beta2 * v + (1.0 - state.beta2) * grads[i].cwiseProduct(grads[i]);
    const auto m_hat = m.array() / correction1;
    const auto v_hat = v.array() / correction2;
    params.tensors[i].array() -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
  }
  outcome.applied = true;
  return outcome;
}

// --- checkpoints -------------------------------------------------------------------

namespace {

json tensor_json(const MatrixXd& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

json tensor_set_json(const TensorSet& set) {
  json out = json::object();
  for (std::size_t i = 0; i < kParamTensorCount; ++i) out[param_tensor_name(i)] = tensor_json(set[i]);
  return out;
}

MatrixXd tensor_from_json(const json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data")) {
    throw ParseError("tensor needs rows, cols and data", where);
  }
  const auto rows = j["rows"].get<Eigen::Index>();
  const auto cols = j["cols"].get<Eigen::Index>();
  const auto& data = j["data"];
  if (rows < 0 || cols < 0 || !data.is_array() || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw ParseError("tensor data length does not match its shape", where);
  }
  MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto& v = data[static_cast<std::size_t>(r * cols + c)];
      if (!v.is_number()) throw ParseError("tensor entries must be numbers", where);
      m(r, c) = v.get<double>();
    }
  }
  return m;
}

TensorSet tensor_set_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw ParseError("expected an object of tensors", where);
  TensorSet set;
  for (std::size_t i = 0; i < kParamTensorCount; ++i) {
    const std::string name = param_tensor_name(i);
    if (!j.contains(name)) throw ParseError("missing tensor '" + name + "'", where);
    set[i] = tensor_from_json(j[name], where + "/" + name);
  }
  return set;
}

}  // namespace

std::string checkpoint_to_json(const AgentParams& params, const OptimizerState* opt, std::uint64_t seed) {
  json doc;
  doc["format"] = "procgraph-agent-checkpoint";
  doc["version"] = 1;
  doc["seed"] = seed;
  doc["dropout_rate"] = params.dropout_rate;
  doc["value_scale"] = params.value_scale;
  doc["tensors"] = tensor_set_json(params.tensors);
  if (opt) {
    doc["optimizer"] = {{"step_count", opt->step_count},
                        {"learning_rate", opt->learning_rate},
                        {"beta1", opt->beta1},
                        {"beta2", opt->beta2},
                        {"epsilon", opt->epsilon},
                        {"first_moment", tensor_set_json(opt->first_moment)},
                        {"second_moment", tensor_set_json(opt->second_moment)}};
  }
  return doc.dump();
}

Checkpoint checkpoint_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), "byte " + std::to_string(e.byte));
  }
  if (!doc.is_object() || doc.value("format", "") != "procgraph-agent-checkpoint") {
    throw ParseError("not an agent checkpoint", "/format");
  }
  if (doc.value("version", 0) != 1) throw ParseError("unsupported checkpoint version", "/version");
  Checkpoint cp;
  try {
    cp.seed = doc.value("seed", std::uint64_t{0});
    cp.params.dropout_rate = doc.value("dropout_rate", 0.1);
    cp.params.value_scale = doc.value("value_scale", 1000.0);
    cp.params.tensors = tensor_set_from_json(doc.at("tensors"), "/tensors");
    if (doc.contains("optimizer")) {
      const auto& o = doc["optimizer"];
      OptimizerState s;
      s.step_count = o.at("step_count").get<std::uint64_t>();
      s.learning_rate = o.at("learning_rate").get<double>();
      s.beta1 = o.at("beta1").get<double>();
      s.beta2 = o.at("beta2").get<double>();
      s.epsilon = o.at("epsilon").get<double>();
      s.first_moment = tensor_set_from_json(o.at("first_moment"), "/optimizer/first_moment");
      s.second_moment = tensor_set_from_json(o.at("second_moment"), "/optimizer/second_moment");
      cp.optimizer = std::move(s);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what(), "/");
  }
  return cp;
}

}  // namespace procgraph
