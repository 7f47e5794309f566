#pragma once

#include "procgraph/graph.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace procgraph {

/// Seeded generator with a platform-independent uniform draw (the standard
/// distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer; derives independent stream seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

struct AgentConfig {
  std::size_t feature_dim = 52;
  std::size_t m_dim = 64;
  std::size_t n_actions = 0;  // = max_nodes of the environment
  double dropout_rate = 0.1;
  double value_scale = 1000.0;  // critic output multiplier
};

enum ParamTensor : std::size_t {
  kEmbedW = 0,
  kEmbedB,
  kGcn1W,
  kGcn1B,
  kGcn2W,
  kGcn2B,
  kActorW,
  kActorB,
  kCriticW,
  kCriticB,
  kParamTensorCount,
};

const char* param_tensor_name(std::size_t index);

using TensorSet = std::array<Eigen::MatrixXd, kParamTensorCount>;

/// Weights of the GCN actor-critic. The embedding takes feature_dim + 1
/// inputs: node features plus a current-node indicator column. Both heads
/// read [mean-pooled embedding | current node embedding], 2 * m_dim wide.
/// Biases are 1 x k row matrices.
struct AgentParams {
  TensorSet tensors;
  double dropout_rate = 0.1;
  /// V(s) = value_scale * (readout . critic_w + critic_b). Lets the critic
  /// reach returns of the size of the terminal bonus at small learning rates.
  double value_scale = 1000.0;

  std::size_t feature_dim() const { return static_cast<std::size_t>(tensors[kEmbedW].rows()) - 1; }
  std::size_t m_dim() const { return static_cast<std::size_t>(tensors[kEmbedW].cols()); }
  std::size_t n_actions() const { return static_cast<std::size_t>(tensors[kActorW].cols()); }
  std::size_t parameter_count() const;

  /// Glorot-uniform weights, zero biases.
  static AgentParams initialize(const AgentConfig& cfg, Rng& rng);
  /// Zero tensors with the same shapes.
  TensorSet zeros_like() const;
};

struct ForwardCache {
  std::size_t num_nodes = 0;
  NodeId current_node = 0;
  bool train_mode = false;
  Eigen::SparseMatrix<double, Eigen::RowMajor> adjacency;  // D^-1/2 (A + I) D^-1/2
  Eigen::MatrixXd input;       // n x (feature_dim + 1)
  Eigen::MatrixXd h0;          // embedding
  Eigen::MatrixXd agg0;        // adjacency * h0
  Eigen::MatrixXd z1;
  Eigen::MatrixXd keep1;       // dropout scale, empty in eval mode
  Eigen::MatrixXd h1;
  Eigen::MatrixXd agg1;
  Eigen::MatrixXd z2;
  Eigen::MatrixXd keep2;
  Eigen::MatrixXd h2;
  Eigen::RowVectorXd pooled;
  Eigen::RowVectorXd readout;  // [pooled | h2 row of the current node]
  Eigen::RowVectorXd logits;
  double value = 0.0;
};

/// Symmetric-normalized adjacency with self-loops over the undirected view
/// of the snapshot's edges, restricted to masked nodes.
Eigen::SparseMatrix<double, Eigen::RowMajor> normalized_adjacency(const GraphSnapshot& snap);

/// Throws UsageError on shape mismatch or a snapshot with no nodes.
ForwardCache forward(const GraphSnapshot& snap, const AgentParams& params, bool train_mode, Rng& rng);

Eigen::RowVectorXd softmax(const Eigen::RowVectorXd& logits);
Eigen::RowVectorXd log_softmax(const Eigen::RowVectorXd& logits);

struct ActionSample {
  std::size_t action = 0;
  double log_prob = 0.0;
  double entropy = 0.0;
};

ActionSample sample_action(const Eigen::RowVectorXd& logits, Rng& rng);

/// R_t = r_t + gamma * R_{t+1}, seeded with `bootstrap_value`; a done flag at
/// t cuts the recursion (R_t = r_t). Throws UsageError on empty or
/// mismatched input.
std::vector<double> n_step_returns(std::span<const double> rewards, double bootstrap_value, double gamma,
                                   std::span<const std::uint8_t> done_flags);

struct TrainingSample {
  ForwardCache cache;
  std::size_t action = 0;
  double target_return = 0.0;
};

struct LossCoefficients {
  double value = 0.5;    // c_v
  double entropy = 0.01; // c_e
  bool normalize_advantage = false;
};

struct LossBreakdown {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double total = 0.0;  // policy_loss + c_v * value_loss - c_e * entropy
  double advantage_mean = 0.0;
  LossCoefficients coefficients;
  std::vector<double> advantages;  // as used by the policy term (constants)
  // Per-sample contributions; their means are the losses above.
  std::vector<double> policy_terms;
  std::vector<double> value_terms;
  std::vector<double> entropy_terms;
};

/// Throws UsageError on an empty batch.
LossBreakdown compute_losses(std::span<const TrainingSample> batch, const LossCoefficients& coefs);

/// Exact gradients of `losses.total` for the batch the losses came from.
TensorSet backward(std::span<const TrainingSample> batch, const LossBreakdown& losses,
                   const AgentParams& params);

/// Rescales all tensors so their joint L2 norm is at most max_norm. Returns
/// the norm before clipping.
double clip_global_norm(TensorSet& grads, double max_norm);

struct OptimizerState {
  TensorSet first_moment;
  TensorSet second_moment;
  std::uint64_t step_count = 0;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static OptimizerState for_params(const AgentParams& params, double learning_rate);
};

struct AdamOutcome {
  bool applied = false;
  std::string diagnostic;  // set when the update is rejected
};

/// Bias-corrected Adam. A non-finite gradient rejects the whole update and
/// leaves params and state untouched.
AdamOutcome adam_step(AgentParams& params, const TensorSet& grads, OptimizerState& state);

// --- checkpoints --------------------------------------------------------------------

/// JSON container:
///   {"format":"procgraph-agent-checkpoint","version":1,"seed":S,
///    "dropout_rate":p,"value_scale":s,
///    "tensors":{name:{"rows":r,"cols":c,"data":[row-major]}},
///    "optimizer":{"step_count","learning_rate","beta1","beta2","epsilon",
///                 "first_moment":{...},"second_moment":{...}}}
std::string checkpoint_to_json(const AgentParams& params, const OptimizerState* opt, std::uint64_t seed);

struct Checkpoint {
  AgentParams params;
  std::optional<OptimizerState> optimizer;
  std::uint64_t seed = 0;
};

/// Throws ParseError.
Checkpoint checkpoint_from_json(std::string_view text);

}  // namespace procgraph
