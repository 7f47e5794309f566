#include "procgraph/agent.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace procgraph;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;

namespace {

AgentParams small_params(std::size_t f, std::size_t m, std::size_t a, std::uint64_t seed, double dropout = 0.0) {
  AgentConfig cfg;
  cfg.feature_dim = f;
  cfg.m_dim = m;
  cfg.n_actions = a;
  cfg.dropout_rate = dropout;
  Rng rng(seed);
  auto p = AgentParams::initialize(cfg, rng);
  for (auto& t : p.tensors)
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += 0.05 * (rng.uniform() - 0.5);
  return p;
}

TrainingSample sample_with(const RowVectorXd& logits, double value, std::size_t action, double target) {
  TrainingSample s;
  s.cache.logits = logits;
  s.cache.value = value;
  s.action = action;
  s.target_return = target;
  return s;
}

double entropy_of(const std::vector<double>& p) {
  double h = 0.0;
  for (double x : p) h -= x * std::log(x);
  return h;
}

}  // namespace

TEST_SUITE("agent") {

TEST_CASE("seed mixing is stable and spreads streams") {
  CHECK(mix_seed(1, 0) == mix_seed(1, 0));
  CHECK(mix_seed(1, 0) != mix_seed(1, 1));
  CHECK(mix_seed(1, 0) != mix_seed(2, 0));
  Rng a(7), b(7);
  for (int i = 0; i < 10; ++i) CHECK(a.uniform() == b.uniform());
}

TEST_CASE("softmax") {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    RowVectorXd z(7);
    for (Eigen::Index k = 0; k < 7; ++k) z[k] = 40.0 * (rng.uniform() - 0.5);
    const auto p = softmax(z);
    CHECK(std::abs(p.sum() - 1.0) <= 1e-9);
    CHECK((p.array() > 0.0).all());
  }
  const auto uniform = softmax(RowVectorXd::Zero(4));
  for (Eigen::Index k = 0; k < 4; ++k) CHECK(uniform[k] == doctest::Approx(0.25));
  RowVectorXd spike = RowVectorXd::Zero(3);
  spike[1] = 1e9;
  CHECK(softmax(spike)[1] == doctest::Approx(1.0));
  Rng r(2);
  CHECK(sample_action(spike, r).action == 1);
}

TEST_CASE("sampling frequencies follow the softmax") {
  RowVectorXd z(4);
  z << 0.3, -1.0, 1.2, 0.0;
  const auto p = softmax(z);
  Rng rng(99);
  std::vector<double> freq(4, 0.0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const auto s = sample_action(z, rng);
    freq[s.action] += 1.0 / draws;
    if (i == 0) {
      CHECK(s.log_prob == doctest::Approx(std::log(p[static_cast<Eigen::Index>(s.action)])));
      CHECK(s.entropy == doctest::Approx(-(p.array() * p.array().log()).sum()));
    }
  }
  for (Eigen::Index k = 0; k < 4; ++k) CHECK(std::abs(freq[static_cast<std::size_t>(k)] - p[k]) < 0.01);
}

TEST_CASE("n-step returns") {
  const std::vector<double> ones{1, 1, 1};
  const std::vector<std::uint8_t> none{0, 0, 0};
  CHECK(n_step_returns(ones, 0.0, 1.0, none) == std::vector<double>{3, 2, 1});
  const std::vector<double> sparse{0, 0, 5000};
  CHECK(n_step_returns(sparse, 0.0, 0.99, none)[0] == doctest::Approx(4900.5));
  const std::vector<std::uint8_t> cut{0, 1, 0};
  const std::vector<double> r1{1, 2, 100};
  const std::vector<double> r2{1, 2, -7};
  CHECK(n_step_returns(r1, 50.0, 0.9, cut)[0] == n_step_returns(r2, -3.0, 0.9, cut)[0]);
  CHECK(n_step_returns(r1, 10.0, 0.5, none)[2] == doctest::Approx(105.0));
  CHECK_THROWS_AS(n_step_returns(std::vector<double>{}, 0.0, 0.9, std::vector<std::uint8_t>{}), UsageError);
  CHECK_THROWS_AS(n_step_returns(ones, 0.0, 0.9, std::span<const std::uint8_t>(cut.data(), 2)), UsageError);
}

TEST_CASE("loss terms and their composition") {
  // log pi(a) = -0.5, H = 1.0, A = 2, V = 1, R = 3.
  const double pa = std::exp(-0.5);
  const double rest = 1.0 - pa;
  // Four actions: pa, q and two of (rest - q) / 2; H rises with q up to rest / 3.
  double lo = 1e-12, hi = rest / 3;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (entropy_of({pa, mid, (rest - mid) / 2, (rest - mid) / 2}) < 1.0 ? lo : hi) = mid;
  }
  const double q = 0.5 * (lo + hi);
  RowVectorXd logits(4);
  logits << -0.5, std::log(q), std::log((rest - q) / 2), std::log((rest - q) / 2);
  const std::vector<TrainingSample> batch{sample_with(logits, 1.0, 0, 3.0)};
  const auto l = compute_losses(batch, LossCoefficients{0.5, 0.01, false});
  CHECK(l.policy_loss == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(l.value_loss == doctest::Approx(4.0));
  CHECK(l.entropy == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(l.total == doctest::Approx(2.99).epsilon(1e-9));
  CHECK(l.total - (l.policy_loss + 0.5 * l.value_loss - 0.01 * l.entropy) == 0.0);
  CHECK(l.advantages == std::vector<double>{2.0});

  const std::vector<TrainingSample> flat{sample_with(RowVectorXd::Zero(5), 2.0, 3, 2.0),
                                         sample_with(RowVectorXd::Zero(5), -1.0, 1, -1.0)};
  const auto z = compute_losses(flat, LossCoefficients{});
  CHECK(z.policy_loss == 0.0);
  CHECK(z.value_loss == 0.0);
  CHECK(z.entropy == doctest::Approx(std::log(5.0)));
  CHECK_THROWS_AS(compute_losses(std::span<const TrainingSample>{}, LossCoefficients{}), UsageError);
}

TEST_CASE("hand-computed forward pass on a single node") {
  GraphSnapshot snap;
  snap.max_nodes = 1;
  snap.max_edges = 1;
  snap.feature_dim = 2;
  snap.node_features = {0.5, -1.0};
  snap.edge_index = {0, 0};
  snap.num_nodes = 1;
  snap.num_edges = 1;
  snap.node_mask = {1};

  AgentParams p;
  p.dropout_rate = 0.0;
  p.value_scale = 2.0;
  auto& t = p.tensors;
  t[kEmbedW] = MatrixXd(3, 2);
  t[kEmbedW] << 1.0, 2.0, 0.5, -1.0, 0.25, 0.0;
  t[kEmbedB] = MatrixXd(1, 2);
  t[kEmbedB] << 0.1, 0.2;
  t[kGcn1W] = MatrixXd(2, 2);
  t[kGcn1W] << 1.0, -1.0, 0.5, 1.0;
  t[kGcn1B] = MatrixXd::Zero(1, 2);
  t[kGcn2W] = MatrixXd(2, 2);
  t[kGcn2W] << 2.0, 0.0, -1.0, 1.0;
  t[kGcn2B] = MatrixXd(1, 2);
  t[kGcn2B] << 0.0, 0.5;
  t[kActorW] = MatrixXd(4, 1);
  t[kActorW] << 1.0, 1.0, 1.0, 1.0;
  t[kActorB] = MatrixXd::Zero(1, 1);
  t[kCriticW] = MatrixXd(4, 1);
  t[kCriticW] << 1.0, -2.0, 0.5, 0.0;
  t[kCriticB] = MatrixXd(1, 1);
  t[kCriticB] << 0.3;

  // input [0.5, -1, 1]; A_hat = [1].
  // h0 = [0.5 - 0.5 + 0.25 + 0.1, 1 + 1 + 0 + 0.2] = [0.35, 2.2]
  // z1 = [0.35 + 1.1, -0.35 + 2.2] = [1.45, 1.85]
  // z2 = [2.9 - 1.85, 1.85 + 0.5] = [1.05, 2.35]
  // readout = [1.05, 2.35, 1.05, 2.35]
  // value = 2 * (1.05 - 4.7 + 0.525 + 0.3) = -5.65
  Rng rng(0);
  const auto c = forward(snap, p, false, rng);
  CHECK(c.h0(0, 0) == doctest::Approx(0.35));
  CHECK(c.h0(0, 1) == doctest::Approx(2.2));
  CHECK(c.h2(0, 0) == doctest::Approx(1.05));
  CHECK(c.h2(0, 1) == doctest::Approx(2.35));
  CHECK(c.value == doctest::Approx(-5.65));
  CHECK(c.logits[0] == doctest::Approx(6.8));
}

TEST_CASE("zero embedding and biases give a uniform policy") {
  Rng rng(4);
  const auto g = procgraph::testing::random_graph(rng, 4, 0.5);
  auto p = small_params(52, 8, 4, 1);
  p.tensors[kEmbedW].setZero();
  p.tensors[kEmbedB].setZero();
  p.tensors[kGcn1B].setZero();
  p.tensors[kGcn2B].setZero();
  p.tensors[kActorB].setZero();
  const auto c = forward(snapshot(g, 0, 4, 16), p, false, rng);
  CHECK(c.pooled.isZero());
  const auto pi = softmax(c.logits);
  for (Eigen::Index k = 0; k < 4; ++k) CHECK(pi[k] == doctest::Approx(0.25));
}

TEST_CASE("value is invariant under node relabeling") {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const auto g = procgraph::testing::random_graph(rng, 6, 0.35);
    const auto features = encode_features(g);
    std::vector<std::size_t> perm{0, 1, 2, 3, 4, 5};
    for (std::size_t i = 5; i > 0; --i) std::swap(perm[i], perm[procgraph::testing::uniform_index(rng, i + 1)]);
    const NodeId current = procgraph::testing::uniform_index(rng, 6);

    GraphSnapshot a = snapshot(g, features, current, 6, 36);
    GraphSnapshot b = a;
    for (std::size_t v = 0; v < 6; ++v)
      for (std::size_t c = 0; c < a.feature_dim; ++c) b.node_features[perm[v] * a.feature_dim + c] = a.feature(v, c);
    for (std::size_t e = 0; e < a.num_edges; ++e) {
      b.edge_index[e] = static_cast<std::int64_t>(perm[static_cast<std::size_t>(a.edge_source(e))]);
      b.edge_index[a.max_edges + e] = static_cast<std::int64_t>(perm[static_cast<std::size_t>(a.edge_target(e))]);
    }
    b.current_node = perm[current];

    const auto p = small_params(52, 8, 6, 100 + trial);
    Rng r(0);
    const auto fa = forward(a, p, false, r);
    const auto fb = forward(b, p, false, r);
    CHECK(std::abs(fa.value - fb.value) <= 1e-9);
    CHECK((fa.pooled - fb.pooled).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("dropout only in train mode") {
  Rng rng(3);
  const auto g = procgraph::testing::random_graph(rng, 5, 0.4);
  const auto snap = snapshot(g, 1, 5, 25);
  const auto p = small_params(52, 16, 5, 2, 0.5);
  Rng r1(1), r2(2);
  CHECK(forward(snap, p, false, r1).value == forward(snap, p, false, r2).value);
  const auto train = forward(snap, p, true, r1);
  CHECK(train.keep1.size() > 0);
  CHECK(forward(snap, p, false, r1).keep1.size() == 0);
}

TEST_CASE("forward rejects mismatched shapes") {
  Rng rng(3);
  const auto g = procgraph::testing::random_graph(rng, 5, 0.4);
  const auto p = small_params(52, 4, 6, 2);
  CHECK_THROWS_AS(forward(snapshot(g, 0, 5, 25), p, false, rng), UsageError);
  auto snap = snapshot(g, 0, 6, 25);
  snap.num_nodes = 0;
  CHECK_THROWS_AS(forward(snap, p, false, rng), UsageError);
}

TEST_CASE("flat loss gives zero gradients; critic gradient is linear in c_v") {
  Rng rng(8);
  const auto g = procgraph::testing::random_graph(rng, 5, 0.4);
  const auto p = small_params(52, 6, 5, 3);
  TrainingSample s;
  s.cache = forward(snapshot(g, 2, 5, 25), p, true, rng);
  s.action = 1;
  s.target_return = s.cache.value;
  std::vector<TrainingSample> batch{s};
  const auto flat = compute_losses(batch, LossCoefficients{0.5, 0.0, false});
  for (const auto& t : backward(batch, flat, p)) CHECK(t.cwiseAbs().maxCoeff() == 0.0);

  batch[0].target_return = s.cache.value + 3.0;
  const auto l1 = compute_losses(batch, LossCoefficients{0.5, 0.0, false});
  const auto l2 = compute_losses(batch, LossCoefficients{1.0, 0.0, false});
  const auto g1 = backward(batch, l1, p);
  const auto g2 = backward(batch, l2, p);
  CHECK((g2[kCriticW] - 2.0 * g1[kCriticW]).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(g2[kCriticB](0, 0) == doctest::Approx(2.0 * g1[kCriticB](0, 0)));
}

TEST_CASE("adam") {
  auto p = small_params(4, 3, 2, 5);
  const auto before = p;
  auto state = OptimizerState::for_params(p, 0.001);
  CHECK(adam_step(p, p.zeros_like(), state).applied);
  for (std::size_t i = 0; i < kParamTensorCount; ++i) CHECK(p.tensors[i] == before.tensors[i]);

  auto ones = p.zeros_like();
  for (auto& t : ones) t.setOnes();
  auto q = before;
  auto fresh = OptimizerState::for_params(q, 0.001);
  adam_step(q, ones, fresh);
  for (std::size_t i = 0; i < kParamTensorCount; ++i) {
    const MatrixXd delta = before.tensors[i] - q.tensors[i];
    CHECK(delta.minCoeff() == doctest::Approx(0.001).epsilon(1e-6));
    CHECK(delta.maxCoeff() == doctest::Approx(0.001).epsilon(1e-6));
  }
  CHECK(fresh.step_count == 1);

  auto bad = ones;
  bad[kGcn1W](0, 0) = std::nan("");
  const auto snapshot_state = fresh;
  const auto kept = q;
  const auto out = adam_step(q, bad, fresh);
  CHECK_FALSE(out.applied);
  CHECK(out.diagnostic.find("gcn1_w") != std::string::npos);
  CHECK(fresh.step_count == snapshot_state.step_count);
  for (std::size_t i = 0; i < kParamTensorCount; ++i) CHECK(q.tensors[i] == kept.tensors[i]);
  CHECK_THROWS_AS(OptimizerState::for_params(q, 0.0), ConfigError);
}

TEST_CASE("a repeated positive-advantage action grows in probability") {
  Rng rng(21);
  const auto g = procgraph::testing::random_graph(rng, 4, 0.5);
  const auto snap = snapshot(g, 0, 4, 16);
  auto p = small_params(52, 8, 4, 6);
  auto state = OptimizerState::for_params(p, 0.01);
  double last = 0.0;
  for (int i = 0; i < 30; ++i) {
    TrainingSample s;
    Rng fr(0);
    s.cache = forward(snap, p, false, fr);
    s.action = 2;
    s.target_return = s.cache.value + 1.0;
    std::vector<TrainingSample> batch{s};
    const double prob = softmax(s.cache.logits)[2];
    CHECK(prob >= last - 1e-12);
    last = prob;
    const auto l = compute_losses(batch, LossCoefficients{0.0, 0.0, false});
    adam_step(p, backward(batch, l, p), state);
  }
  CHECK(last > 0.5);
}

TEST_CASE("checkpoints round trip") {
  const auto p = small_params(52, 4, 3, 9, 0.2);
  auto opt = OptimizerState::for_params(p, 0.005);
  auto grads = p.zeros_like();
  for (auto& t : grads) t.setConstant(0.3);
  auto q = p;
  adam_step(q, grads, opt);
  const auto cp = checkpoint_from_json(checkpoint_to_json(q, &opt, 77));
  CHECK(cp.seed == 77);
  CHECK(cp.params.dropout_rate == 0.2);
  CHECK(cp.params.value_scale == q.value_scale);
  for (std::size_t i = 0; i < kParamTensorCount; ++i) CHECK(cp.params.tensors[i] == q.tensors[i]);
  REQUIRE(cp.optimizer);
  CHECK(cp.optimizer->step_count == 1);
  for (std::size_t i = 0; i < kParamTensorCount; ++i) CHECK(cp.optimizer->second_moment[i] == opt.second_moment[i]);
  CHECK_THROWS_AS(checkpoint_from_json("{}"), ParseError);
  CHECK_THROWS_AS(checkpoint_from_json("nope"), ParseError);
}

}
