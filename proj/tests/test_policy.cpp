#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "rebal/policy.hpp"
#include "rebal/trainer.hpp"

using namespace rebal;

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

std::vector<StateActionPair> random_batch(std::size_t sdim, std::size_t adim, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0, 1);
  std::vector<StateActionPair> b;
  for (int i = 0; i < n; ++i) {
    StateActionPair p{Vec(sdim), Vec(adim), 0};
    for (double& x : p.state) x = g(rng);
    for (double& x : p.action) x = g(rng);
    b.push_back(p);
  }
  return b;
}

template <class P>
Vec finite_difference(const P& policy, const std::vector<StateActionPair>& batch, double h = 1e-5) {
  const ParameterVector th = policy.params();
  auto loss = [&](const ParameterVector& p) {
    const P q = policy.with_params(p);
    double s = 0.0;
    for (const auto& b : batch) s += nll(q, b);
    return s / static_cast<double>(batch.size());
  };
  Vec fd(th.size());
  for (std::size_t i = 0; i < th.size(); ++i) {
    ParameterVector a = th, b = th;
    a[i] += h;
    b[i] -= h;
    fd[i] = (loss(a) - loss(b)) / (2 * h);
  }
  return fd;
}

double rel_err(const Vec& a, const Vec& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

}  // namespace

TEST(Nll, ZeroResidualConstant) {
  const auto p = LinearGaussianPolicy(1, 1, 1.0).with_params(ParameterVector(Vec{2.0}));
  EXPECT_NEAR(nll(p, {{1.5}, {3.0}, 0}), kHalfLog2Pi, 1e-15);
  EXPECT_NEAR(zero_residual_nll(1, 1.0), 0.9189385332, 1e-10);
}

TEST(Nll, UnitResidual) {
  const auto p = LinearGaussianPolicy(1, 1, 1.0).with_params(ParameterVector(Vec{2.0}));
  EXPECT_NEAR(nll(p, {{1.0}, {3.0}, 0}), 0.5 + kHalfLog2Pi, 1e-15);
}

TEST(Nll, MatchesGaussianDensity) {
  const auto p = LinearGaussianPolicy(2, 2, 0.7).with_params(ParameterVector(Vec{1, 2, -1, 0.5}));
  const StateActionPair q{{0.3, -0.4}, {0.1, 0.9}, 0};
  const double m0 = 0.3 - 0.8, m1 = -0.3 - 0.2;
  double logpdf = 0;
  for (auto [m, a] : {std::pair{m0, 0.1}, std::pair{m1, 0.9}})
    logpdf += -0.5 * std::pow((a - m) / 0.7, 2) - std::log(0.7) - kHalfLog2Pi;
  EXPECT_NEAR(nll(p, q), -logpdf, 1e-12);
}

TEST(Nll, NoiselessGroupAtTrueGainIsConstant) {
  const auto p = LinearGaussianPolicy(1, 1, 1.0).with_params(ParameterVector(Vec{-1.5}));
  LabeledDataset ds(1, 1, 1);
  for (double s : {-1.0, -0.2, 0.4, 1.3}) ds.add({{s}, {-1.5 * s}, 0});
  EXPECT_NEAR(group_losses(p, ds)[0], kHalfLog2Pi, 1e-15);
}

TEST(GradNll, ZeroResidualBatchGivesZeroGradient) {
  const auto p = LinearGaussianPolicy(1, 1, 1.0).with_params(ParameterVector(Vec{0.7}));
  std::vector<StateActionPair> b;
  for (double s : {-1.0, 0.5, 2.0}) b.push_back({{s}, {0.7 * s}, 0});
  EXPECT_EQ(grad_nll(p, b).norm(), 0.0);
}

TEST(GradNll, LinearMatchesFiniteDifferences) {
  const auto p = LinearGaussianPolicy(3, 2, 0.8).with_params(ParameterVector(Vec{0.1, -0.2, 0.3, 0.5, 0.0, -1.0}));
  const auto batch = random_batch(3, 2, 10, 4);
  EXPECT_LT(rel_err(grad_nll(p, batch).values(), finite_difference(p, batch)), 1e-7);
}

TEST(GradNll, MlpMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    MlpPolicy p = MlpPolicy::make(2, 2, {6, 5}, 0.9).initialized(seed);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0, 0.3);
    ParameterVector th = p.params();
    for (std::size_t i = 0; i < th.size(); ++i) th[i] += g(rng);
    p = p.with_params(th);
    const auto batch = random_batch(2, 2, 12, seed + 50);
    EXPECT_LT(rel_err(grad_nll(p, batch).values(), finite_difference(p, batch)), 1e-4) << "seed " << seed;
  }
}

TEST(MlpPolicy, BatchPathAgreesWithPairPath) {
  MlpPolicy p = MlpPolicy::make(3, 2, {7, 4}).initialized(11);
  ParameterVector th = p.params();
  for (std::size_t i = 0; i < th.size(); ++i) th[i] += 0.01 * static_cast<double>(i % 7);
  p = p.with_params(th);
  const auto batch = random_batch(3, 2, 9, 12);
  Matrix X(3, 9), A(2, 9);
  Eigen::VectorXd c(9);
  for (int n = 0; n < 9; ++n) {
    for (int d = 0; d < 3; ++d) X(d, n) = batch[static_cast<std::size_t>(n)].state[static_cast<std::size_t>(d)];
    for (int d = 0; d < 2; ++d) A(d, n) = batch[static_cast<std::size_t>(n)].action[static_cast<std::size_t>(d)];
    c(n) = 0.1 * (n + 1);
  }
  ParameterVector gb(p.param_count()), gp(p.param_count());
  const Eigen::VectorXd lb = p.batch_accumulate(X, A, c, gb.span());
  for (int n = 0; n < 9; ++n) {
    const auto& q = batch[static_cast<std::size_t>(n)];
    EXPECT_NEAR(lb(n), p.accumulate(q.state, q.action, c(n), gp.span()), 1e-12);
  }
  for (std::size_t i = 0; i < gb.size(); ++i) EXPECT_NEAR(gb[i], gp[i], 1e-12);
}

TEST(Params, RoundTripAndLocality) {
  const MlpPolicy p = MlpPolicy::make(2, 1, {3}).initialized(1);
  const ParameterVector th = get_params(p);
  EXPECT_EQ(set_params(p, th).params(), th);
  // Perturbing the output bias shifts every output by exactly that amount.
  ParameterVector t2 = th;
  t2[t2.size() - 1] += 0.25;
  const MlpPolicy q = set_params(p, t2);
  const double s[2] = {0.3, -0.7};
  EXPECT_NEAR(q.mean(s)[0] - p.mean(s)[0], 0.25, 1e-14);
  // A first-layer weight of a hidden unit with zero outgoing weight changes nothing.
  ParameterVector t3 = th;
  t3[0] += 1.0;
  const MlpPolicy r = set_params(p, t3);
  EXPECT_EQ(r.mean(s)[0], p.mean(s)[0]);
}

TEST(Params, LengthMismatchRejected) {
  const MlpPolicy p = MlpPolicy::make(2, 1, {3});
  EXPECT_THROW(p.with_params(ParameterVector(Vec{1.0})), domain_error);
}

TEST(Checkpoint, MlpRoundTrip) {
  MlpPolicy p = MlpPolicy::make(2, 2, {4}).initialized(7);
  ParameterVector th = p.params();
  for (std::size_t i = 0; i < th.size(); ++i) th[i] += 0.1 * static_cast<double>(i);
  p = p.with_params(th);
  const auto path = std::filesystem::temp_directory_path() / "rebal_ckpt_test.json";
  save_checkpoint(path.string(), p);
  std::ifstream is(path);
  const MlpPolicy q = mlp_from_checkpoint(nlohmann::json::parse(is));
  EXPECT_EQ(q.params(), p.params());
  EXPECT_EQ(q.layers(), p.layers());
  std::filesystem::remove(path);
}

TEST(Checkpoint, LinearRoundTrip) {
  const auto p = LinearGaussianPolicy(2, 1, 0.5).with_params(ParameterVector(Vec{1.25, -3.0}));
  const auto q = linear_from_checkpoint(nlohmann::json::parse(checkpoint_json(p).dump()));
  EXPECT_EQ(q.params(), p.params());
  EXPECT_EQ(q.sigma(), 0.5);
}
