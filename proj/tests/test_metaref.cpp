#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "rebal/datagen.hpp"
#include "rebal/metaref.hpp"
#include "rebal/repro.hpp"

using namespace rebal;

namespace {

const LinearGaussianPolicy kLinear1(1, 1, 1.0);

// Both groups share the states {-1, 1} (E[s^2] = 1); group 0 acts with gain +1,
// group 1 with gain -1, no noise.
LabeledDataset mirrored_pair() {
  LabeledDataset ds(2, 1, 1);
  for (double s : {-1.0, 1.0}) {
    ds.add({{s}, {s}, 0});
    ds.add({{s}, {-s}, 1});
  }
  return ds;
}

template <class P>
Vec fd_meta_grad(const P& p, const LabeledDataset& ds, const Vec& alpha, std::size_t target, double beta1, int steps) {
  auto loss = [&](const Vec& a) {
    P q = p;
    for (int t = 0; t < steps; ++t) {
      const GroupEval ev = evaluate_groups(q, ds, true);
      ParameterVector th = q.params();
      for (std::size_t j = 0; j < a.size(); ++j) th.axpy(-beta1 * a[j], ev.grads[j]);
      q = q.with_params(th);
    }
    return group_losses(q, ds)[target];
  };
  Vec fd(alpha.size());
  const double h = 1e-5;
  for (std::size_t j = 0; j < alpha.size(); ++j) {
    Vec a = alpha, b = alpha;
    a[j] += h;
    b[j] -= h;
    fd[j] = (loss(a) - loss(b)) / (2 * h);
  }
  return fd;
}

double max_rel(const Vec& a, const Vec& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / std::max(den, 1e-300));
}

MlpPolicy perturbed_mlp(std::uint64_t seed) {
  MlpPolicy p = MlpPolicy::make(2, 2, {6, 6}).initialized(seed);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0, 0.3);
  ParameterVector th = p.params();
  for (std::size_t i = 0; i < th.size(); ++i) th[i] += g(rng);
  return p.with_params(th);
}

LabeledDataset small_toy(std::uint64_t seed) {
  const ToyEnv env = ToyEnv::three_goal_line();
  const std::vector<int> demos{2, 1, 2};
  return generate_demonstrations(env, demos, 0.05, seed, 3);
}

}  // namespace

TEST(SmoothedOneHot, MassLayout) {
  const WeightVector a = smoothed_one_hot(3, 1);
  EXPECT_NEAR(a[1], 1.0 - 0.1 * 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(a[0], 0.1 / 3.0, 1e-15);
  EXPECT_EQ(smoothed_one_hot(1, 0).values(), Vec{1.0});
}

TEST(InnerStep, OneHotIsPlainGroupStep) {
  const LabeledDataset ds = repro::linear_dataset(Vec{1, -1}, Vec{0.6, 0.4}, 0.2, 200, 2);
  const auto p = kLinear1.with_params(ParameterVector(Vec{0.3}));
  std::vector<StateActionPair> g1;
  for (const auto& q : ds.pairs())
    if (q.group == 1) g1.push_back(q);
  const auto stepped = inner_step(p, ds, WeightVector({0.0, 1.0}), 0.1);
  EXPECT_NEAR(stepped.theta(0, 0), 0.3 - 0.1 * grad_nll(p, g1)[0], 1e-14);
}

TEST(InnerStep, ZeroGradientLeavesParamsUnchanged) {
  LabeledDataset ds(1, 1, 1);
  for (double s : {-1.0, 0.5}) ds.add({{s}, {2.0 * s}, 0});
  const auto p = kLinear1.with_params(ParameterVector(Vec{2.0}));
  EXPECT_EQ(inner_step(p, ds, WeightVector({1.0}), 0.3).params(), p.params());
}

TEST(InnerStep, SymmetricGradientsCancel) {
  const auto q = inner_step(kLinear1, mirrored_pair(), WeightVector({0.5, 0.5}), 0.1);
  EXPECT_EQ(q.theta(0, 0), 0.0);
}

TEST(MetaGrad, SymmetricLinearWorkedExample) {
  // g_0 = -1, g_1 = +1 at theta = 0; theta_new = 0 and grad L_0(theta_new) = -1, so
  // component j = -beta1 * (-1) * g_j.
  const MetaGrad mg = meta_grad_alpha(kLinear1, mirrored_pair(), Vec{0.5, 0.5}, 0, 0.1);
  EXPECT_NEAR(mg.grad[0], -0.1, 1e-15);
  EXPECT_NEAR(mg.grad[1], 0.1, 1e-15);
  const Vec proj = project_gradient(mg.grad);
  EXPECT_NEAR(proj[0], -0.1, 1e-15);
  const Vec fd = fd_meta_grad(kLinear1, mirrored_pair(), {0.5, 0.5}, 0, 0.1, 1);
  EXPECT_NEAR(fd[0], -0.1, 1e-8);
  EXPECT_NEAR(fd[1], 0.1, 1e-8);
}

TEST(MetaGrad, ZeroInnerRateGivesZero) {
  const MetaGrad mg = meta_grad_alpha(kLinear1, mirrored_pair(), Vec{0.3, 0.7}, 1, 0.0);
  for (double g : mg.grad) EXPECT_EQ(g, 0.0);
}

TEST(MetaGrad, SingleGroupOwnWeightNeverHurts) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const LabeledDataset ds = repro::linear_dataset(Vec{0.7}, Vec{1.0}, 0.3, 100, s);
    const auto p = kLinear1.with_params(ParameterVector(Vec{-1.0 + 0.5 * static_cast<double>(s)}));
    const MetaGrad mg = meta_grad_alpha(p, ds, Vec{1.0}, 0, 0.2);
    EXPECT_LE(mg.grad[0], 0.0);
    EXPECT_LE(fd_meta_grad(p, ds, {1.0}, 0, 0.2, 1)[0], 1e-10);
  }
}

TEST(MetaGrad, MlpOneStepMatchesFiniteDifferences) {
  for (std::uint64_t s = 0; s < 4; ++s) {
    const LabeledDataset ds = small_toy(20 + s);
    const MlpPolicy p = perturbed_mlp(s);
    const Vec alpha{0.2, 0.5, 0.3};
    const MetaGrad mg = meta_grad_alpha(p, ds, alpha, s % 3, 0.1);
    EXPECT_LT(max_rel(mg.grad, fd_meta_grad(p, ds, alpha, s % 3, 0.1, 1)), 1e-5) << "seed " << s;
  }
}

TEST(MetaGrad, FullModeMultiStepMatchesFiniteDifferences) {
  const LabeledDataset ds = small_toy(31);
  const MlpPolicy p = perturbed_mlp(7);
  const Vec alpha{0.5, 0.2, 0.3};
  const MetaGrad mg = meta_grad_alpha(p, ds, alpha, 1, 0.1, 3, MetaMode::Full);
  EXPECT_LT(max_rel(mg.grad, fd_meta_grad(p, ds, alpha, 1, 0.1, 3)), 1e-4);
}

TEST(MetaGrad, FirstOrderMatchesFullForOneStep) {
  const LabeledDataset ds = small_toy(32);
  const MlpPolicy p = perturbed_mlp(8);
  const Vec alpha{0.4, 0.4, 0.2};
  const MetaGrad a = meta_grad_alpha(p, ds, alpha, 0, 0.1, 1, MetaMode::Full);
  const MetaGrad b = meta_grad_alpha(p, ds, alpha, 0, 0.1, 1, MetaMode::FirstOrder);
  EXPECT_EQ(a.grad, b.grad);
}

TEST(MetaGrad, FirstOrderDropsCurvatureForSeveralSteps) {
  // Linear 1-D with per-group second moments m_j: the exact two-step gradient has the
  // curvature factor (1 - beta1 sum_j alpha_j m_j) on the first step's contribution.
  const LabeledDataset ds = mirrored_pair();
  const auto p = kLinear1.with_params(ParameterVector(Vec{0.4}));
  const Vec alpha{0.7, 0.3};
  const Vec fd = fd_meta_grad(p, ds, alpha, 0, 0.2, 2);
  const MetaGrad full = meta_grad_alpha(p, ds, alpha, 0, 0.2, 2, MetaMode::Full);
  const MetaGrad fo = meta_grad_alpha(p, ds, alpha, 0, 0.2, 2, MetaMode::FirstOrder);
  EXPECT_LT(max_rel(full.grad, fd), 1e-6);
  EXPECT_GT(max_rel(fo.grad, fd), 1e-3);
}

TEST(LearnAlphaStar, SingleGroupIsConvergedTrainingLoss) {
  const LabeledDataset ds = repro::linear_dataset(Vec{0.7}, Vec{1.0}, 0.3, 200, 3);
  const MetaConfig cfg{.meta_rounds = 20, .retrain = {.inner_lr = 0.5, .epochs = 300}};
  const auto r = learn_alpha_star(ds, 0, cfg, kLinear1);
  EXPECT_EQ(r.alpha.values(), Vec{1.0});
  const auto t = train_weighted(ds, WeightVector({1.0}), cfg.retrain, kLinear1);
  EXPECT_EQ(r.l_min, group_losses(t.policy, ds)[0]);
}

TEST(LearnAlphaStar, DuplicatedGroupSharesMass) {
  const LabeledDataset base = repro::linear_dataset(Vec{1.0, -1.0}, Vec{0.5, 0.5}, 0.1, 400, 5);
  LabeledDataset ds(3, 1, 1);
  for (const auto& p : base.pairs()) {
    ds.add(p);
    if (p.group == 0) ds.add({p.state, p.action, 2});  // group 2 duplicates group 0
  }
  const MetaConfig cfg{.meta_rounds = 300, .retrain = {.inner_lr = 0.5, .epochs = 300}};
  const auto r = learn_alpha_star(ds, 0, cfg, kLinear1);
  EXPECT_GT(r.alpha[2], 0.1);
  EXPECT_LT(r.alpha[1], 0.1);
  const auto own = train_weighted(ds, WeightVector({1.0, 0.0, 0.0}), cfg.retrain, kLinear1);
  EXPECT_LE(r.l_min, group_losses(own.policy, ds)[0] + 1e-9);
}

TEST(LearnAlphaStar, OptimalTargetIsOptimalHeavyOnAMixture) {
  const LabeledDataset opt = repro::linear_dataset(Vec{1.0}, Vec{1.0}, 0.05, 800, 3);
  const LabeledDataset sub = make_suboptimal(repro::linear_dataset(Vec{1.0}, Vec{1.0}, 0.05, 400, 4), 0.3, 0.3, 5);
  const LabeledDataset ds = concat(relabel(opt, std::vector<int>{0}, 2), sub);
  const MetaConfig cfg{.retrain = {.inner_lr = 0.5, .epochs = 300}};
  const auto r = learn_alpha_star(ds, 0, cfg, kLinear1);
  EXPECT_GT(r.alpha[0], 0.8);
  EXPECT_EQ(r.alpha_history.size(), static_cast<std::size_t>(r.rounds) + 1);
}

TEST(LearnAlphaStar, DeterministicGivenSeed) {
  const LabeledDataset ds = repro::linear_dataset(Vec{1.0, -1.0}, Vec{0.7, 0.3}, 0.2, 300, 5);
  const MetaConfig cfg{.meta_rounds = 50, .seed = 3, .retrain = {.inner_lr = 0.5, .epochs = 100}};
  const auto a = learn_alpha_star(ds, 1, cfg, kLinear1), b = learn_alpha_star(ds, 1, cfg, kLinear1);
  EXPECT_EQ(a.alpha.values(), b.alpha.values());
  EXPECT_EQ(a.l_min, b.l_min);
}

TEST(ComputeReferenceLosses, NoiselessRealizableNearFloor) {
  LabeledDataset ds(2, 2, 1);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int n = 0; n < 200; ++n) {
    const double s = u(rng);
    ds.add(n % 2 ? StateActionPair{{s, 0.0}, {1.5 * s}, 0} : StateActionPair{{0.0, s}, {-0.5 * s}, 1});
  }
  const MetaConfig cfg{.meta_rounds = 30, .retrain = {.inner_lr = 0.5, .epochs = 2000}};
  const MetaReferences m = compute_reference_losses(ds, cfg, LinearGaussianPolicy(2, 1));
  EXPECT_EQ(m.refs.source, RefSource::MetaLearned);
  for (double l : m.refs.values) EXPECT_NEAR(l, zero_residual_nll(1, 1.0), 1e-4);
  std::ostringstream os;
  write_references(os, m);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(nlohmann::json::parse(line)["refs_source"], "meta-learned");
  std::getline(is, line);
  const auto rec = nlohmann::json::parse(line);
  EXPECT_EQ(rec["group"], 0);
  EXPECT_EQ(rec["l_min"].get<double>(), m.refs.values[0]);
  EXPECT_EQ(rec["alpha_star"].get<Vec>().size(), 2u);
}
