#include <cmath>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "rebal/datagen.hpp"
#include "rebal/policy.hpp"
#include "rebal/repro.hpp"
#include "rebal/trainer.hpp"

using namespace rebal;

namespace {

LabeledDataset two_group_data(double sigma = 0.1, std::size_t n = 2000, std::uint64_t seed = 3) {
  return repro::linear_dataset(Vec{1.0, -1.0}, Vec{0.7, 0.3}, sigma, n, seed);
}

// argmin_theta sum_g w_g E_g[(a - theta s)^2]: the weighted least-squares gain.
double weighted_ls_gain(const LabeledDataset& ds, const Vec& w) {
  const auto k = static_cast<std::size_t>(ds.group_count());
  Vec sxy(k, 0), sxx(k, 0), n(k, 0);
  for (const auto& p : ds.pairs()) {
    const auto g = static_cast<std::size_t>(p.group);
    sxy[g] += p.state[0] * p.action[0];
    sxx[g] += p.state[0] * p.state[0];
    n[g] += 1;
  }
  double num = 0, den = 0;
  for (std::size_t g = 0; g < k; ++g) {
    num += w[g] * sxy[g] / n[g];
    den += w[g] * sxx[g] / n[g];
  }
  return num / den;
}

const LinearGaussianPolicy kLinear(1, 1, 1.0);
const TrainConfig kCfg{.inner_lr = 0.5, .epochs = 300};

}  // namespace

TEST(TrainWeighted, ProportionalWeightsGiveWeightedMeanGain) {
  const LabeledDataset ds = two_group_data();
  const Vec rho = empirical_proportions(ds);
  const auto r = train_weighted(ds, WeightVector(rho), kCfg, kLinear);
  EXPECT_NEAR(r.policy.theta(0, 0), weighted_ls_gain(ds, rho), 1e-8);
  EXPECT_NEAR(r.policy.theta(0, 0), 0.4, 0.02);
}

TEST(TrainWeighted, EqualWeightsGiveZeroGain) {
  const LabeledDataset ds = two_group_data();
  const auto r = train_weighted(ds, WeightVector::uniform(2), kCfg, kLinear);
  EXPECT_NEAR(r.policy.theta(0, 0), weighted_ls_gain(ds, {0.5, 0.5}), 1e-8);
  EXPECT_NEAR(r.policy.theta(0, 0), 0.0, 0.02);
}

TEST(TrainWeighted, TraceIsMonotoneAndRecordsGroups) {
  const LabeledDataset ds = two_group_data();
  const auto r = train_weighted(ds, WeightVector({0.7, 0.3}), kCfg, kLinear);
  ASSERT_EQ(r.trace.size(), r.trace.groups.size());
  for (std::size_t e = 1; e < r.trace.size(); ++e) EXPECT_LE(r.trace.total[e], r.trace.total[e - 1] + 1e-12);
  for (std::size_t e = 0; e < r.trace.size(); ++e)
    EXPECT_NEAR(r.trace.total[e], 0.7 * r.trace.groups[e][0] + 0.3 * r.trace.groups[e][1], 1e-12);
}

TEST(TrainWeighted, DeterministicBitIdentical) {
  const LabeledDataset ds = repro::prop1_dataset(2);
  const MlpPolicy init = MlpPolicy::make(1, 1, {8}).initialized(4);
  const TrainConfig cfg{.inner_lr = 0.1, .epochs = 50};
  const auto a = train_weighted(ds, WeightVector({0.2, 0.3, 0.5}), cfg, init);
  const auto b = train_weighted(ds, WeightVector({0.2, 0.3, 0.5}), cfg, init);
  EXPECT_EQ(a.policy.params(), b.policy.params());
  EXPECT_EQ(a.trace.total, b.trace.total);
}

TEST(TrainWeighted, StepRejectionHalvesAnOversizedRate) {
  const LabeledDataset ds = two_group_data();
  const auto r = train_weighted(ds, WeightVector({0.7, 0.3}), {.inner_lr = 50.0, .epochs = 100}, kLinear);
  EXPECT_GT(r.halvings, 0);
  EXPECT_LT(r.final_lr, 50.0);
  EXPECT_NEAR(r.policy.theta(0, 0), weighted_ls_gain(ds, empirical_proportions(ds)), 1e-6);
}

TEST(TrainWeighted, AlphaLengthMismatchRejected) {
  EXPECT_THROW(train_weighted(two_group_data(), WeightVector::uniform(3), kCfg, kLinear), domain_error);
}

TEST(TrainMinibatch, SeededRunsAreIdenticalAndConverge) {
  const LabeledDataset ds = two_group_data();
  const TrainConfig cfg{.inner_lr = 0.05, .epochs = 60, .batch_size = 64, .seed = 9};
  const auto a = train_weighted(ds, WeightVector({0.7, 0.3}), cfg, kLinear);
  const auto b = train_weighted(ds, WeightVector({0.7, 0.3}), cfg, kLinear);
  EXPECT_EQ(a.policy.params(), b.policy.params());
  EXPECT_NEAR(a.policy.theta(0, 0), 0.4, 0.05);
}

TEST(TrainSampleWeighted, UnitWeightsMatchProportionalTraining) {
  const LabeledDataset ds = two_group_data();
  const Vec ones(ds.size(), 1.0);
  const auto a = train_sample_weighted(ds, ones, kCfg, kLinear);
  EXPECT_NEAR(a.policy.theta(0, 0), weighted_ls_gain(ds, empirical_proportions(ds)), 1e-8);
}

TEST(GroupLosses, NoiselessTrueGainGivesConstant) {
  const LabeledDataset ds =
      sample_dataset({repro::striped_specs(Vec{1.0, -1.0}, 0.0), {0.5, 0.5}, 200, 1, {SamplerKind::Stratified}});
  LabeledDataset g0(1, 1, 1);
  for (const auto& p : ds.pairs())
    if (p.group == 0) g0.add({p.state, p.action, 0});
  const auto pol = kLinear.with_params(ParameterVector(Vec{1.0}));
  EXPECT_NEAR(group_losses(pol, g0)[0], zero_residual_nll(1, 1.0), 1e-14);
}

TEST(BoundCheck, SingleGroupBoundEqualsTotal) {
  const double c = zero_residual_nll(1, 1.0);
  LossTrace kl;
  kl.push(c + 0.5, {c + 0.5});
  kl.push(c + 0.2, {c + 0.2});
  const BoundReport r = bound_check(kl, Vec{1.0}, c, 0.0);
  EXPECT_TRUE(r.ok);
  EXPECT_EQ(r.epochs_checked, 2u);
}

TEST(BoundCheck, EqualWeightBoundIsKTimesMean) {
  // KL = (0.3, 0.0, 0.0) with w = 1/3: L_total = 0.1, bound = 0.3 per group. Tight.
  LossTrace t;
  t.push(0.0, {0.3, 0.0, 0.0});
  EXPECT_TRUE(bound_check(t, Vec{1. / 3, 1. / 3, 1. / 3}, 0.0, 1e-12).ok);
}

TEST(BoundCheck, TightCaseIsNotAViolation) {
  // L_total = 0.1 * 2 = 0.2, bound for group 0 = 0.2 / 0.1 = 2.
  LossTrace w;
  w.push(0.0, {2.0, 0.0});
  EXPECT_TRUE(bound_check(w, Vec{0.1, 0.9}, 0.0, 0.0).ok);
}

TEST(BoundCheck, ReportsViolations) {
  // A negative weight lowers L_total below w_0 KL_0: 1 - 0.5 = 0.5 < 1.
  LossTrace t;
  t.push(0.0, {1.0, 1.0});
  const BoundReport r = bound_check(t, Vec{1.0, -0.5}, 0.0, 0.0);
  EXPECT_FALSE(r.ok);
  ASSERT_EQ(r.violations.size(), 1u);
  EXPECT_EQ(r.violations[0].group, 0u);
  EXPECT_DOUBLE_EQ(r.violations[0].bound, 0.5);
}

TEST(BoundCheck, HoldsOnEveryEpochOfARealRun) {
  const LabeledDataset ds = repro::prop1_dataset(3);
  const Vec rho = empirical_proportions(ds);
  const auto r = train_weighted(ds, WeightVector(rho), kCfg, kLinear);
  EXPECT_TRUE(bound_check(r.trace, rho, zero_residual_nll(1, 1.0)).ok);
}

TEST(TraceCsv, HeaderAndRows) {
  LossTrace t;
  t.push(1.0, {1.0, 2.0});
  std::ostringstream os;
  write_trace_csv(os, t);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "epoch,L_total,L_1,L_2");
}
