#pragma once

// Reproduction suites. Each measure_* function runs one experiment and returns
// raw measurements; the suite functions judge them and report one line per check.

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rebal/analytic.hpp"
#include "rebal/core.hpp"
#include "rebal/datagen.hpp"
#include "rebal/harness.hpp"
#include "rebal/metaref.hpp"
#include "rebal/policy.hpp"
#include "rebal/rebalance.hpp"
#include "rebal/stats.hpp"
#include "rebal/trainer.hpp"

namespace rebal::repro {

struct CheckResult {
  std::string id;
  std::string name;
  bool pass = false;
  std::string detail;
};

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline std::string fmt(double x, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << x;
  return os.str();
}

inline std::string fmt(std::span<const double> v, int prec = 4) {
  std::string s = "(";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i], prec);
  return s + ")";
}

// ---------------------------------------------------------------------------
// Linear 1-D recovery

inline const Vec& prop1_rho() {
  static const Vec v{0.6, 0.3, 0.1};
  return v;
}
inline const Vec& prop1_theta() {
  static const Vec v{2.0, 0.0, -1.0};
  return v;
}

// k groups interleaved in fine stripes over [-sqrt 3, sqrt 3), so every group
// sees the same state distribution (second moment 1).
inline std::vector<SubPolicySpec> striped_specs(std::span<const double> thetas, double sigma) {
  const double r = std::sqrt(3.0);
  std::vector<SubPolicySpec> specs;
  const int k = static_cast<int>(thetas.size());
  for (int i = 0; i < k; ++i)
    specs.push_back({{thetas[static_cast<std::size_t>(i)]}, sigma, Region::stripes(-r, r, 1e-3, k, i)});
  return specs;
}

inline LabeledDataset linear_dataset(std::span<const double> thetas, std::span<const double> rho, double sigma,
                                     std::size_t n, std::uint64_t seed) {
  GeneratorConfig g{striped_specs(thetas, sigma), Vec(rho.begin(), rho.end()), n, seed,
                    StateSampler{SamplerKind::Stratified}};
  return normalize_states(sample_dataset(g)).dataset;
}

inline LabeledDataset prop1_dataset(std::uint64_t seed) {
  return linear_dataset(prop1_theta(), prop1_rho(), 0.1, 5000, seed);
}

inline TrainConfig linear_train_config() { return {.inner_lr = 0.5, .epochs = 200}; }

struct LinearFit {
  double theta_hat = 0.0;
  Vec rho_hat;
  LossTrace trace;
  double seconds = 0.0;
};

inline LinearFit measure_linear_fit(const LabeledDataset& ds, const WeightVector& alpha) {
  const auto t0 = std::chrono::steady_clock::now();
  auto tr = train_weighted(ds, alpha, linear_train_config(), LinearGaussianPolicy(1, 1, 1.0));
  return {tr.policy.theta(0, 0), empirical_proportions(ds), std::move(tr.trace), seconds_since(t0)};
}

inline std::vector<CheckResult> suite_prop1(std::ostream& log) {
  std::vector<CheckResult> out;
  bool all = true, eq_ok = false, bound_ok = true;
  std::string d1, d2, d3;
  double worst_rt = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const LabeledDataset ds = prop1_dataset(seed);
    const LinearFit fit = measure_linear_fit(ds, WeightVector(empirical_proportions(ds)));
    const double target = optimal_theta(fit.rho_hat, prop1_theta());
    const double err = std::abs(fit.theta_hat - target);
    const bool ok = err < 0.02 && fit.seconds < 10.0;
    all = all && ok;
    worst_rt = std::max(worst_rt, fit.seconds);
    log << "  seed " << seed << ": theta_hat=" << fmt(fit.theta_hat, 6) << " target=" << fmt(target, 6)
        << " |err|=" << fmt(err, 3) << " time=" << fmt(fit.seconds, 3) << "s\n";
    if (seed == 1) {
      const LinearFit eq = measure_linear_fit(ds, equal_weights(3));
      const double t2 = optimal_theta(Vec(3, 1.0 / 3.0), prop1_theta());
      eq_ok = std::abs(eq.theta_hat - t2) < 0.02 && eq.seconds < 10.0;
      d2 = "theta_hat=" + fmt(eq.theta_hat, 6) + " target=" + fmt(t2, 6) + " time=" + fmt(eq.seconds, 3) + "s";
      const BoundReport br = bound_check(fit.trace, fit.rho_hat, zero_residual_nll(1, 1.0));
      bound_ok = br.ok;
      d3 = std::to_string(br.epochs_checked) + " epochs, " + std::to_string(br.violations.size()) + " violations";
    }
  }
  d1 = "5 seeds, slowest " + fmt(worst_rt, 3) + "s";
  out.push_back({"1", "weighted-sum optimum under alpha = rho", all, d1});
  out.push_back({"2", "equal-weight optimum", eq_ok, d2});
  out.push_back({"3", "per-group bound L_total / rho_i", bound_ok, d3});
  return out;
}

// ---------------------------------------------------------------------------
// Gradient checks

inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

// Mean NLL gradient of a random MLP on a random batch versus central differences.
inline double mlp_gradient_error(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> width(2, 8);
  std::normal_distribution<double> g(0.0, 1.0);
  const std::size_t sdim = 2 + seed % 2, adim = 1 + seed % 3;
  std::vector<std::size_t> hidden{static_cast<std::size_t>(width(rng)), static_cast<std::size_t>(width(rng))};
  MlpPolicy p = MlpPolicy::make(sdim, adim, hidden, 0.5 + 0.5 * (seed % 3)).initialized(seed);
  ParameterVector theta = p.params();
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += 0.3 * g(rng);
  p = p.with_params(theta);
  std::vector<StateActionPair> batch;
  for (int n = 0; n < 8; ++n) {
    StateActionPair q{Vec(sdim), Vec(adim), 0};
    for (double& x : q.state) x = g(rng);
    for (double& x : q.action) x = g(rng);
    batch.push_back(q);
  }
  const ParameterVector an = grad_nll(p, batch);
  auto loss = [&](const ParameterVector& th) {
    const MlpPolicy q = p.with_params(th);
    double s = 0.0;
    for (const auto& b : batch) s += nll(q, b);
    return s / static_cast<double>(batch.size());
  };
  Vec fd(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(theta[i]));
    ParameterVector a = theta, b = theta;
    a[i] += h;
    b[i] -= h;
    fd[i] = (loss(a) - loss(b)) / (2.0 * h);
  }
  return relative_error(an.values(), fd);
}

// Meta-gradient over alpha versus central differences of L_i(inner_step(alpha +- h e_j)).
template <Policy P>
double meta_gradient_error(const P& policy, const LabeledDataset& ds, const WeightVector& alpha, std::size_t target,
                           double beta1) {
  const Vec an = meta_grad_alpha(policy, ds, alpha.values(), target, beta1).grad;
  const double h = 1e-5;
  Vec fd(alpha.size());
  for (std::size_t j = 0; j < alpha.size(); ++j) {
    Vec a = alpha.values(), b = alpha.values();
    a[j] += h;
    b[j] -= h;
    fd[j] = (post_step_loss(policy, ds, a, target, beta1) - post_step_loss(policy, ds, b, target, beta1)) / (2.0 * h);
  }
  return relative_error(an, fd);
}

inline WeightVector random_simplex(std::size_t k, std::mt19937_64& rng) {
  std::gamma_distribution<double> g(1.0, 1.0);
  Vec a(k);
  double s = 0.0;
  for (double& x : a) s += (x = g(rng) + 1e-3);
  for (double& x : a) x /= s;
  return WeightVector(std::move(a));
}

struct GradientCheckData {
  Vec mlp_param;  // 20 instances
  Vec meta_linear;  // 10 instances
  Vec meta_mlp;     // 10 instances
  double seconds = 0.0;
};

inline GradientCheckData measure_gradient_checks() {
  const auto t0 = std::chrono::steady_clock::now();
  GradientCheckData d;
  for (std::uint64_t s = 0; s < 20; ++s) d.mlp_param.push_back(mlp_gradient_error(1000 + s));
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g(0.0, 1.0);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Vec thetas{1.0 + 0.5 * g(rng), -1.0 + 0.5 * g(rng), 0.5 * g(rng)};
    const LabeledDataset ds = linear_dataset(thetas, Vec{0.5, 0.3, 0.2}, 0.3, 300, 500 + s);
    const LinearGaussianPolicy p = LinearGaussianPolicy(1, 1, 1.0).with_params(ParameterVector(Vec{g(rng)}));
    d.meta_linear.push_back(meta_gradient_error(p, ds, random_simplex(3, rng), s % 3, 0.1));
  }
  const ToyEnv env = ToyEnv::three_goal_line();
  for (std::uint64_t s = 0; s < 10; ++s) {
    const std::vector<int> demos{3, 2, 3};
    const LabeledDataset ds = generate_demonstrations(env, demos, 0.05, 600 + s, 3);
    MlpPolicy p = MlpPolicy::make(2, 2, {8, 8}).initialized(600 + s);
    ParameterVector th = p.params();
    for (std::size_t i = 0; i < th.size(); ++i) th[i] += 0.2 * g(rng);
    p = p.with_params(th);
    d.meta_mlp.push_back(meta_gradient_error(p, ds, random_simplex(3, rng), s % 3, 0.1));
  }
  d.seconds = seconds_since(t0);
  return d;
}

inline std::vector<CheckResult> suite_metagrad(std::ostream& log) {
  const GradientCheckData d = measure_gradient_checks();
  auto worst = [](const Vec& v) { return *std::max_element(v.begin(), v.end()); };
  log << "  instance  mlp-param-grad  meta-linear  meta-mlp\n";
  for (std::size_t i = 0; i < d.mlp_param.size(); ++i) {
    log << "  " << std::setw(8) << i << "  " << std::setw(14) << fmt(d.mlp_param[i], 3);
    if (i < d.meta_linear.size())
      log << "  " << std::setw(11) << fmt(d.meta_linear[i], 3) << "  " << std::setw(8) << fmt(d.meta_mlp[i], 3);
    log << '\n';
  }
  const bool ok = worst(d.mlp_param) < 1e-4 && worst(d.meta_linear) < 1e-3 && worst(d.meta_mlp) < 1e-2 &&
                  d.seconds < 60.0;
  return {{"4", "analytic and meta gradients match finite differences", ok,
           "max rel err: param " + fmt(worst(d.mlp_param), 3) + ", meta linear " + fmt(worst(d.meta_linear), 3) +
               ", meta mlp " + fmt(worst(d.meta_mlp), 3) + "; " + fmt(d.seconds, 3) + "s"}};
}

// ---------------------------------------------------------------------------
// Min-max on the symmetric linear problem

inline LabeledDataset symmetric_dataset(std::uint64_t seed) {
  return linear_dataset(Vec{1.0, -1.0}, Vec{0.7, 0.3}, 0.1, 2000, seed);
}

inline MinMaxConfig symmetric_minmax_config() {
  return {.alpha_lr = 0.5, .outer_rounds = 2000, .inner = {.inner_lr = 0.5, .epochs = 5}, .delta_tol = 1e-3};
}

inline MinMaxResult<LinearGaussianPolicy> measure_symmetric_minmax(const LabeledDataset& ds, double shift = 0.0) {
  ReferenceLosses refs = ReferenceLosses::zero(2);
  for (double& r : refs.values) r += shift;
  return minmax_reweight(ds, refs, symmetric_minmax_config(), LinearGaussianPolicy(1, 1, 1.0));
}

// Brute force over alpha_1 in {0, 0.01, ..., 1}: least-squares theta per alpha from
// the group moments, then the alpha whose two group losses are closest.
inline double grid_equalizing_alpha(const LabeledDataset& ds) {
  double sxx[2] = {0, 0}, sxy[2] = {0, 0}, syy[2] = {0, 0};
  double n[2] = {0, 0};
  for (const auto& p : ds.pairs()) {
    const auto g = static_cast<std::size_t>(p.group);
    sxx[g] += p.state[0] * p.state[0];
    sxy[g] += p.state[0] * p.action[0];
    syy[g] += p.action[0] * p.action[0];
    n[g] += 1;
  }
  double best = 0.0, best_gap = 1e300;
  for (int step = 0; step <= 100; ++step) {
    const double a = step / 100.0, w[2] = {a, 1.0 - a};
    const double num = w[0] * sxy[0] / n[0] + w[1] * sxy[1] / n[1];
    const double den = w[0] * sxx[0] / n[0] + w[1] * sxx[1] / n[1];
    const double th = num / den;
    double l[2];
    for (int g = 0; g < 2; ++g) l[g] = 0.5 * (syy[g] - 2 * th * sxy[g] + th * th * sxx[g]) / n[g];
    if (std::abs(l[0] - l[1]) < best_gap) {
      best_gap = std::abs(l[0] - l[1]);
      best = a;
    }
  }
  return best;
}

inline bool identical_trajectories(const MinMaxResult<LinearGaussianPolicy>& a,
                                   const MinMaxResult<LinearGaussianPolicy>& b) {
  if (a.rounds != b.rounds || a.converged != b.converged) return false;
  for (std::size_t r = 0; r < a.alpha_history.size(); ++r)
    if (a.alpha_history[r].values() != b.alpha_history[r].values()) return false;
  for (std::size_t r = 0; r < a.history.size(); ++r)
    if (a.history[r].per_group_loss != b.history[r].per_group_loss) return false;
  return a.alpha.values() == b.alpha.values() && a.policy.params() == b.policy.params();
}

inline std::vector<CheckResult> suite_minmax(std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  const LabeledDataset ds = symmetric_dataset(11);
  const auto res = measure_symmetric_minmax(ds);
  const double rt = seconds_since(t0);
  const double grid = grid_equalizing_alpha(ds);
  const double spread = res.last().spread();
  log << "  rounds=" << res.rounds << " converged=" << res.converged << " alpha=" << fmt(res.alpha.values(), 6)
      << " theta=" << fmt(res.policy.theta(0, 0), 6) << " grid alpha_1=" << grid << "\n";
  const bool ok5 = res.converged && spread < 1e-3 && std::abs(res.alpha[0] - 0.5) < 0.02 &&
                   std::abs(res.alpha[1] - 0.5) < 0.02 && std::abs(res.alpha[0] - grid) < 0.02 && rt < 30.0;
  const auto shifted = measure_symmetric_minmax(ds, 1.0);
  const bool ok6 = identical_trajectories(res, shifted);
  return {{"5", "min-max equalizes delta on the symmetric problem", ok5,
           "spread=" + fmt(spread, 3) + " alpha=" + fmt(res.alpha.values(), 4) + " grid=" + fmt(grid, 3) + " " +
               fmt(rt, 3) + "s"},
          {"6", "reference shift leaves the trajectory bit-identical", ok6,
           std::to_string(res.rounds) + " vs " + std::to_string(shifted.rounds) + " rounds"}};
}

// ---------------------------------------------------------------------------
// Point-mass experiments

inline DatasetRecipe balanced_recipe() { return {"balanced", {21, 21, 21}, {}}; }
inline DatasetRecipe imbalanced_recipe() { return {"imbalanced", {27, 9, 27}, {}}; }
inline DatasetRecipe mixed_recipe() { return {"mixed", {20, 20, 20}, {10, 10, 10}}; }
constexpr std::size_t kMinority = 1;  // the middle behavior in the imbalanced recipe

inline ExperimentPlan imbalance_plan(int n_seeds = 10) {
  ExperimentPlan p;
  p.scenario = Scenario::ImbalanceEffect;
  p.n_seeds = n_seeds;
  p.conditions = {{"balanced", balanced_recipe(), Strategy::Baseline},
                  {"imbalanced", imbalanced_recipe(), Strategy::Baseline},
                  {"equal", imbalanced_recipe(), Strategy::Equal},
                  {"minmax-refpolicy", imbalanced_recipe(), Strategy::MinMaxRefPolicy}};
  return p;
}

inline ExperimentPlan mixture_plan(int n_seeds = 10) {
  ExperimentPlan p;
  p.scenario = Scenario::MetaVsBaselines;
  p.n_seeds = n_seeds;
  p.conditions = {{"imbalanced", mixed_recipe(), Strategy::Baseline},
                  {"minmax-refpolicy", mixed_recipe(), Strategy::MinMaxRefPolicy},
                  {"minmax-meta", mixed_recipe(), Strategy::MinMaxMeta}};
  return p;
}

struct UpsampleData {
  std::vector<std::size_t> minority_in_buffer, buffer_size, minority_in_data, data_size;
  double seconds = 0.0;
};

inline UpsampleData measure_upsample(int n_seeds = 5) {
  const auto t0 = std::chrono::steady_clock::now();
  const ToyEnv env = ToyEnv::three_goal_line();
  UpsampleData d;
  for (int s = 1; s <= n_seeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    const LabeledDataset ds = build_dataset(env, imbalanced_recipe(), seed);
    UpsampleConfig cfg;
    cfg.seed = seed;
    const auto up = error_upsample(ds, cfg, MlpPolicy::make(2, 2, {32, 32}).initialized(seed));
    d.minority_in_buffer.push_back(up.buffer.group_counts()[kMinority]);
    d.buffer_size.push_back(up.buffer.size());
    d.minority_in_data.push_back(ds.group_counts()[kMinority]);
    d.data_size.push_back(ds.size());
  }
  d.seconds = seconds_since(t0);
  return d;
}

struct FloorData {
  Vec l_ref;    // reference policy trained at alpha = rho
  Vec l_min;    // meta-learned floors
  Vec minmax_loss;
  Vec minmax_alpha;
  std::vector<Vec> alpha_star;
  bool converged = false;
  double seconds = 0.0;
};

inline FloorData measure_floors(std::uint64_t seed = 1) {
  const auto t0 = std::chrono::steady_clock::now();
  const ToyEnv env = ToyEnv::three_goal_line();
  const LabeledDataset ds = build_dataset(env, imbalanced_recipe(), seed);
  const MlpPolicy init = MlpPolicy::make(2, 2, {32, 32}).initialized(seed);
  const StrategySettings st;
  RefPolicyConfig rc = st.refpolicy;
  rc.weighting = RefWeighting::Proportional;
  FloorData d;
  d.l_ref = reference_policy_targets(ds, rc, init).refs.values;
  const MetaReferences meta = compute_reference_losses(ds, st.meta, init);
  d.l_min = meta.refs.values;
  for (const auto& a : meta.alpha_star) d.alpha_star.push_back(a.values());
  const auto mm = minmax_reweight(ds, meta.refs, st.minmax, init);
  d.minmax_loss = mm.last().per_group_loss;
  d.minmax_alpha = mm.alpha.values();
  d.converged = mm.converged;
  d.seconds = seconds_since(t0);
  return d;
}

inline void log_table(std::ostream& log, const ResultTable& t) {
  for (const auto& r : t.rows)
    if (r.metric == "success" || r.metric == "alpha")
      log << "  " << std::left << std::setw(18) << r.condition << std::right << ' ' << std::setw(7) << r.metric
          << " g" << r.group << ": " << fmt(r.mean, 4) << " +- " << fmt(r.std, 3) << " (n=" << r.n
          << ", failed=" << r.failed << ")\n";
}

inline std::vector<CheckResult> suite_imbalance(std::ostream& log) {
  std::vector<CheckResult> out;
  const auto t0 = std::chrono::steady_clock::now();
  const ResultTable t = run_plan(imbalance_plan());
  const double rt = seconds_since(t0);
  log_table(log, t);
  const Vec bal = t.values("balanced", "success", kMinority), imb = t.values("imbalanced", "success", kMinority);
  const WelchResult w7 = welch_t(imb, bal);
  out.push_back({"7", "minority success drops under imbalance", mean(imb) < mean(bal) && w7.p < 0.05 &&
                                                                     t.failures() == 0 && rt < 600.0,
                 "imbalanced " + fmt(mean(imb)) + " vs balanced " + fmt(mean(bal)) + ", t=" + fmt(w7.t) +
                     " p=" + fmt(w7.p, 3) + ", plan " + fmt(rt, 4) + "s"});
  for (const std::string s : {"equal", "minmax-refpolicy"}) {
    const Vec v = t.values(s, "success", kMinority);
    const WelchResult w = welch_t(v, imb);
    out.push_back({"8", s + " raises minority success", mean(v) > mean(imb) && w.p < 0.05,
                   fmt(mean(v)) + " vs imbalanced " + fmt(mean(imb)) + ", t=" + fmt(w.t) + " p=" + fmt(w.p, 3)});
  }
  const UpsampleData u = measure_upsample();
  std::size_t mb = 0, bs = 0, md = 0, ds = 0;
  for (std::size_t i = 0; i < u.buffer_size.size(); ++i) {
    mb += u.minority_in_buffer[i];
    bs += u.buffer_size[i];
    md += u.minority_in_data[i];
    ds += u.data_size[i];
    const double ratio = (static_cast<double>(u.minority_in_buffer[i]) / static_cast<double>(u.buffer_size[i])) /
                         (static_cast<double>(u.minority_in_data[i]) / static_cast<double>(u.data_size[i]));
    log << "  upsample seed " << i + 1 << ": minority " << u.minority_in_buffer[i] << "/" << u.buffer_size[i]
        << " in buffer, " << u.minority_in_data[i] << "/" << u.data_size[i] << " in data, ratio " << fmt(ratio)
        << "\n";
  }
  const double ratio = (static_cast<double>(mb) / static_cast<double>(bs)) /
                       (static_cast<double>(md) / static_cast<double>(ds));
  out.push_back({"11", "error upsampling over-represents the minority", ratio >= 1.5,
                 "pooled buffer/data minority fraction ratio " + fmt(ratio) + " over " +
                     std::to_string(u.buffer_size.size()) + " seeds"});
  return out;
}

inline const ResultTable& mixture_table() {
  static const ResultTable t = run_plan(mixture_plan());
  return t;
}

inline std::vector<CheckResult> suite_remix_failure(std::ostream& log) {
  const ResultTable& t = mixture_table();
  log_table(log, t);
  const Vec sub = t.values("minmax-refpolicy", "alpha", 1);
  const double m = sub.empty() ? 0.0 : mean(sub);
  return {{"9a", "reference-policy targets keep suboptimal mass high", !sub.empty() && m >= 0.45,
           "mean suboptimal alpha " + fmt(m) + " over " + std::to_string(sub.size()) + " seeds"}};
}

inline std::vector<CheckResult> suite_meta_vs_baselines(std::ostream& log) {
  std::vector<CheckResult> out;
  const ResultTable& t = mixture_table();
  log_table(log, t);
  Vec opt_mass;
  for (const auto& r : t.runs)
    if (r.ok && r.condition == "minmax-meta" && !r.alpha_star.empty()) opt_mass.push_back(r.alpha_star[0][0]);
  const double lo = opt_mass.empty() ? 0.0 : *std::min_element(opt_mass.begin(), opt_mass.end());
  out.push_back({"9b", "meta-learned alpha* for the optimal group is optimal-heavy", !opt_mass.empty() && lo > 0.8,
                 "min optimal mass " + fmt(lo) + " over " + std::to_string(opt_mass.size()) +
                     " seeds; min-max alpha on optimal " + fmt(mean(t.values("minmax-meta", "alpha", 0)))});
  Vec meta_s, rp_s;
  for (const auto& r : t.runs) {
    if (!r.ok) continue;
    if (r.condition == "minmax-meta") meta_s.push_back(mean(r.success));
    if (r.condition == "minmax-refpolicy") rp_s.push_back(mean(r.success));
  }
  const bool ok9c = !meta_s.empty() && !rp_s.empty() && mean(meta_s) >= mean(rp_s);
  out.push_back({"9c", "meta-balanced success >= refpolicy-balanced success", ok9c,
                 fmt(meta_s.empty() ? 0.0 : mean(meta_s)) + " vs " + fmt(rp_s.empty() ? 0.0 : mean(rp_s))});
  const FloorData f = measure_floors();
  bool above = true, below = true;
  for (std::size_t i = 0; i < f.l_min.size(); ++i) {
    above = above && f.minmax_loss[i] >= f.l_min[i] - 1e-6;
    below = below && f.l_min[i] <= f.l_ref[i] + 1e-3;
    log << "  group " << i << ": L_min=" << fmt(f.l_min[i], 7) << " L_ref=" << fmt(f.l_ref[i], 7)
        << " min-max loss=" << fmt(f.minmax_loss[i], 7) << " alpha*=" << fmt(f.alpha_star[i], 3) << "\n";
  }
  out.push_back({"10", "meta references are floors below the reference-policy targets", above && below,
                 std::string(above ? "" : "min-max loss below L_min; ") + (below ? "" : "L_min above L_ref; ") +
                     "min-max alpha " + fmt(f.minmax_alpha, 3) + ", " + fmt(f.seconds, 3) + "s"});
  return out;
}

inline const std::vector<std::pair<std::string, std::function<std::vector<CheckResult>(std::ostream&)>>>& suites() {
  static const std::vector<std::pair<std::string, std::function<std::vector<CheckResult>(std::ostream&)>>> s = {
      {"prop1", suite_prop1},
      {"minmax", suite_minmax},
      {"metagrad", suite_metagrad},
      {"imbalance", suite_imbalance},
      {"remix-failure", suite_remix_failure},
      {"meta-vs-baselines", suite_meta_vs_baselines},
  };
  return s;
}

}  // namespace rebal::repro
