#pragma once

// Seeded multi-run experiments in the point-mass environment: generate
// demonstrations from a recipe, apply a balancing strategy, train an MLP policy,
// and evaluate per-behavior rollout success and per-group losses.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rebal/core.hpp"
#include "rebal/datagen.hpp"
#include "rebal/metaref.hpp"
#include "rebal/policy.hpp"
#include "rebal/rebalance.hpp"
#include "rebal/stats.hpp"
#include "rebal/trainer.hpp"

namespace rebal {

enum class Scenario { ImbalanceEffect, EqualWeight, RemixFailure, MetaVsBaselines, OptimalOnly };

inline std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::ImbalanceEffect: return "imbalance-effect";
    case Scenario::EqualWeight: return "equal-weight";
    case Scenario::RemixFailure: return "remix-failure";
    case Scenario::MetaVsBaselines: return "meta-vs-baselines";
    case Scenario::OptimalOnly: return "optimal-only";
  }
  return "unknown";
}

enum class Strategy { Baseline, Equal, MinMaxZero, MinMaxRefPolicy, MinMaxMeta, Upsample };

inline const std::vector<std::pair<std::string, Strategy>>& strategy_names() {
  static const std::vector<std::pair<std::string, Strategy>> names = {
      {"baseline", Strategy::Baseline},
      {"equal", Strategy::Equal},
      {"minmax-zero", Strategy::MinMaxZero},
      {"minmax-refpolicy", Strategy::MinMaxRefPolicy},
      {"minmax-meta", Strategy::MinMaxMeta},
      {"upsample", Strategy::Upsample},
  };
  return names;
}

inline std::string to_string(Strategy s) {
  for (const auto& [n, v] : strategy_names())
    if (v == s) return n;
  return "unknown";
}

inline Strategy parse_strategy(const std::string& name) {
  for (const auto& [n, v] : strategy_names())
    if (n == name) return v;
  std::string valid;
  for (const auto& [n, v] : strategy_names()) valid += (valid.empty() ? "" : "|") + n;
  throw domain_error("unknown strategy '" + name + "' (valid: " + valid + ")");
}

// Demonstrations per behavior. With suboptimal demos the dataset is grouped by
// optimality (group 0 optimal, group 1 suboptimal); otherwise by behavior.
struct DatasetRecipe {
  std::string name;
  std::vector<int> demos;
  std::vector<int> suboptimal;
  double action_noise = 0.02;
  double sub_noise = 0.1;
  double sub_bias = 0.3;
  int stride = 3;
  bool drop_suboptimal = false;  // keep only the optimal group

  bool mixed() const { return !suboptimal.empty(); }
};

inline LabeledDataset build_dataset(const ToyEnv& env, const DatasetRecipe& r, std::uint64_t seed) {
  LabeledDataset opt = generate_demonstrations(env, r.demos, r.action_noise, seed, r.stride);
  if (!r.mixed()) return opt;
  const std::vector<int> to_opt(opt.group_count(), 0);
  LabeledDataset out = relabel(opt, to_opt, r.drop_suboptimal ? 1 : 2);
  if (r.drop_suboptimal) return out;
  LabeledDataset clean = generate_demonstrations(env, r.suboptimal, r.action_noise, seed ^ 0x5bd1e995ULL, r.stride);
  LabeledDataset sub = make_suboptimal(clean, r.sub_noise, r.sub_bias, seed + 17);
  std::vector<int> to_sub(static_cast<std::size_t>(sub.group_count()), 1);
  return concat(out, relabel(sub, to_sub, 2));
}

struct Condition {
  std::string label;
  DatasetRecipe recipe;
  Strategy strategy = Strategy::Baseline;
};

struct StrategySettings {
  std::vector<std::size_t> hidden{32, 32};
  TrainConfig train{.inner_lr = 0.3, .epochs = 6000};
  MinMaxConfig minmax{.alpha_lr = 2.0,
                      .outer_rounds = 400,
                      .inner = {.inner_lr = 0.3, .epochs = 5},
                      .delta_tol = 1e-4,
                      .exponentiated = false,
                      .warmup_epochs = 4000};
  RefPolicyConfig refpolicy{.train = {.inner_lr = 0.3, .epochs = 6000}, .weighting = RefWeighting::Uniform};
  MetaConfig meta;
  UpsampleConfig upsample;
};

struct ExperimentPlan {
  Scenario scenario = Scenario::ImbalanceEffect;
  std::vector<Condition> conditions;
  int n_seeds = 10;
  int rollouts = 100;  // per behavior
  std::uint64_t base_seed = 1;
  ToyEnv env = ToyEnv::three_goal_line();
  StrategySettings settings;

  void validate() const {
    require(!conditions.empty(), "plan needs at least one condition");
    require(n_seeds >= 1, "n_seeds must be >= 1");
    require(rollouts >= 1, "rollouts must be >= 1");
    env.validate();
    for (const auto& c : conditions)
      require(c.recipe.demos.size() == env.behaviors.size(), "recipe '" + c.recipe.name +
                                                                 "' needs one demo count per behavior");
  }
};

struct RunRecord {
  std::string condition;
  Strategy strategy = Strategy::Baseline;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  Vec success;      // per behavior
  Vec group_loss;   // per dataset group, on the original dataset
  Vec alpha;        // group weights used for the final training
  Vec l_ref;        // reference losses, when the strategy has them
  std::vector<Vec> alpha_star;  // per-group meta-learned weights (minmax-meta)
  bool converged = true;
};

struct ResultRow {
  std::string scenario;
  std::string condition;
  std::string strategy;
  std::string metric;  // success | loss | alpha
  std::size_t group = 0;
  double mean = 0.0;
  double std = 0.0;
  int n = 0;
  int failed = 0;
};

struct ResultTable {
  std::vector<ResultRow> rows;
  std::vector<RunRecord> runs;  // ordered by condition, then seed

  // Per-seed values of one metric, over successful runs of a condition.
  Vec values(const std::string& condition, const std::string& metric, std::size_t group) const {
    Vec out;
    for (const auto& r : runs) {
      if (r.condition != condition || !r.ok) continue;
      const Vec& src = metric == "success" ? r.success : metric == "loss" ? r.group_loss : r.alpha;
      if (group < src.size()) out.push_back(src[group]);
    }
    return out;
  }

  int failures() const {
    int f = 0;
    for (const auto& r : runs) f += r.ok ? 0 : 1;
    return f;
  }
};

inline unsigned worker_count(std::size_t jobs) {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* v = std::getenv("REBALANCE_BC_THREADS")) {
    const long cap = std::strtol(v, nullptr, 10);
    if (cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1)));
}

// Group weights, training set and references produced by a strategy.
struct Prepared {
  LabeledDataset train;
  WeightVector alpha;
  Vec l_ref;
  bool converged = true;
  std::vector<Vec> alpha_star;
};

inline Prepared apply_strategy(Strategy s, const LabeledDataset& ds, const StrategySettings& cfg,
                               const MlpPolicy& init, std::uint64_t seed) {
  const auto k = static_cast<std::size_t>(ds.group_count());
  switch (s) {
    case Strategy::Baseline:
      return {ds, WeightVector(empirical_proportions(ds)), {}, true, {}};
    case Strategy::Equal:
      return {ds, equal_weights(k), {}, true, {}};
    case Strategy::MinMaxZero: {
      auto m = minmax_reweight(ds, ReferenceLosses::zero(k), cfg.minmax, init);
      return {ds, m.alpha, Vec(k, 0.0), m.converged, {}};
    }
    case Strategy::MinMaxRefPolicy: {
      auto refs = reference_policy_targets(ds, cfg.refpolicy, init).refs;
      auto m = minmax_reweight(ds, refs, cfg.minmax, init);
      return {ds, m.alpha, refs.values, m.converged, {}};
    }
    case Strategy::MinMaxMeta: {
      MetaConfig mc = cfg.meta;
      mc.seed = seed;
      auto meta = compute_reference_losses(ds, mc, init);
      auto m = minmax_reweight(ds, meta.refs, cfg.minmax, init);
      Prepared p{ds, m.alpha, meta.refs.values, m.converged, {}};
      for (const auto& a : meta.alpha_star) p.alpha_star.push_back(a.values());
      return p;
    }
    case Strategy::Upsample: {
      UpsampleConfig uc = cfg.upsample;
      uc.seed = seed;
      auto up = error_upsample(ds, uc, init);
      return {up.dataset, WeightVector(empirical_proportions(up.dataset)), {}, true, {}};
    }
  }
  throw domain_error("unhandled strategy");
}

inline RunRecord run_condition(const ExperimentPlan& plan, const Condition& c, std::uint64_t seed) {
  RunRecord rec{c.label, c.strategy, seed, false, {}, {}, {}, {}, {}, {}, true};
  try {
    const LabeledDataset ds = build_dataset(plan.env, c.recipe, seed);
    const auto init = MlpPolicy::make(ds.state_dim(), ds.action_dim(), plan.settings.hidden).initialized(seed);
    Prepared prep = apply_strategy(c.strategy, ds, plan.settings, init, seed);
    TrainConfig tc = plan.settings.train;
    tc.seed = seed;
    const MlpPolicy policy = train_weighted(prep.train, prep.alpha, tc, init).policy;
    const PolicyFn fn = policy_fn(policy);
    for (std::size_t b = 0; b < plan.env.behaviors.size(); ++b) {
      const int f[1] = {static_cast<int>(b)};
      rec.success.push_back(success_rate(plan.env, fn, plan.rollouts, f, seed * 7919 + b));
    }
    rec.group_loss = group_losses(policy, ds);
    rec.alpha = prep.alpha.values();
    rec.l_ref = std::move(prep.l_ref);
    rec.alpha_star = std::move(prep.alpha_star);
    rec.converged = prep.converged;
    rec.ok = true;
  } catch (const std::exception& e) {
    rec.error = e.what();
  }
  return rec;
}

// Runs every (condition, seed) pair; seed index s uses base_seed + s for data,
// initialization and evaluation, so conditions are paired by seed.
inline ResultTable run_plan(const ExperimentPlan& plan) {
  plan.validate();
  const std::size_t nc = plan.conditions.size(), ns = static_cast<std::size_t>(plan.n_seeds);
  std::vector<RunRecord> runs(nc * ns);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < runs.size(); j = next++)
      runs[j] = run_condition(plan, plan.conditions[j / ns], plan.base_seed + j % ns);
  };
  const unsigned nw = worker_count(runs.size());
  if (nw <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < nw; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  ResultTable table;
  table.runs = std::move(runs);
  for (const auto& c : plan.conditions) {
    int failed = 0;
    std::size_t n_success = plan.env.behaviors.size(), n_groups = 0;
    for (const auto& r : table.runs)
      if (r.condition == c.label) {
        failed += r.ok ? 0 : 1;
        if (r.ok) n_groups = std::max(n_groups, r.group_loss.size());
      }
    auto add = [&](const std::string& metric, std::size_t groups) {
      for (std::size_t g = 0; g < groups; ++g) {
        const Vec v = table.values(c.label, metric, g);
        ResultRow row{to_string(plan.scenario), c.label, to_string(c.strategy), metric, g, 0.0, 0.0,
                      static_cast<int>(v.size()), failed};
        if (!v.empty()) {
          row.mean = mean(v);
          row.std = sample_std(v);
        }
        table.rows.push_back(row);
      }
    };
    add("success", n_success);
    add("loss", n_groups);
    add("alpha", n_groups);
  }
  return table;
}

inline void write_csv(std::ostream& os, const ResultTable& t) {
  os << "scenario,condition,strategy,metric,group,mean,std,n,failed\n";
  os.precision(10);
  for (const auto& r : t.rows)
    os << r.scenario << ',' << r.condition << ',' << r.strategy << ',' << r.metric << ',' << r.group << ','
       << r.mean << ',' << r.std << ',' << r.n << ',' << r.failed << '\n';
}

inline nlohmann::ordered_json to_json(const ResultTable& t) {
  nlohmann::ordered_json j;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : t.rows)
    j["rows"].push_back({{"scenario", r.scenario}, {"condition", r.condition}, {"strategy", r.strategy},
                         {"metric", r.metric}, {"group", r.group}, {"mean", r.mean}, {"std", r.std},
                         {"n", r.n}, {"failed", r.failed}});
  j["runs"] = nlohmann::ordered_json::array();
  for (const auto& r : t.runs) {
    nlohmann::ordered_json x{{"condition", r.condition}, {"strategy", to_string(r.strategy)}, {"seed", r.seed},
                             {"ok", r.ok}};
    if (r.ok)
      x.update({{"success", r.success}, {"group_loss", r.group_loss}, {"alpha", r.alpha}, {"l_ref", r.l_ref},
                {"alpha_star", r.alpha_star}, {"converged", r.converged}});
    else
      x["error"] = r.error;
    j["runs"].push_back(x);
  }
  return j;
}

// Whitespace-separated columns for external plotting: condition, group, mean, std.
inline void write_plot_data(std::ostream& os, const ResultTable& t, const std::string& metric = "success") {
  os << "# x y err group\n";
  for (const auto& r : t.rows)
    if (r.metric == metric) os << r.condition << ' ' << r.mean << ' ' << r.std << ' ' << r.group << '\n';
}

}  // namespace rebal
