#pragma once

// Meta-learned reference losses. For each group i, alpha is tuned so that one
// weighted gradient step on sum_j alpha_j L_j lowers L_i the most; a fresh policy
// trained at the resulting alpha* gives the floor L_min_i.

#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rebal/core.hpp"
#include "rebal/policy.hpp"
#include "rebal/rebalance.hpp"
#include "rebal/trainer.hpp"

namespace rebal {

enum class MetaMode {
  // Reverse accumulation through every inner step, including the curvature terms
  // (I - beta1 H_alpha); Hessian-vector products use central differences of the
  // analytic gradient. Exact for a single inner step.
  Full,
  // Drops the curvature terms: each step contributes -beta1 <v_T, g_j(theta_t)>
  // with v_T = grad L_i at the final parameters.
  FirstOrder,
};

struct MetaConfig {
  double inner_lr = 0.3;  // beta1
  double meta_lr = 1.0;   // beta2
  int inner_steps = 1;
  int meta_rounds = 300;
  std::uint64_t seed = 0;
  Vec alpha_init{};  // empty: smoothed one-hot on the target group
  MetaMode mode = MetaMode::Full;
  double alpha_tol = 1e-5;
  int max_meta_halvings = 20;
  TrainConfig retrain{.inner_lr = 0.3, .epochs = 6000};

  void validate() const {
    require(inner_lr > 0.0 && meta_lr > 0.0, "meta: inner_lr and meta_lr must be positive");
    require(inner_steps >= 1, "meta: inner_steps must be >= 1");
    require(meta_rounds >= 0, "meta: meta_rounds must be >= 0");
    retrain.validate();
  }
};

// One-hot on the target with 0.1 (k-1)/k of the mass spread over the other groups.
inline WeightVector smoothed_one_hot(std::size_t k, std::size_t target) {
  require(target < k, "target group out of range");
  if (k == 1) return WeightVector({1.0});
  const double off = 0.1 / static_cast<double>(k);
  Vec a(k, off);
  a[target] = 1.0 - 0.1 * static_cast<double>(k - 1) / static_cast<double>(k);
  return WeightVector(std::move(a));
}

// theta - beta1 * sum_j alpha_j g_j(theta). alpha may be any real vector here, which
// the finite-difference checks rely on.
template <Policy P>
P inner_step(const P& policy, const LabeledDataset& ds, std::span<const double> alpha, double beta1) {
  require(alpha.size() == static_cast<std::size_t>(ds.group_count()), "inner_step: alpha length mismatch");
  const GroupEval ev = evaluate_groups(policy, ds, true);
  ParameterVector next = policy.params();
  next.axpy(-beta1, ev.weighted_grad(alpha));
  require(next.all_finite(), "inner_step: non-finite update");
  return policy.with_params(std::move(next));
}

template <Policy P>
P inner_step(const P& policy, const LabeledDataset& ds, const WeightVector& alpha, double beta1) {
  return inner_step(policy, ds, std::span<const double>(alpha.values()), beta1);
}

namespace detail {

template <Policy P>
ParameterVector group_gradient(const P& policy, const LabeledDataset& ds, std::size_t group) {
  return evaluate_groups(policy, ds, true).grads[group];
}

// H_alpha(theta) v by central differences of the weighted gradient.
template <Policy P>
ParameterVector hessian_vector(const P& policy, const LabeledDataset& ds, std::span<const double> alpha,
                               const ParameterVector& v) {
  const double vn = v.norm();
  ParameterVector out(v.size());
  if (vn == 0.0) return out;
  const double eps = 1e-5 * (1.0 + policy.params().norm()) / vn;
  ParameterVector plus = policy.params(), minus = policy.params();
  plus.axpy(eps, v);
  minus.axpy(-eps, v);
  const ParameterVector gp = evaluate_groups(policy.with_params(plus), ds, true).weighted_grad(alpha);
  const ParameterVector gm = evaluate_groups(policy.with_params(minus), ds, true).weighted_grad(alpha);
  out.axpy(0.5 / eps, gp);
  out.axpy(-0.5 / eps, gm);
  return out;
}

}  // namespace detail

struct MetaGrad {
  Vec grad;             // d L_i(theta_T) / d alpha
  double target_loss;   // L_i(theta_T)
};

// Gradient of L_i after inner_steps weighted steps, with respect to alpha. One step
// gives component j = -beta1 <grad L_i(theta_new), g_j(theta)> exactly.
template <Policy P>
MetaGrad meta_grad_alpha(const P& policy, const LabeledDataset& ds, std::span<const double> alpha,
                         std::size_t target, double beta1, int inner_steps = 1, MetaMode mode = MetaMode::Full) {
  const auto k = static_cast<std::size_t>(ds.group_count());
  require(alpha.size() == k, "meta_grad_alpha: alpha length mismatch");
  require(target < k, "meta_grad_alpha: target group out of range");
  require(inner_steps >= 1, "meta_grad_alpha: inner_steps must be >= 1");
  std::vector<P> path{policy};
  std::vector<std::vector<ParameterVector>> grads;
  for (int t = 0; t < inner_steps; ++t) {
    GroupEval ev = evaluate_groups(path.back(), ds, true);
    ParameterVector next = path.back().params();
    next.axpy(-beta1, ev.weighted_grad(alpha));
    require(next.all_finite(), "meta_grad_alpha: non-finite inner step");
    grads.push_back(std::move(ev.grads));
    path.push_back(path.back().with_params(std::move(next)));
  }
  const GroupEval fin = evaluate_groups(path.back(), ds, true);
  ParameterVector v = fin.grads[target];
  MetaGrad out{Vec(k, 0.0), fin.losses[target]};
  for (int t = inner_steps - 1; t >= 0; --t) {
    const auto ts = static_cast<std::size_t>(t);
    for (std::size_t j = 0; j < k; ++j) out.grad[j] -= beta1 * v.dot(grads[ts][j]);
    if (mode == MetaMode::Full && t > 0) v.axpy(-beta1, detail::hessian_vector(path[ts], ds, alpha, v));
  }
  return out;
}

// L_i after inner_steps weighted steps from policy.
template <Policy P>
double post_step_loss(const P& policy, const LabeledDataset& ds, std::span<const double> alpha, std::size_t target,
                      double beta1, int inner_steps = 1) {
  P p = policy;
  for (int t = 0; t < inner_steps; ++t) p = inner_step(p, ds, alpha, beta1);
  return group_losses(p, ds)[target];
}

template <Policy P>
struct AlphaStarResult {
  WeightVector alpha;
  double l_min = 0.0;
  P policy;  // retrained at alpha*
  std::vector<WeightVector> alpha_history;
  int rounds = 0;
  double final_meta_lr = 0.0;
};

// Alternates inner steps on theta with descent on alpha along the meta-gradient.
// A meta step that raises the post-step target loss is retried with half the meta
// learning rate. Stops after meta_rounds or when ||alpha change||_inf < alpha_tol,
// then retrains a fresh policy from start at alpha* and reports its group loss.
template <Policy P>
AlphaStarResult<P> learn_alpha_star(const LabeledDataset& ds, std::size_t target, const MetaConfig& cfg,
                                    const P& start) {
  cfg.validate();
  const auto k = static_cast<std::size_t>(ds.group_count());
  require(target < k, "learn_alpha_star: target group out of range");
  WeightVector alpha = cfg.alpha_init.empty() ? smoothed_one_hot(k, target) : WeightVector(cfg.alpha_init);
  require(alpha.size() == k, "learn_alpha_star: alpha_init length mismatch");
  AlphaStarResult<P> res{alpha, 0.0, start, {alpha}, 0, cfg.meta_lr};
  P theta = start;
  if (k > 1) {
    for (int r = 0; r < cfg.meta_rounds; ++r) {
      MetaGrad mg;
      try {
        mg = meta_grad_alpha(theta, ds, alpha.values(), target, cfg.inner_lr, cfg.inner_steps, cfg.mode);
      } catch (const domain_error& e) {
        throw divergence_error(r, std::string("meta round failed: ") + e.what());
      }
      if (!std::isfinite(mg.target_loss)) throw divergence_error(r, "meta round: non-finite target loss");
      Vec descent(k);
      for (std::size_t j = 0; j < k; ++j) descent[j] = -mg.grad[j];
      WeightVector next = alpha;
      for (int h = 0;; ++h) {
        next = simplex_project_step(alpha, descent, res.final_meta_lr);
        const double l = post_step_loss(theta, ds, next.values(), target, cfg.inner_lr, cfg.inner_steps);
        if (std::isfinite(l) && l <= mg.target_loss + 1e-12 * (1.0 + std::abs(mg.target_loss))) break;
        if (h >= cfg.max_meta_halvings) {
          next = alpha;
          break;
        }
        res.final_meta_lr *= 0.5;
      }
      for (int t = 0; t < cfg.inner_steps; ++t) theta = inner_step(theta, ds, alpha, cfg.inner_lr);
      const double change = max_abs_diff(next.values(), alpha.values());
      alpha = next;
      res.alpha_history.push_back(alpha);
      res.rounds = r + 1;
      if (change < cfg.alpha_tol) break;
    }
  }
  res.alpha = alpha;
  res.policy = train_weighted(ds, alpha, cfg.retrain, start).policy;
  res.l_min = group_losses(res.policy, ds)[target];
  return res;
}

struct MetaReferences {
  ReferenceLosses refs;
  std::vector<WeightVector> alpha_star;
  std::vector<int> rounds;
};

// L_min for every group, tagged MetaLearned.
template <Policy P>
MetaReferences compute_reference_losses(const LabeledDataset& ds, const MetaConfig& cfg, const P& start) {
  const auto k = static_cast<std::size_t>(ds.group_count());
  MetaReferences out{{RefSource::MetaLearned, Vec(k, 0.0)}, {}, {}};
  for (std::size_t i = 0; i < k; ++i) {
    try {
      auto r = learn_alpha_star(ds, i, cfg, start);
      out.refs.values[i] = r.l_min;
      out.alpha_star.push_back(r.alpha);
      out.rounds.push_back(r.rounds);
    } catch (const divergence_error& e) {
      throw divergence_error(e.epoch(), "group " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

// Structured-text references file: header, then one record per group.
inline void write_references(std::ostream& os, const MetaReferences& m) {
  nlohmann::ordered_json h;
  h["refs_source"] = to_string(m.refs.source);
  h["k"] = m.refs.size();
  os << h.dump() << '\n';
  for (std::size_t i = 0; i < m.refs.size(); ++i) {
    nlohmann::ordered_json rec;
    rec["group"] = i;
    rec["l_min"] = m.refs.values[i];
    if (i < m.alpha_star.size()) rec["alpha_star"] = m.alpha_star[i].values();
    if (i < m.rounds.size()) rec["meta_rounds"] = m.rounds[i];
    os << rec.dump() << '\n';
  }
}

}  // namespace rebal
