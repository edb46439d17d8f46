#pragma once

// Weighted behavior cloning: gradient descent on L_alpha(theta) = sum_i alpha_i L_i(theta),
// where L_i is the mean NLL over group i.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rebal/core.hpp"
#include "rebal/policy.hpp"

namespace rebal {

class divergence_error : public std::runtime_error {
 public:
  divergence_error(int epoch, const std::string& what)
      : std::runtime_error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

struct TrainConfig {
  double inner_lr = 0.05;
  int epochs = 500;
  std::size_t batch_size = 0;  // 0 = full batch
  std::uint64_t seed = 0;
  double convergence_tol = 0.0;  // stop when |loss change| < tol; 0 disables
  int max_halvings = 10;

  void validate() const {
    require(inner_lr > 0.0, "inner learning rate must be positive");
    require(epochs >= 1, "epochs must be >= 1");
  }
};

// Entry e holds the losses before step e; the last entry is the final policy.
struct LossTrace {
  Vec total;
  std::vector<Vec> groups;

  std::size_t size() const { return total.size(); }
  void push(double t, Vec g) {
    total.push_back(t);
    groups.push_back(std::move(g));
  }
};

inline void write_trace_csv(std::ostream& os, const LossTrace& trace) {
  os << "epoch,L_total";
  const std::size_t k = trace.groups.empty() ? 0 : trace.groups.front().size();
  for (std::size_t i = 0; i < k; ++i) os << ",L_" << (i + 1);
  os << '\n';
  os.precision(17);
  for (std::size_t e = 0; e < trace.size(); ++e) {
    os << e << ',' << trace.total[e];
    for (double l : trace.groups[e]) os << ',' << l;
    os << '\n';
  }
}

// Per-group mean NLL and, optionally, per-group mean gradients.
struct GroupEval {
  Vec losses;
  std::vector<ParameterVector> grads;

  double weighted_loss(std::span<const double> w) const { return rebal::dot(w, losses); }
  ParameterVector weighted_grad(std::span<const double> w) const {
    ParameterVector g(grads.front().size());
    for (std::size_t i = 0; i < grads.size(); ++i)
      if (w[i] != 0.0) g.axpy(w[i], grads[i]);
    return g;
  }
};

// NLL of the pairs ds[idx[j]]; adds sum_j coeff[j] * grad NLL_j into grad unless it
// is empty. Uses the policy's batched path when it has one.
template <Policy P>
Vec pair_losses(const P& policy, const LabeledDataset& ds, std::span<const std::size_t> idx,
                std::span<const double> coeff, std::span<double> grad) {
  require(coeff.size() == idx.size(), "pair_losses: one coefficient per pair is required");
  Vec out(idx.size());
  if constexpr (BatchPolicy<P>) {
    const auto n = static_cast<Eigen::Index>(idx.size());
    Matrix X(static_cast<Eigen::Index>(ds.state_dim()), n), A(static_cast<Eigen::Index>(ds.action_dim()), n);
    Eigen::VectorXd c(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& p = ds[idx[static_cast<std::size_t>(j)]];
      X.col(j) = Eigen::Map<const Eigen::VectorXd>(p.state.data(), X.rows());
      A.col(j) = Eigen::Map<const Eigen::VectorXd>(p.action.data(), A.rows());
      c[j] = coeff[static_cast<std::size_t>(j)];
    }
    Eigen::VectorXd l = policy.batch_accumulate(X, A, c, grad);
    for (Eigen::Index j = 0; j < n; ++j) out[static_cast<std::size_t>(j)] = l[j];
  } else {
    for (std::size_t j = 0; j < idx.size(); ++j)
      out[j] = policy.accumulate(ds[idx[j]].state, ds[idx[j]].action, coeff[j], grad);
  }
  return out;
}

template <Policy P>
GroupEval evaluate_groups(const P& policy, const LabeledDataset& ds, bool with_grads) {
  const auto k = static_cast<std::size_t>(ds.group_count());
  const auto idx = ds.group_indices();
  for (std::size_t i = 0; i < k; ++i)
    require(!idx[i].empty(), "group " + std::to_string(i) + " is empty");
  GroupEval ev;
  ev.losses.assign(k, 0.0);
  if (with_grads) ev.grads.assign(k, ParameterVector(policy.param_count()));
  for (std::size_t i = 0; i < k; ++i) {
    const double c = 1.0 / static_cast<double>(idx[i].size());
    const Vec coeff(idx[i].size(), c);
    std::span<double> grad = with_grads ? ev.grads[i].span() : std::span<double>{};
    for (double l : pair_losses(policy, ds, idx[i], coeff, grad)) ev.losses[i] += c * l;
  }
  return ev;
}

template <Policy P>
Vec group_losses(const P& policy, const LabeledDataset& ds) {
  return evaluate_groups(policy, ds, false).losses;
}

// Mean NLL over the whole dataset.
template <Policy P>
double dataset_nll(const P& policy, const LabeledDataset& ds) {
  require(!ds.empty(), "dataset_nll: empty dataset");
  double s = 0.0;
  for (const auto& p : ds.pairs()) s += policy.accumulate(p.state, p.action, 0.0, {});
  return s / static_cast<double>(ds.size());
}

template <Policy P>
struct TrainResult {
  P policy;
  LossTrace trace;
  double final_lr = 0.0;
  int halvings = 0;
};

namespace detail {

// (loss, gradient, per-group losses) of the training objective at a policy.
struct ObjectiveEval {
  double loss = 0.0;
  ParameterVector grad;
  Vec groups;
};

// Full-batch descent with step rejection: a step whose loss is non-finite or larger
// than the current loss is undone and the learning rate halved. Non-finite losses
// after max_halvings raise divergence_error.
template <Policy P, class Eval>
TrainResult<P> descend(const P& start, const TrainConfig& cfg, Eval&& eval) {
  cfg.validate();
  TrainResult<P> res{start, {}, cfg.inner_lr, 0};
  ObjectiveEval cur = eval(res.policy);
  if (!std::isfinite(cur.loss)) throw divergence_error(0, "non-finite initial loss");
  res.trace.push(cur.loss, cur.groups);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    bool stalled = false;
    for (;;) {
      ParameterVector next = res.policy.params();
      next.axpy(-res.final_lr, cur.grad);
      P cand = res.policy.with_params(std::move(next));
      ObjectiveEval ev = eval(cand);
      const bool finite = std::isfinite(ev.loss) && cand.params().all_finite();
      if (finite && ev.loss <= cur.loss + 1e-12 * (1.0 + std::abs(cur.loss))) {
        const double change = cur.loss - ev.loss;
        res.policy = std::move(cand);
        cur = std::move(ev);
        res.trace.push(cur.loss, cur.groups);
        if (cfg.convergence_tol > 0.0 && std::abs(change) < cfg.convergence_tol) stalled = true;
        break;
      }
      if (res.halvings >= cfg.max_halvings) {
        if (!finite) throw divergence_error(epoch, "training diverged");
        stalled = true;  // finite but no further decrease at this precision
        break;
      }
      ++res.halvings;
      res.final_lr *= 0.5;
    }
    if (stalled) break;
  }
  return res;
}

}  // namespace detail

template <Policy P>
TrainResult<P> train_minibatch(const LabeledDataset& ds, const WeightVector& alpha, const TrainConfig& cfg,
                               const P& start);

// Gradient descent on sum_i alpha_i L_i. Deterministic for fixed inputs.
template <Policy P>
TrainResult<P> train_weighted(const LabeledDataset& ds, const WeightVector& alpha, const TrainConfig& cfg,
                              const P& start) {
  require(alpha.size() == static_cast<std::size_t>(ds.group_count()), "alpha length must equal group count");
  if (cfg.batch_size > 0 && cfg.batch_size < ds.size()) return train_minibatch(ds, alpha, cfg, start);
  const Vec& w = alpha.values();
  return detail::descend(start, cfg, [&](const P& p) {
    GroupEval ev = evaluate_groups(p, ds, true);
    return detail::ObjectiveEval{ev.weighted_loss(w), ev.weighted_grad(w), std::move(ev.losses)};
  });
}

// Mini-batch SGD with per-pair coefficient alpha_g / n_g rescaled to the batch.
// No step rejection; the trace records full-dataset losses once per epoch.
template <Policy P>
TrainResult<P> train_minibatch(const LabeledDataset& ds, const WeightVector& alpha, const TrainConfig& cfg,
                               const P& start) {
  cfg.validate();
  const auto counts = ds.group_counts();
  const Vec& w = alpha.values();
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  TrainResult<P> res{start, {}, cfg.inner_lr, 0};
  auto record = [&](int epoch) {
    Vec g = group_losses(res.policy, ds);
    const double t = rebal::dot(w, g);
    if (!std::isfinite(t)) throw divergence_error(epoch, "training diverged");
    res.trace.push(t, std::move(g));
  };
  record(0);
  const double n = static_cast<double>(ds.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      const double scale = n / static_cast<double>(e - b);
      ParameterVector grad(res.policy.param_count());
      std::span<const std::size_t> batch(order.data() + b, e - b);
      Vec coeff(batch.size());
      for (std::size_t t = 0; t < batch.size(); ++t) {
        const auto g = static_cast<std::size_t>(ds[batch[t]].group);
        coeff[t] = scale * w[g] / static_cast<double>(counts[g]);
      }
      pair_losses(res.policy, ds, batch, coeff, grad.span());
      ParameterVector next = res.policy.params();
      next.axpy(-res.final_lr, grad);
      res.policy = res.policy.with_params(std::move(next));
    }
    record(epoch);
    if (cfg.convergence_tol > 0.0 && std::abs(res.trace.total[res.trace.size() - 2] - res.trace.total.back()) <
                                         cfg.convergence_tol)
      break;
  }
  return res;
}

// Gradient descent on (1/N) sum_n w_n NLL_n for per-pair weights w.
template <Policy P>
TrainResult<P> train_sample_weighted(const LabeledDataset& ds, std::span<const double> pair_weights,
                                     const TrainConfig& cfg, const P& start) {
  require(pair_weights.size() == ds.size(), "one weight per pair is required");
  const double inv_n = 1.0 / static_cast<double>(ds.size());
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), 0);
  Vec coeff(ds.size());
  for (std::size_t n = 0; n < ds.size(); ++n) coeff[n] = pair_weights[n] * inv_n;
  const auto counts = ds.group_counts();
  return detail::descend(start, cfg, [&](const P& p) {
    detail::ObjectiveEval ev;
    ev.grad = ParameterVector(p.param_count());
    ev.groups.assign(counts.size(), 0.0);
    const Vec l = pair_losses(p, ds, all, coeff, ev.grad.span());
    for (std::size_t n = 0; n < ds.size(); ++n) {
      ev.loss += coeff[n] * l[n];
      const auto g = static_cast<std::size_t>(ds[n].group);
      ev.groups[g] += l[n] / static_cast<double>(counts[g]);
    }
    return ev;
  });
}

struct BoundViolation {
  std::size_t epoch;
  std::size_t group;
  double group_loss;
  double bound;
};

struct BoundReport {
  bool ok = true;
  std::size_t epochs_checked = 0;
  std::vector<BoundViolation> violations;
};

// Checks KL_i <= L_total / w_i at every trace entry, where KL_i is the group NLL
// minus the zero-residual constant (floored at 0) and L_total = sum_i w_i KL_i.
inline BoundReport bound_check(const LossTrace& trace, std::span<const double> weights, double zero_residual,
                               double slack = 1e-6) {
  BoundReport rep;
  for (std::size_t e = 0; e < trace.size(); ++e) {
    const Vec& g = trace.groups[e];
    require(g.size() == weights.size(), "bound_check: weight length mismatch");
    Vec kl(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) kl[i] = std::max(0.0, g[i] - zero_residual);
    const double total = rebal::dot(weights, kl);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      const double bound = total / weights[i];
      if (kl[i] > bound + slack) {
        rep.ok = false;
        rep.violations.push_back({e, i, kl[i], bound});
      }
    }
    ++rep.epochs_checked;
  }
  return rep;
}

}  // namespace rebal
