#pragma once

// Balancing strategies: equal weighting, importance weights, min-max reweighting
// against per-group reference losses, and prediction-error upsampling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rebal/core.hpp"
#include "rebal/policy.hpp"
#include "rebal/trainer.hpp"

namespace rebal {

enum class RefSource { Zero, ReferencePolicy, MetaLearned, Explicit };

inline std::string to_string(RefSource s) {
  switch (s) {
    case RefSource::Zero: return "zero";
    case RefSource::ReferencePolicy: return "reference-policy";
    case RefSource::MetaLearned: return "meta-learned";
    case RefSource::Explicit: return "explicit";
  }
  return "unknown";
}

// Per-group target losses L_ref, in the same NLL units as the group losses.
struct ReferenceLosses {
  RefSource source = RefSource::Zero;
  Vec values;

  static ReferenceLosses zero(std::size_t k) { return {RefSource::Zero, Vec(k, 0.0)}; }
  static ReferenceLosses explicit_values(Vec v) { return {RefSource::Explicit, std::move(v)}; }

  std::size_t size() const { return values.size(); }
  void validate(std::size_t k) const {
    require(values.size() == k, "reference losses: expected " + std::to_string(k) + " values, got " +
                                    std::to_string(values.size()));
    for (double v : values) require(std::isfinite(v), "reference losses must be finite");
  }
};

// Per-pair nonnegative weights with mean 1.
class SampleWeights {
 public:
  SampleWeights() = default;
  explicit SampleWeights(Vec w) : w_(std::move(w)) {
    require(!w_.empty(), "sample weights must be nonempty");
    double s = 0.0;
    for (double x : w_) {
      require(std::isfinite(x) && x >= 0.0, "sample weights must be finite and nonnegative");
      s += x;
    }
    require(std::abs(s / static_cast<double>(w_.size()) - 1.0) < 1e-9, "sample weights must have mean 1");
  }

  // Rescales nonnegative raw weights to mean 1.
  static SampleWeights normalized(Vec raw) {
    require(!raw.empty(), "sample weights must be nonempty");
    double s = 0.0;
    for (double x : raw) {
      require(std::isfinite(x) && x >= 0.0, "sample weights must be finite and nonnegative");
      s += x;
    }
    require(s > 0.0, "sample weights are all zero");
    const double scale = static_cast<double>(raw.size()) / s;
    for (double& x : raw) x *= scale;
    return SampleWeights(std::move(raw));
  }

  const Vec& values() const { return w_; }
  double operator[](std::size_t i) const { return w_[i]; }
  std::size_t size() const { return w_.size(); }

 private:
  Vec w_;
};

inline WeightVector equal_weights(std::size_t k) {
  require(k >= 1, "equal_weights: k must be >= 1");
  return WeightVector::uniform(k);
}

// Weight 1/rho_g for every pair of group g, normalized to mean 1. The weighted
// group masses are then equal.
inline SampleWeights importance_weights(const LabeledDataset& ds) {
  const Vec rho = empirical_proportions(ds);
  Vec w(ds.size());
  for (std::size_t n = 0; n < ds.size(); ++n) w[n] = 1.0 / rho[static_cast<std::size_t>(ds[n].group)];
  return SampleWeights::normalized(std::move(w));
}

// Group mass of per-pair weights: sum of weights in each group over the total.
inline Vec weighted_proportions(const LabeledDataset& ds, const SampleWeights& w) {
  require(w.size() == ds.size(), "one weight per pair is required");
  Vec m(static_cast<std::size_t>(ds.group_count()), 0.0);
  double total = 0.0;
  for (std::size_t n = 0; n < ds.size(); ++n) {
    m[static_cast<std::size_t>(ds[n].group)] += w[n];
    total += w[n];
  }
  for (double& x : m) x /= total;
  return m;
}

inline DeltaReport delta_from_losses(Vec losses, const ReferenceLosses& refs) {
  refs.validate(losses.size());
  DeltaReport r;
  r.delta.resize(losses.size());
  for (std::size_t i = 0; i < losses.size(); ++i) r.delta[i] = losses[i] - refs.values[i];
  r.lambda = simplex_lambda(r.delta);
  r.per_group_loss = std::move(losses);
  return r;
}

template <Policy P>
DeltaReport delta(const P& policy, const LabeledDataset& ds, const ReferenceLosses& refs) {
  return delta_from_losses(group_losses(policy, ds), refs);
}

// delta_i + lambda = (1/k) sum_j [(L_i - L_j) - (r_i - r_j)], built from pairwise
// differences so that a common shift of the references cancels exactly.
inline Vec centered_excess(std::span<const double> losses, std::span<const double> refs) {
  require(losses.size() == refs.size(), "centered_excess: length mismatch");
  const std::size_t k = losses.size();
  Vec g(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) g[i] += (losses[i] - losses[j]) - (refs[i] - refs[j]);
    g[i] /= static_cast<double>(k);
  }
  return g;
}

struct MinMaxConfig {
  double alpha_lr = 0.5;
  int outer_rounds = 400;
  TrainConfig inner{.inner_lr = 0.05, .epochs = 5};
  double delta_tol = 1e-3;
  bool exponentiated = false;
  int warmup_epochs = 0;  // standard BC epochs (alpha = rho) before the first round

  void validate() const {
    require(alpha_lr > 0.0, "alpha_lr must be positive");
    require(warmup_epochs >= 0, "warmup_epochs must be nonnegative");
    require(outer_rounds >= 1, "outer_rounds must be >= 1");
    require(delta_tol > 0.0, "delta_tol must be positive");
    inner.validate();
  }
};

template <Policy P>
struct MinMaxResult {
  WeightVector alpha;
  P policy;
  std::vector<DeltaReport> history;  // one report per round, after its inner training
  std::vector<WeightVector> alpha_history;  // alpha used in each round
  bool converged = false;
  int rounds = 0;

  const DeltaReport& last() const { return history.back(); }
};

// Alternates inner training on sum_i alpha_i L_i (continuing from the current
// policy) with a simplex ascent step on alpha along delta, starting at alpha = rho
// after optional warm-up training at rho. Stops once the delta spread drops below
// delta_tol.
template <Policy P>
MinMaxResult<P> minmax_reweight(const LabeledDataset& ds, const ReferenceLosses& refs, const MinMaxConfig& cfg,
                                const P& start) {
  cfg.validate();
  refs.validate(static_cast<std::size_t>(ds.group_count()));
  MinMaxResult<P> res{WeightVector(empirical_proportions(ds)), start, {}, {}, false, 0};
  if (cfg.warmup_epochs > 0) {
    TrainConfig warm = cfg.inner;
    warm.epochs = cfg.warmup_epochs;
    res.policy = train_weighted(ds, res.alpha, warm, res.policy).policy;
  }
  for (int r = 0; r < cfg.outer_rounds; ++r) {
    res.policy = train_weighted(ds, res.alpha, cfg.inner, res.policy).policy;
    res.alpha_history.push_back(res.alpha);
    res.history.push_back(delta(res.policy, ds, refs));
    res.rounds = r + 1;
    const Vec g = centered_excess(res.history.back().per_group_loss, refs.values);
    const auto [lo, hi] = std::minmax_element(g.begin(), g.end());
    if (*hi - *lo < cfg.delta_tol) {
      res.converged = true;
      break;
    }
    // g is already zero-sum, so the projection inside the step leaves it unchanged.
    res.alpha = cfg.exponentiated ? exponentiated_step(res.alpha, g, cfg.alpha_lr)
                                  : simplex_project_step(res.alpha, g, cfg.alpha_lr);
  }
  return res;
}

// Group weighting of the reference policy. Proportional is standard BC (alpha =
// rho); Uniform trains the reference on equal group weights.
enum class RefWeighting { Proportional, Uniform };

struct RefPolicyConfig {
  TrainConfig train{.inner_lr = 0.3, .epochs = 6000};
  RefWeighting weighting = RefWeighting::Proportional;
};

template <Policy P>
struct ReferencePolicyResult {
  ReferenceLosses refs;
  P policy;
};

// Trains a reference policy on the dataset and returns its final per-group losses.
template <Policy P>
ReferencePolicyResult<P> reference_policy_targets(const LabeledDataset& ds, const RefPolicyConfig& cfg,
                                                  const P& start) {
  const WeightVector w = cfg.weighting == RefWeighting::Uniform
                             ? WeightVector::uniform(static_cast<std::size_t>(ds.group_count()))
                             : WeightVector(empirical_proportions(ds));
  auto tr = train_weighted(ds, w, cfg.train, start);
  Vec losses = group_losses(tr.policy, ds);
  return {{RefSource::ReferencePolicy, std::move(losses)}, std::move(tr.policy)};
}

struct UpsampleConfig {
  long long eta_count = -1;  // buffer size at which to stop; negative means N/2
  int rounds = 10;
  double split_ratio = 0.8;
  TrainConfig train{.inner_lr = 0.3, .epochs = 6000};
  std::uint64_t seed = 0;

  void validate() const {
    require(split_ratio > 0.0 && split_ratio < 1.0, "split_ratio must be in (0, 1)");
    require(rounds >= 1, "upsample rounds must be >= 1");
    train.validate();
  }
};

struct UpsampleResult {
  LabeledDataset dataset;  // original pairs followed by the buffer
  LabeledDataset buffer;
  bool uniform_fallback = false;  // some round had all-zero prediction errors
  int rounds = 0;
};

// Each round splits D u buffer into train/validation, trains a fresh reference
// policy on the training split, and resamples validation pairs with probability
// proportional to the prediction error ||pi(s) - a||, appending them to the
// buffer. Stops once the buffer holds eta_count pairs or the round limit is hit.
template <Policy P>
UpsampleResult error_upsample(const LabeledDataset& ds, const UpsampleConfig& cfg, const P& start) {
  cfg.validate();
  require(ds.size() >= 10, "error_upsample: dataset needs at least 10 pairs");
  const std::size_t target =
      cfg.eta_count < 0 ? ds.size() / 2 : static_cast<std::size_t>(cfg.eta_count);
  UpsampleResult res{ds, LabeledDataset(ds.group_count(), ds.state_dim(), ds.action_dim()), false, 0};
  std::mt19937_64 rng(cfg.seed);
  while (res.buffer.size() < target && res.rounds < cfg.rounds) {
    ++res.rounds;
    const LabeledDataset& pool = res.dataset;
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    auto n_train = static_cast<std::size_t>(std::floor(cfg.split_ratio * static_cast<double>(pool.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, pool.size() - 1);

    LabeledDataset train(pool.group_count(), pool.state_dim(), pool.action_dim());
    for (std::size_t j = 0; j < n_train; ++j) train.add(pool[order[j]]);
    const Vec ones(train.size(), 1.0);
    const P ref = train_sample_weighted(train, ones, cfg.train, start).policy;

    std::vector<std::size_t> val(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    Vec err(val.size());
    double total = 0.0;
    for (std::size_t j = 0; j < val.size(); ++j) {
      const auto& p = pool[val[j]];
      const Vec mu = ref.mean(p.state);
      double sq = 0.0;
      for (std::size_t d = 0; d < mu.size(); ++d) sq += (mu[d] - p.action[d]) * (mu[d] - p.action[d]);
      err[j] = std::sqrt(sq);
      total += err[j];
    }
    if (!(total > 0.0)) {
      std::fill(err.begin(), err.end(), 1.0);
      res.uniform_fallback = true;
    }
    std::discrete_distribution<std::size_t> pick(err.begin(), err.end());
    const std::size_t draws = std::min(val.size(), target - res.buffer.size());
    std::vector<StateActionPair> chosen;
    chosen.reserve(draws);
    for (std::size_t j = 0; j < draws; ++j) chosen.push_back(pool[val[pick(rng)]]);
    for (auto& p : chosen) {
      res.buffer.add(p);
      res.dataset.add(std::move(p));
    }
  }
  return res;
}

// Structured-text weights file: a header line followed by one record per line.
inline void write_weights(std::ostream& os, const std::string& strategy, RefSource source, const WeightVector& alpha,
                          const ReferenceLosses* refs = nullptr, const SampleWeights* sample = nullptr,
                          std::span<const DeltaReport> history = {}, const bool* converged = nullptr) {
  nlohmann::ordered_json h;
  h["strategy"] = strategy;
  h["refs_source"] = to_string(source);
  h["k"] = alpha.size();
  if (converged) h["converged"] = *converged;
  os << h.dump() << '\n';
  os << nlohmann::ordered_json{{"alpha", alpha.values()}}.dump() << '\n';
  if (refs) os << nlohmann::ordered_json{{"l_ref", refs->values}}.dump() << '\n';
  if (sample) os << nlohmann::ordered_json{{"sample_weights", sample->values()}}.dump() << '\n';
  for (std::size_t r = 0; r < history.size(); ++r) {
    nlohmann::ordered_json rec;
    rec["round"] = r;
    rec["delta"] = history[r].delta;
    rec["lambda"] = history[r].lambda;
    rec["group_loss"] = history[r].per_group_loss;
    os << rec.dump() << '\n';
  }
}

// One row of the weights/targets comparison table: method, alpha per group, L_ref
// per group ("-" when the method has no reference).
struct WeightReportRow {
  std::string method;
  Vec alpha;
  Vec l_ref;
};

inline void write_weight_report(std::ostream& os, std::span<const WeightReportRow> rows,
                                std::span<const std::string> group_names) {
  os << "method";
  for (const auto& g : group_names) os << ",alpha_" << g << ",L_ref_" << g;
  os << '\n';
  for (const auto& r : rows) {
    os << r.method;
    for (std::size_t i = 0; i < group_names.size(); ++i) {
      os << ',' << (i < r.alpha.size() ? std::to_string(r.alpha[i]) : std::string("-"));
      os << ',' << (i < r.l_ref.size() ? std::to_string(r.l_ref[i]) : std::string("-"));
    }
    os << '\n';
  }
}

}  // namespace rebal
