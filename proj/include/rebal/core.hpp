#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rebal {

using Vec = std::vector<double>;

// Raised for any violated precondition (bad sigma, empty group, length mismatch...).
class domain_error : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw domain_error(what);
}

struct StateActionPair {
  Vec state;
  Vec action;
  int group = 0;
};

// State-action pairs with behavior labels. Groups partition the pairs.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(int group_count, std::size_t state_dim, std::size_t action_dim)
      : group_count_(group_count), state_dim_(state_dim), action_dim_(action_dim) {
    require(group_count >= 1, "group_count must be >= 1");
  }

  void add(StateActionPair p) {
    require(p.state.size() == state_dim_, "state dimension mismatch");
    require(p.action.size() == action_dim_, "action dimension mismatch");
    require(p.group >= 0 && p.group < group_count_,
            "group label " + std::to_string(p.group) + " outside [0, " +
                std::to_string(group_count_) + ")");
    pairs_.push_back(std::move(p));
  }

  const std::vector<StateActionPair>& pairs() const { return pairs_; }
  std::vector<StateActionPair>& mutable_pairs() { return pairs_; }
  const StateActionPair& operator[](std::size_t i) const { return pairs_[i]; }
  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }
  int group_count() const { return group_count_; }
  std::size_t state_dim() const { return state_dim_; }
  std::size_t action_dim() const { return action_dim_; }

  std::vector<std::size_t> group_counts() const {
    std::vector<std::size_t> c(static_cast<std::size_t>(group_count_), 0);
    for (const auto& p : pairs_) ++c[static_cast<std::size_t>(p.group)];
    return c;
  }

  // Indices of the pairs in each group, in dataset order.
  std::vector<std::vector<std::size_t>> group_indices() const {
    std::vector<std::vector<std::size_t>> idx(static_cast<std::size_t>(group_count_));
    for (std::size_t n = 0; n < pairs_.size(); ++n)
      idx[static_cast<std::size_t>(pairs_[n].group)].push_back(n);
    return idx;
  }

  void require_nonempty_groups() const {
    auto c = group_counts();
    for (std::size_t i = 0; i < c.size(); ++i)
      require(c[i] > 0, "every declared group must be nonempty (group " + std::to_string(i) +
                            " has no pairs)");
  }

 private:
  std::vector<StateActionPair> pairs_;
  int group_count_ = 1;
  std::size_t state_dim_ = 0;
  std::size_t action_dim_ = 0;
};

// A point on the probability simplex.
class WeightVector {
 public:
  WeightVector() = default;
  explicit WeightVector(Vec alpha) : alpha_(std::move(alpha)) {
    require(!alpha_.empty(), "weight vector must be nonempty");
    double s = 0.0;
    for (double a : alpha_) {
      require(std::isfinite(a) && a >= 0.0, "weights must be finite and nonnegative");
      s += a;
    }
    require(std::abs(s - 1.0) < 1e-9, "weights must sum to 1");
  }

  static WeightVector uniform(std::size_t k) {
    require(k >= 1, "k must be >= 1");
    return WeightVector(Vec(k, 1.0 / static_cast<double>(k)));
  }

  const Vec& values() const { return alpha_; }
  double operator[](std::size_t i) const { return alpha_[i]; }
  std::size_t size() const { return alpha_.size(); }

 private:
  Vec alpha_;
};

struct DeltaReport {
  Vec delta;           // per-group excess loss, nats
  double lambda = 0;   // -(1/k) sum(delta)
  Vec per_group_loss;  // nats

  double spread() const {
    auto [lo, hi] = std::minmax_element(delta.begin(), delta.end());
    return *hi - *lo;
  }
};

inline double kl_gaussian(double mu1, double sigma1, double mu2, double sigma2) {
  require(sigma1 > 0.0 && sigma2 > 0.0, "kl_gaussian: sigma must be positive");
  if (mu1 == mu2 && sigma1 == sigma2) return 0.0;
  const double d = mu1 - mu2;
  const double kl = std::log(sigma2 / sigma1) + (sigma1 * sigma1 + d * d) / (2.0 * sigma2 * sigma2) - 0.5;
  return std::max(kl, 0.0);
}

inline Vec empirical_proportions(const LabeledDataset& ds) {
  require(!ds.empty(), "empirical_proportions: empty dataset");
  ds.require_nonempty_groups();
  auto c = ds.group_counts();
  Vec rho(c.size());
  const auto n = static_cast<double>(ds.size());
  for (std::size_t i = 0; i < c.size(); ++i) rho[i] = static_cast<double>(c[i]) / n;
  return rho;
}

struct NormalizedDataset {
  LabeledDataset dataset;
  Vec scale;  // s_normalized = s / scale, per dimension
};

// Scales each state dimension so that mean(s^2) = 1. Actions are left unchanged.
inline NormalizedDataset normalize_states(const LabeledDataset& ds) {
  require(!ds.empty(), "normalize_states: empty dataset");
  const std::size_t d = ds.state_dim();
  Vec ms(d, 0.0);
  for (const auto& p : ds.pairs())
    for (std::size_t j = 0; j < d; ++j) ms[j] += p.state[j] * p.state[j];
  Vec scale(d);
  for (std::size_t j = 0; j < d; ++j) {
    ms[j] /= static_cast<double>(ds.size());
    require(ms[j] > 0.0, "normalize_states: state dimension " + std::to_string(j) + " is identically zero");
    scale[j] = std::sqrt(ms[j]);
  }
  LabeledDataset out(ds.group_count(), ds.state_dim(), ds.action_dim());
  for (auto p : ds.pairs()) {
    for (std::size_t j = 0; j < d; ++j) p.state[j] /= scale[j];
    out.add(std::move(p));
  }
  return {std::move(out), std::move(scale)};
}

// Lagrange multiplier that makes a gradient zero-sum.
inline double simplex_lambda(std::span<const double> grad) {
  double s = 0.0;
  for (double g : grad) s += g;
  return -s / static_cast<double>(grad.size());
}

inline Vec project_gradient(std::span<const double> grad) {
  const double lam = simplex_lambda(grad);
  Vec out(grad.begin(), grad.end());
  for (double& g : out) g += lam;
  return out;
}

namespace detail {
inline WeightVector clip_renormalize(Vec a) {
  double s = 0.0;
  for (double& x : a) {
    if (!(x > 0.0)) x = 0.0;
    s += x;
  }
  require(s > 0.0, "simplex step collapsed every weight to zero");
  for (double& x : a) x /= s;
  return WeightVector(std::move(a));
}
}  // namespace detail

// Ascent along the zero-sum projected gradient, then clip negatives and renormalize.
inline WeightVector simplex_project_step(const WeightVector& alpha, std::span<const double> raw_grad,
                                         double step) {
  require(step > 0.0, "simplex_project_step: step must be positive");
  require(raw_grad.size() == alpha.size(), "simplex_project_step: gradient length mismatch");
  const Vec g = project_gradient(raw_grad);
  Vec a = alpha.values();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += step * g[i];
  return detail::clip_renormalize(std::move(a));
}

// Multiplicative-weights ascent: alpha_i <- alpha_i * exp(step * g_i), renormalized.
inline WeightVector exponentiated_step(const WeightVector& alpha, std::span<const double> raw_grad,
                                       double step) {
  require(step > 0.0, "exponentiated_step: step must be positive");
  require(raw_grad.size() == alpha.size(), "exponentiated_step: gradient length mismatch");
  // Shift by the max so exp never overflows; the shift cancels in the normalization.
  const double m = *std::max_element(raw_grad.begin(), raw_grad.end());
  Vec a = alpha.values();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] *= std::exp(step * (raw_grad[i] - m));
  return detail::clip_renormalize(std::move(a));
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace rebal
