#pragma once

// Synthetic demonstrations: linear-Gaussian sub-policies over state regions, a
// bias+noise corruption model for suboptimal data, and a point-mass environment
// with one goal per behavior region.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "rebal/analytic.hpp"
#include "rebal/config.hpp"
#include "rebal/core.hpp"
#include "rebal/policy.hpp"

namespace rebal {

enum class SamplerKind {
  Uniform,     // iid uniform over the region
  Stratified,  // one jittered draw per equal-mass stratum along the region axis
};

struct StateSampler {
  SamplerKind kind = SamplerKind::Uniform;
  double other_lo = -1.0;  // range of the non-region coordinates
  double other_hi = 1.0;
};

struct GeneratorConfig {
  std::vector<SubPolicySpec> specs;
  Vec proportions;
  std::size_t total_pairs = 0;
  std::uint64_t seed = 0;
  StateSampler sampler;

  void validate() const {
    validate_specs(specs);
    require(proportions.size() == specs.size(), "one proportion per sub-policy is required");
    double s = 0.0;
    for (double p : proportions) {
      require(p >= 0.0, "proportions must be nonnegative");
      s += p;
    }
    require(std::abs(s - 1.0) < 1e-9, "proportions must sum to 1 (got " + std::to_string(s) + ")");
    require(total_pairs >= specs.size(), "total_pairs must be at least the number of groups");
    for (const auto& sp : specs) require(sp.region.bounded(), "sampling requires bounded regions");
  }
};

// round(rho_i N) with largest-remainder correction so the sizes sum to N.
inline std::vector<std::size_t> group_sizes(std::span<const double> rho, std::size_t n) {
  std::vector<std::size_t> sizes(rho.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = 0;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    const double exact = rho[i] * static_cast<double>(n);
    sizes[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    used += sizes[i];
    rem.emplace_back(exact - static_cast<double>(sizes[i]), i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (std::size_t j = 0; used < n; ++j, ++used) ++sizes[rem[j % rem.size()].second];
  return sizes;
}

namespace detail {

// Maps u in [0, 1) to a point of the region along its axis.
inline double region_point(const Region& r, double u) {
  if (!r.striped()) return r.lo + u * (r.hi - r.lo);
  const double cells = (r.hi - r.lo) / r.stripe_period;
  const auto own = static_cast<double>(static_cast<long long>(std::ceil((cells - r.stripe_index) / r.stripe_count - 1e-9)));
  const double pos = u * own;
  const double m = std::floor(pos);
  double x = r.lo + (r.stripe_index + m * r.stripe_count + (pos - m)) * r.stripe_period;
  return std::min(x, std::nextafter(r.hi, r.lo));
}

}  // namespace detail

inline std::vector<Vec> sample_states(const Region& region, const StateSampler& sampler, std::size_t n,
                                      std::size_t state_dim, std::mt19937_64& rng) {
  require(region.axis < state_dim, "region axis outside state dimension");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> other(sampler.other_lo, sampler.other_hi);
  std::vector<Vec> out(n, Vec(state_dim));
  for (std::size_t j = 0; j < n; ++j) {
    const double u = sampler.kind == SamplerKind::Stratified
                         ? (static_cast<double>(j) + unit(rng)) / static_cast<double>(n)
                         : unit(rng);
    for (std::size_t d = 0; d < state_dim; ++d) out[j][d] = d == region.axis ? detail::region_point(region, u) : other(rng);
  }
  return out;
}

inline LabeledDataset sample_dataset(const GeneratorConfig& cfg) {
  cfg.validate();
  const auto sizes = group_sizes(cfg.proportions, cfg.total_pairs);
  for (std::size_t i = 0; i < sizes.size(); ++i)
    require(sizes[i] > 0, "group " + std::to_string(i) + " rounds to zero pairs");
  const std::size_t dim = cfg.specs.front().theta.size();
  LabeledDataset ds(static_cast<int>(cfg.specs.size()), dim, dim);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < cfg.specs.size(); ++i) {
    const auto& sp = cfg.specs[i];
    for (auto& s : sample_states(sp.region, cfg.sampler, sizes[i], dim, rng)) {
      Vec a(dim);
      for (std::size_t d = 0; d < dim; ++d) a[d] = sp.theta[d] * s[d] + (sp.sigma > 0.0 ? sp.sigma * noise(rng) : 0.0);
      ds.add({std::move(s), std::move(a), static_cast<int>(i)});
    }
  }
  return ds;
}

// Relabels groups through `mapping` (old label -> new label) into `new_k` groups.
inline LabeledDataset relabel(const LabeledDataset& ds, std::span<const int> mapping, int new_k) {
  require(mapping.size() == static_cast<std::size_t>(ds.group_count()), "relabel: mapping length mismatch");
  LabeledDataset out(new_k, ds.state_dim(), ds.action_dim());
  for (auto p : ds.pairs()) {
    p.group = mapping[static_cast<std::size_t>(p.group)];
    out.add(std::move(p));
  }
  return out;
}

// Concatenation; the result has max(k_a, k_b) groups.
inline LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b) {
  require(a.state_dim() == b.state_dim() && a.action_dim() == b.action_dim(), "concat: dimension mismatch");
  LabeledDataset out(std::max(a.group_count(), b.group_count()), a.state_dim(), a.action_dim());
  for (const auto& p : a.pairs()) out.add(p);
  for (const auto& p : b.pairs()) out.add(p);
  return out;
}

// Copies the dataset with actions shifted by bias + N(0, noise_scale^2). Pairs of
// the corrupted groups move to new labels k, k+1, ... (in the order listed); the
// result has k + |groups| groups. An empty list corrupts every group.
inline LabeledDataset make_suboptimal(const LabeledDataset& ds, double noise_scale, double bias, std::uint64_t seed,
                                      std::vector<int> groups = {}) {
  require(noise_scale >= 0.0, "noise_scale must be nonnegative");
  const int k = ds.group_count();
  if (groups.empty()) {
    groups.resize(static_cast<std::size_t>(k));
    std::iota(groups.begin(), groups.end(), 0);
  }
  std::vector<int> target(static_cast<std::size_t>(k), -1);
  for (std::size_t j = 0; j < groups.size(); ++j) {
    require(groups[j] >= 0 && groups[j] < k, "make_suboptimal: group out of range");
    target[static_cast<std::size_t>(groups[j])] = k + static_cast<int>(j);
  }
  LabeledDataset out(k + static_cast<int>(groups.size()), ds.state_dim(), ds.action_dim());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (auto p : ds.pairs()) {
    const int t = target[static_cast<std::size_t>(p.group)];
    if (t >= 0) {
      for (double& a : p.action) a += bias + (noise_scale > 0.0 ? noise_scale * noise(rng) : 0.0);
      p.group = t;
    }
    out.add(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Point-mass environment

struct Behavior {
  Region region;  // states governed by this behavior
  Vec goal;       // target position
  Vec start_lo;   // start box (position coordinates)
  Vec start_hi;
  double context = 0.0;  // value of the context coordinate, when the env has one
};

struct ToyEnv {
  std::vector<Behavior> behaviors;
  double dt = 0.1;
  int horizon = 60;
  double success_radius = 0.15;
  double expert_gain = 2.0;
  double max_speed = 0.5;
  bool context_flag = false;
  double workspace = 3.0;  // |position coordinate| bound

  std::size_t position_dim() const { return 2; }
  std::size_t state_dim() const { return context_flag ? 3 : 2; }
  std::size_t action_dim() const { return 2; }

  void validate() const {
    require(!behaviors.empty(), "env needs at least one behavior");
    require(horizon >= 1, "horizon must be >= 1");
    require(success_radius > 0.0, "success_radius must be positive");
    require(dt > 0.0 && max_speed > 0.0 && expert_gain > 0.0, "dt, max_speed and expert_gain must be positive");
  }

  // Three behaviors side by side along x; each reaches the goal above its own band.
  // Starts are drawn from the central start_fraction of each band.
  static ToyEnv three_goal_line(double band_width = 1.0, double goal_y = 0.75, double start_y_lo = -0.5,
                                double start_y_hi = 0.0, double start_fraction = 0.6) {
    ToyEnv env;
    for (int i = 0; i < 3; ++i) {
      const double lo = (i - 1.5) * band_width;
      const double hi = lo + band_width;
      Behavior b;
      b.region = Region::interval(i == 0 ? -std::numeric_limits<double>::infinity() : lo,
                                  i == 2 ? std::numeric_limits<double>::infinity() : hi, 0);
      b.goal = {0.5 * (lo + hi), goal_y};
      const double half = 0.5 * start_fraction * band_width;
      b.start_lo = {b.goal[0] - half, start_y_lo};
      b.start_hi = {b.goal[0] + half, start_y_hi};
      env.behaviors.push_back(b);
    }
    return env;
  }

  // Two behaviors sharing a start area, selected by a binary context coordinate.
  static ToyEnv two_context(double goal_x = 0.75, double goal_y = 0.75) {
    ToyEnv env;
    env.context_flag = true;
    for (int i = 0; i < 2; ++i) {
      Behavior b;
      b.region = Region::interval(i - 0.5, i + 0.5, 2);
      b.goal = {i == 0 ? -goal_x : goal_x, goal_y};
      b.start_lo = {-0.5, -0.5};
      b.start_hi = {0.5, 0.0};
      b.context = i;
      env.behaviors.push_back(b);
    }
    return env;
  }

  static ToyEnv from_config(const KeyValueConfig& c) {
    const std::string layout = c.get("layout", "line3");
    ToyEnv env;
    if (layout == "line3")
      env = three_goal_line(c.get_double("band_width", 1.0), c.get_double("goal_y", 0.75),
                            c.get_double("start_y_lo", -0.5), c.get_double("start_y_hi", 0.0),
                            c.get_double("start_fraction", 0.6));
    else if (layout == "context2")
      env = two_context(c.get_double("goal_x", 0.75), c.get_double("goal_y", 0.75));
    else
      throw domain_error("unknown env layout '" + layout + "' (expected line3 or context2)");
    env.dt = c.get_double("dt", env.dt);
    env.horizon = static_cast<int>(c.get_int("horizon", env.horizon));
    env.success_radius = c.get_double("success_radius", env.success_radius);
    env.expert_gain = c.get_double("expert_gain", env.expert_gain);
    env.max_speed = c.get_double("max_speed", env.max_speed);
    env.validate();
    return env;
  }

  int behavior_of(std::span<const double> s) const {
    for (std::size_t i = 0; i < behaviors.size(); ++i)
      if (behaviors[i].region.contains(s)) return static_cast<int>(i);
    return -1;
  }

  Vec step(std::span<const double> s, std::span<const double> a) const {
    Vec next(s.begin(), s.end());
    for (std::size_t d = 0; d < position_dim(); ++d) next[d] += a[d] * dt;
    return next;
  }

  double goal_distance(std::span<const double> s, int behavior) const {
    const auto& g = behaviors[static_cast<std::size_t>(behavior)].goal;
    double sq = 0.0;
    for (std::size_t d = 0; d < position_dim(); ++d) sq += (s[d] - g[d]) * (s[d] - g[d]);
    return std::sqrt(sq);
  }

  // Ground truth: proportional control toward the active behavior's goal, speed-limited.
  Vec expert_action(std::span<const double> s) const {
    const int b = behavior_of(s);
    require(b >= 0, "state outside every behavior region");
    const auto& g = behaviors[static_cast<std::size_t>(b)].goal;
    Vec a(action_dim());
    double n = 0.0;
    for (std::size_t d = 0; d < 2; ++d) {
      a[d] = expert_gain * (g[d] - s[d]);
      n += a[d] * a[d];
    }
    n = std::sqrt(n);
    if (n > max_speed)
      for (double& x : a) x *= max_speed / n;
    return a;
  }

  Vec sample_start(int behavior, std::mt19937_64& rng) const {
    const auto& b = behaviors[static_cast<std::size_t>(behavior)];
    Vec s(state_dim());
    for (std::size_t d = 0; d < 2; ++d) {
      std::uniform_real_distribution<double> u(b.start_lo[d], b.start_hi[d]);
      s[d] = u(rng);
    }
    if (context_flag) s[2] = b.context;
    // Keep the start strictly inside the behavior's own region.
    if (!b.region.contains(s)) s[b.region.axis] = std::nextafter(b.region.hi, b.region.lo);
    return s;
  }
};

using PolicyFn = std::function<Vec(std::span<const double>)>;

template <Policy P>
PolicyFn policy_fn(const P& policy) {
  return [policy](std::span<const double> s) { return policy.mean(s); };
}

inline PolicyFn expert_fn(const ToyEnv& env) {
  return [env](std::span<const double> s) { return env.expert_action(s); };
}

struct Trajectory {
  std::vector<Vec> states;
  std::vector<Vec> actions;
  bool success = false;
  int behavior = -1;

  std::size_t size() const { return states.size(); }
};

// Rolls out the policy mean from start_state. Success means reaching the goal of
// the start state's behavior within success_radius before max_steps.
inline Trajectory rollout(const ToyEnv& env, const PolicyFn& policy, Vec start_state, int max_steps) {
  env.validate();
  require(start_state.size() == env.state_dim(), "rollout: state dimension mismatch");
  for (std::size_t d = 0; d < env.position_dim(); ++d)
    require(std::abs(start_state[d]) <= env.workspace, "rollout: start state outside workspace");
  Trajectory tr;
  tr.behavior = env.behavior_of(start_state);
  require(tr.behavior >= 0, "rollout: start state outside every behavior region");
  Vec s = std::move(start_state);
  const int steps = std::min(max_steps, env.horizon);
  for (int t = 0; t < steps; ++t) {
    Vec a = policy(s);
    bool finite = a.size() == env.action_dim();
    for (double x : a) finite = finite && std::isfinite(x);
    if (!finite) return tr;
    Vec next = env.step(s, a);
    tr.states.push_back(std::move(s));
    tr.actions.push_back(std::move(a));
    s = std::move(next);
    if (env.goal_distance(s, tr.behavior) <= env.success_radius) {
      tr.success = true;
      break;
    }
  }
  return tr;
}

// Fraction of successful rollouts. Rollout r starts in behavior
// region_filter[r % |filter|] at a uniformly drawn start state.
inline double success_rate(const ToyEnv& env, const PolicyFn& policy, int n_rollouts, std::span<const int> region_filter,
                           std::uint64_t seed) {
  require(n_rollouts >= 1, "success_rate: n_rollouts must be >= 1");
  require(!region_filter.empty(), "success_rate: empty region filter");
  for (int b : region_filter)
    require(b >= 0 && static_cast<std::size_t>(b) < env.behaviors.size(), "success_rate: unknown region");
  std::mt19937_64 rng(seed);
  int ok = 0;
  for (int r = 0; r < n_rollouts; ++r) {
    const int b = region_filter[static_cast<std::size_t>(r) % region_filter.size()];
    if (rollout(env, policy, env.sample_start(b, rng), env.horizon).success) ++ok;
  }
  return static_cast<double>(ok) / n_rollouts;
}

// Expert demonstrations: demos[i] trajectories starting in behavior i, executed with
// Gaussian action noise; every visited (state, noisy action) pair is labeled i.
// stride > 1 keeps every stride-th pair of each trajectory.
inline LabeledDataset generate_demonstrations(const ToyEnv& env, std::span<const int> demos, double action_noise,
                                              std::uint64_t seed, int stride = 1) {
  env.validate();
  require(demos.size() == env.behaviors.size(), "one demo count per behavior is required");
  require(stride >= 1, "stride must be >= 1");
  LabeledDataset ds(static_cast<int>(env.behaviors.size()), env.state_dim(), env.action_dim());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, action_noise > 0.0 ? action_noise : 1.0);
  for (std::size_t i = 0; i < demos.size(); ++i) {
    for (int d = 0; d < demos[i]; ++d) {
      Vec s = env.sample_start(static_cast<int>(i), rng);
      for (int t = 0; t < env.horizon; ++t) {
        Vec a = env.expert_action(s);
        if (action_noise > 0.0)
          for (double& x : a) x += noise(rng);
        Vec next = env.step(s, a);
        if (t % stride == 0) ds.add({s, a, static_cast<int>(i)});
        s = std::move(next);
        if (env.goal_distance(s, static_cast<int>(i)) <= env.success_radius) break;
        if (env.behavior_of(s) != static_cast<int>(i)) break;  // noise pushed it out of its region
      }
    }
  }
  return ds;
}

}  // namespace rebal
