#pragma once

// Closed-form results for linear-Gaussian sub-policies under normalized states
// (E[s^2] = 1). These serve as oracles for the trainer.

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "rebal/core.hpp"

namespace rebal {

// Half-open interval [lo, hi) along one state coordinate. With stripe_count > 1
// the interval is cut into stripes of width stripe_period and the region keeps
// every stripe whose index is congruent to stripe_index mod stripe_count, so
// several regions can interleave over the same interval while staying disjoint.
struct Region {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  std::size_t axis = 0;
  double stripe_period = 0.0;
  int stripe_count = 1;
  int stripe_index = 0;

  static Region interval(double lo, double hi, std::size_t axis = 0) { return {lo, hi, axis}; }
  static Region stripes(double lo, double hi, double period, int count, int index, std::size_t axis = 0) {
    require(period > 0.0 && count >= 1 && index >= 0 && index < count, "invalid stripe layout");
    return {lo, hi, axis, period, count, index};
  }

  bool striped() const { return stripe_count > 1; }
  bool bounded() const { return std::isfinite(lo) && std::isfinite(hi); }

  bool contains(std::span<const double> s) const {
    const double x = s[axis];
    if (!(x >= lo && x < hi)) return false;
    if (!striped()) return true;
    const auto cell = static_cast<long long>(std::floor((x - lo) / stripe_period));
    return cell % stripe_count == stripe_index;
  }

  bool overlaps(const Region& o) const {
    if (axis != o.axis) return true;  // regions on different axes always intersect
    if (!(lo < o.hi && o.lo < hi)) return false;
    if (striped() && o.striped() && lo == o.lo && stripe_period == o.stripe_period &&
        stripe_count == o.stripe_count)
      return stripe_index == o.stripe_index;
    return true;
  }
};

// Ground-truth behavior pi_i(a|s) = N(theta * s, sigma^2) over a state region.
// theta holds one gain per state dimension; the action has the same dimension
// and the gain is applied element-wise.
struct SubPolicySpec {
  Vec theta;
  double sigma = 1.0;
  Region region;
};

inline void validate_specs(std::span<const SubPolicySpec> specs) {
  require(!specs.empty(), "at least one sub-policy is required");
  for (std::size_t i = 0; i < specs.size(); ++i) {
    require(specs[i].sigma >= 0.0, "sub-policy sigma must be nonnegative");
    require(specs[i].theta.size() == specs[0].theta.size(), "sub-policy theta dimensions differ");
    for (std::size_t j = i + 1; j < specs.size(); ++j)
      require(!specs[i].region.overlaps(specs[j].region),
              "sub-policy regions " + std::to_string(i) + " and " + std::to_string(j) + " overlap");
  }
}

// sum_i w_i theta_i: the BC optimum for w = rho, the equal-weight optimum for w = 1/k.
inline double optimal_theta(std::span<const double> weights, std::span<const double> thetas) {
  require(weights.size() == thetas.size(), "optimal_theta: length mismatch");
  require(!weights.empty(), "optimal_theta: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * thetas[i];
  return s;
}

inline Vec optimal_theta(std::span<const double> weights, std::span<const SubPolicySpec> specs) {
  require(weights.size() == specs.size(), "optimal_theta: length mismatch");
  Vec out(specs.front().theta.size(), 0.0);
  for (std::size_t i = 0; i < specs.size(); ++i)
    for (std::size_t d = 0; d < out.size(); ++d) out[d] += weights[i] * specs[i].theta[d];
  return out;
}

inline double worst_case_bound(double total_loss, double rho_i) {
  require(rho_i > 0.0, "worst_case_bound: proportion must be positive");
  require(total_loss >= 0.0, "worst_case_bound: loss must be nonnegative");
  return total_loss / rho_i;
}

// Population KL loss sum_i w_i KL(pi_i || N(theta s, robot_sigma)), summed over
// action dimensions. Scalar theta applies to every dimension.
inline double expected_bc_loss_linear(std::span<const double> theta, std::span<const SubPolicySpec> specs,
                                      std::span<const double> weights, double robot_sigma) {
  require(robot_sigma > 0.0, "robot sigma must be positive");
  require(weights.size() == specs.size(), "expected_bc_loss_linear: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    require(specs[i].sigma > 0.0, "sub-policy sigma must be positive");
    require(specs[i].theta.size() == theta.size() || theta.size() == 1, "theta dimension mismatch");
    double li = 0.0;
    for (std::size_t d = 0; d < specs[i].theta.size(); ++d) {
      const double th = theta.size() == 1 ? theta[0] : theta[d];
      // With E[s^2] = 1 the mean gap (theta_i - theta) s contributes (theta_i - theta)^2.
      const double gap = specs[i].theta[d] - th;
      li += std::log(robot_sigma / specs[i].sigma) +
            (specs[i].sigma * specs[i].sigma + gap * gap) / (2.0 * robot_sigma * robot_sigma) - 0.5;
    }
    total += weights[i] * li;
  }
  return total;
}

inline double expected_bc_loss_linear(double theta, std::span<const SubPolicySpec> specs,
                                      std::span<const double> weights, double robot_sigma) {
  const double t[1] = {theta};
  return expected_bc_loss_linear(std::span<const double>(t, 1), specs, weights, robot_sigma);
}

}  // namespace rebal
