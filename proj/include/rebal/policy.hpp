#pragma once

// Gaussian policies with fixed standard deviation. Each policy exposes its
// parameters as one flat vector and accumulates exact NLL gradients pair by pair.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "rebal/core.hpp"

namespace rebal {

class ParameterVector {
 public:
  ParameterVector() = default;
  explicit ParameterVector(Vec v) : v_(std::move(v)) {}
  explicit ParameterVector(std::size_t n) : v_(n, 0.0) {}

  std::size_t size() const { return v_.size(); }
  double& operator[](std::size_t i) { return v_[i]; }
  const double& operator[](std::size_t i) const { return v_[i]; }
  const Vec& values() const { return v_; }
  Vec& values() { return v_; }
  std::span<double> span() { return v_; }
  std::span<const double> span() const { return v_; }

  // this += scale * other
  ParameterVector& axpy(double scale, const ParameterVector& other) {
    require(other.size() == size(), "parameter length mismatch");
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] += scale * other.v_[i];
    return *this;
  }
  double dot(const ParameterVector& other) const { return rebal::dot(v_, other.v_); }
  double norm() const { return std::sqrt(dot(*this)); }
  bool all_finite() const {
    for (double x : v_)
      if (!std::isfinite(x)) return false;
    return true;
  }
  friend bool operator==(const ParameterVector&, const ParameterVector&) = default;

 private:
  Vec v_;
};

// d * (log sigma + 0.5 log 2 pi): the NLL of a zero residual.
inline double zero_residual_nll(std::size_t action_dim, double sigma) {
  return static_cast<double>(action_dim) * (std::log(sigma) + 0.5 * std::log(2.0 * std::numbers::pi));
}

// Requirements shared by every trainable policy. accumulate() returns the NLL of
// one (s, a) pair and adds coeff * dNLL/dparams into grad (skipped when grad is empty).
template <class P>
concept Policy = requires(const P& p, std::span<const double> x, std::span<double> g, ParameterVector v) {
  { p.state_dim() } -> std::convertible_to<std::size_t>;
  { p.action_dim() } -> std::convertible_to<std::size_t>;
  { p.sigma() } -> std::convertible_to<double>;
  { p.param_count() } -> std::convertible_to<std::size_t>;
  { p.params() } -> std::convertible_to<const ParameterVector&>;
  { p.mean(x) } -> std::same_as<Vec>;
  { p.accumulate(x, x, 1.0, g) } -> std::same_as<double>;
  { p.with_params(v) } -> std::same_as<P>;
};

using Matrix = Eigen::MatrixXd;  // one column per pair

// Optional fast path: NLL of every column of (X, A) and coeff-weighted gradient
// accumulation over the block. Must agree with accumulate() pair by pair.
template <class P>
concept BatchPolicy = Policy<P> && requires(const P& p, const Matrix& m, const Eigen::VectorXd& c, std::span<double> g) {
  { p.batch_accumulate(m, m, c, g) } -> std::same_as<Eigen::VectorXd>;
};

// mean(s) = theta s, theta stored row-major (action_dim x state_dim).
class LinearGaussianPolicy {
 public:
  LinearGaussianPolicy() = default;
  LinearGaussianPolicy(std::size_t state_dim, std::size_t action_dim, double sigma = 1.0)
      : sdim_(state_dim), adim_(action_dim), sigma_(sigma), theta_(state_dim * action_dim) {
    require(sigma > 0.0, "policy sigma must be positive");
  }

  std::size_t state_dim() const { return sdim_; }
  std::size_t action_dim() const { return adim_; }
  double sigma() const { return sigma_; }
  std::size_t param_count() const { return theta_.size(); }
  const ParameterVector& params() const { return theta_; }
  double theta(std::size_t row, std::size_t col) const { return theta_[row * sdim_ + col]; }

  LinearGaussianPolicy with_params(ParameterVector p) const {
    require(p.size() == theta_.size(), "linear policy: parameter length mismatch");
    LinearGaussianPolicy out = *this;
    out.theta_ = std::move(p);
    return out;
  }

  Vec mean(std::span<const double> s) const {
    require(s.size() == sdim_, "linear policy: state dimension mismatch");
    Vec m(adim_, 0.0);
    for (std::size_t i = 0; i < adim_; ++i)
      for (std::size_t j = 0; j < sdim_; ++j) m[i] += theta_[i * sdim_ + j] * s[j];
    return m;
  }

  double accumulate(std::span<const double> s, std::span<const double> a, double coeff,
                    std::span<double> grad) const {
    require(s.size() == sdim_ && a.size() == adim_, "linear policy: dimension mismatch");
    const double inv_var = 1.0 / (sigma_ * sigma_);
    double sq = 0.0;
    for (std::size_t i = 0; i < adim_; ++i) {
      double m = 0.0;
      for (std::size_t j = 0; j < sdim_; ++j) m += theta_[i * sdim_ + j] * s[j];
      const double r = m - a[i];
      sq += r * r;
      if (!grad.empty()) {
        const double c = coeff * r * inv_var;
        for (std::size_t j = 0; j < sdim_; ++j) grad[i * sdim_ + j] += c * s[j];
      }
    }
    return 0.5 * sq * inv_var + zero_residual_nll(adim_, sigma_);
  }

 private:
  std::size_t sdim_ = 0;
  std::size_t adim_ = 0;
  double sigma_ = 1.0;
  ParameterVector theta_;
};

// Fully connected network with tanh hidden layers and a linear output giving the
// Gaussian mean. Parameter layout: for each layer, W (out x in, row-major) then b.
class MlpPolicy {
 public:
  MlpPolicy() = default;
  MlpPolicy(std::vector<std::size_t> layers, double sigma = 1.0) : layers_(std::move(layers)), sigma_(sigma) {
    require(layers_.size() >= 2, "mlp needs at least input and output layers");
    require(sigma > 0.0, "policy sigma must be positive");
    for (auto n : layers_) require(n > 0, "mlp layer sizes must be positive");
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
      offsets_.push_back(n);
      n += layers_[l + 1] * (layers_[l] + 1);
    }
    params_ = ParameterVector(n);
  }

  static MlpPolicy make(std::size_t state_dim, std::size_t action_dim, std::vector<std::size_t> hidden = {32, 32},
                        double sigma = 1.0) {
    std::vector<std::size_t> layers{state_dim};
    layers.insert(layers.end(), hidden.begin(), hidden.end());
    layers.push_back(action_dim);
    return MlpPolicy(std::move(layers), sigma);
  }

  // Glorot-uniform hidden weights, zero biases, zero output layer.
  MlpPolicy initialized(std::uint64_t seed) const {
    MlpPolicy out = *this;
    std::mt19937_64 rng(seed);
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
      const std::size_t in = layers_[l], o = layers_[l + 1];
      const bool output = l + 2 == layers_.size();
      const double lim = std::sqrt(6.0 / static_cast<double>(in + o));
      std::uniform_real_distribution<double> u(-lim, lim);
      for (std::size_t i = 0; i < o * in; ++i) out.params_[off + i] = output ? 0.0 : u(rng);
      for (std::size_t i = 0; i < o; ++i) out.params_[off + o * in + i] = 0.0;
      off += o * (in + 1);
    }
    return out;
  }

  const std::vector<std::size_t>& layers() const { return layers_; }
  std::size_t state_dim() const { return layers_.front(); }
  std::size_t action_dim() const { return layers_.back(); }
  double sigma() const { return sigma_; }
  std::size_t param_count() const { return params_.size(); }
  const ParameterVector& params() const { return params_; }

  MlpPolicy with_params(ParameterVector p) const {
    require(p.size() == params_.size(), "mlp: parameter length mismatch");
    MlpPolicy out = *this;
    out.params_ = std::move(p);
    return out;
  }

  Vec mean(std::span<const double> s) const {
    require(s.size() == state_dim(), "mlp: state dimension mismatch");
    auto& ws = workspace();
    forward(s, ws);
    return ws.act.back();
  }

  double accumulate(std::span<const double> s, std::span<const double> a, double coeff,
                    std::span<double> grad) const {
    require(s.size() == state_dim() && a.size() == action_dim(), "mlp: dimension mismatch");
    auto& ws = workspace();
    forward(s, ws);
    const std::size_t L = layers_.size() - 1;
    const double inv_var = 1.0 / (sigma_ * sigma_);
    Vec& out = ws.act[L];
    double sq = 0.0;
    ws.delta.resize(L + 1);
    ws.delta[L].assign(out.size(), 0.0);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double r = out[i] - a[i];
      sq += r * r;
      ws.delta[L][i] = coeff * r * inv_var;
    }
    if (!grad.empty()) {
      for (std::size_t l = L; l-- > 0;) {
        const std::size_t in = layers_[l], o = layers_[l + 1];
        const std::size_t off = offsets()[l];
        const Vec& d = ws.delta[l + 1];
        const Vec& h = ws.act[l];
        for (std::size_t i = 0; i < o; ++i) {
          const double di = d[i];
          if (di == 0.0) continue;
          double* gw = &grad[off + i * in];
          for (std::size_t j = 0; j < in; ++j) gw[j] += di * h[j];
          grad[off + o * in + i] += di;
        }
        if (l == 0) break;
        Vec& dp = ws.delta[l];
        dp.assign(in, 0.0);
        for (std::size_t i = 0; i < o; ++i) {
          const double di = d[i];
          if (di == 0.0) continue;
          const double* w = params_.values().data() + off + i * in;
          for (std::size_t j = 0; j < in; ++j) dp[j] += w[j] * di;
        }
        for (std::size_t j = 0; j < in; ++j) dp[j] *= 1.0 - h[j] * h[j];
      }
    }
    return 0.5 * sq * inv_var + zero_residual_nll(action_dim(), sigma_);
  }

  Eigen::VectorXd batch_accumulate(const Matrix& X, const Matrix& A, const Eigen::VectorXd& coeff,
                                   std::span<double> grad) const {
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    require(X.rows() == static_cast<Eigen::Index>(state_dim()) && A.rows() == static_cast<Eigen::Index>(action_dim()) &&
                X.cols() == A.cols() && coeff.size() == X.cols(),
            "mlp: batch dimension mismatch");
    const std::size_t L = layers_.size() - 1;
    const double* P = params_.values().data();
    // Owned copies keep reduction order independent of the parameter buffer's alignment.
    auto weight = [&](std::size_t l) {
      return RowMajor(Eigen::Map<const RowMajor>(P + offsets_[l], static_cast<Eigen::Index>(layers_[l + 1]),
                                                 static_cast<Eigen::Index>(layers_[l])));
    };
    auto bias = [&](std::size_t l) {
      return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(P + offsets_[l] + layers_[l + 1] * layers_[l],
                                                               static_cast<Eigen::Index>(layers_[l + 1])));
    };
    std::vector<Matrix> act(L + 1);
    act[0] = X;
    for (std::size_t l = 0; l < L; ++l) {
      act[l + 1].noalias() = weight(l) * act[l];
      act[l + 1].colwise() += bias(l);
      // tanh(z) = 1 - 2 / (exp(2z) + 1); Eigen vectorizes exp but not tanh for doubles.
      if (l + 1 < L) act[l + 1] = (1.0 - 2.0 / ((2.0 * act[l + 1].array()).exp() + 1.0)).matrix();
    }
    const double inv_var = 1.0 / (sigma_ * sigma_);
    Matrix d = act[L] - A;
    Eigen::VectorXd out = (0.5 * inv_var) * d.colwise().squaredNorm().transpose();
    out.array() += zero_residual_nll(action_dim(), sigma_);
    if (grad.empty()) return out;
    d = (d * coeff.asDiagonal()) * inv_var;
    for (std::size_t l = L; l-- > 0;) {
      const auto o = static_cast<Eigen::Index>(layers_[l + 1]), in = static_cast<Eigen::Index>(layers_[l]);
      Eigen::Map<RowMajor> gw(grad.data() + offsets_[l], o, in);
      Eigen::Map<Eigen::VectorXd> gb(grad.data() + offsets_[l] + layers_[l + 1] * layers_[l], o);
      const RowMajor dw = d * act[l].transpose();
      const Eigen::VectorXd db = d.rowwise().sum();
      gw += dw;
      gb += db;
      if (l == 0) break;
      Matrix prev = weight(l).transpose() * d;
      d = prev.cwiseProduct((1.0 - act[l].array().square()).matrix());
    }
    return out;
  }

 private:
  struct Workspace {
    std::vector<Vec> act;
    std::vector<Vec> delta;
  };
  static Workspace& workspace() {
    thread_local Workspace ws;
    return ws;
  }

  const std::vector<std::size_t>& offsets() const { return offsets_; }

  void forward(std::span<const double> s, Workspace& ws) const {
    const std::size_t L = layers_.size() - 1;
    ws.act.resize(L + 1);
    ws.act[0].assign(s.begin(), s.end());
    const auto& offs = offsets();
    for (std::size_t l = 0; l < L; ++l) {
      const std::size_t in = layers_[l], o = layers_[l + 1];
      const std::size_t off = offs[l];
      const Vec& h = ws.act[l];
      Vec& z = ws.act[l + 1];
      z.resize(o);
      for (std::size_t i = 0; i < o; ++i) {
        const double* w = params_.values().data() + off + i * in;
        double acc = params_[off + o * in + i];
        for (std::size_t j = 0; j < in; ++j) acc += w[j] * h[j];
        z[i] = l + 1 < L ? std::tanh(acc) : acc;
      }
    }
  }

  std::vector<std::size_t> layers_;
  double sigma_ = 1.0;
  ParameterVector params_;
  std::vector<std::size_t> offsets_;  // start of each layer's block in params_
};

template <Policy P>
double nll(const P& policy, const StateActionPair& pair) {
  return policy.accumulate(pair.state, pair.action, 0.0, {});
}

// Gradient of the mean NLL over a batch.
template <Policy P>
ParameterVector grad_nll(const P& policy, std::span<const StateActionPair> batch) {
  require(!batch.empty(), "grad_nll: empty batch");
  ParameterVector g(policy.param_count());
  const double c = 1.0 / static_cast<double>(batch.size());
  for (const auto& p : batch) policy.accumulate(p.state, p.action, c, g.span());
  return g;
}

template <Policy P>
ParameterVector get_params(const P& policy) {
  return policy.params();
}

template <Policy P>
P set_params(const P& policy, ParameterVector params) {
  return policy.with_params(std::move(params));
}

// Checkpoints are one JSON object:
//   {"kind": "mlp", "layers": [2, 32, 32, 2], "sigma": 1.0, "params": [...]}
//   {"kind": "linear", "state_dim": 1, "action_dim": 1, "sigma": 1.0, "params": [...]}
inline nlohmann::ordered_json checkpoint_json(const MlpPolicy& p) {
  nlohmann::ordered_json j;
  j["kind"] = "mlp";
  j["layers"] = p.layers();
  j["sigma"] = p.sigma();
  j["params"] = p.params().values();
  return j;
}

inline nlohmann::ordered_json checkpoint_json(const LinearGaussianPolicy& p) {
  nlohmann::ordered_json j;
  j["kind"] = "linear";
  j["state_dim"] = p.state_dim();
  j["action_dim"] = p.action_dim();
  j["sigma"] = p.sigma();
  j["params"] = p.params().values();
  return j;
}

template <Policy P>
void save_checkpoint(const std::string& path, const P& policy) {
  std::ofstream os(path);
  require(static_cast<bool>(os), "cannot open checkpoint " + path);
  os << checkpoint_json(policy).dump() << '\n';
}

inline MlpPolicy mlp_from_checkpoint(const nlohmann::json& j) {
  require(j.at("kind") == "mlp", "checkpoint is not an mlp");
  MlpPolicy p(j.at("layers").get<std::vector<std::size_t>>(), j.at("sigma").get<double>());
  return p.with_params(ParameterVector(j.at("params").get<Vec>()));
}

inline LinearGaussianPolicy linear_from_checkpoint(const nlohmann::json& j) {
  require(j.at("kind") == "linear", "checkpoint is not a linear policy");
  LinearGaussianPolicy p(j.at("state_dim").get<std::size_t>(), j.at("action_dim").get<std::size_t>(),
                         j.at("sigma").get<double>());
  return p.with_params(ParameterVector(j.at("params").get<Vec>()));
}

}  // namespace rebal
