#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "rebal/config.hpp"
#include "rebal/dataset_io.hpp"
#include "rebal/datagen.hpp"
#include "rebal/harness.hpp"
#include "rebal/metaref.hpp"
#include "rebal/policy.hpp"
#include "rebal/rebalance.hpp"
#include "rebal/repro.hpp"

namespace {

using namespace rebal;

constexpr int kOk = 0, kRuntime = 1, kUsage = 2;

struct usage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flag value if given, else config value, else the built-in default.
struct Resolver {
  const CLI::App& app;
  const KeyValueConfig& cfg;

  bool given(const std::string& flag) const { return app.count("--" + flag) > 0; }

  std::string str(const std::string& flag, const std::string& value, const std::string& fallback) const {
    return given(flag) ? value : cfg.get(flag, fallback);
  }
  double num(const std::string& flag, double value, double fallback) const {
    return given(flag) ? value : cfg.get_double(flag, fallback);
  }
  long long integer(const std::string& flag, long long value, long long fallback) const {
    return given(flag) ? value : cfg.get_int(flag, fallback);
  }
  Vec list(const std::string& flag, const std::string& value, const Vec& fallback) const {
    if (given(flag)) return KeyValueConfig::parse_list(flag, value);
    return cfg.get_list(flag, fallback);
  }
};

KeyValueConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  if (!std::filesystem::exists(path)) throw usage_error("config file not found: " + path);
  return KeyValueConfig::load(path);
}

std::string format_vec(const Vec& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open " + path + " for writing");
  return os;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string config, out = "dataset.jsonl", rho, theta, source = "linear", demos;
  int k = 0;
  long long n = 0, seed = 0;
  double sigma = 0.0, noise = 0.0;
};

int cmd_gen(const CLI::App& app, const GenArgs& a) {
  const KeyValueConfig cfg = load_config(a.config);
  const Resolver r{app, cfg};
  const std::string source = r.str("source", a.source, "linear");
  const std::string out = r.str("out", a.out, "dataset.jsonl");
  const auto seed = static_cast<std::uint64_t>(r.integer("seed", a.seed, 0));
  LabeledDataset ds;
  if (source == "linear") {
    const int k = static_cast<int>(r.integer("k", a.k, 2));
    if (k < 1) throw usage_error("--k must be >= 1");
    const Vec rho = r.list("rho", a.rho, Vec(static_cast<std::size_t>(k), 1.0 / k));
    if (rho.size() != static_cast<std::size_t>(k))
      throw usage_error("--rho needs " + std::to_string(k) + " entries (one per group)");
    double s = 0.0;
    for (double x : rho) s += x;
    if (std::abs(s - 1.0) > 1e-9) throw usage_error("--rho must sum to 1 (got " + std::to_string(s) + ")");
    Vec theta_default(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) theta_default[static_cast<std::size_t>(i)] = k == 1 ? 1.0 : 1.0 - 2.0 * i / (k - 1);
    const Vec theta = r.list("theta", a.theta, theta_default);
    if (theta.size() != static_cast<std::size_t>(k)) throw usage_error("--theta needs one entry per group");
    const auto n = r.integer("n", a.n, 1000);
    if (n < k) throw usage_error("--n must be at least k");
    ds = repro::linear_dataset(theta, rho, r.num("sigma", a.sigma, 0.1), static_cast<std::size_t>(n), seed);
  } else if (source == "toy") {
    const ToyEnv env = ToyEnv::from_config(cfg);
    const Vec d = r.list("demos", a.demos, Vec{27, 9, 27});
    if (d.size() != env.behaviors.size()) throw usage_error("--demos needs one count per behavior");
    std::vector<int> demos;
    for (double x : d) demos.push_back(static_cast<int>(x));
    ds = generate_demonstrations(env, demos, r.num("noise", a.noise, 0.02), seed,
                                 static_cast<int>(cfg.get_int("stride", 3)));
  } else {
    throw usage_error("--source must be linear or toy");
  }
  save_dataset(out, ds);
  std::cout << "wrote " << ds.size() << " pairs to " << out << "\n";
  const auto counts = ds.group_counts();
  const Vec rho_hat = empirical_proportions(ds);
  for (std::size_t i = 0; i < counts.size(); ++i)
    std::cout << "  group " << i << ": " << counts[i] << " pairs, rho=" << rho_hat[i] << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct RebalanceArgs {
  std::string config, data, strategy, out = "weights.jsonl", refs_out, data_out, report, policy = "mlp";
  long long seed = 0;
};

StrategySettings settings_from(const KeyValueConfig& c) {
  StrategySettings s;
  const Vec hidden = c.get_list("hidden", Vec{32, 32});
  s.hidden.clear();
  for (double h : hidden) s.hidden.push_back(static_cast<std::size_t>(h));
  s.train.inner_lr = c.get_double("lr", s.train.inner_lr);
  s.train.epochs = static_cast<int>(c.get_int("epochs", s.train.epochs));
  s.minmax.alpha_lr = c.get_double("alpha_lr", s.minmax.alpha_lr);
  s.minmax.outer_rounds = static_cast<int>(c.get_int("outer_rounds", s.minmax.outer_rounds));
  s.minmax.inner.inner_lr = s.train.inner_lr;
  s.minmax.inner.epochs = static_cast<int>(c.get_int("inner_epochs", s.minmax.inner.epochs));
  s.minmax.delta_tol = c.get_double("delta_tol", s.minmax.delta_tol);
  s.minmax.warmup_epochs = static_cast<int>(c.get_int("warmup_epochs", s.minmax.warmup_epochs));
  const std::string ascent = c.get("ascent", "projected");
  if (ascent != "projected" && ascent != "exponentiated")
    throw usage_error("ascent must be projected or exponentiated (got " + ascent + ")");
  s.minmax.exponentiated = ascent == "exponentiated";
  s.refpolicy.train = s.train;
  const std::string weighting = c.get("ref_weighting", "uniform");
  if (weighting != "uniform" && weighting != "proportional")
    throw usage_error("ref_weighting must be uniform or proportional (got " + weighting + ")");
  s.refpolicy.weighting = weighting == "proportional" ? RefWeighting::Proportional : RefWeighting::Uniform;
  s.meta.inner_lr = c.get_double("meta_inner_lr", s.meta.inner_lr);
  s.meta.meta_lr = c.get_double("meta_lr", s.meta.meta_lr);
  s.meta.inner_steps = static_cast<int>(c.get_int("meta_inner_steps", s.meta.inner_steps));
  s.meta.meta_rounds = static_cast<int>(c.get_int("meta_rounds", s.meta.meta_rounds));
  s.meta.retrain = s.train;
  s.upsample.rounds = static_cast<int>(c.get_int("upsample_rounds", s.upsample.rounds));
  s.upsample.eta_count = c.get_int("eta_count", s.upsample.eta_count);
  s.upsample.train = s.train;
  return s;
}

template <Policy P>
int run_rebalance(const LabeledDataset& ds, Strategy strategy, const StrategySettings& st, const P& init,
                  std::uint64_t seed, const RebalanceArgs& paths) {
  const auto k = static_cast<std::size_t>(ds.group_count());
  std::ofstream out = open_out(paths.out);
  std::vector<WeightReportRow> report;
  WeightVector alpha = equal_weights(k);
  switch (strategy) {
    case Strategy::Baseline:
      alpha = WeightVector(empirical_proportions(ds));
      write_weights(out, to_string(strategy), RefSource::Zero, alpha);
      break;
    case Strategy::Equal:
      write_weights(out, to_string(strategy), RefSource::Zero, alpha);
      break;
    case Strategy::MinMaxZero: {
      const auto refs = ReferenceLosses::zero(k);
      const auto m = minmax_reweight(ds, refs, st.minmax, init);
      alpha = m.alpha;
      write_weights(out, to_string(strategy), refs.source, alpha, &refs, nullptr, m.history, &m.converged);
      report.push_back({to_string(strategy), alpha.values(), refs.values});
      break;
    }
    case Strategy::MinMaxRefPolicy: {
      const auto refs = reference_policy_targets(ds, st.refpolicy, init).refs;
      const auto m = minmax_reweight(ds, refs, st.minmax, init);
      alpha = m.alpha;
      write_weights(out, to_string(strategy), refs.source, alpha, &refs, nullptr, m.history, &m.converged);
      report.push_back({to_string(strategy), alpha.values(), refs.values});
      break;
    }
    case Strategy::MinMaxMeta: {
      MetaConfig mc = st.meta;
      mc.seed = seed;
      const MetaReferences meta = compute_reference_losses(ds, mc, init);
      const std::string refs_path = paths.refs_out.empty() ? paths.out + ".refs.jsonl" : paths.refs_out;
      std::ofstream rf = open_out(refs_path);
      write_references(rf, meta);
      const auto m = minmax_reweight(ds, meta.refs, st.minmax, init);
      alpha = m.alpha;
      write_weights(out, to_string(strategy), meta.refs.source, alpha, &meta.refs, nullptr, m.history, &m.converged);
      report.push_back({to_string(strategy), alpha.values(), meta.refs.values});
      std::cout << "references: " << refs_path << "\n";
      std::cout << "converged: " << (m.converged ? "true" : "false") << " after " << m.rounds << " rounds\n";
      break;
    }
    case Strategy::Upsample: {
      UpsampleConfig uc = st.upsample;
      uc.seed = seed;
      const auto up = error_upsample(ds, uc, init);
      alpha = WeightVector(empirical_proportions(up.dataset));
      write_weights(out, to_string(strategy), RefSource::Zero, alpha);
      const std::string dpath = paths.data_out.empty() ? paths.out + ".data.jsonl" : paths.data_out;
      save_dataset(dpath, up.dataset);
      std::cout << "upsampled dataset: " << dpath << " (" << up.buffer.size() << " pairs appended"
                << (up.uniform_fallback ? ", uniform fallback" : "") << ")\n";
      break;
    }
  }
  if (report.empty()) report.push_back({to_string(strategy), alpha.values(), {}});
  if (!paths.report.empty()) {
    std::ofstream rp = open_out(paths.report);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < k; ++i) names.push_back(std::to_string(i));
    write_weight_report(rp, report, names);
  }
  std::cout << "alpha: " << format_vec(alpha.values()) << "\n";
  std::cout << "weights: " << paths.out << "\n";
  return kOk;
}

int cmd_rebalance(const CLI::App& app, RebalanceArgs a) {
  const KeyValueConfig cfg = load_config(a.config);
  const Resolver r{app, cfg};
  a.data = r.str("data", a.data, "");
  a.strategy = r.str("strategy", a.strategy, "");
  a.out = r.str("out", a.out, "weights.jsonl");
  a.refs_out = r.str("refs-out", a.refs_out, "");
  a.data_out = r.str("data-out", a.data_out, "");
  a.report = r.str("report", a.report, "");
  a.policy = r.str("policy", a.policy, "mlp");
  const auto seed = static_cast<std::uint64_t>(r.integer("seed", a.seed, 0));
  if (a.strategy.empty()) throw usage_error("--strategy is required");
  Strategy strategy;
  try {
    strategy = parse_strategy(a.strategy);
  } catch (const domain_error& e) {
    throw usage_error(e.what());
  }
  if (a.data.empty()) throw usage_error("--data is required");
  if (!std::filesystem::exists(a.data)) throw usage_error("dataset not found: " + a.data);
  const LabeledDataset ds = load_dataset(a.data);
  if (ds.empty()) throw usage_error("dataset is empty: " + a.data);
  const StrategySettings st = settings_from(cfg);
  if (a.policy == "linear")
    return run_rebalance(ds, strategy, st, LinearGaussianPolicy(ds.state_dim(), ds.action_dim(), 1.0), seed, a);
  if (a.policy == "mlp")
    return run_rebalance(ds, strategy, st,
                         MlpPolicy::make(ds.state_dim(), ds.action_dim(), st.hidden).initialized(seed), seed, a);
  throw usage_error("--policy must be mlp or linear");
}

// ---------------------------------------------------------------------------

int cmd_repro(const std::string& suite) {
  std::vector<std::string> names;
  for (const auto& [n, f] : repro::suites()) names.push_back(n);
  bool known = suite == "all";
  for (const auto& n : names) known = known || n == suite;
  if (!known) {
    std::string list;
    for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
    throw usage_error("unknown suite '" + suite + "' (valid: " + list + ", all)");
  }
  bool all_pass = true;
  for (const auto& [n, f] : repro::suites()) {
    if (suite != "all" && suite != n) continue;
    std::cout << "[" << n << "]\n";
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& c : f(std::cout)) {
      std::cout << (c.pass ? "PASS" : "FAIL") << " criterion " << c.id << ": " << c.name << " (" << c.detail
                << ")\n";
      all_pass = all_pass && c.pass;
    }
    std::cout << "suite " << n << " finished in " << repro::fmt(repro::seconds_since(t0), 4) << "s\n";
  }
  return all_pass ? kOk : kRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Behavior-imbalance measurement and dataset rebalancing for behavior cloning"};
  app.require_subcommand(1);

  GenArgs g;
  auto* gen = app.add_subcommand("gen", "Generate a labeled demonstration dataset");
  gen->add_option("--config", g.config, "Key-value config file (flags override it)");
  gen->add_option("--source", g.source, "linear (1-D linear-Gaussian groups) or toy (point-mass demos)");
  gen->add_option("--k", g.k, "Number of groups (linear)");
  gen->add_option("--rho", g.rho, "Comma-separated group proportions (linear)");
  gen->add_option("--theta", g.theta, "Comma-separated sub-policy gains (linear)");
  gen->add_option("--sigma", g.sigma, "Action noise std (linear)");
  gen->add_option("--n", g.n, "Total pairs (linear)");
  gen->add_option("--demos", g.demos, "Comma-separated demos per behavior (toy)");
  gen->add_option("--noise", g.noise, "Action noise std (toy)");
  gen->add_option("--seed", g.seed, "Random seed");
  gen->add_option("--out", g.out, "Output dataset path");

  RebalanceArgs rb;
  auto* reb = app.add_subcommand("rebalance", "Compute group weights with a rebalancing strategy");
  reb->add_option("--config", rb.config, "Key-value config file (flags override it)");
  reb->add_option("--data", rb.data, "Input dataset path");
  reb->add_option("--strategy", rb.strategy, "equal|minmax-zero|minmax-refpolicy|minmax-meta|upsample|baseline");
  reb->add_option("--policy", rb.policy, "mlp or linear");
  reb->add_option("--seed", rb.seed, "Random seed");
  reb->add_option("--out", rb.out, "Weights output path");
  reb->add_option("--refs-out", rb.refs_out, "References output path (minmax-meta)");
  reb->add_option("--data-out", rb.data_out, "Upsampled dataset output path (upsample)");
  reb->add_option("--report", rb.report, "Weights/targets CSV report path");

  std::string suite;
  auto* rep = app.add_subcommand("repro", "Run a reproduction suite and report pass/fail per check");
  rep->add_option("suite", suite, "prop1|minmax|metagrad|imbalance|remix-failure|meta-vs-baselines|all")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen(*gen, g);
    if (reb->parsed()) return cmd_rebalance(*reb, rb);
    if (rep->parsed()) return cmd_repro(suite);
  } catch (const usage_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
