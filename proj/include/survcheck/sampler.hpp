#pragma once

// Adaptive random-walk Metropolis over a Model's joint posterior, with
// split-R-hat and bulk effective sample size diagnostics.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <nlohmann/json.hpp>

#include "survcheck/models.hpp"

namespace survcheck {

struct SamplerConfig {
  int n_chains = 4;
  int n_warmup = 2000;
  int n_keep = 1000;
  std::uint64_t seed = 1;
  double init_jitter = 0.5;
  int adaptation_window = 100;
  double target_acceptance = 0.35;
  int thin = 1;                  // iterations per kept draw
  bool laplace_proposal = true;  // start the proposal at the inverse Hessian at the mode

  void check() const {
    require(n_chains >= 1 && n_warmup >= 1 && n_keep >= 1 && adaptation_window >= 1 && thin >= 1,
            "config", "sampler counts must be positive");
    require(target_acceptance > 0.0 && target_acceptance < 1.0, "config",
            "target acceptance must lie in (0, 1)");
    require(init_jitter >= 0.0, "config", "initial jitter must be non-negative");
  }
};

inline void to_json(nlohmann::json& j, const SamplerConfig& c) {
  j = {{"n_chains", c.n_chains},       {"n_warmup", c.n_warmup},
       {"n_keep", c.n_keep},           {"seed", c.seed},
       {"init_jitter", c.init_jitter}, {"adaptation_window", c.adaptation_window},
       {"target_acceptance", c.target_acceptance}, {"thin", c.thin},
       {"laplace_proposal", c.laplace_proposal}};
}

inline void from_json(const nlohmann::json& j, SamplerConfig& c) {
  c = SamplerConfig{};
  c.n_chains = j.value("n_chains", c.n_chains);
  c.n_warmup = j.value("n_warmup", c.n_warmup);
  c.n_keep = j.value("n_keep", c.n_keep);
  c.seed = j.value("seed", c.seed);
  c.init_jitter = j.value("init_jitter", c.init_jitter);
  c.adaptation_window = j.value("adaptation_window", c.adaptation_window);
  c.target_acceptance = j.value("target_acceptance", c.target_acceptance);
  c.thin = j.value("thin", c.thin);
  c.laplace_proposal = j.value("laplace_proposal", c.laplace_proposal);
  c.check();
}

struct AdaptationEntry {
  int chain;
  int iteration;  // iterations completed, warmup included
  double scale;
  Eigen::MatrixXd covariance;
};

struct FitResult {
  DrawsMatrix draws;  // n_chains * n_keep rows, chain-major
  std::vector<double> acceptance;  // per chain, kept iterations
  std::vector<double> log_posterior_trace;
  std::vector<AdaptationEntry> adaptation_log;
  SamplerConfig config;
};

// Log posterior kernel on the sampling scale; -inf outside the support.
inline double log_posterior(const Model& model, const Eigen::Ref<const Eigen::VectorXd>& theta) {
  if (!theta.allFinite()) return kNegInf;
  const double lp = model.log_prior(theta);
  if (!std::isfinite(lp)) return kNegInf;
  double ll;
  try {
    ll = model.log_likelihood(theta);
  } catch (const Error&) {
    return kNegInf;  // parameters overflow the family's support (rate or shape not finite)
  }
  if (std::isnan(ll)) return kNegInf;
  return lp + ll;
}

using LogDensity = std::function<double(const Eigen::VectorXd&)>;

namespace detail {

inline std::mt19937_64 chain_rng(std::uint64_t seed, int chain) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(chain), 0x5eedu};
  return std::mt19937_64(seq);
}

// Window covariance shrunk toward `target` with the weight of `n0` draws.
inline Eigen::MatrixXd window_covariance(std::span<const Eigen::VectorXd> xs, const Eigen::MatrixXd& target,
                                         double n0) {
  const auto d = xs.front().size();
  const double n = static_cast<double>(xs.size());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (const auto& x : xs) mean += x;
  mean /= n;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (const auto& x : xs) cov += (x - mean) * (x - mean).transpose();
  cov /= std::max(1.0, n - 1.0);
  return (n / (n + n0)) * cov + (n0 / (n + n0)) * target;
}

inline Eigen::VectorXd fd_gradient(const LogDensity& f, const Eigen::VectorXd& x) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd y = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = 1e-5 * std::max(1.0, std::abs(x(k)));
    y(k) = x(k) + h;
    const double up = f(y);
    y(k) = x(k) - h;
    const double down = f(y);
    y(k) = x(k);
    g(k) = (up - down) / (2.0 * h);
  }
  return g;
}

// Posterior mode by BFGS on finite-difference gradients, then the negative
// Hessian there with eigenvalues clamped to [1e-2, 1e8]. Empty when the
// density is not smooth enough near `init` to get started.
inline std::optional<Eigen::MatrixXd> laplace_precision(const LogDensity& logp, const Eigen::VectorXd& init) {
  const auto d = init.size();
  Eigen::VectorXd x = init;
  double fx = logp(x);
  if (!std::isfinite(fx)) return std::nullopt;
  Eigen::VectorXd g = -fd_gradient(logp, x);
  if (!g.allFinite()) return std::nullopt;
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(d, d);
  for (int iter = 0; iter < 500; ++iter) {
    Eigen::VectorXd p = -H * g;
    if (g.dot(p) >= 0.0) {
      H.setIdentity();
      p = -g;
    }
    double t = 1.0;
    Eigen::VectorXd xn;
    double fn = kNegInf;
    for (int k = 0; k < 60; ++k, t *= 0.5) {
      xn = x + t * p;
      fn = logp(xn);
      if (std::isfinite(fn) && -fn <= -fx + 1e-4 * t * g.dot(p)) break;
    }
    if (!(std::isfinite(fn) && fn >= fx)) break;
    const Eigen::VectorXd gn = -fd_gradient(logp, xn);
    if (!gn.allFinite()) break;
    const Eigen::VectorXd s = xn - x, yv = gn - g;
    const double sy = s.dot(yv);
    const double gain = fn - fx;
    x = xn;
    fx = fn;
    g = gn;
    if (sy > 1e-12) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
      H = (I - rho * s * yv.transpose()) * H * (I - rho * yv * s.transpose()) + rho * s * s.transpose();
    }
    if (g.lpNorm<Eigen::Infinity>() < 1e-6 || gain < 1e-10 * (1.0 + std::abs(fx))) break;
  }

  Eigen::MatrixXd hess(d, d);
  std::vector<double> h(static_cast<std::size_t>(d));
  for (Eigen::Index k = 0; k < d; ++k) h[static_cast<std::size_t>(k)] = 1e-3 * std::max(1.0, std::abs(x(k)));
  auto at = [&](Eigen::Index a, double da, Eigen::Index b, double db) {
    Eigen::VectorXd y = x;
    y(a) += da;
    y(b) += db;
    return logp(y);
  };
  for (Eigen::Index a = 0; a < d; ++a) {
    const double ha = h[static_cast<std::size_t>(a)];
    hess(a, a) = -(at(a, ha, a, 0.0) - 2.0 * fx + at(a, -ha, a, 0.0)) / (ha * ha);
    for (Eigen::Index b = a + 1; b < d; ++b) {
      const double hb = h[static_cast<std::size_t>(b)];
      hess(a, b) = hess(b, a) =
          -(at(a, ha, b, hb) - at(a, ha, b, -hb) - at(a, -ha, b, hb) + at(a, -ha, b, -hb)) / (4.0 * ha * hb);
    }
  }
  if (!hess.allFinite()) return std::nullopt;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hess);
  if (eig.info() != Eigen::Success) return std::nullopt;
  const Eigen::VectorXd lambda = eig.eigenvalues().cwiseMax(1e-2).cwiseMin(1e8);
  return eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
}

inline Eigen::MatrixXd safe_cholesky(const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::MatrixXd diag = cov.diagonal().cwiseMax(1e-8).asDiagonal();
  return diag.llt().matrixL();
}

}  // namespace detail

// A log scale parameter and the standardized coefficients it multiplies.
// Each group is updated as its own block, plus a move that shifts the log
// scale by e and divides the members by exp(e). That move keeps their product
// fixed and so travels along the funnel that non-centered smooths produce.
struct ScaleGroup {
  Eigen::Index log_scale;
  std::vector<Eigen::Index> members;
};

namespace detail {

// One Metropolis-within-Gibbs block with its own adapted proposal.
struct Block {
  std::vector<Eigen::Index> index;
  Eigen::MatrixXd cov, chol;
  double log_scale = 0.0;
  int steps = 0;  // Robbins-Monro counter, reset when cov changes

  Eigen::Index size() const { return static_cast<Eigen::Index>(index.size()); }
  double default_log_scale() const { return std::log(2.38 / std::sqrt(static_cast<double>(index.size()))); }
  void set_cov(Eigen::MatrixXd c) {
    cov = std::move(c);
    chol = safe_cholesky(cov);
    log_scale = default_log_scale();
    steps = 0;
  }
};

inline Eigen::MatrixXd sub_matrix(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& idx) {
  const auto n = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) out(a, b) = m(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
  return out;
}

}  // namespace detail

// Generic sampler over any log density with a deterministic starting point.
// Without groups, every parameter moves in one joint proposal.
inline FitResult sample_rwm(const LogDensity& logp, const Eigen::VectorXd& init,
                            const std::vector<std::string>& names, const SamplerConfig& config,
                            const std::vector<ScaleGroup>& groups = {}) {
  config.check();
  const auto d = init.size();
  require(d >= 1, "config", "posterior must have at least one parameter");
  require(names.size() == static_cast<std::size_t>(d), "dimension", "parameter name count mismatch");

  // Blocks: everything outside the groups first, then one block per group.
  std::vector<int> owner(static_cast<std::size_t>(d), 0);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    require(groups[g].log_scale >= 0 && groups[g].log_scale < d, "dimension", "scale group index out of range");
    owner[static_cast<std::size_t>(groups[g].log_scale)] = static_cast<int>(g) + 1;
    for (auto k : groups[g].members) {
      require(k >= 0 && k < d, "dimension", "scale group index out of range");
      owner[static_cast<std::size_t>(k)] = static_cast<int>(g) + 1;
    }
  }
  std::vector<detail::Block> blocks(groups.size() + 1);
  for (Eigen::Index k = 0; k < d; ++k) blocks[static_cast<std::size_t>(owner[static_cast<std::size_t>(k)])].index.push_back(k);
  if (blocks.front().index.empty()) blocks.erase(blocks.begin());

  // Starting proposal: conditional covariances of the Laplace approximation
  // when available. Window estimates then shrink toward the current proposal;
  // without a mode they shrink toward a small identity instead.
  std::optional<Eigen::MatrixXd> precision;
  if (config.laplace_proposal) precision = detail::laplace_precision(logp, init);
  const bool from_mode = precision.has_value();
  std::vector<Eigen::MatrixXd> start_cov;
  for (const auto& b : blocks) {
    const auto n = b.size();
    start_cov.push_back(from_mode ? Eigen::MatrixXd(detail::sub_matrix(*precision, b.index).inverse())
                                  : Eigen::MatrixXd(0.01 * Eigen::MatrixXd::Identity(n, n)));
  }

  auto full_cov = [&](const std::vector<detail::Block>& bs) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(d, d);
    for (const auto& b : bs)
      for (Eigen::Index a = 0; a < b.size(); ++a)
        for (Eigen::Index c = 0; c < b.size(); ++c)
          m(b.index[static_cast<std::size_t>(a)], b.index[static_cast<std::size_t>(c)]) = b.cov(a, c);
    return m;
  };

  FitResult result;
  result.config = config;
  result.draws.parameter_names = names;
  result.draws.values.resize(static_cast<Eigen::Index>(config.n_chains) * config.n_keep, d);

  for (int c = 0; c < config.n_chains; ++c) {
    auto rng = detail::chain_rng(config.seed, c);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    Eigen::VectorXd x = init;
    double lp = kNegInf;
    for (int attempt = 0; attempt < 100 && !std::isfinite(lp); ++attempt) {
      x = init;
      for (Eigen::Index k = 0; k < d; ++k) x(k) += config.init_jitter * normal(rng);
      lp = logp(x);
    }
    require(std::isfinite(lp), "fit_init",
            "log posterior is not finite near the initial point for chain " + std::to_string(c));

    for (std::size_t b = 0; b < blocks.size(); ++b) blocks[b].set_cov(start_cov[b]);
    std::vector<double> group_log_step(groups.size(), std::log(0.5));
    int group_steps = 0;
    result.adaptation_log.push_back({c, 0, std::exp(blocks.front().log_scale), full_cov(blocks)});

    auto accept = [&](Eigen::VectorXd& y, double log_ratio_extra, double& prob) {
      const double lpy = logp(y);
      prob = std::isfinite(lpy) ? std::min(1.0, std::exp(lpy - lp + log_ratio_extra)) : 0.0;
      const bool ok = unif(rng) < prob;
      if (ok) {
        x = std::move(y);
        lp = lpy;
      }
      return ok;
    };

    // One sweep: a proposal per block, then the funnel move of each group.
    // Returns the number of accepted block proposals.
    auto sweep = [&](bool adapt) {
      int accepted = 0;
      for (auto& b : blocks) {
        Eigen::VectorXd e(b.size());
        for (Eigen::Index k = 0; k < b.size(); ++k) e(k) = normal(rng);
        const Eigen::VectorXd step = std::exp(b.log_scale) * (b.chol * e);
        Eigen::VectorXd y = x;
        for (Eigen::Index k = 0; k < b.size(); ++k) y(b.index[static_cast<std::size_t>(k)]) += step(k);
        double prob;
        accepted += accept(y, 0.0, prob);
        if (adapt) {
          ++b.steps;
          b.log_scale += std::pow(static_cast<double>(b.steps), -0.6) * (prob - config.target_acceptance);
        }
      }
      if (adapt) ++group_steps;
      for (std::size_t g = 0; g < groups.size(); ++g) {
        // (u, z) -> (u + e, z exp(-e)) with symmetric e; Jacobian exp(-k e).
        const auto& grp = groups[g];
        const double e = std::exp(group_log_step[g]) * normal(rng);
        Eigen::VectorXd y = x;
        y(grp.log_scale) += e;
        for (auto k : grp.members) y(k) *= std::exp(-e);
        double prob;
        accept(y, -static_cast<double>(grp.members.size()) * e, prob);
        if (adapt) group_log_step[g] += std::pow(static_cast<double>(group_steps), -0.6) * (prob - 0.44);
      }
      return accepted;
    };

    // Warmup: an initial scale-only phase, then doubling windows at whose end
    // each block's covariance is re-estimated from the later half of the
    // history, then a final scale-only phase. Scales follow a Robbins-Monro
    // recursion toward the target acceptance.
    const int retune = std::max(1, config.n_warmup / 4);
    const int cov_end = config.n_warmup - retune;
    const int initial = std::max(1, std::min(config.adaptation_window, cov_end / 5));
    int window_end = initial;
    int window_len = config.adaptation_window;
    std::vector<Eigen::VectorXd> history;

    for (int it = 1; it <= cov_end; ++it) {
      sweep(true);
      if (it > initial) history.push_back(x);
      if (it == window_end || it == cov_end) {
        const std::span<const Eigen::VectorXd> recent(history.data() + history.size() / 2,
                                                      history.size() - history.size() / 2);
        for (auto& b : blocks) {
          const auto need = 2 * static_cast<std::size_t>(b.size()) + 2;
          if (recent.size() < need && !(it == cov_end && recent.size() >= 2)) continue;
          std::vector<Eigen::VectorXd> sub;
          sub.reserve(recent.size());
          for (const auto& h : recent) {
            Eigen::VectorXd v(b.size());
            for (Eigen::Index k = 0; k < b.size(); ++k) v(k) = h(b.index[static_cast<std::size_t>(k)]);
            sub.push_back(std::move(v));
          }
          const Eigen::MatrixXd target =
              from_mode ? b.cov : Eigen::MatrixXd(1e-3 * Eigen::MatrixXd::Identity(b.size(), b.size()));
          const double n0 = from_mode ? 2.0 * static_cast<double>(b.size()) : 5.0;
          b.set_cov(detail::window_covariance(sub, target, n0));
        }
        result.adaptation_log.push_back({c, it, std::exp(blocks.front().log_scale), full_cov(blocks)});
        if (it == window_end) {
          window_end = it + window_len;
          window_len *= 2;
          // Fold a short trailing window into the one before it.
          if (cov_end - window_end < window_len) window_end = cov_end;
        }
      }
    }
    // The frozen scales are the average iterates over the second half of the
    // final phase, which is far less noisy than the last iterate.
    for (auto& b : blocks) b.steps = 0;
    std::vector<double> scale_sum(blocks.size(), 0.0);
    int n_avg = 0;
    for (int it = cov_end + 1; it <= config.n_warmup; ++it) {
      sweep(true);
      if (2 * (it - cov_end) > retune) {
        for (std::size_t b = 0; b < blocks.size(); ++b) scale_sum[b] += blocks[b].log_scale;
        ++n_avg;
      }
    }
    if (n_avg > 0)
      for (std::size_t b = 0; b < blocks.size(); ++b) blocks[b].log_scale = scale_sum[b] / n_avg;
    const Eigen::MatrixXd frozen = full_cov(blocks);
    const double frozen_scale = std::exp(blocks.front().log_scale);
    result.adaptation_log.push_back({c, config.n_warmup, frozen_scale, frozen});

    long accepted_total = 0;
    int accepted_window = 0;
    const int n_iter = config.n_keep * config.thin;
    for (int it = 0; it < n_iter; ++it) {
      const int acc = sweep(false);
      accepted_total += acc;
      accepted_window += acc;
      if ((it + 1) % config.thin == 0) {
        const auto row = static_cast<Eigen::Index>(c) * config.n_keep + it / config.thin;
        result.draws.values.row(row) = x.transpose();
        result.draws.chain_ids.push_back(c);
        result.log_posterior_trace.push_back(lp);
      }
      if ((it + 1) % config.adaptation_window == 0) {
        result.adaptation_log.push_back({c, config.n_warmup + it + 1, frozen_scale, frozen});
        require(accepted_window > 0, "fit_divergence",
                "chain " + std::to_string(c) + " rejected every proposal over a full window (" +
                    std::to_string(config.adaptation_window) + " iterations) after iteration " +
                    std::to_string(config.n_warmup + it + 1) + "; proposal scale " +
                    std::to_string(frozen_scale));
        accepted_window = 0;
      }
    }
    result.acceptance.push_back(static_cast<double>(accepted_total) /
                                (static_cast<double>(n_iter) * static_cast<double>(blocks.size())));
  }
  return result;
}

inline std::vector<ScaleGroup> smooth_scale_groups(const Design& design) {
  std::vector<ScaleGroup> groups;
  const auto& params = design.params();
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].role != ParamRole::log_sd) continue;
    ScaleGroup g{static_cast<Eigen::Index>(k), {}};
    for (std::size_t j = 0; j < params.size(); ++j)
      if (params[j].role == ParamRole::smooth_z && params[j].smooth == params[k].smooth)
        g.members.push_back(static_cast<Eigen::Index>(j));
    if (!g.members.empty()) groups.push_back(std::move(g));
  }
  return groups;
}

inline FitResult fit(const Model& model, const SamplerConfig& config) {
  return sample_rwm([&](const Eigen::VectorXd& th) { return log_posterior(model, th); },
                    model.design().initial_point(), model.parameter_names(), config,
                    smooth_scale_groups(model.design()));
}

// ---------------------------------------------------------------------------
// Diagnostics

struct RhatComponents {
  double within;   // W: mean within-chain variance
  double between;  // B / n: variance of chain means
  double var_plus;
  double rhat;
};

inline std::vector<std::vector<double>> split_chains(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + static_cast<long>(half));
    out.emplace_back(c.end() - static_cast<long>(half), c.end());
  }
  return out;
}

inline RhatComponents rhat_components(const std::vector<std::vector<double>>& chains) {
  const double m = static_cast<double>(chains.size());
  const double n = static_cast<double>(chains.front().size());
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    const double mu = std::accumulate(c.begin(), c.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : c) ss += (v - mu) * (v - mu);
    means.push_back(mu);
    vars.push_back(n > 1 ? ss / (n - 1.0) : 0.0);
  }
  const double W = std::accumulate(vars.begin(), vars.end(), 0.0) / m;
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / m;
  double bss = 0.0;
  for (double mu : means) bss += (mu - grand) * (mu - grand);
  const double B_over_n = m > 1 ? bss / (m - 1.0) : 0.0;
  const double var_plus = (n - 1.0) / n * W + B_over_n;
  double rhat;
  if (W > 0.0) rhat = std::sqrt(var_plus / W);
  else rhat = B_over_n > 0.0 ? std::numeric_limits<double>::infinity() : std::nan("");
  return {W, B_over_n, var_plus, rhat};
}

inline double split_rhat(const std::vector<std::vector<double>>& chains) {
  return rhat_components(split_chains(chains)).rhat;
}

// Normal scores of average ranks across all chains.
inline std::vector<std::vector<double>> rank_normalize(const std::vector<std::vector<double>>& chains) {
  std::vector<std::pair<double, std::size_t>> all;
  std::size_t total = 0;
  for (const auto& c : chains) total += c.size();
  all.reserve(total);
  std::size_t idx = 0;
  for (const auto& c : chains)
    for (double v : c) all.emplace_back(v, idx++);
  std::sort(all.begin(), all.end());
  std::vector<double> z(total);
  const boost::math::normal_distribution<double> nd;
  for (std::size_t i = 0; i < total;) {
    std::size_t j = i;
    while (j < total && all[j].first == all[i].first) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);  // average 1-based rank
    const double p = (rank - 0.375) / (static_cast<double>(total) + 0.25);
    const double q = boost::math::quantile(nd, p);
    for (std::size_t k = i; k < j; ++k) z[all[k].second] = q;
    i = j;
  }
  std::vector<std::vector<double>> out;
  idx = 0;
  for (const auto& c : chains) {
    out.emplace_back(z.begin() + static_cast<long>(idx), z.begin() + static_cast<long>(idx + c.size()));
    idx += c.size();
  }
  return out;
}

// Multi-chain effective sample size with Geyer's initial monotone sequence.
inline double effective_sample_size(const std::vector<std::vector<double>>& chains) {
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  if (n < 4) return std::nan("");
  std::vector<double> means(m), chain_var(m);
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = std::accumulate(chains[c].begin(), chains[c].end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double v : chains[c]) ss += (v - means[c]) * (v - means[c]);
    chain_var[c] = ss / static_cast<double>(n - 1);
  }
  const double mean_var = std::accumulate(chain_var.begin(), chain_var.end(), 0.0) / static_cast<double>(m);
  double var_plus = mean_var * static_cast<double>(n - 1) / static_cast<double>(n);
  if (m > 1) {
    const double g = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(m);
    double bss = 0.0;
    for (double mu : means) bss += (mu - g) * (mu - g);
    var_plus += bss / static_cast<double>(m - 1);
  }
  if (!(var_plus > 0.0)) return std::nan("");

  auto mean_acov = [&](std::size_t lag) {
    double acc = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      double s = 0.0;
      for (std::size_t t = 0; t + lag < n; ++t)
        s += (chains[c][t] - means[c]) * (chains[c][t + lag] - means[c]);
      acc += s / static_cast<double>(n);
    }
    return acc / static_cast<double>(m);
  };
  auto rho = [&](std::size_t lag) { return 1.0 - (mean_var - mean_acov(lag)) / var_plus; };

  std::vector<double> r{1.0, rho(1)};
  double even = 1.0, odd = r[1];
  std::size_t s = 1;
  while (s + 4 < n && even + odd > 0.0) {
    even = rho(s + 1);
    odd = rho(s + 2);
    if (even + odd >= 0.0) {
      r.push_back(even);
      r.push_back(odd);
    }
    s += 2;
  }
  const std::size_t max_s = r.size() - 1;
  for (std::size_t k = 1; k + 2 <= max_s; k += 2) {
    if (r[k + 1] + r[k + 2] > r[k - 1] + r[k]) {
      r[k + 1] = 0.5 * (r[k - 1] + r[k]);
      r[k + 2] = r[k + 1];
    }
  }
  double tau = -1.0;
  for (double v : r) tau += 2.0 * v;
  const double total = static_cast<double>(m * n);
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

inline double bulk_ess(const std::vector<std::vector<double>>& chains) {
  return effective_sample_size(rank_normalize(split_chains(chains)));
}

struct ParameterDiagnostics {
  std::string name;
  std::optional<double> rhat;
  double ess_bulk;
  bool flagged;
};

struct DiagnosticReport {
  std::vector<ParameterDiagnostics> parameters;
  std::vector<double> acceptance;
  bool rhat_available = false;
  std::vector<std::string> warnings;

  bool any_flagged() const {
    return std::any_of(parameters.begin(), parameters.end(), [](const auto& p) { return p.flagged; });
  }
};

inline std::vector<std::vector<double>> chains_of(const DrawsMatrix& draws, Eigen::Index param) {
  std::vector<std::vector<double>> chains;
  std::map<int, std::size_t> slot;
  for (Eigen::Index s = 0; s < draws.n_draws(); ++s) {
    const int c = draws.chain_ids.empty() ? 0 : draws.chain_ids[static_cast<std::size_t>(s)];
    auto [it, fresh] = slot.try_emplace(c, chains.size());
    if (fresh) chains.emplace_back();
    chains[it->second].push_back(draws.values(s, param));
  }
  return chains;
}

inline constexpr double kRhatThreshold = 1.01;

inline DiagnosticReport diagnose(const FitResult& result) {
  DiagnosticReport rep;
  rep.acceptance = result.acceptance;
  const auto& draws = result.draws;
  for (Eigen::Index p = 0; p < draws.n_params(); ++p) {
    auto chains = chains_of(draws, p);
    ParameterDiagnostics d{draws.parameter_names[static_cast<std::size_t>(p)], std::nullopt,
                           bulk_ess(chains), false};
    if (chains.size() >= 2) {
      rep.rhat_available = true;
      d.rhat = split_rhat(chains);
      d.flagged = !(*d.rhat <= kRhatThreshold);
    }
    rep.parameters.push_back(d);
  }
  if (!rep.rhat_available) rep.warnings.push_back("single chain: split-R-hat unavailable");
  return rep;
}

inline void to_json(nlohmann::json& j, const DiagnosticReport& r) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : r.parameters)
    params.push_back({{"name", p.name},
                      {"rhat", p.rhat ? num(*p.rhat) : nlohmann::json(nullptr)},
                      {"ess_bulk", num(p.ess_bulk)},
                      {"flagged", p.flagged}});
  j = {{"parameters", params},
       {"acceptance", r.acceptance},
       {"rhat_threshold", kRhatThreshold},
       {"any_flagged", r.any_flagged()},
       {"warnings", r.warnings}};
}

}  // namespace survcheck
