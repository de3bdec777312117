#pragma once

// Pointwise predictive scoring and model comparison: log-likelihood matrices,
// Pareto smoothed importance sampling, elpd estimates with standard errors,
// paired comparisons, grouped units, and exact refits.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "survcheck/checks.hpp"
#include "survcheck/io.hpp"
#include "survcheck/models.hpp"
#include "survcheck/sampler.hpp"

namespace survcheck {

struct LogLikMatrix {
  Eigen::MatrixXd values;  // S x N
  std::vector<ScoreKind> tags;
  std::vector<SubjectId> units;
  std::string time_unit;

  Eigen::Index n_draws() const { return values.rows(); }
  Eigen::Index n_units() const { return values.cols(); }

  void check() const {
    require(tags.size() == static_cast<std::size_t>(values.cols()) &&
                units.size() == static_cast<std::size_t>(values.cols()),
            "dimension", "log-lik matrix needs one tag and one unit id per column");
    for (Eigen::Index s = 0; s < values.rows(); ++s)
      for (Eigen::Index i = 0; i < values.cols(); ++i) {
        const double v = values(s, i);
        require(std::isfinite(v) || v == kNegInf, "loglik",
                "log-lik entries must be finite or -inf");
      }
  }
};

struct LooMode {
  enum class Kind { raw, interval, dichotomized };
  Kind kind = Kind::raw;
  TimeGrid grid{};
  double horizon = 0.0;

  static LooMode raw() { return {}; }
  static LooMode interval(TimeGrid g) { return {Kind::interval, g, 0.0}; }
  static LooMode dichotomized(double h) { return {Kind::dichotomized, {}, h}; }
};

inline const char* to_string(LooMode::Kind k) {
  switch (k) {
    case LooMode::Kind::raw: return "raw";
    case LooMode::Kind::interval: return "interval";
    case LooMode::Kind::dichotomized: return "dichotomized";
  }
  return "?";
}

// Sums each unit's columns per draw, in order of first appearance. Grouped
// columns are tagged probability.
inline LogLikMatrix grouped_units(const LogLikMatrix& rows, std::span<const SubjectId> subject_of_row) {
  require(subject_of_row.size() == static_cast<std::size_t>(rows.values.cols()), "unmapped_rows",
          "every row of the log-lik matrix must map to a subject");
  std::map<SubjectId, Eigen::Index> slot;
  LogLikMatrix out;
  out.time_unit = rows.time_unit;
  std::vector<Eigen::Index> target(subject_of_row.size());
  for (std::size_t i = 0; i < subject_of_row.size(); ++i) {
    auto [it, fresh] = slot.try_emplace(subject_of_row[i], static_cast<Eigen::Index>(out.units.size()));
    if (fresh) out.units.push_back(subject_of_row[i]);
    target[i] = it->second;
  }
  out.tags.assign(out.units.size(), ScoreKind::probability);
  out.values = Eigen::MatrixXd::Zero(rows.values.rows(), static_cast<Eigen::Index>(out.units.size()));
  for (std::size_t i = 0; i < target.size(); ++i)
    out.values.col(target[i]) += rows.values.col(static_cast<Eigen::Index>(i));
  return out;
}

inline LogLikMatrix grouped_units(const LogLikMatrix& rows) { return grouped_units(rows, rows.units); }

namespace detail {

inline void check_draws_match(const Model& model, const DrawsMatrix& draws) {
  require(draws.parameter_names == model.parameter_names(), "dimension",
          "draw columns do not match the model's parameters");
}

}  // namespace detail

// Bernoulli models are scored per long-format row in raw mode and per subject
// (grouped rows) in interval mode; dichotomized scoring needs a survival family.
inline LogLikMatrix loglik_matrix(const Model& model, const DrawsMatrix& draws, const LooMode& mode,
                                  const std::string& time_unit = {}) {
  detail::check_draws_match(model, draws);
  const auto& obs = model.observations();
  LogLikMatrix ll;
  ll.time_unit = time_unit;

  if (model.family() == Family::bernoulli_logit) {
    require(mode.kind != LooMode::Kind::dichotomized, "mode",
            "dichotomized scoring is available for survival families only");
    ll.values.resize(draws.n_draws(), static_cast<Eigen::Index>(obs.size()));
    for (Eigen::Index s = 0; s < draws.n_draws(); ++s) {
      const auto scores = model.pointwise(draws.values.row(s).transpose());
      for (std::size_t i = 0; i < scores.size(); ++i) ll.values(s, static_cast<Eigen::Index>(i)) = scores[i].value;
    }
    for (const auto& o : obs) ll.units.push_back(o.unit);
    ll.tags.assign(obs.size(), ScoreKind::probability);
    return mode.kind == LooMode::Kind::interval ? grouped_units(ll) : ll;
  }

  std::vector<std::size_t> cols;
  std::vector<int> z;
  if (mode.kind == LooMode::Kind::dichotomized) {
    SurvivalDataset d;
    for (const auto& o : obs) d.records.push_back(o.as_record());
    auto dich = dichotomize_outcomes(d, mode.horizon);
    cols = dich.included;
    z = dich.outcome;
  } else {
    cols.resize(obs.size());
    std::iota(cols.begin(), cols.end(), 0);
  }
  if (mode.kind == LooMode::Kind::interval) {
    mode.grid.check();
    for (const auto& o : obs)
      require(mode.grid.covers(o.time), "grid_coverage",
              "interval grid does not cover time " + std::to_string(o.time));
  }

  ll.values.resize(draws.n_draws(), static_cast<Eigen::Index>(cols.size()));
  for (auto i : cols) {
    ll.units.push_back(obs[i].unit);
    ScoreKind tag = ScoreKind::probability;
    if (mode.kind == LooMode::Kind::raw && obs[i].status == Status::event) tag = ScoreKind::density;
    ll.tags.push_back(tag);
  }
  for (Eigen::Index s = 0; s < draws.n_draws(); ++s) {
    const Eigen::VectorXd theta = draws.values.row(s).transpose();
    const Eigen::VectorXd e = model.linear_predictor(theta);
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto i = cols[c];
      const auto p = model.params_for(theta, e(static_cast<Eigen::Index>(i)));
      const auto rec = obs[i].as_record();
      double v = 0.0;
      switch (mode.kind) {
        case LooMode::Kind::raw:
          v = log_lik_point(p, rec).value;
          break;
        case LooMode::Kind::interval:
          if (rec.status == Status::event) {
            const int j = mode.grid.index_of(rec.time);
            v = log_interval_probability(p, mode.grid.lower(j), mode.grid.upper(j));
          } else {
            v = log_lik_point(p, rec).value;
          }
          break;
        case LooMode::Kind::dichotomized:
          v = z[c] == 1 ? log_cdf(p, mode.horizon) : log_survival(p, mode.horizon);
          break;
      }
      ll.values(s, static_cast<Eigen::Index>(c)) = v;
    }
  }
  return ll;
}

// ---------------------------------------------------------------------------
// Generalized Pareto fit (profile-likelihood grid estimator with a weakly
// informative adjustment of k toward 0.5).

struct GpdFit {
  double k;
  double sigma;
  bool degenerate;
};

inline GpdFit gpd_fit(std::span<const double> exceedances) {
  require(exceedances.size() >= 5, "gpd", "GPD fit needs at least 5 tail values");
  std::vector<double> x(exceedances.begin(), exceedances.end());
  std::sort(x.begin(), x.end());
  const auto n = x.size();
  if (x.front() == x.back() || !(x.back() > 0.0))
    return {std::numeric_limits<double>::infinity(), std::nan(""), true};

  const double prior = 3.0;
  const std::size_t m = 30 + static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
  const double xstar = x[static_cast<std::size_t>(std::floor(static_cast<double>(n) / 4.0 + 0.5)) - 1];
  std::vector<double> theta(m), lp(m);
  for (std::size_t j = 0; j < m; ++j) {
    theta[j] = 1.0 / x.back() +
               (1.0 - std::sqrt(static_cast<double>(m) / (static_cast<double>(j + 1) - 0.5))) / prior / xstar;
    double kk = 0.0;
    for (double v : x) kk += std::log1p(-theta[j] * v);
    kk /= static_cast<double>(n);
    lp[j] = static_cast<double>(n) * (std::log(-theta[j] / kk) - kk - 1.0);
  }
  const double mx = *std::max_element(lp.begin(), lp.end());
  double wsum = 0.0, theta_hat = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double w = std::isfinite(lp[j]) ? std::exp(lp[j] - mx) : 0.0;
    wsum += w;
    theta_hat += w * theta[j];
  }
  theta_hat /= wsum;
  double k = 0.0;
  for (double v : x) k += std::log1p(-theta_hat * v);
  k /= static_cast<double>(n);
  const double sigma = -k / theta_hat;
  const double a = 10.0;
  k = k * static_cast<double>(n) / (static_cast<double>(n) + a) + a * 0.5 / (static_cast<double>(n) + a);
  if (std::isnan(k)) return {std::numeric_limits<double>::infinity(), sigma, true};
  return {k, sigma, false};
}

inline double gpd_quantile(double p, double k, double sigma) {
  if (std::abs(k) < 1e-12) return -sigma * std::log1p(-p);
  return sigma * std::expm1(-k * std::log1p(-p)) / k;
}

struct PsisResult {
  Eigen::MatrixXd log_weights;  // normalized per column
  std::vector<double> khat;
  std::vector<double> ess;
  std::vector<bool> degenerate;
  std::vector<std::string> warnings;
};

inline double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((v.array() - mx).exp().sum());
}

inline std::size_t psis_tail_length(Eigen::Index S) {
  const double s = static_cast<double>(S);
  return static_cast<std::size_t>(std::ceil(std::min(0.2 * s, 3.0 * std::sqrt(s))));
}

inline PsisResult psis_smooth(const LogLikMatrix& ll) {
  ll.check();
  const auto S = ll.values.rows();
  const auto N = ll.values.cols();
  PsisResult res;
  res.log_weights.resize(S, N);
  if (S < 100)
    res.warnings.push_back("fewer than 100 draws (" + std::to_string(S) + "); PSIS estimates are unreliable");
  const std::size_t M = psis_tail_length(S);

  std::vector<std::size_t> order(static_cast<std::size_t>(S));
  for (Eigen::Index i = 0; i < N; ++i) {
    Eigen::VectorXd lw = -ll.values.col(i);
    double k = std::numeric_limits<double>::infinity();
    bool degenerate = false;
    if (!lw.allFinite()) {
      degenerate = true;
      // Draws with zero likelihood carry infinite ratio: spread weight over them.
      for (Eigen::Index s = 0; s < S; ++s) lw(s) = std::isinf(lw(s)) ? 0.0 : kNegInf;
    } else {
      lw.array() -= lw.maxCoeff();
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](auto a, auto b) { return lw(static_cast<Eigen::Index>(a)) < lw(static_cast<Eigen::Index>(b)); });
      if (M < 5 || M >= static_cast<std::size_t>(S)) {
        degenerate = true;
      } else {
        const double cutoff = lw(static_cast<Eigen::Index>(order[static_cast<std::size_t>(S) - M - 1]));
        const double exp_cut = std::exp(cutoff);
        std::vector<double> x(M);
        for (std::size_t t = 0; t < M; ++t)
          x[t] = std::exp(lw(static_cast<Eigen::Index>(order[static_cast<std::size_t>(S) - M + t]))) - exp_cut;
        const auto g = gpd_fit(x);
        degenerate = g.degenerate;
        k = g.k;
        if (!g.degenerate && std::isfinite(k)) {
          for (std::size_t t = 0; t < M; ++t) {
            const double q = gpd_quantile((static_cast<double>(t) + 0.5) / static_cast<double>(M), k, g.sigma);
            lw(static_cast<Eigen::Index>(order[static_cast<std::size_t>(S) - M + t])) = std::log(q + exp_cut);
          }
          lw = lw.cwiseMin(0.0);
        }
      }
    }
    lw.array() -= log_sum_exp(lw);
    res.log_weights.col(i) = lw;
    res.khat.push_back(k);
    res.degenerate.push_back(degenerate);
    res.ess.push_back(1.0 / lw.array().exp().square().sum());
  }
  return res;
}

// ---------------------------------------------------------------------------
// elpd estimates and comparison

struct ElpdReport {
  double elpd = 0.0;
  double se = 0.0;
  std::vector<double> pointwise;
  std::vector<double> khat;
  std::vector<SubjectId> units;
  std::vector<ScoreKind> tags;
  std::string time_unit;
  int n_khat_high = 0;
  int n_refit = 0;
  std::vector<std::string> warnings;
};

inline constexpr double kKhatThreshold = 0.7;

// sqrt(n * sample variance); 0 for n < 2.
inline double scaled_se(std::span<const double> v) {
  const auto n = static_cast<double>(v.size());
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(n * ss / (n - 1.0));
}

inline ElpdReport elpd_loo(const LogLikMatrix& ll, const PsisResult& psis,
                           double khat_threshold = kKhatThreshold) {
  require(psis.log_weights.rows() == ll.values.rows() && psis.log_weights.cols() == ll.values.cols(),
          "dimension", "PSIS weights do not match the log-lik matrix");
  ElpdReport r;
  r.units = ll.units;
  r.tags = ll.tags;
  r.time_unit = ll.time_unit;
  r.khat = psis.khat;
  r.warnings = psis.warnings;
  for (Eigen::Index i = 0; i < ll.values.cols(); ++i) {
    Eigen::VectorXd a = psis.log_weights.col(i) + ll.values.col(i);
    for (Eigen::Index s = 0; s < a.size(); ++s)
      if (std::isnan(a(s))) a(s) = kNegInf;  // zero weight on a zero-likelihood draw
    const double v = log_sum_exp(a);
    if (v == kNegInf)
      r.warnings.push_back("unit " + std::to_string(ll.units[static_cast<std::size_t>(i)]) +
                           " has zero predictive probability under every weighted draw");
    r.pointwise.push_back(v);
    if (!(psis.khat[static_cast<std::size_t>(i)] <= khat_threshold)) ++r.n_khat_high;
  }
  r.elpd = std::accumulate(r.pointwise.begin(), r.pointwise.end(), 0.0);
  r.se = scaled_se(r.pointwise);
  return r;
}

struct ComparisonRow {
  std::string model;
  double elpd;
  double se;
  double delta;
  double se_delta;
  bool indistinguishable;  // |delta| < 2 se_delta; false for the reference row
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;  // best first
  std::vector<std::string> warnings;
};

inline ComparisonReport compare(const std::vector<std::pair<std::string, ElpdReport>>& reports) {
  require(!reports.empty(), "compare", "nothing to compare");
  const auto& ref = reports.front().second;
  ComparisonReport out;
  for (const auto& [name, r] : reports) {
    require(r.units == ref.units, "mismatched_units",
            "model '" + name + "' is scored on different units than '" + reports.front().first + "'");
    require(r.tags == ref.tags, "mismatched_tags",
            "model '" + name + "' mixes densities and probabilities differently than '" +
                reports.front().first +
                "'; convert densities to probabilities (interval or dichotomized scoring) before "
                "comparing");
    if (r.time_unit != ref.time_unit)
      out.warnings.push_back("time units differ ('" + ref.time_unit + "' vs '" + r.time_unit +
                             "'); density-based scores are not comparable across time scales");
  }
  std::vector<std::size_t> order(reports.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return reports[a].second.elpd > reports[b].second.elpd; });
  const auto& best = reports[order.front()].second;
  for (auto k : order) {
    const auto& [name, r] = reports[k];
    std::vector<double> diff(r.pointwise.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = r.pointwise[i] - best.pointwise[i];
    ComparisonRow row{name, r.elpd, r.se, 0.0, 0.0, false};
    if (k != order.front()) {
      row.delta = std::accumulate(diff.begin(), diff.end(), 0.0);
      row.se_delta = scaled_se(diff);
      row.indistinguishable = std::abs(row.delta) < 2.0 * row.se_delta;
    }
    out.rows.push_back(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exact refits

struct RefitResult {
  SubjectId unit;
  double elpd = kNegInf;
  bool ok = false;
  std::string error;
};

inline std::uint64_t unit_seed(std::uint64_t seed, SubjectId unit) {
  return seed ^ (0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(unit) + 1));
}

// Log predictive score of each held-out unit, from a posterior fitted without
// that unit's records (all of a subject's long-format rows for Bernoulli).
inline std::vector<RefitResult> exact_refit_loo(const Model& model, const SamplerConfig& config,
                                                const std::vector<SubjectId>& units,
                                                const LooMode& mode = LooMode::raw()) {
  std::vector<RefitResult> out;
  for (auto u : units) {
    RefitResult r;
    r.unit = u;
    try {
      SamplerConfig c = config;
      c.seed = unit_seed(config.seed, u);
      const auto refit = fit(model.without_units({u}), c);
      auto ll = loglik_matrix(model, refit.draws, mode);
      if (model.family() == Family::bernoulli_logit && mode.kind == LooMode::Kind::raw)
        ll = grouped_units(ll);
      auto it = std::find(ll.units.begin(), ll.units.end(), u);
      require(it != ll.units.end(), "refit", "unit " + std::to_string(u) + " is not scored in this mode");
      const auto col = static_cast<Eigen::Index>(it - ll.units.begin());
      r.elpd = log_sum_exp(ll.values.col(col)) - std::log(static_cast<double>(ll.values.rows()));
      r.ok = true;
    } catch (const Error& e) {
      r.error = e.what();
    }
    out.push_back(r);
  }
  return out;
}

// PSIS-LOO with exact refits for units whose k-hat exceeds the threshold.
inline ElpdReport loo_with_refit(const Model& model, const DrawsMatrix& draws, const LooMode& mode,
                                 const SamplerConfig& config, double khat_threshold = kKhatThreshold,
                                 const std::string& time_unit = {}) {
  auto ll = loglik_matrix(model, draws, mode, time_unit);
  if (model.family() == Family::bernoulli_logit && mode.kind == LooMode::Kind::raw) ll = grouped_units(ll);
  const auto psis = psis_smooth(ll);
  auto rep = elpd_loo(ll, psis, khat_threshold);
  std::vector<SubjectId> flagged;
  for (std::size_t i = 0; i < rep.khat.size(); ++i)
    if (!(rep.khat[i] <= khat_threshold)) flagged.push_back(rep.units[i]);
  if (flagged.empty()) return rep;
  for (const auto& r : exact_refit_loo(model, config, flagged, mode)) {
    if (!r.ok) {
      rep.warnings.push_back("refit for unit " + std::to_string(r.unit) + " failed: " + r.error);
      continue;
    }
    auto it = std::find(rep.units.begin(), rep.units.end(), r.unit);
    rep.pointwise[static_cast<std::size_t>(it - rep.units.begin())] = r.elpd;
    ++rep.n_refit;
  }
  rep.elpd = std::accumulate(rep.pointwise.begin(), rep.pointwise.end(), 0.0);
  rep.se = scaled_se(rep.pointwise);
  return rep;
}

// ---------------------------------------------------------------------------
// Serialization

inline void to_json(nlohmann::json& j, const ElpdReport& r) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json pw = nlohmann::json::array(), kh = nlohmann::json::array(), tags = nlohmann::json::array();
  for (double v : r.pointwise) pw.push_back(num(v));
  for (double v : r.khat) kh.push_back(num(v));
  for (auto t : r.tags) tags.push_back(to_string(t));
  j = {{"elpd_loo", num(r.elpd)}, {"se", num(r.se)},       {"pointwise", pw},
       {"khat", kh},              {"units", r.units},      {"tags", tags},
       {"time_unit", r.time_unit}, {"n_khat_high", r.n_khat_high}, {"n_refit", r.n_refit},
       {"warnings", r.warnings}};
}

inline void to_json(nlohmann::json& j, const ComparisonReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"model", row.model},
                    {"elpd_loo", row.elpd},
                    {"se", row.se},
                    {"delta_elpd_loo", row.delta},
                    {"se_delta_elpd_loo", row.se_delta},
                    {"indistinguishable", row.indistinguishable}});
  j = {{"columns", {"model", "delta_elpd_loo", "se_delta_elpd_loo"}}, {"rows", rows}, {"warnings", r.warnings}};
}

// CSV layout: optional "# time_unit=..." line, a `unit` row, a `tag` row,
// then one row per draw led by its index.
inline void write_loglik(std::ostream& out, const LogLikMatrix& ll) {
  if (!ll.time_unit.empty()) out << "# time_unit=" << ll.time_unit << '\n';
  out << "unit";
  for (auto u : ll.units) out << ',' << u;
  out << "\ntag";
  for (auto t : ll.tags) out << ',' << to_string(t);
  out << '\n';
  for (Eigen::Index s = 0; s < ll.values.rows(); ++s) {
    out << s + 1;
    for (Eigen::Index i = 0; i < ll.values.cols(); ++i) out << ',' << format_double(ll.values(s, i));
    out << '\n';
  }
}

inline LogLikMatrix read_loglik(std::istream& in) {
  LogLikMatrix ll;
  std::string line;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.rfind("# time_unit=", 0) == 0) {
      ll.time_unit = detail::trim(line.substr(12));
      continue;
    }
    if (detail::trim(line).empty() || line[0] == '#') continue;
    rows.push_back(detail::split_csv_line(line));
  }
  require(rows.size() >= 2 && rows[0][0] == "unit" && rows[1][0] == "tag", "parse",
          "log-lik CSV must start with 'unit' and 'tag' rows");
  const auto n = rows[0].size() - 1;
  for (std::size_t i = 1; i <= n; ++i) {
    ll.units.push_back(parse_int(rows[0][i]));
    const auto& t = rows[1][i];
    require(t == "density" || t == "probability", "parse", "unknown tag '" + t + "'");
    ll.tags.push_back(t == "density" ? ScoreKind::density : ScoreKind::probability);
  }
  ll.values.resize(static_cast<Eigen::Index>(rows.size() - 2), static_cast<Eigen::Index>(n));
  for (std::size_t s = 2; s < rows.size(); ++s) {
    require(rows[s].size() == n + 1, "parse", "log-lik row has the wrong number of fields");
    for (std::size_t i = 1; i <= n; ++i)
      ll.values(static_cast<Eigen::Index>(s - 2), static_cast<Eigen::Index>(i - 1)) = parse_double(rows[s][i]);
  }
  ll.check();
  return ll;
}

}  // namespace survcheck
