#pragma once

// Likelihood families (exponential, Weibull AFT, Bernoulli-logit discrete
// time), priors, and the linear-predictor design with penalized spline smooths.

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "survcheck/core.hpp"

namespace survcheck {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Priors

struct Prior {
  enum class Kind { normal, student_t, half_student_t, gamma };
  Kind kind = Kind::normal;
  double nu = 3.0;
  double location = 0.0;
  double scale = 1.0;  // gamma: rate
  double shape = 1.0;  // gamma only

  static Prior normal(double loc, double scale) { return {Kind::normal, 0.0, loc, scale, 1.0}; }
  static Prior student_t(double nu, double loc, double scale) {
    return {Kind::student_t, nu, loc, scale, 1.0};
  }
  static Prior half_student_t(double nu, double scale) {
    return {Kind::half_student_t, nu, 0.0, scale, 1.0};
  }
  static Prior gamma(double shape, double rate) { return {Kind::gamma, 0.0, 0.0, rate, shape}; }

  void check() const {
    require(scale > 0.0, "prior", "prior scale/rate must be positive");
    if (kind == Kind::student_t || kind == Kind::half_student_t)
      require(nu > 0.0, "prior", "degrees of freedom must be positive");
    if (kind == Kind::gamma) require(shape > 0.0, "prior", "gamma shape must be positive");
  }

  bool positive_support() const { return kind == Kind::half_student_t || kind == Kind::gamma; }

  double log_density(double x) const {
    switch (kind) {
      case Kind::normal: {
        const double z = (x - location) / scale;
        return -0.5 * std::log(2.0 * std::numbers::pi) - std::log(scale) - 0.5 * z * z;
      }
      case Kind::student_t:
        return student_t_lpdf(x, location);
      case Kind::half_student_t:
        if (x < 0.0) return kNegInf;
        return std::numbers::ln2 + student_t_lpdf(x, 0.0);
      case Kind::gamma:
        if (x <= 0.0) return kNegInf;
        return shape * std::log(scale) - std::lgamma(shape) + (shape - 1.0) * std::log(x) -
               scale * x;
    }
    return kNegInf;
  }

 private:
  double student_t_lpdf(double x, double loc) const {
    const double z = (x - loc) / scale;
    return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
           0.5 * std::log(nu * std::numbers::pi) - std::log(scale) -
           0.5 * (nu + 1.0) * std::log1p(z * z / nu);
  }
};

inline void to_json(nlohmann::json& j, const Prior& p) {
  switch (p.kind) {
    case Prior::Kind::normal:
      j = {{"dist", "normal"}, {"location", p.location}, {"scale", p.scale}};
      break;
    case Prior::Kind::student_t:
      j = {{"dist", "student_t"}, {"nu", p.nu}, {"location", p.location}, {"scale", p.scale}};
      break;
    case Prior::Kind::half_student_t:
      j = {{"dist", "half_student_t"}, {"nu", p.nu}, {"scale", p.scale}};
      break;
    case Prior::Kind::gamma:
      j = {{"dist", "gamma"}, {"shape", p.shape}, {"rate", p.scale}};
      break;
  }
}

inline void from_json(const nlohmann::json& j, Prior& p) {
  const auto dist = j.at("dist").get<std::string>();
  if (dist == "normal") {
    p = Prior::normal(j.value("location", 0.0), j.at("scale").get<double>());
  } else if (dist == "student_t") {
    p = Prior::student_t(j.at("nu").get<double>(), j.value("location", 0.0),
                         j.at("scale").get<double>());
  } else if (dist == "half_student_t") {
    p = Prior::half_student_t(j.at("nu").get<double>(), j.at("scale").get<double>());
  } else if (dist == "gamma") {
    p = Prior::gamma(j.at("shape").get<double>(), j.at("rate").get<double>());
  } else {
    throw Error("spec", "unknown prior distribution '" + dist + "'");
  }
  p.check();
}

// ---------------------------------------------------------------------------
// B-spline basis

struct SplineConfig {
  int degree = 3;
  double lower = 0.0;
  double upper = 1.0;
  std::vector<double> interior;  // strictly increasing, inside (lower, upper)

  int n_basis() const { return static_cast<int>(interior.size()) + degree + 1; }

  std::vector<double> knot_vector() const {
    std::vector<double> t(static_cast<std::size_t>(degree + 1), lower);
    t.insert(t.end(), interior.begin(), interior.end());
    t.insert(t.end(), static_cast<std::size_t>(degree + 1), upper);
    return t;
  }

  void check() const {
    require(degree >= 1, "spline", "spline degree must be at least 1");
    require(lower < upper, "spline", "spline range must satisfy lower < upper");
    double prev = lower;
    for (double k : interior) {
      require(k > prev, "spline", "knots must be strictly increasing within the data range");
      prev = k;
    }
    require(prev < upper, "spline", "interior knots must lie below the upper boundary");
  }
};

// Sample quantile, linear interpolation of order statistics (type 7).
inline double quantile_type7(std::span<const double> sorted, double p) {
  require(!sorted.empty(), "quantile", "quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// Interior knots at equally spaced quantiles of the distinct values of x.
inline SplineConfig quantile_knots(std::span<const double> x, int degree, int n_interior) {
  std::vector<double> u(x.begin(), x.end());
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  require(static_cast<int>(u.size()) >= n_interior + 2, "spline",
          "fewer distinct x values (" + std::to_string(u.size()) + ") than required knots (" +
              std::to_string(n_interior + 2) + ")");
  SplineConfig c;
  c.degree = degree;
  c.lower = u.front();
  c.upper = u.back();
  for (int k = 1; k <= n_interior; ++k)
    c.interior.push_back(quantile_type7(u, static_cast<double>(k) / (n_interior + 1)));
  c.check();
  return c;
}

// Nonzero basis values at x via the triangular recurrence; returns the index
// of the first nonzero basis function. x is clamped to [lower, upper].
inline int bspline_nonzero(const SplineConfig& c, const std::vector<double>& t, double x,
                           std::vector<double>& values) {
  const int p = c.degree;
  const int m = c.n_basis();
  x = std::clamp(x, c.lower, c.upper);
  // span i with t[i] <= x < t[i+1], i in [p, m-1]
  int i = static_cast<int>(std::upper_bound(t.begin() + p, t.begin() + m, x) - t.begin()) - 1;
  i = std::clamp(i, p, m - 1);
  values.assign(static_cast<std::size_t>(p + 1), 0.0);
  std::vector<double> left(static_cast<std::size_t>(p + 1)), right(static_cast<std::size_t>(p + 1));
  values[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = x - t[static_cast<std::size_t>(i + 1 - j)];
    right[j] = t[static_cast<std::size_t>(i + j)] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = values[r] / (right[r + 1] + left[j - r]);
      values[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    values[j] = saved;
  }
  return i - p;
}

inline Eigen::MatrixXd spline_basis(std::span<const double> x, const SplineConfig& config) {
  config.check();
  const auto t = config.knot_vector();
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(x.size()), config.n_basis());
  std::vector<double> vals;
  for (std::size_t r = 0; r < x.size(); ++r) {
    const int first = bspline_nonzero(config, t, x[r], vals);
    for (std::size_t k = 0; k < vals.size(); ++k)
      B(static_cast<Eigen::Index>(r), first + static_cast<Eigen::Index>(k)) = vals[k];
  }
  return B;
}

// ---------------------------------------------------------------------------
// Model specification

enum class Family { exponential, weibull_aft, bernoulli_logit };

inline const char* to_string(Family f) {
  switch (f) {
    case Family::exponential: return "exponential";
    case Family::weibull_aft: return "weibull_aft";
    case Family::bernoulli_logit: return "bernoulli_logit";
  }
  return "?";
}

inline Family parse_family(const std::string& s) {
  if (s == "exponential") return Family::exponential;
  if (s == "weibull_aft" || s == "weibull") return Family::weibull_aft;
  if (s == "bernoulli_logit" || s == "bernoulli") return Family::bernoulli_logit;
  throw Error("spec", "unknown family '" + s + "'");
}

inline bool is_survival_family(Family f) { return f != Family::bernoulli_logit; }

struct SmoothTerm {
  std::string covariate;
  int degree = 3;
  int interior_knots = 5;
};

struct ModelSpec {
  std::string name;
  Family family = Family::exponential;
  bool intercept = true;
  std::vector<std::string> fixed;
  std::vector<SmoothTerm> smooths;
  Prior intercept_prior = Prior::student_t(3.0, 0.0, 2.5);
  Prior fixed_prior = Prior::normal(0.0, 2.0);
  Prior spline_prior = Prior::normal(0.0, 2.0);
  Prior smoothing_sd_prior = Prior::half_student_t(3.0, 2.5);
  Prior shape_prior = Prior::gamma(0.01, 0.01);

  void check() const {
    std::set<std::string> names(fixed.begin(), fixed.end());
    require(names.size() == fixed.size(), "spec", "fixed-effect names must be distinct");
    for (const auto& s : smooths) {
      require(s.degree >= 1, "spec", "basis degree must be at least 1");
      require(s.interior_knots >= 0, "spec", "interior knot count must be non-negative");
      require(names.insert(s.covariate).second, "spec",
              "covariate '" + s.covariate + "' appears twice in the linear predictor");
    }
    intercept_prior.check();
    fixed_prior.check();
    spline_prior.check();
    smoothing_sd_prior.check();
    require(smoothing_sd_prior.positive_support(), "spec",
            "smoothing sd prior must have positive support");
    if (family == Family::weibull_aft) {
      shape_prior.check();
      require(shape_prior.positive_support(), "spec", "shape prior must have positive support");
    }
  }
};

inline void to_json(nlohmann::json& j, const ModelSpec& s) {
  nlohmann::json smooths = nlohmann::json::array();
  for (const auto& t : s.smooths)
    smooths.push_back({{"covariate", t.covariate}, {"degree", t.degree},
                       {"interior_knots", t.interior_knots}});
  j = {{"name", s.name},
       {"family", to_string(s.family)},
       {"intercept", s.intercept},
       {"fixed", s.fixed},
       {"smooths", smooths},
       {"priors",
        {{"intercept", s.intercept_prior},
         {"fixed", s.fixed_prior},
         {"spline", s.spline_prior},
         {"smoothing_sd", s.smoothing_sd_prior}}}};
  if (s.family == Family::weibull_aft) j["priors"]["shape"] = s.shape_prior;
}

inline void from_json(const nlohmann::json& j, ModelSpec& s) {
  s = ModelSpec{};
  s.name = j.value("name", std::string{});
  s.family = parse_family(j.at("family").get<std::string>());
  s.intercept = j.value("intercept", true);
  if (j.contains("fixed")) s.fixed = j.at("fixed").get<std::vector<std::string>>();
  if (j.contains("smooths")) {
    for (const auto& t : j.at("smooths")) {
      SmoothTerm term;
      term.covariate = t.at("covariate").get<std::string>();
      term.degree = t.value("degree", 3);
      term.interior_knots = t.value("interior_knots", 5);
      s.smooths.push_back(term);
    }
  }
  if (j.contains("priors")) {
    const auto& p = j.at("priors");
    if (p.contains("intercept")) s.intercept_prior = p.at("intercept").get<Prior>();
    if (p.contains("fixed")) s.fixed_prior = p.at("fixed").get<Prior>();
    if (p.contains("spline")) s.spline_prior = p.at("spline").get<Prior>();
    if (p.contains("smoothing_sd")) s.smoothing_sd_prior = p.at("smoothing_sd").get<Prior>();
    if (p.contains("shape")) s.shape_prior = p.at("shape").get<Prior>();
  }
  s.check();
}

// ---------------------------------------------------------------------------
// Design: maps covariates and a parameter vector to the linear predictor.
//
// A smooth s(x) is a linear term b * (x - mean x) plus a wiggly part
// sigma * sum_k z_k w_k(x), where the w_k span the cubic B-spline space with
// the constant and linear directions projected out (on the fitting data) and
// are scaled to unit root-mean-square. z_k ~ N(0, 1), so sigma is the
// smoothing standard deviation.
struct SmoothDesign {
  std::string covariate;
  SplineConfig basis;
  double x_mean = 0.0;
  Eigen::RowVectorXd basis_mean;
  Eigen::RowVectorXd linear_projection;
  Eigen::MatrixXd transform;  // n_basis x n_wiggly

  Eigen::Index n_wiggly() const { return transform.cols(); }

  Eigen::MatrixXd wiggly(std::span<const double> x) const {
    Eigen::MatrixXd B = spline_basis(x, basis);
    B.rowwise() -= basis_mean;
    for (Eigen::Index r = 0; r < B.rows(); ++r)
      B.row(r) -= (x[static_cast<std::size_t>(r)] - x_mean) * linear_projection;
    return B * transform;
  }

  static SmoothDesign build(const SmoothTerm& term, std::span<const double> x) {
    SmoothDesign d;
    d.covariate = term.covariate;
    d.basis = quantile_knots(x, term.degree, term.interior_knots);
    const auto n = static_cast<double>(x.size());
    Eigen::MatrixXd B = spline_basis(x, d.basis);
    d.basis_mean = B.colwise().mean();
    B.rowwise() -= d.basis_mean;
    Eigen::VectorXd xc(static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) d.x_mean += x[i];
    d.x_mean /= n;
    for (std::size_t i = 0; i < x.size(); ++i) xc(static_cast<Eigen::Index>(i)) = x[i] - d.x_mean;
    const double xx = xc.squaredNorm();
    d.linear_projection = (xc.transpose() * B) / (xx > 0.0 ? xx : 1.0);
    B -= xc * d.linear_projection;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(B, Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    Eigen::Index rank = 0;
    for (Eigen::Index k = 0; k < sv.size(); ++k)
      if (sv(k) > 1e-8 * std::max(1.0, sv(0))) ++rank;
    d.transform = svd.matrixV().leftCols(rank);
    for (Eigen::Index k = 0; k < rank; ++k) d.transform.col(k) *= std::sqrt(n) / sv(k);
    return d;
  }
};

enum class ParamRole { intercept, fixed, smooth_linear, smooth_z, log_sd, log_shape };

struct ParamInfo {
  std::string name;
  ParamRole role;
  int smooth = -1;  // owning smooth for smooth roles
};

class Design {
 public:
  template <typename Frame>
  static Design build(const ModelSpec& spec, const Frame& frame) {
    spec.check();
    Design d;
    d.spec_ = spec;
    for (const auto& f : spec.fixed) (void)frame.column(f);
    for (const auto& t : spec.smooths) {
      auto x = frame.column(t.covariate);
      d.smooths_.push_back(SmoothDesign::build(t, x));
    }
    d.layout();
    return d;
  }

  const ModelSpec& spec() const { return spec_; }
  const std::vector<ParamInfo>& params() const { return params_; }
  Eigen::Index n_params() const { return static_cast<Eigen::Index>(params_.size()); }
  Eigen::Index n_columns() const { return n_columns_; }
  const std::vector<SmoothDesign>& smooths() const { return smooths_; }

  std::vector<std::string> parameter_names() const {
    std::vector<std::string> out;
    for (const auto& p : params_) out.push_back(p.name);
    return out;
  }

  std::optional<Eigen::Index> shape_index() const {
    for (std::size_t k = 0; k < params_.size(); ++k)
      if (params_[k].role == ParamRole::log_shape) return static_cast<Eigen::Index>(k);
    return std::nullopt;
  }

  template <typename Frame>
  Eigen::MatrixXd matrix(const Frame& frame) const {
    std::vector<std::vector<double>> fixed;
    for (const auto& f : spec_.fixed) fixed.push_back(frame.column(f));
    const auto n = static_cast<Eigen::Index>(frame.size());
    Eigen::MatrixXd X(n, n_columns_);
    Eigen::Index col = 0;
    if (spec_.intercept) X.col(col++).setOnes();
    for (const auto& f : fixed) {
      for (Eigen::Index r = 0; r < n; ++r) X(r, col) = f[static_cast<std::size_t>(r)];
      ++col;
    }
    for (const auto& s : smooths_) {
      auto x = frame.column(s.covariate);
      for (Eigen::Index r = 0; r < n; ++r) X(r, col) = x[static_cast<std::size_t>(r)] - s.x_mean;
      ++col;
      const Eigen::MatrixXd W = s.wiggly(x);
      X.middleCols(col, W.cols()) = W;
      col += W.cols();
    }
    return X;
  }

  // Regression coefficients (one per design column) from a parameter vector.
  Eigen::VectorXd coefficients(const Eigen::Ref<const Eigen::VectorXd>& theta) const {
    if (theta.size() != n_params())
      throw Error("dimension", "parameter vector has length " + std::to_string(theta.size()) + ", expected " +
                                   std::to_string(n_params()));
    Eigen::VectorXd beta(n_columns_);
    Eigen::Index col = 0;
    for (std::size_t k = 0; k < params_.size(); ++k) {
      const auto& p = params_[k];
      switch (p.role) {
        case ParamRole::intercept:
        case ParamRole::fixed:
        case ParamRole::smooth_linear:
          beta(col++) = theta(static_cast<Eigen::Index>(k));
          break;
        case ParamRole::smooth_z:
          beta(col++) = std::exp(theta(log_sd_index_[static_cast<std::size_t>(p.smooth)])) *
                        theta(static_cast<Eigen::Index>(k));
          break;
        default:
          break;
      }
    }
    return beta;
  }

  double shape(const Eigen::Ref<const Eigen::VectorXd>& theta) const {
    auto k = shape_index();
    return k ? std::exp(theta(*k)) : 1.0;
  }

  // Sum of log prior densities on the sampling scale (Jacobians included for
  // log-transformed positive parameters).
  double log_prior(const Eigen::Ref<const Eigen::VectorXd>& theta) const {
    double lp = 0.0;
    for (std::size_t k = 0; k < params_.size(); ++k) {
      const double v = theta(static_cast<Eigen::Index>(k));
      switch (params_[k].role) {
        case ParamRole::intercept: lp += spec_.intercept_prior.log_density(v); break;
        case ParamRole::fixed: lp += spec_.fixed_prior.log_density(v); break;
        case ParamRole::smooth_linear: lp += spec_.spline_prior.log_density(v); break;
        case ParamRole::smooth_z: lp += -0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * v * v; break;
        case ParamRole::log_sd: lp += spec_.smoothing_sd_prior.log_density(std::exp(v)) + v; break;
        case ParamRole::log_shape: lp += spec_.shape_prior.log_density(std::exp(v)) + v; break;
      }
    }
    return lp;
  }

  // Prior location for location-scale priors, 0 on the log scale otherwise.
  Eigen::VectorXd initial_point() const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n_params());
    for (std::size_t k = 0; k < params_.size(); ++k)
      if (params_[k].role == ParamRole::intercept) x(static_cast<Eigen::Index>(k)) = spec_.intercept_prior.location;
    return x;
  }

 private:
  void layout() {
    params_.clear();
    log_sd_index_.clear();
    n_columns_ = 0;
    if (spec_.intercept) {
      params_.push_back({"Intercept", ParamRole::intercept});
      ++n_columns_;
    }
    for (const auto& f : spec_.fixed) {
      params_.push_back({"b_" + f, ParamRole::fixed});
      ++n_columns_;
    }
    for (std::size_t s = 0; s < smooths_.size(); ++s) {
      const auto& sm = smooths_[s];
      params_.push_back({"bs_" + sm.covariate, ParamRole::smooth_linear, static_cast<int>(s)});
      ++n_columns_;
      for (Eigen::Index k = 0; k < sm.n_wiggly(); ++k) {
        params_.push_back({"z_" + sm.covariate + "_" + std::to_string(k + 1), ParamRole::smooth_z,
                           static_cast<int>(s)});
        ++n_columns_;
      }
    }
    for (std::size_t s = 0; s < smooths_.size(); ++s) {
      log_sd_index_.push_back(static_cast<Eigen::Index>(params_.size()));
      params_.push_back({"log_sds_" + smooths_[s].covariate, ParamRole::log_sd, static_cast<int>(s)});
    }
    if (spec_.family == Family::weibull_aft) params_.push_back({"log_shape", ParamRole::log_shape});
  }

  ModelSpec spec_;
  std::vector<SmoothDesign> smooths_;
  std::vector<ParamInfo> params_;
  std::vector<Eigen::Index> log_sd_index_;
  Eigen::Index n_columns_ = 0;
};

// Linear predictor for one covariate row of the design matrix.
inline double eta(const Design& design, const Eigen::Ref<const Eigen::VectorXd>& theta,
                  const Eigen::Ref<const Eigen::RowVectorXd>& design_row) {
  if (design_row.size() != design.n_columns())
    throw Error("dimension", "design row has " + std::to_string(design_row.size()) + " columns, expected " +
                                 std::to_string(design.n_columns()));
  return design_row.dot(design.coefficients(theta));
}

// ---------------------------------------------------------------------------
// Survival families

enum class ScoreKind { density, probability };

inline const char* to_string(ScoreKind k) { return k == ScoreKind::density ? "density" : "probability"; }

struct TaggedScore {
  double value;
  ScoreKind kind;
};

// Per-subject distribution parameters. The exponential family is the
// shape == 1 special case. `rate` is theta in F(t) = 1 - exp(-(theta t)^shape).
struct SurvivalParams {
  Family family = Family::exponential;
  double rate = 1.0;
  double shape = 1.0;

  static SurvivalParams exponential(double rate) { return {Family::exponential, rate, 1.0}; }
  static SurvivalParams weibull(double rate, double shape) {
    return {Family::weibull_aft, rate, shape};
  }
  // Mean parameterization: log mu = eta.
  static SurvivalParams from_eta(Family family, double eta, double shape) {
    if (family == Family::exponential) return exponential(std::exp(-eta));
    require(family == Family::weibull_aft, "family", "not a survival family");
    return weibull(std::exp(std::lgamma(1.0 + 1.0 / shape) - eta), shape);
  }
  static SurvivalParams weibull_from_mean(double mean, double shape) {
    return weibull(std::tgamma(1.0 + 1.0 / shape) / mean, shape);
  }

  void check() const {
    require(rate > 0.0 && std::isfinite(rate), "params", "rate must be positive and finite");
    require(shape > 0.0 && std::isfinite(shape), "params", "shape must be positive and finite");
  }

  // Cumulative hazard H(t) = (theta t)^shape.
  double cumulative_hazard(double t) const {
    if (t <= 0.0) return 0.0;
    if (std::isinf(t)) return std::numeric_limits<double>::infinity();
    return shape == 1.0 ? rate * t : std::pow(rate * t, shape);
  }
};

inline double log_survival(const SurvivalParams& p, double t) { return -p.cumulative_hazard(t); }

inline double cdf(const SurvivalParams& p, double t) {
  p.check();
  require(!(t < 0.0), "domain", "cdf requires t >= 0");
  return -std::expm1(-p.cumulative_hazard(t));
}

inline double log_cdf(const SurvivalParams& p, double t) {
  const double H = p.cumulative_hazard(t);
  if (H == 0.0) return kNegInf;
  return std::log(-std::expm1(-H));
}

inline double log_density(const SurvivalParams& p, double t) {
  if (t <= 0.0) return kNegInf;
  return std::log(p.shape) + p.shape * std::log(p.rate) + (p.shape - 1.0) * std::log(t) -
         p.cumulative_hazard(t);
}

inline double hazard(const SurvivalParams& p, double t) {
  p.check();
  require(t > 0.0, "domain", "hazard requires t > 0");
  if (p.shape == 1.0) return p.rate;
  return std::exp(std::log(p.shape) + p.shape * std::log(p.rate) + (p.shape - 1.0) * std::log(t));
}

// log(F(b) - F(a)) = log S(a) + log(1 - exp(-(H(b) - H(a)))).
inline double log_interval_probability(const SurvivalParams& p, double a, double b) {
  const double Ha = p.cumulative_hazard(a);
  const double Hb = p.cumulative_hazard(b);
  if (!(Hb > Ha)) return kNegInf;
  if (std::isinf(Hb)) return -Ha;
  return -Ha + std::log(-std::expm1(-(Hb - Ha)));
}

inline TaggedScore log_lik_point(const SurvivalParams& p, const SurvivalRecord& r) {
  p.check();
  require(r.time > 0.0, "domain", "record time must be positive");
  switch (r.status) {
    case Status::event:
      return {log_density(p, r.time), ScoreKind::density};
    case Status::right_censored:
      return {log_survival(p, r.time), ScoreKind::probability};
    case Status::left_censored:
      return {log_cdf(p, r.time), ScoreKind::probability};
    case Status::interval_censored:
      require(r.interval_bounds.has_value(), "domain", "interval-censored record needs bounds");
      return {log_interval_probability(p, r.interval_bounds->first, r.interval_bounds->second),
              ScoreKind::probability};
  }
  return {kNegInf, ScoreKind::probability};
}

// Inverse CDF: t = H^{-1}(-log(1 - u)).
inline double event_time_from_uniform(const SurvivalParams& p, double u) {
  p.check();
  require(u >= 0.0 && u < 1.0, "domain", "u must lie in [0, 1)");
  const double e = -std::log1p(-u);
  return (p.shape == 1.0 ? e : std::pow(e, 1.0 / p.shape)) / p.rate;
}

template <typename Rng>
double sample_event_time(const SurvivalParams& p, Rng& rng) {
  p.check();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (;;) {
    const double t = event_time_from_uniform(p, unif(rng));
    if (t > 0.0) return t;
  }
}

// Draw from the law of T given T > a. Equivalent to u ~ Uniform(F(a), 1)
// pushed through the inverse CDF, computed on the cumulative-hazard scale so
// that S(a) never has to be formed explicitly.
template <typename Rng>
double sample_truncated(const SurvivalParams& p, double a, Rng& rng) {
  p.check();
  const double Ha = p.cumulative_hazard(a);
  require(std::exp(-Ha) > 0.0 && std::isfinite(Ha), "saturated",
          "F(a) is numerically 1 at a = " + std::to_string(a) + "; cannot sample beyond it");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (;;) {
    const double H = Ha - std::log1p(-unif(rng));
    const double t = (p.shape == 1.0 ? H : std::pow(H, 1.0 / p.shape)) / p.rate;
    if (t > a) return t;
  }
}

// ---------------------------------------------------------------------------
// Bernoulli-logit

inline constexpr double kProbFloor = 1e-15;

inline double logistic(double eta) {
  double p;
  if (eta >= 0.0) {
    p = 1.0 / (1.0 + std::exp(-eta));
  } else {
    const double e = std::exp(eta);
    p = e / (1.0 + e);
  }
  return std::clamp(p, kProbFloor, 1.0 - kProbFloor);
}

inline double bernoulli_interval_prob(const Design& design, const Eigen::Ref<const Eigen::VectorXd>& theta,
                                      const Eigen::Ref<const Eigen::RowVectorXd>& design_row) {
  return logistic(eta(design, theta, design_row));
}

inline double bernoulli_log_score(double p, int outcome) {
  return outcome == 1 ? std::log(p) : std::log1p(-p);
}

// ---------------------------------------------------------------------------
// Model: a design bound to observations.

struct Observation {
  SubjectId unit = 0;
  double entry_time = 0.0;
  double time = 0.0;
  Status status = Status::event;
  std::optional<std::pair<double, double>> interval_bounds;
  int interval_index = 0;
  int outcome = 0;

  SurvivalRecord as_record() const {
    return {unit, entry_time, time, status, interval_bounds, {}};
  }
};

class Model {
 public:
  Model(const ModelSpec& spec, const SurvivalDataset& data)
      : Model(Design::build(spec, data), data) {}
  Model(const ModelSpec& spec, const LongDataset& data)
      : Model(Design::build(spec, data), data) {}

  Model(Design design, const SurvivalDataset& data) : design_(std::move(design)) {
    require(is_survival_family(design_.spec().family), "family",
            "a short-format dataset needs a survival family");
    require_valid(data);
    X_ = design_.matrix(data);
    for (const auto& r : data.records) {
      Observation o;
      o.unit = r.subject_id;
      o.entry_time = r.entry_time;
      o.time = r.time;
      o.status = r.status;
      o.interval_bounds = r.interval_bounds;
      obs_.push_back(o);
    }
  }

  Model(Design design, const LongDataset& data) : design_(std::move(design)) {
    require(design_.spec().family == Family::bernoulli_logit, "family",
            "a long-format dataset needs the bernoulli_logit family");
    X_ = design_.matrix(data);
    for (const auto& r : data.rows) {
      Observation o;
      o.unit = r.subject_id;
      o.interval_index = r.interval_index;
      o.time = r.interval_index;
      o.status = r.outcome == 1 ? Status::event : Status::right_censored;
      o.outcome = r.outcome;
      obs_.push_back(o);
    }
  }

  const Design& design() const { return design_; }
  const ModelSpec& spec() const { return design_.spec(); }
  Family family() const { return design_.spec().family; }
  const std::vector<Observation>& observations() const { return obs_; }
  const Eigen::MatrixXd& design_matrix() const { return X_; }
  std::size_t n_obs() const { return obs_.size(); }
  std::vector<std::string> parameter_names() const { return design_.parameter_names(); }

  // Same design, observations restricted to units not in `drop`.
  Model without_units(const std::vector<SubjectId>& drop) const {
    Model m = *this;
    std::set<SubjectId> d(drop.begin(), drop.end());
    std::vector<Eigen::Index> keep;
    m.obs_.clear();
    for (std::size_t i = 0; i < obs_.size(); ++i) {
      if (d.count(obs_[i].unit)) continue;
      keep.push_back(static_cast<Eigen::Index>(i));
      m.obs_.push_back(obs_[i]);
    }
    m.X_.resize(static_cast<Eigen::Index>(keep.size()), X_.cols());
    for (std::size_t r = 0; r < keep.size(); ++r) m.X_.row(static_cast<Eigen::Index>(r)) = X_.row(keep[r]);
    return m;
  }

  Eigen::VectorXd linear_predictor(const Eigen::Ref<const Eigen::VectorXd>& theta) const {
    return X_ * design_.coefficients(theta);
  }

  SurvivalParams params_for(const Eigen::Ref<const Eigen::VectorXd>& theta, double eta_value) const {
    return SurvivalParams::from_eta(family(), eta_value, design_.shape(theta));
  }

  std::vector<TaggedScore> pointwise(const Eigen::Ref<const Eigen::VectorXd>& theta) const {
    const Eigen::VectorXd e = linear_predictor(theta);
    std::vector<TaggedScore> out(obs_.size());
    if (family() == Family::bernoulli_logit) {
      for (std::size_t i = 0; i < obs_.size(); ++i)
        out[i] = {bernoulli_log_score(logistic(e(static_cast<Eigen::Index>(i))), obs_[i].outcome),
                  ScoreKind::probability};
      return out;
    }
    const double shape = design_.shape(theta);
    for (std::size_t i = 0; i < obs_.size(); ++i)
      out[i] = log_lik_point(SurvivalParams::from_eta(family(), e(static_cast<Eigen::Index>(i)), shape),
                             obs_[i].as_record());
    return out;
  }

  // Same terms as pointwise(), without materializing them.
  double log_likelihood(const Eigen::Ref<const Eigen::VectorXd>& theta) const {
    const Eigen::VectorXd e = linear_predictor(theta);
    double ll = 0.0;
    if (family() == Family::bernoulli_logit) {
      for (std::size_t i = 0; i < obs_.size(); ++i)
        ll += bernoulli_log_score(logistic(e(static_cast<Eigen::Index>(i))), obs_[i].outcome);
      return ll;
    }
    const double shape = design_.shape(theta);
    const double lg = family() == Family::weibull_aft ? std::lgamma(1.0 + 1.0 / shape) : 0.0;
    for (std::size_t i = 0; i < obs_.size(); ++i) {
      const double eta_i = e(static_cast<Eigen::Index>(i));
      const auto p = family() == Family::exponential ? SurvivalParams::exponential(std::exp(-eta_i))
                                                     : SurvivalParams::weibull(std::exp(lg - eta_i), shape);
      ll += log_lik_point(p, obs_[i].as_record()).value;
    }
    return ll;
  }

  double log_prior(const Eigen::Ref<const Eigen::VectorXd>& theta) const {
    return design_.log_prior(theta);
  }

 private:
  Design design_;
  Eigen::MatrixXd X_;
  std::vector<Observation> obs_;
};

// Parameter draws mapped to a time axis divided by `factor`: theta -> c theta,
// i.e. the intercept of log mu shifts by -log c.
inline DrawsMatrix rescale_draws(const Design& design, const DrawsMatrix& draws, double factor) {
  require(factor > 0.0, "rescale", "rescale factor must be positive");
  require(is_survival_family(design.spec().family), "family",
          "time rescaling of draws applies to survival families");
  require(design.spec().intercept, "spec", "time rescaling of draws needs an intercept");
  DrawsMatrix out = draws;
  auto k = draws.index_of("Intercept");
  require(k.has_value(), "draws", "draws have no Intercept column");
  out.values.col(*k).array() -= std::log(factor);
  return out;
}

// ---------------------------------------------------------------------------
// Presets for the case-study model blocks. Smooth terms use one interior knot.

inline ModelSpec preset(const std::string& name) {
  ModelSpec s;
  s.name = name;
  auto smooth = [](const std::string& c) { return SmoothTerm{c, 3, 1}; };
  if (name == "bernoulli") {
    s.family = Family::bernoulli_logit;
    s.intercept_prior = Prior::student_t(3.0, 0.0, 2.5);
    s.fixed = {"AdjOn", "GenderMale", "Rupture", "Gastric"};
    s.smooths = {smooth("TimeSinceAdjStopped"), smooth(kIntervalColumn), smooth("Size"),
                 smooth("AgeAtSurg"), smooth("MitHPF")};
  } else if (name == "exponential" || name == "weibull") {
    s.family = name == "exponential" ? Family::exponential : Family::weibull_aft;
    s.intercept_prior = Prior::student_t(3.0, 2.3, 2.5);
    s.fixed = {"GenderMale", "Rupture", "Gastric"};
    s.smooths = {smooth("Size"), smooth("AgeAtSurg"), smooth("MitHPF")};
  } else {
    throw Error("spec", "unknown preset '" + name + "' (expected bernoulli|exponential|weibull)");
  }
  s.check();
  return s;
}

inline std::vector<std::string> preset_names() { return {"bernoulli", "exponential", "weibull"}; }

}  // namespace survcheck
