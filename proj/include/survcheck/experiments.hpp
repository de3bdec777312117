#pragma once

// Case-study experiments: hazard and recurrence curves for an example patient,
// and the time-scale demonstration for pointwise log scores.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "survcheck/loo.hpp"
#include "survcheck/simulate.hpp"

namespace survcheck {

// Pointwise posterior summaries of a curve on a grid.
struct CurveBand {
  std::vector<double> grid;
  std::vector<double> median;
  std::vector<double> lo50, hi50, lo90, hi90;

  // Outer band, inner band and median line, in drawing order.
  std::vector<PlotSeries> to_series(const std::string& name, const std::string& color) const {
    PlotSeries outer{name + " 90%", SeriesKind::band, {{"x", grid}, {"lower", lo90}, {"upper", hi90}},
                     "predictive", color};
    PlotSeries inner{name + " 50%", SeriesKind::band, {{"x", grid}, {"lower", lo50}, {"upper", hi50}},
                     "predictive", color};
    PlotSeries mid{name + " median", SeriesKind::step, {{"x", grid}, {"y", median}}, "observed", color};
    return {outer, inner, mid};
  }
};

// values: draws x grid points.
inline CurveBand summarize_curve(std::vector<double> grid, const Eigen::MatrixXd& values) {
  CurveBand b;
  b.grid = std::move(grid);
  std::vector<double> col(static_cast<std::size_t>(values.rows()));
  for (Eigen::Index j = 0; j < values.cols(); ++j) {
    for (Eigen::Index s = 0; s < values.rows(); ++s) col[static_cast<std::size_t>(s)] = values(s, j);
    std::sort(col.begin(), col.end());
    b.median.push_back(quantile_type7(col, 0.5));
    b.lo50.push_back(quantile_type7(col, 0.25));
    b.hi50.push_back(quantile_type7(col, 0.75));
    b.lo90.push_back(quantile_type7(col, 0.05));
    b.hi90.push_back(quantile_type7(col, 0.95));
  }
  return b;
}

// Covariate values in the model's covariate space (after any scaling).
using Patient = std::map<std::string, double>;

namespace detail {

inline double patient_value(const Patient& p, const std::string& name) {
  auto it = p.find(name);
  require(it != p.end(), "patient", "example patient has no value for '" + name + "'");
  return it->second;
}

}  // namespace detail

// Hazard h(t) and event probability F(t) of a survival model for one patient.
struct SurvivalCurves {
  CurveBand hazard;
  CurveBand event_probability;
};

inline SurvivalCurves survival_curves(const Design& design, const DrawsMatrix& draws,
                                      const std::vector<std::string>& covariate_names,
                                      const Patient& patient, const std::vector<double>& grid) {
  require(is_survival_family(design.spec().family), "family", "survival curves need a survival family");
  require(draws.parameter_names == design.parameter_names(), "dimension",
          "draw columns do not match the model's parameters");
  SurvivalDataset frame;
  frame.covariate_names = covariate_names;
  SurvivalRecord r;
  r.subject_id = 1;
  r.time = 1.0;
  for (const auto& n : covariate_names) r.covariates.push_back(detail::patient_value(patient, n));
  frame.records.push_back(r);
  const Eigen::RowVectorXd row = design.matrix(frame).row(0);
  Eigen::MatrixXd h(draws.n_draws(), static_cast<Eigen::Index>(grid.size()));
  Eigen::MatrixXd f(draws.n_draws(), static_cast<Eigen::Index>(grid.size()));
  for (Eigen::Index s = 0; s < draws.n_draws(); ++s) {
    const Eigen::VectorXd theta = draws.values.row(s).transpose();
    const auto p = SurvivalParams::from_eta(design.spec().family, eta(design, theta, row), design.shape(theta));
    for (std::size_t j = 0; j < grid.size(); ++j) {
      h(s, static_cast<Eigen::Index>(j)) = hazard(p, grid[j]);
      f(s, static_cast<Eigen::Index>(j)) = cdf(p, grid[j]);
    }
  }
  return {summarize_curve(grid, h), summarize_curve(grid, f)};
}

// Yearly hazard p_k and cumulative recurrence probability 1 - prod (1 - p_j)
// of a discrete-time model for one patient, treated or not.
struct DiscreteCurves {
  CurveBand hazard;
  CurveBand recurrence;
};

inline DiscreteCurves discrete_curves(const Design& design, const DrawsMatrix& draws,
                                      const std::vector<std::string>& static_names, const Patient& patient,
                                      bool treated, int treatment_duration, int n_intervals,
                                      const TimeDependentRules& rules = {}) {
  require(design.spec().family == Family::bernoulli_logit, "family",
          "discrete hazard curves need the bernoulli_logit family");
  require(draws.parameter_names == design.parameter_names(), "dimension",
          "draw columns do not match the model's parameters");
  LongDataset frame;
  frame.static_names = static_names;
  frame.time_dependent_names = {rules.active_name, rules.since_stopped_name};
  std::vector<double> grid;
  for (int k = 1; k <= n_intervals; ++k) {
    LongRow row;
    row.subject_id = 1;
    row.interval_index = k;
    for (const auto& n : static_names) row.covariates.push_back(detail::patient_value(patient, n));
    const auto st = treatment_state(treated, treatment_duration, k);
    row.covariates.push_back(st.active);
    row.covariates.push_back(st.since_stopped);
    frame.rows.push_back(std::move(row));
    grid.push_back(k);
  }
  const Eigen::MatrixXd X = design.matrix(frame);
  Eigen::MatrixXd h(draws.n_draws(), n_intervals), cum(draws.n_draws(), n_intervals);
  for (Eigen::Index s = 0; s < draws.n_draws(); ++s) {
    const Eigen::VectorXd e = X * design.coefficients(draws.values.row(s).transpose());
    double log_surv = 0.0;
    for (int k = 0; k < n_intervals; ++k) {
      const double p = logistic(e(k));
      h(s, k) = p;
      log_surv += std::log1p(-p);
      cum(s, k) = -std::expm1(log_surv);
    }
  }
  return {summarize_curve(grid, h), summarize_curve(grid, cum)};
}

// ---------------------------------------------------------------------------
// Time-scale demonstration

struct TimescaleResult {
  double factor = 1.0;
  int n_censored = 0;
  int n_events = 0;
  double max_censored_change = 0.0;    // raw mode, censored columns
  double max_event_shift_error = 0.0;  // raw mode, |shift - log c| on event columns
  double max_interval_change = 0.0;    // interval mode, all columns
  ElpdReport raw_original, raw_rescaled;
  bool holds(double tol = 1e-10) const {
    return max_censored_change <= tol && max_event_shift_error <= tol && max_interval_change <= tol;
  }
};

// Compares log scores of a survival model on the original time axis with
// those on the axis divided by `factor`, with draws mapped exactly.
inline TimescaleResult timescale_experiment(const ModelSpec& spec, const SurvivalDataset& data,
                                            const DrawsMatrix& draws, double factor, double interval_length) {
  require(is_survival_family(spec.family), "family", "the time-scale experiment needs a survival family");
  require(interval_length > 0.0, "grid", "interval length must be positive");
  TimescaleResult out;
  out.factor = factor;
  const Model m(spec, data);
  const auto rescaled = rescale_time(data, factor);
  const Model m2(spec, rescaled);
  const auto draws2 = rescale_draws(m2.design(), draws, factor);
  const auto a = loglik_matrix(m, draws, LooMode::raw(), data.time_unit);
  const auto b = loglik_matrix(m2, draws2, LooMode::raw(), data.time_unit + "/" + format_double(factor));
  const double shift = std::log(factor);
  for (Eigen::Index i = 0; i < a.n_units(); ++i) {
    const bool event = a.tags[static_cast<std::size_t>(i)] == ScoreKind::density;
    (event ? out.n_events : out.n_censored)++;
    const double d = ((b.values.col(i) - a.values.col(i)).array() - (event ? shift : 0.0)).abs().maxCoeff();
    auto& slot = event ? out.max_event_shift_error : out.max_censored_change;
    slot = std::max(slot, d);
  }
  const auto grid = TimeGrid::covering(data.max_time(), interval_length);
  const TimeGrid grid2{grid.interval_length / factor, grid.origin / factor, grid.n_intervals};
  const auto ia = loglik_matrix(m, draws, LooMode::interval(grid));
  const auto ib = loglik_matrix(m2, draws2, LooMode::interval(grid2));
  out.max_interval_change = (ia.values - ib.values).cwiseAbs().maxCoeff();
  out.raw_original = elpd_loo(a, psis_smooth(a));
  out.raw_rescaled = elpd_loo(b, psis_smooth(b));
  return out;
}

// Histogram of pointwise values split by tag, on shared bin edges.
inline nlohmann::json tagged_histogram(const ElpdReport& r, int bins, double lo, double hi) {
  std::vector<int> dens(static_cast<std::size_t>(bins), 0), prob(static_cast<std::size_t>(bins), 0);
  const double w = (hi - lo) / bins;
  for (std::size_t i = 0; i < r.pointwise.size(); ++i) {
    if (!std::isfinite(r.pointwise[i])) continue;
    const int k = std::clamp(static_cast<int>((r.pointwise[i] - lo) / w), 0, bins - 1);
    (r.tags[i] == ScoreKind::density ? dens : prob)[static_cast<std::size_t>(k)]++;
  }
  std::vector<double> edges;
  for (int k = 0; k <= bins; ++k) edges.push_back(lo + k * w);
  return {{"edges", edges}, {"density", dens}, {"probability", prob}};
}

}  // namespace survcheck
