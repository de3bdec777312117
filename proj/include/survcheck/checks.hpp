#pragma once

// Predictive-check computations: Kaplan-Meier with delayed entry, KM overlay,
// intervals, PIT-ECDF with simultaneous bands, PAV calibration with
// consistency bands, and imputation of censored event times.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/binomial.hpp>

#include "survcheck/core.hpp"
#include "survcheck/models.hpp"
#include "survcheck/plot.hpp"

namespace survcheck {

// Right-continuous step function: value(t) = initial for t < times[0],
// values[k] on [times[k], times[k+1]).
struct StepFunction {
  std::vector<double> times;
  std::vector<double> values;
  double initial = 1.0;

  double operator()(double t) const {
    auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return initial;
    return values[static_cast<std::size_t>(it - times.begin()) - 1];
  }

  double final_value() const { return values.empty() ? initial : values.back(); }

  // Series points (x, y) starting at `start` and ending at `end`, jumps after
  // `end` dropped.
  PlotSeries to_series(std::string name, double start, double end) const {
    PlotSeries s;
    s.name = std::move(name);
    s.kind = SeriesKind::step;
    auto& x = s.data["x"];
    auto& y = s.data["y"];
    x.push_back(start);
    y.push_back(initial);
    for (std::size_t k = 0; k < times.size() && times[k] <= end; ++k) {
      x.push_back(times[k]);
      y.push_back(values[k]);
    }
    if (x.back() < end) {
      x.push_back(end);
      y.push_back((*this)(end));
    }
    return s;
  }
};

// Product-limit estimator. With honor_entry the risk set at t counts subjects
// with entry_time < t <= time; without it, every subject with t <= time.
inline StepFunction km_estimate(const SurvivalDataset& data, bool honor_entry) {
  require(!data.records.empty(), "empty", "Kaplan-Meier needs a nonempty dataset");
  std::vector<double> exits, entries, events;
  for (const auto& r : data.records) {
    require(r.status == Status::event || r.status == Status::right_censored, "unsupported_status",
            "Kaplan-Meier supports event and right-censored records only");
    exits.push_back(r.time);
    entries.push_back(honor_entry ? r.entry_time : -std::numeric_limits<double>::infinity());
    if (r.status == Status::event) events.push_back(r.time);
  }
  std::sort(exits.begin(), exits.end());
  std::sort(entries.begin(), entries.end());
  std::sort(events.begin(), events.end());

  StepFunction s;
  double surv = 1.0;
  for (std::size_t i = 0; i < events.size();) {
    const double t = events[i];
    std::size_t j = i;
    while (j < events.size() && events[j] == t) ++j;
    const double d = static_cast<double>(j - i);
    // #(time >= t) - #(entry >= t)
    const auto at_or_after = exits.end() - std::lower_bound(exits.begin(), exits.end(), t);
    const auto not_entered = entries.end() - std::lower_bound(entries.begin(), entries.end(), t);
    const double n = static_cast<double>(at_or_after - not_entered);
    surv *= 1.0 - d / n;
    s.times.push_back(t);
    s.values.push_back(surv);
    i = j;
  }
  return s;
}

// Empirical complementary CDF of an uncensored sample.
inline StepFunction empirical_ccdf(std::span<const double> sample) {
  std::vector<double> v(sample.begin(), sample.end());
  std::sort(v.begin(), v.end());
  StepFunction s;
  const double n = static_cast<double>(v.size());
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    while (j < v.size() && v[j] == v[i]) ++j;
    s.times.push_back(v[i]);
    s.values.push_back(1.0 - static_cast<double>(j) / n);
    i = j;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Predictive draws and imputation

inline std::vector<Eigen::Index> spread_indices(Eigen::Index n_draws, int n_replicates) {
  require(n_draws >= 1 && n_replicates >= 1, "draws", "need at least one draw and one replicate");
  std::vector<Eigen::Index> idx;
  for (int r = 0; r < n_replicates; ++r)
    idx.push_back(static_cast<Eigen::Index>((static_cast<double>(r) + 0.5) * n_draws / n_replicates));
  return idx;
}

inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

// n_replicates x N matrix of event times, one posterior draw per row.
inline Eigen::MatrixXd predictive_event_times(const Model& model, const DrawsMatrix& draws,
                                              int n_replicates, std::uint64_t seed) {
  require(is_survival_family(model.family()), "family", "predictive event times need a survival family");
  const auto idx = spread_indices(draws.n_draws(), n_replicates);
  Eigen::MatrixXd out(n_replicates, static_cast<Eigen::Index>(model.n_obs()));
  for (int r = 0; r < n_replicates; ++r) {
    auto rng = substream(seed, static_cast<std::uint64_t>(r));
    const Eigen::VectorXd theta = draws.values.row(idx[static_cast<std::size_t>(r)]).transpose();
    const Eigen::VectorXd e = model.linear_predictor(theta);
    for (Eigen::Index i = 0; i < e.size(); ++i)
      out(r, i) = sample_event_time(model.params_for(theta, e(i)), rng);
  }
  return out;
}

struct ImputedDataset {
  SurvivalDataset data;      // censored records replaced by imputed events
  std::vector<bool> imputed;  // per record
  Eigen::Index draw_index;
};

// Each replicate uses one posterior draw and replaces every right-censored
// time a with a draw from the predictive law conditioned on T > a.
inline std::vector<ImputedDataset> impute_censored(const Model& model, const DrawsMatrix& draws,
                                                   const SurvivalDataset& data, int n_replicates,
                                                   std::uint64_t seed) {
  require(model.n_obs() == data.size(), "dimension", "model and dataset sizes differ");
  const auto idx = spread_indices(draws.n_draws(), n_replicates);
  std::vector<ImputedDataset> out;
  for (int r = 0; r < n_replicates; ++r) {
    auto rng = substream(seed, 0x1000000ull + static_cast<std::uint64_t>(r));
    ImputedDataset imp{data, std::vector<bool>(data.size(), false), idx[static_cast<std::size_t>(r)]};
    const Eigen::VectorXd theta = draws.values.row(imp.draw_index).transpose();
    const Eigen::VectorXd e = model.linear_predictor(theta);
    for (std::size_t i = 0; i < data.size(); ++i) {
      auto& rec = imp.data.records[i];
      if (rec.status != Status::right_censored) continue;
      rec.time = sample_truncated(model.params_for(theta, e(static_cast<Eigen::Index>(i))), rec.time, rng);
      rec.status = Status::event;
      imp.imputed[i] = true;
    }
    out.push_back(std::move(imp));
  }
  return out;
}

// ---------------------------------------------------------------------------
// KM overlay

inline constexpr const char* kObservedColor = "#1f1f1f";
inline constexpr const char* kPredictiveColor = "#7fa7d6";
inline constexpr const char* kImputedColor = "#d62728";

inline PlotBundle km_overlay(const SurvivalDataset& data, const Eigen::MatrixXd& predictive,
                             double cutoff_factor = 1.2,
                             const std::vector<ImputedDataset>* imputed = nullptr) {
  require(cutoff_factor >= 1.0, "cutoff", "cutoff factor must be at least 1");
  require(predictive.rows() >= 1, "draws", "KM overlay needs at least one predictive draw");
  const double max_obs = data.max_time();
  const double cutoff = cutoff_factor * max_obs;

  PlotBundle b;
  b.title = "Kaplan-Meier overlay";
  b.x_label = "time";
  b.y_label = "survival probability";
  b.metadata = {{"cutoff_factor", cutoff_factor}, {"cutoff", cutoff}, {"max_observed_time", max_obs},
                {"n_predictive", predictive.rows()}};

  for (Eigen::Index r = 0; r < predictive.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(predictive.cols()));
    for (Eigen::Index i = 0; i < predictive.cols(); ++i) row[static_cast<std::size_t>(i)] = predictive(r, i);
    auto s = empirical_ccdf(row).to_series("predictive_" + std::to_string(r), 0.0, cutoff);
    s.role = "predictive";
    s.hint_color = kPredictiveColor;
    b.series.push_back(std::move(s));
  }
  if (imputed) {
    for (std::size_t r = 0; r < imputed->size(); ++r) {
      auto s = km_estimate((*imputed)[r].data, true).to_series("imputed_km_" + std::to_string(r), 0.0, cutoff);
      s.role = "imputed";
      s.hint_color = kImputedColor;
      b.series.push_back(std::move(s));
    }
  }
  auto obs = km_estimate(data, true).to_series("observed_km", 0.0, max_obs);
  obs.role = "observed";
  obs.hint_color = kObservedColor;
  b.series.push_back(std::move(obs));
  return b;
}

// ---------------------------------------------------------------------------
// Intervals and PIT

inline PlotSeries intervals_data(std::span<const double> observed, const Eigen::MatrixXd& draws,
                                 double inner = 0.5, double outer = 0.9,
                                 const std::vector<bool>* imputed = nullptr) {
  require(inner > 0.0 && inner < 1.0 && outer > 0.0 && outer < 1.0, "quantile",
          "interval probabilities must lie in (0, 1)");
  require(inner <= outer, "quantile", "inner probability must not exceed outer");
  require(draws.cols() == static_cast<Eigen::Index>(observed.size()), "dimension",
          "one draw column per observation required");
  require(draws.rows() >= 20, "draws", "intervals need at least 20 draws per observation");
  PlotSeries s;
  s.name = "intervals";
  s.kind = SeriesKind::interval;
  s.role = "predictive";
  s.hint_color = kPredictiveColor;
  for (const char* k : {"x", "observed", "median", "inner_lo", "inner_hi", "outer_lo", "outer_hi",
                        "distance_from_median", "imputed"})
    s.data[k];
  std::vector<double> col(static_cast<std::size_t>(draws.rows()));
  for (std::size_t i = 0; i < observed.size(); ++i) {
    for (Eigen::Index r = 0; r < draws.rows(); ++r)
      col[static_cast<std::size_t>(r)] = draws(r, static_cast<Eigen::Index>(i));
    std::sort(col.begin(), col.end());
    const double med = quantile_type7(col, 0.5);
    s.data["x"].push_back(static_cast<double>(i + 1));
    s.data["observed"].push_back(observed[i]);
    s.data["median"].push_back(med);
    s.data["inner_lo"].push_back(quantile_type7(col, 0.5 - inner / 2));
    s.data["inner_hi"].push_back(quantile_type7(col, 0.5 + inner / 2));
    s.data["outer_lo"].push_back(quantile_type7(col, 0.5 - outer / 2));
    s.data["outer_hi"].push_back(quantile_type7(col, 0.5 + outer / 2));
    s.data["distance_from_median"].push_back(observed[i] - med);
    s.data["imputed"].push_back(imputed && (*imputed)[i] ? 1.0 : 0.0);
  }
  return s;
}

// PIT_i = (1/S) #{s : y_rep[s, i] <= y_i}.
inline std::vector<double> pit_values(std::span<const double> observed, const Eigen::MatrixXd& draws) {
  require(draws.cols() == static_cast<Eigen::Index>(observed.size()), "dimension",
          "one draw column per observation required");
  require(draws.rows() >= 1, "draws", "PIT needs at least one draw");
  std::vector<double> pit(observed.size());
  for (std::size_t i = 0; i < observed.size(); ++i)
    pit[i] = static_cast<double>((draws.col(static_cast<Eigen::Index>(i)).array() <= observed[i]).count()) /
             static_cast<double>(draws.rows());
  return pit;
}

struct BandSeries {
  std::vector<double> grid;
  std::vector<double> lower;
  std::vector<double> upper;
  double level = 0.95;
  double gamma = 0.0;  // pointwise tail probability chosen by the search

  bool contains(std::span<const double> values) const {
    for (std::size_t j = 0; j < grid.size(); ++j)
      if (values[j] < lower[j] - 1e-12 || values[j] > upper[j] + 1e-12) return false;
    return true;
  }

  PlotSeries to_series(std::string name) const {
    PlotSeries s;
    s.name = std::move(name);
    s.kind = SeriesKind::band;
    s.role = "reference";
    s.hint_color = kPredictiveColor;
    s.data["x"] = grid;
    s.data["lower"] = lower;
    s.data["upper"] = upper;
    return s;
  }
};

inline std::vector<double> ecdf_on_grid(std::span<const double> values, std::span<const double> grid) {
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  std::vector<double> out;
  for (double z : grid)
    out.push_back(static_cast<double>(std::upper_bound(v.begin(), v.end(), z + 1e-12) - v.begin()) /
                  static_cast<double>(v.size()));
  return out;
}

namespace detail {

// Largest gamma in [0, 1 - level] such that at least `level` of the replicates
// lie inside the band bounds(gamma). Coverage is nonincreasing in gamma.
template <typename InsideFraction>
double search_gamma(double level, InsideFraction&& inside_fraction) {
  double lo = 0.0, hi = 1.0 - level;
  if (inside_fraction(hi) >= level) return hi;
  for (int it = 0; it < 50; ++it) {
    const double mid = 0.5 * (lo + hi);
    (inside_fraction(mid) >= level ? lo : hi) = mid;
  }
  return lo;
}

}  // namespace detail

// Simultaneous band for the ECDF of n PIT values from S draws each. Under a
// calibrated model the PIT is uniform on {0, 1/S, ..., 1}, so n ECDF(z) is
// Binomial(n, (floor(zS) + 1) / (S + 1)); pointwise bounds are binomial
// quantiles at gamma / 2 and 1 - gamma / 2, with gamma set by simulation.
inline BandSeries pit_ecdf_band(int n, int S, double level = 0.95, int n_sim = 1000,
                                std::uint64_t seed = 1) {
  require(n >= 2, "band", "PIT-ECDF band needs n >= 2");
  require(S >= 1, "band", "PIT-ECDF band needs S >= 1");
  require(level > 0.0 && level < 1.0, "band", "band level must lie in (0, 1)");
  require(n_sim >= 1, "band", "n_sim must be positive");

  BandSeries band;
  band.level = level;
  std::vector<double> q;
  for (int j = 1; j <= n; ++j) {
    const double z = static_cast<double>(j) / n;
    band.grid.push_back(z);
    q.push_back(std::min(1.0, (std::floor(z * S + 1e-9) + 1.0) / (S + 1.0)));
  }

  std::vector<std::vector<int>> counts(static_cast<std::size_t>(n_sim));
  std::vector<double> pit(static_cast<std::size_t>(n));
  for (int r = 0; r < n_sim; ++r) {
    auto rng = substream(seed, static_cast<std::uint64_t>(r));
    std::uniform_int_distribution<int> lattice(0, S);
    for (auto& v : pit) v = static_cast<double>(lattice(rng)) / S;
    const auto e = ecdf_on_grid(pit, band.grid);
    auto& c = counts[static_cast<std::size_t>(r)];
    for (double v : e) c.push_back(static_cast<int>(std::lround(v * n)));
  }

  auto bounds = [&](double gamma, std::vector<int>& lo, std::vector<int>& hi) {
    lo.resize(q.size());
    hi.resize(q.size());
    for (std::size_t j = 0; j < q.size(); ++j) {
      if (q[j] >= 1.0) {
        lo[j] = hi[j] = n;
        continue;
      }
      const boost::math::binomial_distribution<double> bin(n, q[j]);
      lo[j] = gamma <= 0.0 ? 0 : static_cast<int>(boost::math::quantile(bin, gamma / 2));
      hi[j] = gamma <= 0.0 ? n : static_cast<int>(boost::math::quantile(boost::math::complement(bin, gamma / 2)));
    }
  };
  std::vector<int> lo, hi;
  band.gamma = detail::search_gamma(level, [&](double gamma) {
    bounds(gamma, lo, hi);
    int inside = 0;
    for (const auto& c : counts) {
      bool ok = true;
      for (std::size_t j = 0; j < c.size() && ok; ++j) ok = c[j] >= lo[j] && c[j] <= hi[j];
      inside += ok;
    }
    return static_cast<double>(inside) / n_sim;
  });
  bounds(band.gamma, lo, hi);
  for (std::size_t j = 0; j < q.size(); ++j) {
    band.lower.push_back(static_cast<double>(lo[j]) / n);
    band.upper.push_back(static_cast<double>(hi[j]) / n);
  }
  return band;
}

inline PlotBundle pit_ecdf_plot(std::span<const double> pit, const BandSeries& band) {
  PlotBundle b;
  b.title = "PIT-ECDF";
  b.x_label = "PIT";
  b.y_label = "ECDF";
  b.series.push_back(band.to_series("simultaneous_band"));
  PlotSeries diag;
  diag.name = "uniform";
  diag.role = "reference";
  diag.hint_color = "#999999";
  diag.kind = SeriesKind::points;
  diag.data["x"] = band.grid;
  diag.data["y"] = band.grid;
  b.series.push_back(diag);
  PlotSeries e;
  e.name = "pit_ecdf";
  e.kind = SeriesKind::step;
  e.role = "observed";
  e.hint_color = kObservedColor;
  e.data["x"] = band.grid;
  e.data["y"] = ecdf_on_grid(pit, band.grid);
  const bool inside = band.contains(e.data["y"]);
  b.series.push_back(e);
  b.metadata = {{"level", band.level}, {"gamma", band.gamma}, {"inside_band", inside}};
  return b;
}

// ---------------------------------------------------------------------------
// PAV calibration

struct CalibrationCurve {
  std::vector<double> predictions;  // distinct, increasing
  std::vector<double> cep;
  std::vector<int> counts;

  double at(double p) const {
    auto it = std::lower_bound(predictions.begin(), predictions.end(), p);
    if (it == predictions.end()) return cep.back();
    return cep[static_cast<std::size_t>(it - predictions.begin())];
  }
};

// Isotonic least-squares fit of z on p by pool-adjacent-violators. Records are
// ordered by prediction (stable in original index); tied predictions form one
// initial block.
inline CalibrationCurve pav_cep(std::span<const double> p, std::span<const int> z) {
  require(!p.empty(), "pav", "PAV needs at least one prediction");
  require(p.size() == z.size(), "dimension", "predictions and outcomes differ in length");
  for (double v : p) require(v >= 0.0 && v <= 1.0, "domain", "predictions must lie in [0, 1]");
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] < p[b]; });

  CalibrationCurve c;
  std::vector<double> sums;
  for (auto i : order) {
    if (!c.predictions.empty() && c.predictions.back() == p[i]) {
      sums.back() += z[i];
      ++c.counts.back();
    } else {
      c.predictions.push_back(p[i]);
      sums.push_back(z[i]);
      c.counts.push_back(1);
    }
  }
  // Stack of pooled blocks: (sum, weight, number of distinct predictions).
  struct Block { double sum; double weight; std::size_t len; };
  std::vector<Block> stack;
  for (std::size_t k = 0; k < sums.size(); ++k) {
    stack.push_back({sums[k], static_cast<double>(c.counts[k]), 1});
    while (stack.size() > 1) {
      auto& a = stack[stack.size() - 2];
      const auto& b = stack.back();
      if (a.sum / a.weight <= b.sum / b.weight) break;
      a.sum += b.sum;
      a.weight += b.weight;
      a.len += b.len;
      stack.pop_back();
    }
  }
  for (const auto& b : stack) c.cep.insert(c.cep.end(), b.len, b.sum / b.weight);
  return c;
}

struct CalibrationBand {
  BandSeries band;  // grid = distinct predictions
  std::vector<double> dot_x;
  std::vector<double> dot_size;  // relative density of predictions, max 1
};

inline CalibrationBand calibration_band(std::span<const double> p, double level = 0.95,
                                        int n_sim = 1000, std::uint64_t seed = 1) {
  require(level > 0.0 && level < 1.0, "band", "band level must lie in (0, 1)");
  require(n_sim >= 2, "band", "n_sim must be at least 2");
  std::vector<int> zeros(p.size(), 0);
  const auto base = pav_cep(p, zeros);
  const auto m = base.predictions.size();

  std::vector<std::vector<double>> sims(static_cast<std::size_t>(n_sim));
  std::vector<int> z(p.size());
  for (int r = 0; r < n_sim; ++r) {
    auto rng = substream(seed, static_cast<std::uint64_t>(r));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::size_t i = 0; i < p.size(); ++i) z[i] = unif(rng) < p[i] ? 1 : 0;
    sims[static_cast<std::size_t>(r)] = pav_cep(p, z).cep;
  }
  std::vector<std::vector<double>> sorted(m, std::vector<double>(static_cast<std::size_t>(n_sim)));
  for (std::size_t j = 0; j < m; ++j) {
    for (int r = 0; r < n_sim; ++r) sorted[j][static_cast<std::size_t>(r)] = sims[static_cast<std::size_t>(r)][j];
    std::sort(sorted[j].begin(), sorted[j].end());
  }
  std::vector<double> lo(m), hi(m);
  auto bounds = [&](double gamma) {
    for (std::size_t j = 0; j < m; ++j) {
      lo[j] = quantile_type7(sorted[j], gamma / 2);
      hi[j] = quantile_type7(sorted[j], 1.0 - gamma / 2);
    }
  };

  CalibrationBand out;
  out.band.level = level;
  out.band.grid = base.predictions;
  out.band.gamma = detail::search_gamma(level, [&](double gamma) {
    bounds(gamma);
    int inside = 0;
    for (const auto& s : sims) {
      bool ok = true;
      for (std::size_t j = 0; j < m && ok; ++j) ok = s[j] >= lo[j] && s[j] <= hi[j];
      inside += ok;
    }
    return static_cast<double>(inside) / n_sim;
  });
  bounds(out.band.gamma);
  out.band.lower = lo;
  out.band.upper = hi;

  constexpr int kBins = 20;
  std::vector<double> hist(kBins, 0.0);
  for (double v : p) hist[static_cast<std::size_t>(std::min(kBins - 1, static_cast<int>(v * kBins)))] += 1.0;
  const double mx = *std::max_element(hist.begin(), hist.end());
  for (int k = 0; k < kBins; ++k) {
    out.dot_x.push_back((k + 0.5) / kBins);
    out.dot_size.push_back(mx > 0 ? hist[static_cast<std::size_t>(k)] / mx : 0.0);
  }
  return out;
}

// Smallest interval anchored at 0 or 1 holding at least `mass` of predictions.
inline std::pair<double, double> zoom_region(std::span<const double> p, double mass = 0.9) {
  require(!p.empty(), "zoom", "zoom needs predictions");
  require(mass > 0.0 && mass <= 1.0, "zoom", "mass must lie in (0, 1]");
  std::vector<double> v(p.begin(), p.end());
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  const auto k = static_cast<std::size_t>(std::ceil(mass * static_cast<double>(n) - 1e-9));
  const double upper_low = v[k - 1];      // [0, upper_low]
  const double lower_high = v[n - k];     // [lower_high, 1]
  if (upper_low <= 1.0 - lower_high) return {0.0, upper_low};
  return {lower_high, 1.0};
}

inline PlotBundle calibration_plot(std::span<const double> p, std::span<const int> z,
                                   const CalibrationBand& band,
                                   std::optional<std::pair<double, double>> zoom = std::nullopt) {
  const auto curve = pav_cep(p, z);
  PlotBundle b;
  b.title = zoom ? "PAV-adjusted calibration (zoomed)" : "PAV-adjusted calibration";
  b.x_label = "predicted probability";
  b.y_label = "conditional event probability";
  auto in_zoom = [&](double x) { return !zoom || (x >= zoom->first && x <= zoom->second); };

  PlotSeries bs;
  bs.name = "consistency_band";
  bs.kind = SeriesKind::band;
  bs.role = "reference";
  bs.hint_color = kPredictiveColor;
  PlotSeries cs;
  cs.name = "cep";
  cs.kind = SeriesKind::step;
  cs.role = "observed";
  cs.hint_color = kImputedColor;
  bool inside = true;
  for (std::size_t j = 0; j < curve.predictions.size(); ++j) {
    inside = inside && curve.cep[j] >= band.band.lower[j] - 1e-12 && curve.cep[j] <= band.band.upper[j] + 1e-12;
    if (!in_zoom(curve.predictions[j])) continue;
    bs.data["x"].push_back(curve.predictions[j]);
    bs.data["lower"].push_back(band.band.lower[j]);
    bs.data["upper"].push_back(band.band.upper[j]);
    cs.data["x"].push_back(curve.predictions[j]);
    cs.data["y"].push_back(curve.cep[j]);
  }
  PlotSeries dots;
  dots.name = "prediction_density";
  dots.kind = SeriesKind::points;
  dots.role = "reference";
  dots.hint_color = "#1f77b4";
  for (std::size_t k = 0; k < band.dot_x.size(); ++k) {
    if (!in_zoom(band.dot_x[k]) || band.dot_size[k] <= 0.0) continue;
    dots.data["x"].push_back(band.dot_x[k]);
    dots.data["y"].push_back(0.0);
    dots.data["size"].push_back(band.dot_size[k]);
  }
  b.series = {bs, cs, dots};
  b.metadata = {{"level", band.band.level}, {"gamma", band.band.gamma}, {"inside_band", inside}};
  if (zoom) b.metadata["zoom"] = {zoom->first, zoom->second};
  return b;
}

// ---------------------------------------------------------------------------
// Dichotomization at a horizon

struct Dichotomized {
  std::vector<int> outcome;               // one per included record
  std::vector<std::size_t> included;      // record positions
  std::vector<SubjectId> excluded;        // subjects whose indicator is unknowable
};

inline Dichotomized dichotomize_outcomes(const SurvivalDataset& data, double horizon) {
  require(horizon > 0.0, "horizon", "horizon must be positive");
  Dichotomized d;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& r = data.records[i];
    int z = -1;
    switch (r.status) {
      case Status::event: z = r.time <= horizon ? 1 : 0; break;
      case Status::right_censored: z = r.time >= horizon ? 0 : -1; break;
      case Status::left_censored: z = r.time <= horizon ? 1 : -1; break;
      case Status::interval_censored:
        if (r.interval_bounds->second <= horizon) z = 1;
        else if (r.interval_bounds->first >= horizon) z = 0;
        break;
    }
    if (z < 0) {
      d.excluded.push_back(r.subject_id);
    } else {
      d.outcome.push_back(z);
      d.included.push_back(i);
    }
  }
  return d;
}

}  // namespace survcheck
