#pragma once

// Survival data model: short (one row per subject) and long (one row per
// subject-interval) formats, plus the transforms between them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "survcheck/error.hpp"

namespace survcheck {

using SubjectId = std::int64_t;

enum class Status { event, right_censored, left_censored, interval_censored };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::event: return "event";
    case Status::right_censored: return "rcens";
    case Status::left_censored: return "lcens";
    case Status::interval_censored: return "icens";
  }
  return "?";
}

inline Status parse_status(const std::string& s) {
  if (s == "event" || s == "1") return Status::event;
  if (s == "rcens" || s == "0") return Status::right_censored;
  if (s == "lcens") return Status::left_censored;
  if (s == "icens") return Status::interval_censored;
  throw Error("parse", "unknown status '" + s + "' (expected event|rcens|lcens|icens)");
}

// For right-censored records `time` is the censoring time; for left-censored
// records it is the upper bound; interval-censored records carry (a, b) in
// `interval_bounds` and time == b.
struct SurvivalRecord {
  SubjectId subject_id = 0;
  double entry_time = 0.0;
  double time = 0.0;
  Status status = Status::event;
  std::optional<std::pair<double, double>> interval_bounds;
  std::vector<double> covariates;
};

struct SurvivalDataset {
  std::vector<std::string> covariate_names;
  std::vector<SurvivalRecord> records;
  std::string time_unit;

  std::size_t size() const { return records.size(); }

  std::optional<std::size_t> covariate_index(const std::string& name) const {
    auto it = std::find(covariate_names.begin(), covariate_names.end(), name);
    if (it == covariate_names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - covariate_names.begin());
  }

  std::vector<double> column(const std::string& name) const {
    auto idx = covariate_index(name);
    require(idx.has_value(), "missing_column", "dataset has no covariate '" + name + "'");
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.covariates[*idx]);
    return out;
  }

  double max_time() const {
    double m = 0.0;
    for (const auto& r : records) m = std::max(m, r.time);
    return m;
  }
};

// Interval index column name used when a design refers to discrete time.
inline constexpr const char* kIntervalColumn = "Time";

struct LongRow {
  SubjectId subject_id = 0;
  int interval_index = 1;
  std::vector<double> covariates;  // static then time-dependent, see LongDataset
  int outcome = 0;
};

struct LongDataset {
  std::vector<std::string> static_names;
  std::vector<std::string> time_dependent_names;
  std::vector<LongRow> rows;
  std::string time_unit;

  std::size_t size() const { return rows.size(); }

  std::vector<std::string> covariate_names() const {
    auto out = static_names;
    out.insert(out.end(), time_dependent_names.begin(), time_dependent_names.end());
    return out;
  }

  std::optional<std::size_t> covariate_index(const std::string& name) const {
    auto names = covariate_names();
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names.begin());
  }

  // `Time` resolves to the interval index unless a covariate shadows it.
  std::vector<double> column(const std::string& name) const {
    std::vector<double> out;
    out.reserve(rows.size());
    if (auto idx = covariate_index(name)) {
      for (const auto& r : rows) out.push_back(r.covariates[*idx]);
    } else if (name == kIntervalColumn) {
      for (const auto& r : rows) out.push_back(r.interval_index);
    } else {
      throw Error("missing_column", "long dataset has no covariate '" + name + "'");
    }
    return out;
  }
};

struct DrawsMatrix {
  Eigen::MatrixXd values;  // S x P
  std::vector<std::string> parameter_names;
  std::vector<int> chain_ids;  // empty or one per draw

  Eigen::Index n_draws() const { return values.rows(); }
  Eigen::Index n_params() const { return values.cols(); }

  std::optional<Eigen::Index> index_of(const std::string& name) const {
    auto it = std::find(parameter_names.begin(), parameter_names.end(), name);
    if (it == parameter_names.end()) return std::nullopt;
    return static_cast<Eigen::Index>(it - parameter_names.begin());
  }

  void check() const {
    require(values.rows() >= 1, "draws", "draws matrix must have at least one draw");
    require(static_cast<std::size_t>(values.cols()) == parameter_names.size(), "draws",
            "parameter name count does not match draw columns");
    require(values.allFinite(), "draws", "draws contain non-finite values");
    std::set<std::string> uniq(parameter_names.begin(), parameter_names.end());
    require(uniq.size() == parameter_names.size(), "draws", "parameter names must be unique");
    require(chain_ids.empty() || chain_ids.size() == static_cast<std::size_t>(values.rows()),
            "draws", "chain id count does not match draws");
  }
};

// Right-closed intervals (origin + (j-1)L, origin + jL], j = 1..n_intervals.
struct TimeGrid {
  double interval_length = 1.0;
  double origin = 0.0;
  int n_intervals = 1;

  double lower(int j) const { return origin + (j - 1) * interval_length; }
  double upper(int j) const { return origin + j * interval_length; }
  double end() const { return upper(n_intervals); }

  // Index of the interval containing t. Boundary times belong to the earlier
  // interval; a relative slack of 1e-9 absorbs representation error such as
  // 0.3 / 0.1.
  int index_of(double t) const {
    double q = (t - origin) / interval_length;
    return std::max(1, static_cast<int>(std::ceil(q - 1e-9)));
  }

  bool covers(double t) const { return t > origin && index_of(t) <= n_intervals; }

  static TimeGrid covering(double max_time, double interval_length, double origin = 0.0) {
    require(interval_length > 0.0, "grid", "interval length must be positive");
    TimeGrid g{interval_length, origin, 1};
    g.n_intervals = std::max(1, g.index_of(max_time));
    return g;
  }

  void check() const {
    require(interval_length > 0.0 && std::isfinite(interval_length), "grid",
            "interval length must be positive and finite");
    require(n_intervals >= 1, "grid", "grid needs at least one interval");
  }
};

// ---------------------------------------------------------------------------
// validate_dataset

struct Violation {
  SubjectId subject_id;
  std::string kind;
  std::string message;
};

inline std::vector<Violation> validate_dataset(const SurvivalDataset& data) {
  std::vector<Violation> out;
  std::set<SubjectId> seen;
  for (const auto& r : data.records) {
    if (!seen.insert(r.subject_id).second)
      out.push_back({r.subject_id, "duplicate_id", "duplicate subject_id"});
    if (!(std::isfinite(r.entry_time) && std::isfinite(r.time)))
      out.push_back({r.subject_id, "nonfinite_time", "non-finite entry_time or time"});
    else if (!(r.entry_time < r.time))
      out.push_back({r.subject_id, "entry_time", "entry_time < time violated"});
    if (r.entry_time < 0.0)
      out.push_back({r.subject_id, "negative_entry", "entry_time must be non-negative"});
    if (r.status == Status::interval_censored) {
      if (!r.interval_bounds)
        out.push_back({r.subject_id, "interval_bounds", "interval-censored record without bounds"});
      else if (!(r.interval_bounds->first < r.interval_bounds->second))
        out.push_back({r.subject_id, "interval_bounds", "interval bounds must satisfy a < b"});
    } else if (r.interval_bounds) {
      out.push_back({r.subject_id, "interval_bounds", "bounds present on a non-interval record"});
    }
    if (r.covariates.size() != data.covariate_names.size()) {
      out.push_back({r.subject_id, "covariate_count", "covariate count mismatch"});
    } else {
      for (std::size_t j = 0; j < r.covariates.size(); ++j)
        if (!std::isfinite(r.covariates[j]))
          out.push_back({r.subject_id, "nonfinite_covariate",
                         "non-finite covariate " + data.covariate_names[j]});
    }
  }
  return out;
}

inline void require_valid(const SurvivalDataset& data) {
  auto v = validate_dataset(data);
  if (!v.empty())
    throw Error("invalid_dataset", "subject " + std::to_string(v.front().subject_id) + ": " +
                                       v.front().message + " (" + std::to_string(v.size()) +
                                       " violation(s))");
}

// Structural check of the long-format invariants.
inline std::vector<Violation> validate_long(const LongDataset& data) {
  std::vector<Violation> out;
  std::map<SubjectId, std::vector<const LongRow*>> by_subject;
  const std::size_t ncov = data.static_names.size() + data.time_dependent_names.size();
  for (const auto& r : data.rows) {
    by_subject[r.subject_id].push_back(&r);
    if (r.covariates.size() != ncov)
      out.push_back({r.subject_id, "covariate_count", "covariate count mismatch"});
    if (r.outcome != 0 && r.outcome != 1)
      out.push_back({r.subject_id, "outcome", "outcome must be 0 or 1"});
  }
  for (auto& [id, rows] : by_subject) {
    std::sort(rows.begin(), rows.end(),
              [](auto* a, auto* b) { return a->interval_index < b->interval_index; });
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (rows[k]->interval_index != static_cast<int>(k) + 1) {
        out.push_back({id, "contiguity", "interval indices must be 1..K contiguous"});
        break;
      }
      if (rows[k]->outcome == 1 && k + 1 != rows.size()) {
        out.push_back({id, "after_event", "rows exist after an event"});
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// expand_long / to_short_form

// Declarative time-dependent covariate rules. A subject is treated when its
// `treatment_flag` covariate is nonzero; treatment lasts `duration` intervals
// unless `duration_column` names a per-subject duration covariate.
struct TimeDependentRules {
  std::string treatment_flag = "AdjTreatm";
  int duration = 3;
  std::string duration_column;
  std::string active_name = "AdjOn";
  std::string since_stopped_name = "TimeSinceAdjStopped";

  static TimeDependentRules none() {
    TimeDependentRules r;
    r.treatment_flag.clear();
    return r;
  }
  bool enabled() const { return !treatment_flag.empty(); }
};

struct TreatmentState {
  double active;
  double since_stopped;
};

// Untreated subjects have since_stopped = 0: treatment never stopped.
inline TreatmentState treatment_state(bool treated, int duration, int interval_index) {
  if (!treated) return {0.0, 0.0};
  return {interval_index <= duration ? 1.0 : 0.0,
          static_cast<double>(std::max(0, interval_index - duration))};
}

inline LongDataset expand_long(const SurvivalDataset& data, const TimeGrid& grid,
                               const TimeDependentRules& rules) {
  require_valid(data);
  grid.check();
  std::optional<std::size_t> flag_idx, dur_idx;
  if (rules.enabled()) {
    flag_idx = data.covariate_index(rules.treatment_flag);
    require(flag_idx.has_value(), "missing_column",
            "treatment flag column '" + rules.treatment_flag + "' not found");
    if (!rules.duration_column.empty()) {
      dur_idx = data.covariate_index(rules.duration_column);
      require(dur_idx.has_value(), "missing_column",
              "duration column '" + rules.duration_column + "' not found");
    }
  }

  LongDataset out;
  out.time_unit = data.time_unit;
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < data.covariate_names.size(); ++j) {
    if ((flag_idx && j == *flag_idx) || (dur_idx && j == *dur_idx)) continue;
    keep.push_back(j);
    out.static_names.push_back(data.covariate_names[j]);
  }
  if (rules.enabled()) out.time_dependent_names = {rules.active_name, rules.since_stopped_name};

  for (const auto& r : data.records) {
    require(r.status == Status::event || r.status == Status::right_censored, "unsupported_status",
            "long format supports event and right-censored records only (subject " +
                std::to_string(r.subject_id) + " is " + to_string(r.status) + ")");
    require(r.entry_time <= grid.origin, "unsupported_entry",
            "long format does not support delayed entry (subject " + std::to_string(r.subject_id) +
                ")");
    require(grid.covers(r.time), "grid_coverage",
            "grid does not cover time " + std::to_string(r.time) + " of subject " +
                std::to_string(r.subject_id));
    const int last = grid.index_of(r.time);
    const bool treated = flag_idx && r.covariates[*flag_idx] != 0.0;
    int duration = rules.duration;
    if (dur_idx) duration = static_cast<int>(std::lround(r.covariates[*dur_idx]));
    for (int k = 1; k <= last; ++k) {
      LongRow row;
      row.subject_id = r.subject_id;
      row.interval_index = k;
      row.covariates.reserve(keep.size() + 2);
      for (auto j : keep) row.covariates.push_back(r.covariates[j]);
      if (rules.enabled()) {
        auto st = treatment_state(treated, duration, k);
        row.covariates.push_back(st.active);
        row.covariates.push_back(st.since_stopped);
      }
      row.outcome = (k == last && r.status == Status::event) ? 1 : 0;
      out.rows.push_back(std::move(row));
    }
  }
  return out;
}

struct ShortFormOptions {
  std::string treatment_name = "AdjTreatm";
  // Time-dependent column whose nonzero value marks active treatment; empty
  // disables the derived treatment column.
  std::string active_column = "AdjOn";
  double interval_length = 1.0;
};

// One record per subject: time = last interval index (times interval length),
// status = event iff the final row has outcome 1.
inline SurvivalDataset to_short_form(const LongDataset& data, const ShortFormOptions& opts = {}) {
  auto problems = validate_long(data);
  require(problems.empty(), "invalid_dataset",
          problems.empty() ? "" : "subject " + std::to_string(problems.front().subject_id) + ": " +
                                      problems.front().message);
  std::optional<std::size_t> active_idx;
  if (!opts.active_column.empty()) active_idx = data.covariate_index(opts.active_column);

  SurvivalDataset out;
  out.time_unit = data.time_unit;
  out.covariate_names = data.static_names;
  const bool derive_treatment = active_idx.has_value() && !opts.treatment_name.empty();
  if (derive_treatment) out.covariate_names.push_back(opts.treatment_name);

  std::map<SubjectId, std::size_t> position;
  for (const auto& row : data.rows) {
    auto [it, fresh] = position.try_emplace(row.subject_id, out.records.size());
    if (fresh) {
      SurvivalRecord rec;
      rec.subject_id = row.subject_id;
      rec.covariates.assign(row.covariates.begin(),
                            row.covariates.begin() + static_cast<long>(data.static_names.size()));
      if (derive_treatment) rec.covariates.push_back(0.0);
      out.records.push_back(std::move(rec));
    }
    auto& rec = out.records[it->second];
    const double t = row.interval_index * opts.interval_length;
    if (t >= rec.time) {
      rec.time = t;
      rec.status = row.outcome == 1 ? Status::event : Status::right_censored;
    }
    if (derive_treatment && row.covariates[*active_idx] != 0.0) rec.covariates.back() = 1.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// rescale_time / scale_covariates

inline SurvivalDataset rescale_time(const SurvivalDataset& data, double factor) {
  require(factor > 0.0 && std::isfinite(factor), "rescale", "rescale factor must be positive");
  SurvivalDataset out = data;
  for (auto& r : out.records) {
    r.entry_time /= factor;
    r.time /= factor;
    if (r.interval_bounds) {
      r.interval_bounds->first /= factor;
      r.interval_bounds->second /= factor;
    }
  }
  return out;
}

struct ScalingRecord {
  std::string name;
  double mean;
  double sd;
  double apply(double x) const { return 0.5 * (x - mean) / sd; }
  double invert(double z) const { return mean + 2.0 * sd * z; }
};

// Scales each named column to sample mean 0 and sample sd 0.5.
inline std::pair<SurvivalDataset, std::vector<ScalingRecord>> scale_covariates(
    const SurvivalDataset& data, const std::vector<std::string>& names) {
  SurvivalDataset out = data;
  std::vector<ScalingRecord> scaling;
  const auto n = data.records.size();
  require(n >= 2, "scale", "scaling needs at least two records");
  for (const auto& name : names) {
    auto idx = data.covariate_index(name);
    require(idx.has_value(), "missing_column", "no covariate '" + name + "'");
    double mean = 0.0;
    for (const auto& r : data.records) mean += r.covariates[*idx];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (const auto& r : data.records) ss += (r.covariates[*idx] - mean) * (r.covariates[*idx] - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    require(sd > 0.0 && std::isfinite(sd), "zero_variance", "covariate '" + name + "' has zero variance");
    ScalingRecord rec{name, mean, sd};
    for (auto& r : out.records) r.covariates[*idx] = rec.apply(r.covariates[*idx]);
    scaling.push_back(rec);
  }
  return {std::move(out), std::move(scaling)};
}

// Applies a stored scaling to a long dataset's static columns.
inline LongDataset apply_scaling(const LongDataset& data, const std::vector<ScalingRecord>& scaling) {
  LongDataset out = data;
  for (const auto& s : scaling) {
    auto idx = data.covariate_index(s.name);
    require(idx.has_value(), "missing_column", "no covariate '" + s.name + "'");
    for (auto& r : out.rows) r.covariates[*idx] = s.apply(r.covariates[*idx]);
  }
  return out;
}

inline SurvivalDataset apply_scaling(const SurvivalDataset& data,
                                     const std::vector<ScalingRecord>& scaling) {
  SurvivalDataset out = data;
  for (const auto& s : scaling) {
    auto idx = data.covariate_index(s.name);
    require(idx.has_value(), "missing_column", "no covariate '" + s.name + "'");
    for (auto& r : out.records) r.covariates[*idx] = s.apply(r.covariates[*idx]);
  }
  return out;
}

}  // namespace survcheck
