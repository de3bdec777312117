#pragma once

// Synthetic GIST-like cohorts: parametric covariates, a Bernoulli-logit
// yearly recurrence hazard with time-dependent adjuvant treatment terms, and
// administrative censoring at the end of follow-up.
//
// The default scenario is a stand-in. Its parameters are not fitted to any
// real data.

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "survcheck/checks.hpp"
#include "survcheck/core.hpp"
#include "survcheck/models.hpp"

namespace survcheck {

struct CovariateGenerator {
  enum class Kind { normal, lognormal, bernoulli };
  std::string name;
  Kind kind = Kind::normal;
  double a = 0.0;  // mean | meanlog | probability
  double b = 1.0;  // sd | sdlog | unused

  void check() const {
    switch (kind) {
      case Kind::normal:
      case Kind::lognormal:
        require(std::isfinite(a) && b > 0.0 && std::isfinite(b), "generator",
                "covariate '" + name + "' needs a finite location and positive scale");
        break;
      case Kind::bernoulli:
        require(a >= 0.0 && a <= 1.0, "generator", "probability for '" + name + "' must lie in [0, 1]");
        break;
    }
  }

  double population_mean() const {
    switch (kind) {
      case Kind::normal: return a;
      case Kind::lognormal: return std::exp(a + 0.5 * b * b);
      case Kind::bernoulli: return a;
    }
    return 0.0;
  }

  double population_sd() const {
    switch (kind) {
      case Kind::normal: return b;
      case Kind::lognormal: return population_mean() * std::sqrt(std::expm1(b * b));
      case Kind::bernoulli: return std::sqrt(a * (1.0 - a));
    }
    return 1.0;
  }

  double draw(std::mt19937_64& rng) const {
    switch (kind) {
      case Kind::normal: return std::normal_distribution<double>(a, b)(rng);
      case Kind::lognormal: return std::lognormal_distribution<double>(a, b)(rng);
      case Kind::bernoulli: return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < a ? 1.0 : 0.0;
    }
    return 0.0;
  }
};

inline const char* to_string(CovariateGenerator::Kind k) {
  switch (k) {
    case CovariateGenerator::Kind::normal: return "normal";
    case CovariateGenerator::Kind::lognormal: return "lognormal";
    case CovariateGenerator::Kind::bernoulli: return "bernoulli";
  }
  return "?";
}

// logit p = intercept
//         + sum_j effect_j * (x_j - mean_j) / sd_j        (population moments)
//         + adj_on * AdjOn
//         + tsas_peak * exp(-decay * (TSAS - 1)) * [TSAS >= 1]
//         + time_slope * (year - 1)
struct TrueModel {
  double intercept = -2.6;
  std::map<std::string, double> effects{{"Size", 0.6},       {"MitHPF", 0.7}, {"AgeAtSurg", 0.1},
                                        {"GenderMale", 0.1}, {"Rupture", 1.0}, {"Gastric", -0.4}};
  double adj_on = -1.8;
  double tsas_peak = 0.9;
  double tsas_decay = 0.5;
  double time_slope = -0.08;
};

struct ScenarioConfig {
  int n_subjects = 500;
  std::vector<CovariateGenerator> covariates{
      {"Size", CovariateGenerator::Kind::lognormal, std::log(5.0), 0.6},
      {"AgeAtSurg", CovariateGenerator::Kind::normal, 60.0, 12.0},
      {"MitHPF", CovariateGenerator::Kind::lognormal, std::log(4.0), 1.0},
      {"GenderMale", CovariateGenerator::Kind::bernoulli, 0.5, 0.0},
      {"Rupture", CovariateGenerator::Kind::bernoulli, 0.1, 0.0},
      {"Gastric", CovariateGenerator::Kind::bernoulli, 0.6, 0.0},
      {"AdjTreatm", CovariateGenerator::Kind::bernoulli, 0.3, 0.0},
  };
  std::string treatment_flag = "AdjTreatm";
  TrueModel truth;
  int treatment_duration = 3;
  int max_follow_up = 10;
  std::uint64_t seed = 20240101;

  const CovariateGenerator* generator(const std::string& name) const {
    for (const auto& g : covariates)
      if (g.name == name) return &g;
    return nullptr;
  }

  void check() const {
    require(n_subjects >= 1, "scenario", "n_subjects must be positive");
    require(treatment_duration >= 1, "scenario", "treatment duration must be a positive integer");
    require(max_follow_up >= treatment_duration, "scenario", "follow-up must be at least the treatment duration");
    for (const auto& g : covariates) g.check();
    for (const auto& [name, beta] : truth.effects) {
      require(generator(name) != nullptr, "scenario", "effect on unknown covariate '" + name + "'");
      require(std::isfinite(beta), "scenario", "effect on '" + name + "' must be finite");
    }
    require(treatment_flag.empty() || generator(treatment_flag) != nullptr, "scenario",
            "treatment flag '" + treatment_flag + "' has no generator");
  }
};

inline void to_json(nlohmann::json& j, const ScenarioConfig& c) {
  nlohmann::json gens = nlohmann::json::array();
  for (const auto& g : c.covariates) {
    nlohmann::json e{{"name", g.name}, {"dist", to_string(g.kind)}};
    switch (g.kind) {
      case CovariateGenerator::Kind::normal: e["mean"] = g.a; e["sd"] = g.b; break;
      case CovariateGenerator::Kind::lognormal: e["meanlog"] = g.a; e["sdlog"] = g.b; break;
      case CovariateGenerator::Kind::bernoulli: e["p"] = g.a; break;
    }
    gens.push_back(e);
  }
  j = {{"n_subjects", c.n_subjects},
       {"covariates", gens},
       {"treatment_flag", c.treatment_flag},
       {"truth",
        {{"intercept", c.truth.intercept},
         {"effects", c.truth.effects},
         {"adj_on", c.truth.adj_on},
         {"tsas_peak", c.truth.tsas_peak},
         {"tsas_decay", c.truth.tsas_decay},
         {"time_slope", c.truth.time_slope}}},
       {"treatment_duration", c.treatment_duration},
       {"max_follow_up", c.max_follow_up},
       {"seed", c.seed}};
}

// Missing keys keep their defaults.
inline void from_json(const nlohmann::json& j, ScenarioConfig& c) {
  c.n_subjects = j.value("n_subjects", c.n_subjects);
  c.treatment_flag = j.value("treatment_flag", c.treatment_flag);
  c.treatment_duration = j.value("treatment_duration", c.treatment_duration);
  c.max_follow_up = j.value("max_follow_up", c.max_follow_up);
  c.seed = j.value("seed", c.seed);
  if (j.contains("covariates")) {
    c.covariates.clear();
    for (const auto& e : j.at("covariates")) {
      CovariateGenerator g;
      g.name = e.at("name").get<std::string>();
      const auto dist = e.at("dist").get<std::string>();
      if (dist == "normal") {
        g.kind = CovariateGenerator::Kind::normal;
        g.a = e.at("mean").get<double>();
        g.b = e.at("sd").get<double>();
      } else if (dist == "lognormal") {
        g.kind = CovariateGenerator::Kind::lognormal;
        g.a = e.at("meanlog").get<double>();
        g.b = e.at("sdlog").get<double>();
      } else if (dist == "bernoulli") {
        g.kind = CovariateGenerator::Kind::bernoulli;
        g.a = e.at("p").get<double>();
      } else {
        throw Error("generator", "unknown covariate distribution '" + dist + "'");
      }
      c.covariates.push_back(g);
    }
  }
  if (j.contains("truth")) {
    const auto& t = j.at("truth");
    c.truth.intercept = t.value("intercept", c.truth.intercept);
    if (t.contains("effects")) c.truth.effects = t.at("effects").get<std::map<std::string, double>>();
    c.truth.adj_on = t.value("adj_on", c.truth.adj_on);
    c.truth.tsas_peak = t.value("tsas_peak", c.truth.tsas_peak);
    c.truth.tsas_decay = t.value("tsas_decay", c.truth.tsas_decay);
    c.truth.time_slope = t.value("time_slope", c.truth.time_slope);
  }
}

struct CovariateTable {
  std::vector<std::string> names;
  std::vector<std::vector<double>> rows;  // one per subject, columns follow names

  double at(std::size_t subject, const std::string& name) const {
    for (std::size_t j = 0; j < names.size(); ++j)
      if (names[j] == name) return rows[subject][j];
    throw Error("missing_column", "covariate '" + name + "' not in table");
  }
};

inline CovariateTable gen_covariates(const ScenarioConfig& config, std::mt19937_64& rng) {
  config.check();
  CovariateTable t;
  for (const auto& g : config.covariates) t.names.push_back(g.name);
  t.rows.resize(static_cast<std::size_t>(config.n_subjects));
  for (auto& row : t.rows)
    for (const auto& g : config.covariates) row.push_back(g.draw(rng));
  return t;
}

inline CovariateTable gen_covariates(const ScenarioConfig& config) {
  auto rng = substream(config.seed, 0);
  return gen_covariates(config, rng);
}

// Static part of the true linear predictor for one subject.
inline double static_eta(const ScenarioConfig& config, const CovariateTable& cov, std::size_t subject) {
  double eta = config.truth.intercept;
  for (const auto& [name, beta] : config.truth.effects) {
    const auto* g = config.generator(name);
    const double sd = g->population_sd();
    eta += beta * (cov.at(subject, name) - g->population_mean()) / (sd > 0.0 ? sd : 1.0);
  }
  return eta;
}

// Yearly recurrence probability. Unclamped, so the limits 0 and 1 are reachable.
inline double true_hazard(const ScenarioConfig& config, double static_part, bool treated, int year) {
  const auto st = treatment_state(treated, config.treatment_duration, year);
  const auto& t = config.truth;
  double eta = static_part + t.adj_on * st.active + t.time_slope * (year - 1);
  if (st.since_stopped >= 1.0) eta += t.tsas_peak * std::exp(-t.tsas_decay * (st.since_stopped - 1.0));
  if (eta == -std::numeric_limits<double>::infinity()) return 0.0;
  return 1.0 / (1.0 + std::exp(-eta));
}

// Long-format cohort: static covariates except the treatment flag, then
// AdjOn and TimeSinceAdjStopped. Subject ids run 1..n. Each subject draws from
// its own substream, so results do not depend on iteration order.
inline LongDataset gen_events(const CovariateTable& cov, const ScenarioConfig& config) {
  config.check();
  LongDataset out;
  out.time_unit = "years";
  std::vector<std::size_t> keep;
  std::optional<std::size_t> flag;
  for (std::size_t j = 0; j < cov.names.size(); ++j) {
    if (cov.names[j] == config.treatment_flag) {
      flag = j;
      continue;
    }
    keep.push_back(j);
    out.static_names.push_back(cov.names[j]);
  }
  const TimeDependentRules rules;
  out.time_dependent_names = {rules.active_name, rules.since_stopped_name};

  for (std::size_t i = 0; i < cov.rows.size(); ++i) {
    auto rng = substream(config.seed, 1000 + i);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const bool treated = flag && cov.rows[i][*flag] != 0.0;
    const double base = static_eta(config, cov, i);
    for (int year = 1; year <= config.max_follow_up; ++year) {
      const auto st = treatment_state(treated, config.treatment_duration, year);
      LongRow row;
      row.subject_id = static_cast<SubjectId>(i + 1);
      row.interval_index = year;
      for (auto j : keep) row.covariates.push_back(cov.rows[i][j]);
      row.covariates.push_back(st.active);
      row.covariates.push_back(st.since_stopped);
      row.outcome = unif(rng) < true_hazard(config, base, treated, year) ? 1 : 0;
      const bool stop = row.outcome == 1;
      out.rows.push_back(std::move(row));
      if (stop) break;
    }
  }
  return out;
}

inline LongDataset simulate_scenario(const ScenarioConfig& config) {
  return gen_events(gen_covariates(config), config);
}

inline nlohmann::json scenario_report(const LongDataset& data) {
  require(!data.rows.empty(), "empty", "scenario report needs a nonempty dataset");
  ShortFormOptions opts;
  const auto shortf = to_short_form(data, opts);
  nlohmann::json cov = nlohmann::json::object();
  for (const auto& name : shortf.covariate_names) {
    auto v = shortf.column(name);
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    cov[name] = {{"mean", mean},
                 {"sd", v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0},
                 {"min", v.front()},
                 {"q25", quantile_type7(v, 0.25)},
                 {"median", quantile_type7(v, 0.5)},
                 {"q75", quantile_type7(v, 0.75)},
                 {"max", v.back()}};
  }
  std::map<int, int> events_by_interval, censored_by_interval;
  std::size_t censored = 0;
  for (const auto& r : shortf.records) {
    const int k = static_cast<int>(std::lround(r.time));
    if (r.status == Status::event) {
      ++events_by_interval[k];
    } else {
      ++censored;
      ++censored_by_interval[k];
    }
  }
  auto as_json = [](const std::map<int, int>& m) {
    nlohmann::json o = nlohmann::json::object();
    for (const auto& [k, v] : m) o[std::to_string(k)] = v;
    return o;
  };
  return {{"n_subjects", shortf.records.size()},
          {"n_rows", data.rows.size()},
          {"time_unit", data.time_unit},
          {"censoring_fraction", static_cast<double>(censored) / static_cast<double>(shortf.records.size())},
          {"events_by_interval", as_json(events_by_interval)},
          {"censored_by_interval", as_json(censored_by_interval)},
          {"covariates", cov}};
}

}  // namespace survcheck
