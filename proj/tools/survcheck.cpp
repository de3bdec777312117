// survcheck: simulate -> fit -> check -> compare -> impute, plus the
// case-study experiments. Every command writes into an output directory and
// records what it did in DIR/manifest.json.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "survcheck/checks.hpp"
#include "survcheck/experiments.hpp"
#include "survcheck/io.hpp"
#include "survcheck/loo.hpp"
#include "survcheck/models.hpp"
#include "survcheck/plot.hpp"
#include "survcheck/sampler.hpp"
#include "survcheck/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace survcheck;

namespace {

const std::vector<std::string> kDefaultScaled = {"Size", "AgeAtSurg", "MitHPF"};

// Collects outputs of one command and writes the manifest last.
class RunDir {
 public:
  RunDir(std::string dir, std::string command, json config)
      : dir_(std::move(dir)), command_(std::move(command)), config_(std::move(config)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    require(!ec && fs::is_directory(dir_), "io", "cannot create output directory '" + dir_ + "'");
  }

  const json& config() const { return config_; }
  std::string path(const std::string& name) const { return (fs::path(dir_) / name).string(); }

  void text(const std::string& name, const std::string& body) {
    std::ofstream out(path(name), std::ios::binary);
    require(out.good(), "io", "cannot write '" + path(name) + "'");
    out << body;
    outputs_.push_back(name);
  }

  // JSON artifacts carry the resolved config alongside their payload.
  void artifact(const std::string& name, json payload) {
    json j = {{"command", command_}, {"config", config_}};
    j.update(payload);
    text(name, j.dump(2) + "\n");
  }

  template <typename Writer, typename T>
  void csv(const std::string& name, Writer&& writer, const T& value) {
    std::ostringstream s;
    writer(s, value);
    text(name, s.str());
  }

  void finish() {
    json m = {{"command", command_}, {"config", config_}, {"outputs", outputs_}};
    if (config_.contains("seed")) m["seed"] = config_["seed"];
    std::ofstream out(path("manifest.json"), std::ios::binary);
    require(out.good(), "io", "cannot write manifest");
    out << m.dump(2) << "\n";
  }

 private:
  std::string dir_, command_;
  json config_;
  std::vector<std::string> outputs_;
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "io", "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error("parse", "'" + path + "': " + e.what());
  }
}

json scaling_json(const std::vector<ScalingRecord>& s) {
  json a = json::array();
  for (const auto& r : s) a.push_back({{"name", r.name}, {"mean", r.mean}, {"sd", r.sd}});
  return a;
}

std::vector<ScalingRecord> scaling_from_json(const json& a) {
  std::vector<ScalingRecord> out;
  for (const auto& r : a) out.push_back({r.at("name"), r.at("mean"), r.at("sd")});
  return out;
}

std::string svg_name(const std::string& json_name) {
  return json_name.substr(0, json_name.rfind('.')) + ".svg";
}

// ---------------------------------------------------------------------------
// Fitted model directories

struct LoadedFit {
  std::string dir;
  std::string name;
  ModelSpec spec;
  std::vector<ScalingRecord> scaling;
  SurvivalDataset shortd;  // survival families
  LongDataset longd;       // bernoulli
  DrawsMatrix draws;
  std::string time_unit;

  bool survival() const { return is_survival_family(spec.family); }
  Model model() const { return survival() ? Model(spec, shortd) : Model(spec, longd); }
  double max_time() const {
    if (survival()) return shortd.max_time();
    int k = 1;
    for (const auto& r : longd.rows) k = std::max(k, r.interval_index);
    return k;
  }
};

LoadedFit load_fit(const std::string& dir) {
  LoadedFit f;
  f.dir = dir;
  const auto m = read_json_file((fs::path(dir) / "model.json").string());
  f.spec = m.at("spec").get<ModelSpec>();
  f.scaling = scaling_from_json(m.at("scaling"));
  f.time_unit = m.value("time_unit", std::string{});
  f.name = m.value("name", fs::path(dir).lexically_normal().filename().string());
  const auto data = (fs::path(dir) / "data.csv").string();
  if (f.survival()) {
    f.shortd = read_dataset(data);
    f.shortd.time_unit = f.time_unit;
  } else {
    f.longd = read_long(data);
    f.longd.time_unit = f.time_unit;
  }
  f.draws = read_draws((fs::path(dir) / "draws.csv").string());
  return f;
}

void require_survival(const LoadedFit& f, const std::string& what) {
  require(f.survival(), "family", what + " needs a survival-family fit; '" + f.name + "' is " +
                                      to_string(f.spec.family));
}

// Posterior mean of a per-draw quantity.
template <typename F>
std::vector<double> posterior_mean(const DrawsMatrix& draws, std::size_t n, F&& per_draw) {
  std::vector<double> acc(n, 0.0);
  for (Eigen::Index s = 0; s < draws.n_draws(); ++s) {
    const Eigen::VectorXd theta = draws.values.row(s).transpose();
    per_draw(theta, acc);
  }
  for (auto& v : acc) v /= static_cast<double>(draws.n_draws());
  return acc;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateOptions {
  std::string out;
  std::string scenario;
  std::optional<int> n_subjects;
  std::optional<std::uint64_t> seed;
};

ScenarioConfig resolve_scenario(const SimulateOptions& o, const json* inline_scenario = nullptr) {
  ScenarioConfig c;
  if (inline_scenario) c = inline_scenario->get<ScenarioConfig>();
  else if (!o.scenario.empty()) c = read_json_file(o.scenario).get<ScenarioConfig>();
  if (o.n_subjects) c.n_subjects = *o.n_subjects;
  if (o.seed) c.seed = *o.seed;
  c.check();
  return c;
}

void cmd_simulate(const SimulateOptions& o, const json* inline_scenario = nullptr) {
  const auto c = resolve_scenario(o, inline_scenario);
  RunDir run(o.out, "simulate", json(c));
  const auto l = simulate_scenario(c);
  run.csv("long.csv", write_long, l);
  run.csv("short.csv", write_dataset, to_short_form(l));
  run.text("scenario.json", json(c).dump(2) + "\n");
  run.artifact("report.json", {{"report", scenario_report(l)}});
  run.finish();
}

// ---------------------------------------------------------------------------
// fit

// The full presets mix slowly under random-walk proposals; thinning keeps
// split-R-hat near 1.01 at these lengths.
SamplerConfig cli_sampler_defaults() {
  SamplerConfig s;
  s.thin = 5;
  return s;
}

struct FitOptions {
  std::string out;
  std::string data;
  std::string preset;
  std::string spec;
  std::string name;
  bool no_scale = false;
  std::vector<std::string> scale = kDefaultScaled;
  double interval_length = 1.0;
  std::string time_unit = "years";
  SamplerConfig sampler = cli_sampler_defaults();
};

void cmd_fit(const FitOptions& o) {
  require(o.preset.empty() != o.spec.empty(), "usage", "give exactly one of --preset or --spec");
  const ModelSpec spec = o.preset.empty() ? read_json_file(o.spec).get<ModelSpec>() : preset(o.preset);
  spec.check();
  o.sampler.check();

  const auto table = read_csv(o.data);
  const bool is_long = table.find("interval_index").has_value();
  std::optional<LongDataset> longd;
  std::optional<SurvivalDataset> shortd;
  if (is_long) {
    longd = long_from_csv(table);
    longd->time_unit = o.time_unit;
    auto problems = validate_long(*longd);
    require(problems.empty(), "invalid_dataset",
            problems.empty() ? "" : "subject " + std::to_string(problems.front().subject_id) + ": " +
                                        problems.front().message);
  } else {
    shortd = dataset_from_csv(table);
    shortd->time_unit = o.time_unit;
    require_valid(*shortd);
  }
  // Subject-level view, used for scaling either way.
  const SurvivalDataset subjects =
      shortd ? *shortd : to_short_form(*longd, ShortFormOptions{"AdjTreatm", "AdjOn", o.interval_length});

  std::vector<std::string> names;
  if (!o.no_scale)
    for (const auto& n : o.scale)
      if (subjects.covariate_index(n)) names.push_back(n);
  const auto scaling = scale_covariates(subjects, names).second;

  json config = {{"data", o.data},
                 {"data_format", is_long ? "long" : "short"},
                 {"spec", spec},
                 {"scaled_covariates", names},
                 {"interval_length", o.interval_length},
                 {"time_unit", o.time_unit},
                 {"sampler", o.sampler},
                 {"seed", o.sampler.seed}};
  if (!o.preset.empty()) config["preset"] = o.preset;
  RunDir run(o.out, "fit", config);

  std::optional<Model> model;
  if (is_survival_family(spec.family)) {
    auto d = apply_scaling(subjects, scaling);
    d.time_unit = o.time_unit;
    model.emplace(spec, d);
    run.csv("data.csv", write_dataset, d);
  } else {
    LongDataset l;
    if (longd) {
      l = *longd;
    } else {
      const auto rules = shortd->covariate_index("AdjTreatm") ? TimeDependentRules{} : TimeDependentRules::none();
      l = expand_long(*shortd, TimeGrid::covering(shortd->max_time(), o.interval_length), rules);
    }
    l = apply_scaling(l, scaling);
    l.time_unit = o.time_unit;
    model.emplace(spec, l);
    run.csv("data.csv", write_long, l);
  }
  const auto res = fit(*model, o.sampler);
  const auto diag = diagnose(res);
  const std::string name = !o.name.empty() ? o.name : !o.preset.empty() ? o.preset : spec.name;
  run.text("model.json", json{{"name", name},
                              {"spec", spec},
                              {"scaling", scaling_json(scaling)},
                              {"sampler", o.sampler},
                              {"time_unit", o.time_unit},
                              {"n_observations", model->n_obs()}}
                                 .dump(2) +
                             "\n");
  run.csv("draws.csv", write_draws, res.draws);
  json acc = res.acceptance;
  run.artifact("diagnostics.json", {{"diagnostics", diag}, {"acceptance", acc}});
  run.finish();
  if (diag.any_flagged())
    std::cerr << "warning: some parameters have split R-hat above " << kRhatThreshold
              << "; see diagnostics.json\n";
}

// ---------------------------------------------------------------------------
// check

struct CheckOptions {
  std::string kind;
  std::string fit;
  std::string out;
  bool svg = false;
  int replicates = 0;  // 0: per-check default
  std::uint64_t seed = 1;
  double cutoff_factor = 1.2;
  double level = 0.95;
  int n_sim = 1000;
  int impute = 0;
  std::optional<double> horizon;
  bool zoom = false;
};

void emit_bundle(RunDir& run, const std::string& name, const PlotBundle& b, bool svg) {
  run.artifact(name, {{"plot", b}});
  if (svg) run.text(svg_name(name), render_svg(b));
}

// Observed times and predictive draws restricted to event records, or over
// all records with censored times replaced from one imputed replicate.
struct ObservedTimes {
  std::vector<double> times;
  std::vector<bool> imputed;
  Eigen::MatrixXd predictive;
};

ObservedTimes observed_times(const LoadedFit& f, const Model& m, int replicates, std::uint64_t seed,
                             bool use_imputation) {
  const auto pred = predictive_event_times(m, f.draws, replicates, seed);
  ObservedTimes o;
  if (use_imputation) {
    const auto imp = impute_censored(m, f.draws, f.shortd, 1, seed).front();
    for (const auto& r : imp.data.records) o.times.push_back(r.time);
    o.imputed = imp.imputed;
    o.predictive = pred;
    return o;
  }
  std::vector<Eigen::Index> cols;
  for (std::size_t i = 0; i < f.shortd.records.size(); ++i) {
    const auto& r = f.shortd.records[i];
    if (r.status != Status::event) continue;
    o.times.push_back(r.time);
    o.imputed.push_back(false);
    cols.push_back(static_cast<Eigen::Index>(i));
  }
  require(o.times.size() >= 2, "data", "too few event records for this check (use --impute)");
  o.predictive = pred(Eigen::all, cols);
  return o;
}

void cmd_check(const CheckOptions& o) {
  const auto f = load_fit(o.fit);
  json config = {{"check", o.kind},         {"fit", o.fit},     {"seed", o.seed},
                 {"cutoff_factor", o.cutoff_factor}, {"level", o.level}, {"n_sim", o.n_sim},
                 {"impute", o.impute},      {"zoom", o.zoom},   {"svg", o.svg}};
  if (o.horizon) config["horizon"] = *o.horizon;
  const Model m = f.model();

  if (o.kind == "km") {
    require_survival(f, "check km");
    const int R = o.replicates > 0 ? o.replicates : 100;
    config["replicates"] = R;
    RunDir run(o.out, "check km", config);
    const auto pred = predictive_event_times(m, f.draws, R, o.seed);
    std::vector<ImputedDataset> imp;
    if (o.impute > 0) imp = impute_censored(m, f.draws, f.shortd, o.impute, o.seed);
    const auto b = km_overlay(f.shortd, pred, o.cutoff_factor, o.impute > 0 ? &imp : nullptr);
    emit_bundle(run, "km.json", b, o.svg);
    run.csv("km.csv", write_csv, b);
    run.finish();
  } else if (o.kind == "intervals") {
    require_survival(f, "check intervals");
    const int R = o.replicates > 0 ? o.replicates : 400;
    config["replicates"] = R;
    RunDir run(o.out, "check intervals", config);
    const auto obs = observed_times(f, m, R, o.seed, o.impute > 0);
    PlotBundle b;
    b.title = "Posterior predictive intervals";
    b.x_label = "observation";
    b.y_label = "time";
    b.series.push_back(intervals_data(obs.times, obs.predictive, 0.5, 0.9, &obs.imputed));
    b.metadata = {{"n", obs.times.size()}, {"replicates", R}, {"imputed", o.impute > 0}};
    emit_bundle(run, "intervals.json", b, o.svg);
    run.finish();
  } else if (o.kind == "pit-ecdf") {
    require_survival(f, "check pit-ecdf");
    const int R = o.replicates > 0 ? o.replicates : 400;
    config["replicates"] = R;
    RunDir run(o.out, "check pit-ecdf", config);
    const auto obs = observed_times(f, m, R, o.seed, o.impute > 0);
    const auto pit = pit_values(obs.times, obs.predictive);
    const auto band = pit_ecdf_band(static_cast<int>(pit.size()), R, o.level, o.n_sim, o.seed);
    auto b = pit_ecdf_plot(pit, band);
    b.metadata["inside_band"] = band.contains(ecdf_on_grid(pit, band.grid));
    emit_bundle(run, "pit_ecdf.json", b, o.svg);
    run.finish();
  } else if (o.kind == "calibration") {
    std::vector<double> p;
    std::vector<int> z;
    if (f.survival()) {
      require(o.horizon.has_value(), "usage", "calibration of a survival model needs --horizon");
      const auto d = dichotomize_outcomes(f.shortd, *o.horizon);
      require(!d.included.empty(), "data", "no subject has a known outcome at the horizon");
      p = posterior_mean(f.draws, d.included.size(), [&](const Eigen::VectorXd& th, std::vector<double>& acc) {
        const Eigen::VectorXd e = m.linear_predictor(th);
        for (std::size_t k = 0; k < d.included.size(); ++k)
          acc[k] += cdf(m.params_for(th, e(static_cast<Eigen::Index>(d.included[k]))), *o.horizon);
      });
      z = d.outcome;
      config["excluded_subjects"] = d.excluded.size();
    } else {
      p = posterior_mean(f.draws, m.n_obs(), [&](const Eigen::VectorXd& th, std::vector<double>& acc) {
        const Eigen::VectorXd e = m.linear_predictor(th);
        for (Eigen::Index i = 0; i < e.size(); ++i) acc[static_cast<std::size_t>(i)] += logistic(e(i));
      });
      for (const auto& ob : m.observations()) z.push_back(ob.outcome);
    }
    RunDir run(o.out, "check calibration", config);
    const auto band = calibration_band(p, o.level, o.n_sim, o.seed);
    emit_bundle(run, "calibration.json", calibration_plot(p, z, band), o.svg);
    if (o.zoom) emit_bundle(run, "calibration_zoom.json", calibration_plot(p, z, band, zoom_region(p)), o.svg);
    run.finish();
  } else {
    throw Error("usage", "unknown check '" + o.kind + "'");
  }
}

// ---------------------------------------------------------------------------
// impute

struct ImputeOptions {
  std::string fit;
  std::string out;
  int replicates = 5;
  std::uint64_t seed = 1;
};

void cmd_impute(const ImputeOptions& o) {
  const auto f = load_fit(o.fit);
  require_survival(f, "impute");
  RunDir run(o.out, "impute", {{"fit", o.fit}, {"replicates", o.replicates}, {"seed", o.seed}});
  const auto imp = impute_censored(f.model(), f.draws, f.shortd, o.replicates, o.seed);
  json draws = json::array();
  for (std::size_t r = 0; r < imp.size(); ++r) {
    auto d = imp[r].data;
    d.covariate_names.push_back("imputed");
    for (std::size_t i = 0; i < d.records.size(); ++i) d.records[i].covariates.push_back(imp[r].imputed[i]);
    run.csv("imputed_" + std::to_string(r) + ".csv", write_dataset, d);
    draws.push_back(imp[r].draw_index);
  }
  run.artifact("imputation.json", {{"draw_index", draws}});
  run.finish();
}

// ---------------------------------------------------------------------------
// compare

struct CompareOptions {
  std::string mode;
  std::vector<std::string> fits;
  std::string out;
  std::optional<double> horizon;
  double interval_length = 1.0;
  double khat_threshold = kKhatThreshold;
  bool refit = false;
  std::uint64_t seed = 1;
};

void cmd_compare(const CompareOptions& o) {
  require(!o.fits.empty(), "usage", "compare needs at least one --fit");
  std::vector<LoadedFit> fits;
  for (const auto& d : o.fits) fits.push_back(load_fit(d));
  std::set<std::string> seen;
  for (auto& f : fits) {
    const auto base = f.name;
    for (int k = 2; !seen.insert(f.name).second; ++k) f.name = base + "_" + std::to_string(k);
  }

  LooMode mode;
  json config = {{"mode", o.mode}, {"fits", o.fits}, {"khat_threshold", o.khat_threshold},
                 {"refit", o.refit}, {"seed", o.seed}};
  if (o.mode == "loo") {
    mode = LooMode::raw();
  } else if (o.mode == "interval") {
    double tmax = 0.0;
    for (const auto& f : fits) tmax = std::max(tmax, f.max_time());
    const auto grid = TimeGrid::covering(tmax, o.interval_length);
    mode = LooMode::interval(grid);
    config["grid"] = {{"interval_length", grid.interval_length}, {"origin", grid.origin},
                      {"n_intervals", grid.n_intervals}};
  } else if (o.mode == "dichotomized") {
    require(o.horizon.has_value(), "usage", "compare dichotomized needs --horizon");
    mode = LooMode::dichotomized(*o.horizon);
    config["horizon"] = *o.horizon;
  } else {
    throw Error("usage", "unknown comparison mode '" + o.mode + "'");
  }
  RunDir run(o.out, "compare " + o.mode, config);

  std::vector<std::pair<std::string, ElpdReport>> reports;
  for (const auto& f : fits) {
    const Model m = f.model();
    auto ll = loglik_matrix(m, f.draws, mode, f.time_unit);
    if (!f.survival() && mode.kind == LooMode::Kind::raw) ll = grouped_units(ll);
    ElpdReport rep;
    if (o.refit) {
      auto cfg = read_json_file((fs::path(f.dir) / "model.json").string()).at("sampler").get<SamplerConfig>();
      cfg.seed = o.seed;
      rep = loo_with_refit(m, f.draws, mode, cfg, o.khat_threshold, f.time_unit);
    } else {
      rep = elpd_loo(ll, psis_smooth(ll), o.khat_threshold);
    }
    run.csv("loglik_" + f.name + ".csv", write_loglik, ll);
    run.artifact("elpd_" + f.name + ".json", {{"model", f.name}, {"elpd", rep}});
    reports.emplace_back(f.name, std::move(rep));
  }
  run.artifact("comparison.json", {{"comparison", compare(reports)}});
  run.finish();
}

// ---------------------------------------------------------------------------
// experiments

struct TimescaleOptions {
  std::string fit;
  std::string out;
  double factor = 30.0;
  double interval_length = 1.0;
  int bins = 30;
};

void cmd_timescale(const TimescaleOptions& o) {
  const auto f = load_fit(o.fit);
  require_survival(f, "experiment timescale");
  RunDir run(o.out, "experiment timescale",
             {{"fit", o.fit}, {"factor", o.factor}, {"interval_length", o.interval_length}, {"bins", o.bins}});
  const auto r = timescale_experiment(f.spec, f.shortd, f.draws, o.factor, o.interval_length);

  // Interval-mode elpd on both axes; compare() must not notice the change.
  const Model m(f.spec, f.shortd);
  const auto resc = rescale_time(f.shortd, o.factor);
  const Model m2(f.spec, resc);
  const auto grid = TimeGrid::covering(f.shortd.max_time(), o.interval_length);
  const TimeGrid grid2{grid.interval_length / o.factor, grid.origin / o.factor, grid.n_intervals};
  const auto ia = loglik_matrix(m, f.draws, LooMode::interval(grid));
  const auto ib = loglik_matrix(m2, rescale_draws(m2.design(), f.draws, o.factor), LooMode::interval(grid2));
  const auto ea = elpd_loo(ia, psis_smooth(ia));
  const auto eb = elpd_loo(ib, psis_smooth(ib));
  double compare_change = std::abs(ea.elpd - eb.elpd);
  for (std::size_t i = 0; i < ea.pointwise.size(); ++i)
    compare_change = std::max(compare_change, std::abs(ea.pointwise[i] - eb.pointwise[i]));

  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (const auto* rep : {&r.raw_original, &r.raw_rescaled})
    for (double v : rep->pointwise)
      if (std::isfinite(v)) {
        lo = first ? v : std::min(lo, v);
        hi = first ? v : std::max(hi, v);
        first = false;
      }
  if (!(hi > lo)) hi = lo + 1.0;

  const bool ok = r.holds() && compare_change <= 1e-10;
  json result = {{"n_censored", r.n_censored},
                 {"n_events", r.n_events},
                 {"log_factor", std::log(o.factor)},
                 {"max_censored_change", r.max_censored_change},
                 {"max_event_shift_error", r.max_event_shift_error},
                 {"max_interval_change", r.max_interval_change},
                 {"max_interval_elpd_change", compare_change},
                 {"elpd_raw_original", r.raw_original.elpd},
                 {"elpd_raw_rescaled", r.raw_rescaled.elpd},
                 {"elpd_interval_original", ea.elpd},
                 {"elpd_interval_rescaled", eb.elpd},
                 {"holds", ok}};
  run.artifact("timescale.json",
               {{"result", result},
                {"histogram_original", tagged_histogram(r.raw_original, o.bins, lo, hi)},
                {"histogram_rescaled", tagged_histogram(r.raw_rescaled, o.bins, lo, hi)}});
  run.finish();
  std::cout << "censored log scores unchanged: " << (r.max_censored_change <= 1e-10 ? "yes" : "NO")
            << " (max change " << r.max_censored_change << ")\n"
            << "event log scores shifted by log " << o.factor << " = " << std::log(o.factor) << ": "
            << (r.max_event_shift_error <= 1e-10 ? "yes" : "NO") << " (max error " << r.max_event_shift_error
            << ")\n"
            << "interval-mode scores unchanged: " << (r.max_interval_change <= 1e-10 ? "yes" : "NO") << "\n";
  require(ok, "assertion", "time-scale invariance does not hold; see timescale.json");
}

struct HazardOptions {
  std::vector<std::string> fits;
  std::string out;
  std::string patient;
  double horizon = 10.0;
  int grid_points = 100;
  int treatment_duration = 3;
  bool svg = false;
};

Patient default_patient() {
  return {{"Size", 5.0}, {"AgeAtSurg", 60.0}, {"MitHPF", 4.0},
          {"GenderMale", 1.0}, {"Rupture", 0.0}, {"Gastric", 1.0}};
}

json band_json(const CurveBand& b) {
  return {{"grid", b.grid}, {"median", b.median}, {"lo50", b.lo50}, {"hi50", b.hi50},
          {"lo90", b.lo90}, {"hi90", b.hi90}};
}

json hazard_curves_for(const LoadedFit& f, const Patient& raw, const HazardOptions& o, RunDir& run) {
  Patient p = raw;
  for (const auto& s : f.scaling)
    if (auto it = p.find(s.name); it != p.end()) it->second = s.apply(it->second);
  json out = {{"model", f.name}, {"family", to_string(f.spec.family)}};
  const Design design = f.model().design();

  if (f.survival()) {
    std::vector<double> grid;
    for (int k = 1; k <= o.grid_points; ++k) grid.push_back(o.horizon * k / o.grid_points);
    std::vector<std::string> names;
    for (const auto& [n, v] : p) names.push_back(n);
    const auto c = survival_curves(design, f.draws, names, p, grid);
    out["hazard"] = band_json(c.hazard);
    out["event_probability"] = band_json(c.event_probability);
    const auto& med = c.hazard.median;
    double dev = 0.0;
    bool up = true, down = true;
    for (std::size_t j = 1; j < med.size(); ++j) {
      dev = std::max(dev, std::abs(med[j] - med[0]) / med[0]);
      up = up && med[j] >= med[j - 1];
      down = down && med[j] <= med[j - 1];
    }
    if (f.spec.family == Family::exponential)
      out["checks"] = {{"constant_hazard", dev <= 1e-9}, {"max_relative_deviation", dev}};
    else
      out["checks"] = {{"monotone_hazard", up || down}, {"direction", up ? "increasing" : "decreasing"}};
    PlotBundle b{"Hazard: " + f.name, "time", "hazard", {}, {}};
    for (auto& s : c.hazard.to_series(f.name, kPredictiveColor)) b.series.push_back(s);
    if (o.svg) run.text("hazard_" + f.name + ".svg", render_svg(b));
  } else {
    std::vector<std::string> statics;
    for (const auto& [n, v] : p)
      if (n != "AdjOn" && n != "TimeSinceAdjStopped" && n != "AdjTreatm") statics.push_back(n);
    const int K = static_cast<int>(std::lround(o.horizon));
    const auto treated = discrete_curves(design, f.draws, statics, p, true, o.treatment_duration, K);
    const auto untreated = discrete_curves(design, f.draws, statics, p, false, o.treatment_duration, K);
    out["treated"] = {{"hazard", band_json(treated.hazard)}, {"recurrence", band_json(treated.recurrence)}};
    out["untreated"] = {{"hazard", band_json(untreated.hazard)}, {"recurrence", band_json(untreated.recurrence)}};
    const auto d = static_cast<std::size_t>(o.treatment_duration);
    const bool jump = K > o.treatment_duration && treated.hazard.median[d] > treated.hazard.median[d - 1];
    out["checks"] = {{"post_treatment_jump", jump},
                     {"median_last_treated_interval", treated.hazard.median[d - 1]},
                     {"median_first_untreated_interval", K > o.treatment_duration ? treated.hazard.median[d] : 0.0}};
    PlotBundle b{"Yearly recurrence probability: " + f.name, "year", "probability", {}, {}};
    for (auto& s : untreated.hazard.to_series("untreated", kPredictiveColor)) b.series.push_back(s);
    for (auto& s : treated.hazard.to_series("treated", kImputedColor)) b.series.push_back(s);
    if (o.svg) run.text("hazard_" + f.name + ".svg", render_svg(b));
  }
  return out;
}

void cmd_hazard_curves(const HazardOptions& o) {
  require(!o.fits.empty(), "usage", "hazard-curves needs at least one --fit");
  Patient raw = default_patient();
  if (!o.patient.empty()) raw = read_json_file(o.patient).get<Patient>();
  RunDir run(o.out, "experiment hazard-curves",
             {{"fits", o.fits}, {"patient", raw}, {"horizon", o.horizon}, {"grid_points", o.grid_points},
              {"treatment_duration", o.treatment_duration}, {"svg", o.svg}});
  json models = json::array();
  for (const auto& dir : o.fits) models.push_back(hazard_curves_for(load_fit(dir), raw, o, run));
  run.artifact("hazard_curves.json", {{"models", models}});
  run.finish();
}

// ---------------------------------------------------------------------------
// run --pipeline

template <typename T>
void take(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

void cmd_pipeline(const std::string& cfg_path, const std::string& out) {
  const auto cfg = read_json_file(cfg_path);
  const fs::path root(out);
  RunDir run(out, "run", cfg);

  SimulateOptions so;
  so.out = (root / "simulate").string();
  const json scenario = cfg.value("scenario", json::object());
  cmd_simulate(so, &scenario);

  json sampler_json = cli_sampler_defaults();
  if (cfg.contains("sampler")) sampler_json.update(cfg.at("sampler"));
  const auto sampler = sampler_json.get<SamplerConfig>();
  std::vector<std::string> presets = preset_names();
  take(cfg, "presets", presets);
  std::vector<std::string> fit_dirs, survival_dirs;
  for (const auto& p : presets) {
    FitOptions fo;
    fo.out = (root / ("fit_" + p)).string();
    fo.data = (root / "simulate" / "long.csv").string();
    fo.preset = p;
    fo.sampler = sampler;
    cmd_fit(fo);
    fit_dirs.push_back(fo.out);
    if (is_survival_family(preset(p).family)) survival_dirs.push_back(fo.out);
  }

  const json checks = cfg.value("checks", json::object());
  for (const auto& dir : survival_dirs) {
    const auto name = fs::path(dir).filename().string().substr(4);
    for (const std::string kind : {"km", "intervals", "pit-ecdf", "calibration"}) {
      CheckOptions co;
      co.kind = kind;
      co.fit = dir;
      co.out = (root / ("check_" + name) / kind).string();
      take(checks, "svg", co.svg);
      take(checks, "seed", co.seed);
      take(checks, "cutoff_factor", co.cutoff_factor);
      take(checks, "level", co.level);
      take(checks, "n_sim", co.n_sim);
      co.horizon = checks.value("horizon", 5.0);
      co.zoom = kind == "calibration";
      cmd_check(co);
    }
  }

  const json cmp = cfg.value("compare", json::object());
  std::vector<std::string> modes = {"interval", "dichotomized"};
  take(cmp, "modes", modes);
  for (const auto& mode : modes) {
    CompareOptions co;
    co.mode = mode;
    co.fits = mode == "interval" ? fit_dirs : survival_dirs;
    co.out = (root / ("compare_" + mode)).string();
    co.horizon = cmp.value("horizon", 5.0);
    take(cmp, "interval_length", co.interval_length);
    take(cmp, "khat_threshold", co.khat_threshold);
    if (!co.fits.empty()) cmd_compare(co);
  }

  const json ex = cfg.value("experiments", json::object());
  if (!survival_dirs.empty()) {
    TimescaleOptions to;
    to.fit = survival_dirs.back();
    to.out = (root / "experiment_timescale").string();
    take(ex, "timescale_factor", to.factor);
    cmd_timescale(to);
  }
  HazardOptions ho;
  ho.fits = fit_dirs;
  ho.out = (root / "experiment_hazard_curves").string();
  take(ex, "svg", ho.svg);
  cmd_hazard_curves(ho);
  run.finish();
}

void print_error(const std::string& code, const std::string& message) {
  std::cerr << json{{"error", {{"code", code}, {"message", message}}}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Predictive checking and comparison of Bayesian survival models"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  auto sampler_flags = [](CLI::App* sc, SamplerConfig& s) {
    sc->add_option("--chains", s.n_chains, "Number of chains");
    sc->add_option("--warmup", s.n_warmup, "Warmup iterations per chain");
    sc->add_option("--keep", s.n_keep, "Kept draws per chain");
    sc->add_option("--seed", s.seed, "Sampler seed");
    sc->add_option("--thin", s.thin, "Iterations per kept draw");
    sc->add_option("--target-acceptance", s.target_acceptance, "Target acceptance rate");
  };

  SimulateOptions sim;
  auto* c_sim = app.add_subcommand("simulate", "Generate a synthetic cohort");
  c_sim->add_option("--out", sim.out, "Output directory")->required();
  c_sim->add_option("--scenario", sim.scenario, "Scenario JSON (defaults otherwise)")->check(CLI::ExistingFile);
  c_sim->add_option("--n-subjects", sim.n_subjects, "Override the number of subjects");
  c_sim->add_option("--seed", sim.seed, "Override the scenario seed");

  FitOptions fo;
  auto* c_fit = app.add_subcommand("fit", "Fit a model and write posterior draws");
  c_fit->add_option("--data", fo.data, "Short or long CSV (long if it has interval_index)")
      ->required()
      ->check(CLI::ExistingFile);
  c_fit->add_option("--out", fo.out, "Output directory")->required();
  auto* o_preset = c_fit->add_option("--preset", fo.preset, "bernoulli | exponential | weibull");
  auto* o_spec = c_fit->add_option("--spec", fo.spec, "Model spec JSON")->check(CLI::ExistingFile);
  o_preset->excludes(o_spec);
  c_fit->add_option("--name", fo.name, "Model name used in comparisons");
  c_fit->add_flag("--no-scale", fo.no_scale, "Keep continuous covariates on their raw scale");
  c_fit->add_option("--scale", fo.scale, "Covariates to scale to mean 0, sd 0.5");
  c_fit->add_option("--interval-length", fo.interval_length, "Interval length when expanding to long format");
  c_fit->add_option("--time-unit", fo.time_unit, "Time unit recorded with the data");
  sampler_flags(c_fit, fo.sampler);

  CheckOptions co;
  auto* c_check = app.add_subcommand("check", "Graphical predictive checks");
  c_check->add_option("kind", co.kind, "km | intervals | pit-ecdf | calibration")
      ->required()
      ->check(CLI::IsMember({"km", "intervals", "pit-ecdf", "calibration"}));
  c_check->add_option("--fit", co.fit, "Fit directory")->required()->check(CLI::ExistingDirectory);
  c_check->add_option("--out", co.out, "Output directory")->required();
  c_check->add_flag("--svg", co.svg, "Also render SVG");
  c_check->add_option("--replicates", co.replicates, "Predictive replicates (0: 100 for km, 400 otherwise)");
  c_check->add_option("--seed", co.seed, "Seed");
  c_check->add_option("--cutoff-factor", co.cutoff_factor, "KM x-axis cutoff as a multiple of the largest time");
  c_check->add_option("--level", co.level, "Band level");
  c_check->add_option("--n-sim", co.n_sim, "Simulations for band calibration");
  c_check->add_option("--impute", co.impute, "Imputed replicates for censored records");
  c_check->add_option("--horizon", co.horizon, "Horizon for survival-model calibration");
  c_check->add_flag("--zoom", co.zoom, "Also write a zoomed calibration plot");

  ImputeOptions io;
  auto* c_imp = app.add_subcommand("impute", "Impute censored event times");
  c_imp->add_option("--fit", io.fit, "Fit directory")->required()->check(CLI::ExistingDirectory);
  c_imp->add_option("--out", io.out, "Output directory")->required();
  c_imp->add_option("--replicates", io.replicates, "Imputed datasets");
  c_imp->add_option("--seed", io.seed, "Seed");

  CompareOptions cmp;
  auto* c_cmp = app.add_subcommand("compare", "PSIS-LOO model comparison");
  c_cmp->add_option("mode", cmp.mode, "loo | interval | dichotomized")
      ->required()
      ->check(CLI::IsMember({"loo", "interval", "dichotomized"}));
  c_cmp->add_option("--fit", cmp.fits, "Fit directories")->required()->check(CLI::ExistingDirectory);
  c_cmp->add_option("--out", cmp.out, "Output directory")->required();
  c_cmp->add_option("--horizon", cmp.horizon, "Horizon for dichotomized scoring");
  c_cmp->add_option("--interval-length", cmp.interval_length, "Interval length for interval scoring");
  c_cmp->add_option("--khat-threshold", cmp.khat_threshold, "k-hat above which PSIS is unreliable");
  c_cmp->add_flag("--refit", cmp.refit, "Refit units whose k-hat exceeds the threshold");
  c_cmp->add_option("--seed", cmp.seed, "Seed for refits");

  auto* c_exp = app.add_subcommand("experiment", "Case-study experiments");
  c_exp->require_subcommand(1);
  TimescaleOptions ts;
  auto* c_ts = c_exp->add_subcommand("timescale", "Log scores under a change of time unit");
  c_ts->add_option("--fit", ts.fit, "Survival fit directory")->required()->check(CLI::ExistingDirectory);
  c_ts->add_option("--out", ts.out, "Output directory")->required();
  c_ts->add_option("--factor", ts.factor, "Time is divided by this factor");
  c_ts->add_option("--interval-length", ts.interval_length, "Interval length for interval scoring");
  c_ts->add_option("--bins", ts.bins, "Histogram bins");
  HazardOptions hz;
  auto* c_hz = c_exp->add_subcommand("hazard-curves", "Hazard curves for an example patient");
  c_hz->add_option("--fit", hz.fits, "Fit directories")->required()->check(CLI::ExistingDirectory);
  c_hz->add_option("--out", hz.out, "Output directory")->required();
  c_hz->add_option("--patient", hz.patient, "Patient JSON (raw covariate values)")->check(CLI::ExistingFile);
  c_hz->add_option("--horizon", hz.horizon, "Largest time on the grid");
  c_hz->add_option("--grid-points", hz.grid_points, "Grid points for survival families");
  c_hz->add_option("--treatment-duration", hz.treatment_duration, "Treatment length in intervals");
  c_hz->add_flag("--svg", hz.svg, "Also render SVG");

  std::string pipeline, pipeline_out;
  auto* c_run = app.add_subcommand("run", "Run a whole pipeline from one config file");
  c_run->add_option("--pipeline", pipeline, "Pipeline JSON")->required()->check(CLI::ExistingFile);
  c_run->add_option("--out", pipeline_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 2;
  }

  try {
    if (*c_sim) cmd_simulate(sim);
    else if (*c_fit) cmd_fit(fo);
    else if (*c_check) cmd_check(co);
    else if (*c_imp) cmd_impute(io);
    else if (*c_cmp) cmd_compare(cmp);
    else if (*c_ts) cmd_timescale(ts);
    else if (*c_hz) cmd_hazard_curves(hz);
    else if (*c_run) cmd_pipeline(pipeline, pipeline_out);
  } catch (const Error& e) {
    print_error(e.code(), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
  return 0;
}
