#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json load(const fs::path& p) { return json::parse(slurp(p)); }

std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

fs::path scratch() {
  static const fs::path root = [] {
    auto p = fs::temp_directory_path() / ("survcheck_cli_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

Result run(const std::string& args) {
  const char* bin = std::getenv("SURVCHECK_BIN");
  Result r;
  if (!bin) return r;
  const auto out = scratch() / "stdout.txt", err = scratch() / "stderr.txt";
  const std::string cmd = std::string(bin) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

const char* kSampler = " --chains 2 --warmup 400 --keep 200 --thin 1 --seed 3";

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    if (!std::getenv("SURVCHECK_BIN")) return;
    const auto d = scratch();
    ok_ = run("simulate --out " + (d / "sim").string() + " --n-subjects 150 --seed 5").code == 0;
    for (const char* p : {"exponential", "weibull", "bernoulli"})
      ok_ = ok_ && run("fit --data " + (d / "sim" / "long.csv").string() + " --preset " + p + " --out " +
                       (d / (std::string("fit_") + p)).string() + kSampler)
                           .code == 0;
  }

  static void TearDownTestSuite() { fs::remove_all(scratch()); }

  void SetUp() override {
    if (!std::getenv("SURVCHECK_BIN")) GTEST_SKIP() << "SURVCHECK_BIN not set";
    ASSERT_TRUE(ok_) << "shared simulate/fit setup failed";
  }

  static fs::path dir(const std::string& name) { return scratch() / name; }
  static std::string fit(const std::string& preset) { return dir("fit_" + preset).string(); }

  static bool ok_;
};

bool Cli::ok_ = false;

}  // namespace

TEST_F(Cli, SimulateWritesDataAndManifest) {
  const auto d = dir("sim");
  for (const char* f : {"long.csv", "short.csv", "scenario.json", "report.json", "manifest.json"})
    EXPECT_TRUE(fs::exists(d / f)) << f;
  const auto m = load(d / "manifest.json");
  EXPECT_EQ(m["command"], "simulate");
  EXPECT_EQ(m["seed"].get<int>(), 5);
  EXPECT_EQ(load(d / "report.json")["report"]["n_subjects"].get<int>(), 150);
}

TEST_F(Cli, FitWritesDrawsAndDiagnostics) {
  const auto d = fs::path(fit("weibull"));
  const auto model = load(d / "model.json");
  EXPECT_EQ(model["sampler"]["n_chains"].get<int>(), 2);
  EXPECT_EQ(model["sampler"]["seed"].get<int>(), 3);
  std::ifstream in(d / "draws.csv");
  std::string line;
  int rows = -1;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 400);
  const auto diag = load(d / "diagnostics.json");
  EXPECT_EQ(diag["diagnostics"]["parameters"].size(), 20u);
  EXPECT_EQ(load(d / "manifest.json")["seed"].get<int>(), 3);
}

TEST_F(Cli, KmCutoffPropagates) {
  const auto out = dir("km");
  const auto r = run("check km --fit " + fit("exponential") + " --out " + out.string() +
                     " --cutoff-factor 1.2 --replicates 30 --svg");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto plot = load(out / "km.json")["plot"];
  const double max_t = plot["metadata"]["max_observed_time"].get<double>();
  int predictive = 0;
  for (const auto& s : plot["series"]) {
    if (s["name"].get<std::string>().rfind("predictive", 0) != 0) continue;
    ++predictive;
    EXPECT_NEAR(s["data"]["x"].back().get<double>(), 1.2 * max_t, 1e-12);
  }
  EXPECT_EQ(predictive, 30);
  EXPECT_TRUE(fs::exists(out / "km.svg"));
  EXPECT_EQ(load(out / "km.json")["config"]["cutoff_factor"].get<double>(), 1.2);
}

TEST_F(Cli, OtherChecksRun) {
  for (const char* kind : {"intervals", "pit-ecdf"}) {
    const auto out = dir(std::string("check_") + kind);
    const auto r = run(std::string("check ") + kind + " --fit " + fit("weibull") + " --out " + out.string() +
                       " --replicates 100 --n-sim 200");
    EXPECT_EQ(r.code, 0) << kind << ": " << r.err;
    EXPECT_TRUE(fs::exists(out / "manifest.json")) << kind;
  }
  const auto out = dir("check_cal");
  const auto r = run("check calibration --fit " + fit("bernoulli") + " --out " + out.string() + " --n-sim 200 --zoom");
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(out / "calibration_zoom.json"));
}

TEST_F(Cli, CompareDichotomizedSchema) {
  const auto out = dir("cmp_dich");
  const auto r = run("compare dichotomized --fit " + fit("exponential") + " --fit " + fit("weibull") + " --out " +
                     out.string() + " --horizon 5");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto c = load(out / "comparison.json")["comparison"];
  EXPECT_EQ(c["columns"], json({"model", "delta_elpd_loo", "se_delta_elpd_loo"}));
  ASSERT_EQ(c["rows"].size(), 2u);
  EXPECT_EQ(c["rows"][0]["delta_elpd_loo"].get<double>(), 0.0);
  EXPECT_EQ(c["rows"][0]["se_delta_elpd_loo"].get<double>(), 0.0);
  EXPECT_LE(c["rows"][1]["delta_elpd_loo"].get<double>(), 0.0);
  EXPECT_GT(c["rows"][1]["se_delta_elpd_loo"].get<double>(), 0.0);
  for (const auto& row : c["rows"]) {
    EXPECT_TRUE(row.contains("elpd_loo"));
    EXPECT_TRUE(row.contains("se"));
  }
  EXPECT_EQ(load(out / "comparison.json")["config"]["horizon"].get<double>(), 5.0);
}

TEST_F(Cli, CompareIntervalAcrossFamilies) {
  const auto out = dir("cmp_int");
  const auto r = run("compare interval --fit " + fit("exponential") + " --fit " + fit("weibull") + " --fit " +
                     fit("bernoulli") + " --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = load(out / "comparison.json")["comparison"]["rows"];
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0]["delta_elpd_loo"].get<double>(), 0.0);
}

TEST_F(Cli, TimescaleAssertion) {
  const auto out = dir("timescale");
  const auto r = run("experiment timescale --fit " + fit("weibull") + " --out " + out.string() + " --factor 30");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_FALSE(r.out.empty());
  const auto res = load(out / "timescale.json")["result"];
  EXPECT_TRUE(res["holds"].get<bool>());
  EXPECT_NEAR(res["log_factor"].get<double>(), std::log(30.0), 1e-15);
  EXPECT_LE(res["max_censored_change"].get<double>(), 1e-10);
  EXPECT_LE(res["max_event_shift_error"].get<double>(), 1e-10);
  EXPECT_LE(res["max_interval_change"].get<double>(), 1e-10);
  EXPECT_EQ(res["n_censored"].get<int>() + res["n_events"].get<int>(), 150);
}

TEST_F(Cli, HazardCurves) {
  const auto out = dir("hazard");
  const auto r = run("experiment hazard-curves --fit " + fit("exponential") + " --fit " + fit("bernoulli") +
                     " --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto models = load(out / "hazard_curves.json")["models"];
  ASSERT_EQ(models.size(), 2u);
  EXPECT_TRUE(models[0]["checks"]["constant_hazard"].get<bool>());
  EXPECT_TRUE(models[1].contains("treated"));
  EXPECT_TRUE(models[1].contains("untreated"));
}

TEST_F(Cli, ImputeExceedsCensoring) {
  const auto out = dir("impute");
  const auto r = run("impute --fit " + fit("exponential") + " --out " + out.string() + " --replicates 2");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto original = csv_rows(fs::path(fit("exponential")) / "data.csv");
  for (const char* f : {"imputed_0.csv", "imputed_1.csv"}) {
    const auto imputed = csv_rows(out / f);
    ASSERT_EQ(imputed.size(), original.size());
    int n_imputed = 0;
    for (std::size_t i = 1; i < imputed.size(); ++i) {
      // columns: subject_id, entry_time, time, status, ..., imputed
      EXPECT_EQ(imputed[i][3], "event");
      if (imputed[i].back() == "1") {
        ++n_imputed;
        EXPECT_EQ(original[i][3], "rcens");
        EXPECT_GT(std::stod(imputed[i][2]), std::stod(original[i][2]));
      } else {
        EXPECT_EQ(imputed[i][2], original[i][2]);
      }
    }
    EXPECT_GT(n_imputed, 0);
  }
}

TEST_F(Cli, ModuleErrorIsJson) {
  const auto r = run("check calibration --fit " + fit("weibull") + " --out " + dir("bad_cal").string());
  EXPECT_EQ(r.code, 1);
  const auto e = json::parse(r.err);
  EXPECT_TRUE(e["error"].contains("code"));
  EXPECT_TRUE(e["error"].contains("message"));
}

TEST_F(Cli, UsageErrorIsJson) {
  const auto r = run("fit --data /nonexistent.csv --preset weibull --out " + dir("bad_fit").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(json::parse(r.err)["error"]["code"], "usage");
  const auto bad = run("fit --data " + (dir("sim") / "long.csv").string() + " --preset gompertz --out " +
                       dir("bad_preset").string() + kSampler);
  EXPECT_EQ(bad.code, 1);
  EXPECT_NO_THROW(json::parse(bad.err));
}

TEST_F(Cli, RerunsAreByteIdentical) {
  const std::string args = " --fit " + fit("weibull") + " --replicates 20 --seed 9 --out ";
  ASSERT_EQ(run("check km" + args + dir("km_a").string()).code, 0);
  ASSERT_EQ(run("check km" + args + dir("km_b").string()).code, 0);
  for (const char* f : {"km.json", "km.csv", "manifest.json"})
    EXPECT_EQ(slurp(dir("km_a") / f), slurp(dir("km_b") / f)) << f;

  const std::string fargs = "fit --data " + (dir("sim") / "short.csv").string() + " --preset exponential" + kSampler;
  ASSERT_EQ(run(fargs + " --out " + dir("fit_a").string()).code, 0);
  ASSERT_EQ(run(fargs + " --out " + dir("fit_b").string()).code, 0);
  for (const char* f : {"draws.csv", "model.json", "diagnostics.json", "manifest.json"})
    EXPECT_EQ(slurp(dir("fit_a") / f), slurp(dir("fit_b") / f)) << f;
}

TEST_F(Cli, HelpPrintsDefaults) {
  const auto r = run("fit --help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("--thin"), std::string::npos);
  EXPECT_NE(r.out.find("2000"), std::string::npos);
  EXPECT_NE(r.out.find("0.35"), std::string::npos);
}

TEST_F(Cli, PipelineRunsEndToEnd) {
  const auto cfg = dir("pipeline.json");
  std::ofstream(cfg) << json{{"scenario", {{"n_subjects", 80}, {"seed", 2}}},
                            {"sampler", {{"n_chains", 2}, {"n_warmup", 200}, {"n_keep", 100}, {"thin", 1}}},
                            {"presets", {"exponential", "bernoulli"}},
                            {"checks", {{"n_sim", 100}}}}
                            .dump();
  const auto out = dir("pipeline");
  const auto r = run("run --pipeline " + cfg.string() + " --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = load(out / "manifest.json");
  EXPECT_EQ(m["command"], "run");
  EXPECT_TRUE(fs::exists(out / "simulate" / "long.csv"));
  EXPECT_TRUE(fs::exists(out / "fit_bernoulli" / "draws.csv"));
}
