#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "survcheck/core.hpp"
#include "survcheck/io.hpp"

using namespace survcheck;

namespace {

SurvivalRecord rec(SubjectId id, double time, Status st, std::vector<double> cov = {}, double entry = 0.0) {
  SurvivalRecord r;
  r.subject_id = id;
  r.entry_time = entry;
  r.time = time;
  r.status = st;
  r.covariates = std::move(cov);
  return r;
}

SurvivalDataset random_integer_dataset(std::mt19937_64& rng, int n, bool events_only) {
  SurvivalDataset d;
  d.covariate_names = {"x", "AdjTreatm"};
  std::uniform_int_distribution<int> t(1, 10);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> x;
  for (int i = 0; i < n; ++i)
    d.records.push_back(rec(i + 1, t(rng), events_only || coin(rng) ? Status::event : Status::right_censored,
                            {x(rng), coin(rng) ? 1.0 : 0.0}));
  return d;
}

}  // namespace

TEST(Validate, EntryAfterTimeFlagged) {
  SurvivalDataset d;
  d.records.push_back(rec(1, 1.0, Status::event, {}, 2.0));
  auto v = validate_dataset(d);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, "entry_time");
}

TEST(Validate, ValidDatasetIsClean) {
  SurvivalDataset d;
  d.covariate_names = {"x"};
  d.records = {rec(1, 1, Status::event, {0.1}), rec(2, 2, Status::right_censored, {0.2}),
               rec(3, 3, Status::event, {0.3}, 1.5)};
  EXPECT_TRUE(validate_dataset(d).empty());
}

TEST(Validate, DuplicateIds) {
  SurvivalDataset d;
  d.records = {rec(60, 1, Status::event), rec(60, 2, Status::event)};
  auto v = validate_dataset(d);
  ASSERT_FALSE(v.empty());
  EXPECT_EQ(v[0].kind, "duplicate_id");
}

TEST(Validate, NonfiniteAndIntervalBounds) {
  SurvivalDataset d;
  d.covariate_names = {"x"};
  d.records = {rec(1, 1, Status::event, {std::nan("")}), rec(2, 2, Status::interval_censored, {0.0})};
  auto v = validate_dataset(d);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0].kind, "nonfinite_covariate");
  EXPECT_EQ(v[1].kind, "interval_bounds");
}

TEST(ExpandLong, PatientSixtyMatchesTableOne) {
  SurvivalDataset d;
  d.covariate_names = {"Size", "AdjTreatm"};
  d.records = {rec(60, 5, Status::event, {7.5, 1.0})};
  auto grid = TimeGrid::covering(10, 1.0);
  auto l = expand_long(d, grid, TimeDependentRules{});
  ASSERT_EQ(l.rows.size(), 5u);
  EXPECT_EQ(l.static_names, std::vector<std::string>{"Size"});
  const std::vector<double> adj{1, 1, 1, 0, 0}, tsas{0, 0, 0, 1, 2};
  const std::vector<int> ev{0, 0, 0, 0, 1};
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ(l.rows[k].subject_id, 60);
    EXPECT_EQ(l.rows[k].interval_index, static_cast<int>(k) + 1);
    EXPECT_EQ(l.rows[k].covariates[0], 7.5);
    EXPECT_EQ(l.rows[k].covariates[1], adj[k]);
    EXPECT_EQ(l.rows[k].covariates[2], tsas[k]);
    EXPECT_EQ(l.rows[k].outcome, ev[k]);
  }
}

TEST(ExpandLong, CensoredAtYearOne) {
  SurvivalDataset d;
  d.records = {rec(1, 1, Status::right_censored)};
  auto l = expand_long(d, TimeGrid::covering(1, 1.0), TimeDependentRules::none());
  ASSERT_EQ(l.rows.size(), 1u);
  EXPECT_EQ(l.rows[0].outcome, 0);
}

TEST(ExpandLong, UntreatedEventAtTwo) {
  SurvivalDataset d;
  d.covariate_names = {"AdjTreatm"};
  d.records = {rec(1, 2, Status::event, {0.0})};
  auto l = expand_long(d, TimeGrid::covering(2, 1.0), TimeDependentRules{});
  ASSERT_EQ(l.rows.size(), 2u);
  EXPECT_EQ(l.rows[0].outcome, 0);
  EXPECT_EQ(l.rows[1].outcome, 1);
  for (const auto& r : l.rows) EXPECT_EQ(r.covariates[0], 0.0);
}

TEST(ExpandLong, BoundaryBelongsToEarlierInterval) {
  SurvivalDataset d;
  d.records = {rec(1, 2.0, Status::event), rec(2, 2.0000001, Status::event)};
  auto l = expand_long(d, TimeGrid::covering(3, 1.0), TimeDependentRules::none());
  int rows1 = 0, rows2 = 0;
  for (const auto& r : l.rows) (r.subject_id == 1 ? rows1 : rows2)++;
  EXPECT_EQ(rows1, 2);
  EXPECT_EQ(rows2, 3);
}

TEST(ExpandLong, RejectsUnsupportedInput) {
  SurvivalDataset d;
  d.records = {rec(1, 2, Status::left_censored)};
  EXPECT_THROW(expand_long(d, TimeGrid::covering(2, 1.0), TimeDependentRules::none()), Error);
  d.records = {rec(1, 5, Status::event)};
  TimeGrid g{1.0, 0.0, 3};
  EXPECT_THROW(expand_long(d, g, TimeDependentRules::none()), Error);
  d.records = {rec(1, 5, Status::event, {}, 1.0)};
  EXPECT_THROW(expand_long(d, TimeGrid::covering(5, 1.0), TimeDependentRules::none()), Error);
}

TEST(ExpandLong, PropertyOutputIsValidLong) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    auto d = random_integer_dataset(rng, 1 + trial % 15, false);
    auto l = expand_long(d, TimeGrid::covering(10, 1.0), TimeDependentRules{});
    EXPECT_TRUE(validate_long(l).empty());
  }
}

TEST(ShortForm, PatientSixtyRoundTrip) {
  SurvivalDataset d;
  d.covariate_names = {"AdjTreatm"};
  d.records = {rec(60, 5, Status::event, {1.0})};
  auto s = to_short_form(expand_long(d, TimeGrid::covering(5, 1.0), TimeDependentRules{}));
  ASSERT_EQ(s.records.size(), 1u);
  EXPECT_EQ(s.records[0].subject_id, 60);
  EXPECT_EQ(s.records[0].time, 5.0);
  EXPECT_EQ(s.records[0].status, Status::event);
  EXPECT_EQ(s.column("AdjTreatm")[0], 1.0);
}

TEST(ShortForm, SingleRowCensored) {
  LongDataset l;
  l.rows.push_back({1, 1, {}, 0});
  auto s = to_short_form(l);
  EXPECT_EQ(s.records[0].status, Status::right_censored);
  EXPECT_EQ(s.records[0].time, 1.0);
}

TEST(ShortForm, PropertyRoundTripOnGrid) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    auto d = random_integer_dataset(rng, 1 + trial % 20, trial % 2 == 0);
    auto s = to_short_form(expand_long(d, TimeGrid::covering(10, 1.0), TimeDependentRules{}));
    ASSERT_EQ(s.records.size(), d.records.size());
    for (std::size_t i = 0; i < d.records.size(); ++i) {
      EXPECT_EQ(s.records[i].time, d.records[i].time);
      EXPECT_EQ(s.records[i].status, d.records[i].status);
      EXPECT_EQ(s.column("AdjTreatm")[i], d.column("AdjTreatm")[i]);
      EXPECT_EQ(s.column("x")[i], d.column("x")[i]);
    }
  }
}

TEST(TimeGridTest, IndexAndBounds) {
  TimeGrid g{2.0, 1.0, 4};
  EXPECT_EQ(g.index_of(1.5), 1);
  EXPECT_EQ(g.index_of(3.0), 1);
  EXPECT_EQ(g.index_of(3.0001), 2);
  EXPECT_DOUBLE_EQ(g.lower(2), 3.0);
  EXPECT_DOUBLE_EQ(g.upper(2), 5.0);
  EXPECT_TRUE(g.covers(9.0));
  EXPECT_FALSE(g.covers(9.5));
  EXPECT_THROW((TimeGrid{0.0, 0.0, 1}.check()), Error);
}

TEST(Rescale, DaysToMonthsAndInverse) {
  SurvivalDataset d;
  d.covariate_names = {"x"};
  d.records = {rec(1, 60, Status::event, {3.0}, 15.0)};
  auto m = rescale_time(d, 30);
  EXPECT_DOUBLE_EQ(m.records[0].time, 2.0);
  EXPECT_DOUBLE_EQ(m.records[0].entry_time, 0.5);
  EXPECT_EQ(m.records[0].covariates[0], 3.0);
  auto same = rescale_time(d, 1.0);
  EXPECT_EQ(same.records[0].time, 60.0);
  EXPECT_THROW(rescale_time(d, 0.0), Error);
  EXPECT_THROW(rescale_time(d, -2.0), Error);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.1, 100.0);
  for (int i = 0; i < 100; ++i) {
    SurvivalDataset r;
    r.records = {rec(1, u(rng), Status::event)};
    r.records[0].status = Status::interval_censored;
    r.records[0].interval_bounds = std::make_pair(r.records[0].time / 2, r.records[0].time);
    const double c = u(rng);
    auto back = rescale_time(rescale_time(r, c), 1.0 / c);
    EXPECT_NEAR(back.records[0].time, r.records[0].time, 1e-12 * r.records[0].time);
    EXPECT_NEAR(back.records[0].interval_bounds->first, r.records[0].interval_bounds->first,
                1e-12 * r.records[0].time);
  }
}

TEST(Scale, MeanZeroSdHalf) {
  SurvivalDataset d;
  d.covariate_names = {"x", "b"};
  d.records = {rec(1, 1, Status::event, {1, 0}), rec(2, 2, Status::event, {2, 1}),
               rec(3, 3, Status::event, {3, 1})};
  auto [s, scaling] = scale_covariates(d, {"x", "b"});
  auto x = s.column("x");
  EXPECT_NEAR(x[0], -0.5, 1e-15);
  EXPECT_NEAR(x[1], 0.0, 1e-15);
  EXPECT_NEAR(x[2], 0.5, 1e-15);
  ASSERT_EQ(scaling.size(), 2u);
  EXPECT_DOUBLE_EQ(scaling[1].mean, 2.0 / 3.0);
  EXPECT_NEAR(scaling[1].sd, std::sqrt(1.0 / 3.0), 1e-15);
  EXPECT_NEAR(scaling[0].invert(x[2]), 3.0, 1e-14);

  auto [again, _] = scale_covariates(s, {"x"});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(again.column("x")[i], x[i], 1e-14);

  SurvivalDataset flat;
  flat.covariate_names = {"c"};
  flat.records = {rec(1, 1, Status::event, {2}), rec(2, 2, Status::event, {2})};
  EXPECT_THROW(scale_covariates(flat, {"c"}), Error);
}

TEST(Scale, PropertyMomentsOnRandomData) {
  std::mt19937_64 rng(5);
  std::lognormal_distribution<double> ln(1.0, 0.8);
  for (int t = 0; t < 50; ++t) {
    SurvivalDataset d;
    d.covariate_names = {"v"};
    for (int i = 0; i < 30; ++i) d.records.push_back(rec(i, 1, Status::event, {ln(rng)}));
    auto v = scale_covariates(d, {"v"}).first.column("v");
    double m = 0, ss = 0;
    for (double x : v) m += x;
    m /= v.size();
    for (double x : v) ss += (x - m) * (x - m);
    EXPECT_LT(std::abs(m), 1e-10);
    EXPECT_LT(std::abs(std::sqrt(ss / (v.size() - 1)) - 0.5), 1e-10);
  }
}

TEST(Csv, DatasetRoundTrip) {
  std::istringstream in(
      "# comment\n"
      "subject_id,entry_time,time,status,interval_lower,x\n"
      "1,0,2.5,event,,1.5\n"
      "2,0.5,3,rcens,,-2\n"
      "3,0,4,icens,1,0\n");
  auto d = dataset_from_csv(parse_csv(in));
  ASSERT_EQ(d.records.size(), 3u);
  EXPECT_EQ(d.covariate_names, std::vector<std::string>{"x"});
  EXPECT_EQ(d.records[1].status, Status::right_censored);
  EXPECT_EQ(d.records[1].entry_time, 0.5);
  ASSERT_TRUE(d.records[2].interval_bounds.has_value());
  EXPECT_EQ(d.records[2].interval_bounds->first, 1.0);
  std::ostringstream out;
  write_dataset(out, d);
  std::istringstream back(out.str());
  auto d2 = dataset_from_csv(parse_csv(back));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(d2.records[i].time, d.records[i].time);
    EXPECT_EQ(d2.records[i].status, d.records[i].status);
    EXPECT_EQ(d2.records[i].covariates, d.records[i].covariates);
  }
}

TEST(Csv, LongAndDrawsRoundTrip) {
  SurvivalDataset d;
  d.covariate_names = {"Size", "AdjTreatm"};
  d.records = {rec(60, 5, Status::event, {0.1 + 0.2, 1.0}), rec(61, 2, Status::right_censored, {1.0 / 3, 0.0})};
  auto l = expand_long(d, TimeGrid::covering(5, 1.0), TimeDependentRules{});
  std::ostringstream out;
  write_long(out, l);
  std::istringstream in(out.str());
  auto l2 = long_from_csv(parse_csv(in));
  EXPECT_EQ(l2.covariate_names(), l.covariate_names());
  ASSERT_EQ(l2.rows.size(), l.rows.size());
  for (std::size_t i = 0; i < l.rows.size(); ++i) {
    EXPECT_EQ(l2.rows[i].covariates, l.rows[i].covariates);
    EXPECT_EQ(l2.rows[i].outcome, l.rows[i].outcome);
  }

  DrawsMatrix dm;
  dm.parameter_names = {"a", "b"};
  dm.values.resize(2, 2);
  dm.values << 0.1, -1e-300, 1.0 / 3, 2e10;
  dm.chain_ids = {1, 2};
  std::ostringstream dout;
  write_draws(dout, dm);
  std::istringstream din(dout.str());
  auto dm2 = draws_from_csv(parse_csv(din));
  EXPECT_EQ(dm2.parameter_names, dm.parameter_names);
  EXPECT_EQ(dm2.chain_ids, dm.chain_ids);
  EXPECT_TRUE(dm2.values == dm.values);
}

TEST(Csv, BadInputsRaise) {
  std::istringstream missing("subject_id,time\n1,2\n");
  EXPECT_THROW(dataset_from_csv(parse_csv(missing)), Error);
  std::istringstream bad_status("subject_id,time,status\n1,2,dead\n");
  EXPECT_THROW(dataset_from_csv(parse_csv(bad_status)), Error);
  std::istringstream bad_num("subject_id,time,status\n1,abc,event\n");
  EXPECT_THROW(dataset_from_csv(parse_csv(bad_num)), Error);
  std::istringstream nonfinite("a\nnan\n");
  EXPECT_THROW(draws_from_csv(parse_csv(nonfinite)), Error);
}
