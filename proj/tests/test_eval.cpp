#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "roro/eval.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace roro;

namespace {

SweepPoint pt(double th, double acc, double flops, bool valid = true) {
  SweepPoint p;
  p.threshold = th;
  p.accuracy = acc;
  p.total_flops = flops;
  p.valid = valid;
  return p;
}

RoutingTrajectory with_usage(std::size_t lrm_steps, std::size_t n) {
  RoutingTrajectory t;
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = i < lrm_steps ? RoutingAction::Regenerate : RoutingAction::Continue;
    ReasoningStep s;
    s.producer = producer_for(a);
    t.steps.push_back(s);
    t.actions.push_back(a);
  }
  return t;
}

}  // namespace

TEST(ThresholdGrid, TwentyOnePoints) {
  auto g = threshold_grid();
  ASSERT_EQ(g.size(), 21u);
  EXPECT_EQ(g.front(), 0.0);
  EXPECT_EQ(g.back(), 1.0);
  EXPECT_DOUBLE_EQ(g[7], 0.35);
}

TEST(BudgetedAccuracy, HandFixture) {
  std::vector<SweepPoint> pts = {pt(0.1, 0.70, 200), pt(0.2, 0.78, 380), pt(0.3, 0.85, 450)};
  auto r = budgeted_accuracy(pts, 1000, 40);
  ASSERT_TRUE(r.ba.has_value());
  EXPECT_EQ(*r.ba, 0.78);
  EXPECT_EQ(r.achieving_threshold, 0.2);
  EXPECT_EQ(*budgeted_accuracy(pts, 1000, 100).ba, 0.85);
  auto none = budgeted_accuracy(pts, 1000, 10);
  EXPECT_FALSE(none.ba.has_value());
  EXPECT_FALSE(none.diagnostic.empty());
  EXPECT_THROW(budgeted_accuracy({}, 1000, 40), Error);
}

TEST(BudgetedAccuracy, InvalidPointsAndTies) {
  std::vector<SweepPoint> pts = {pt(0.0, 0.9, 100, false), pt(0.5, 0.6, 300), pt(0.6, 0.6, 250)};
  auto r = budgeted_accuracy(pts, 1000, 40);
  EXPECT_EQ(*r.ba, 0.6);
  EXPECT_EQ(r.achieving_threshold, 0.6);
  EXPECT_EQ(r.excluded_invalid, 1u);
}

TEST(BudgetedAccuracy, MonotoneInBudget) {
  std::mt19937_64 g(1);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<SweepPoint> pts;
    for (double th : threshold_grid()) pts.push_back(pt(th, uniform01(g), 1000 * uniform01(g), g() % 10 != 0));
    std::optional<double> prev;
    for (double b = 0; b <= 100; b += 5) {
      auto r = budgeted_accuracy(pts, 1000, b);
      if (prev) {
        ASSERT_TRUE(r.ba.has_value());
        ASSERT_GE(*r.ba, *prev);
      }
      if (r.ba) prev = r.ba;
    }
  }
}

TEST(ParetoFrontier, DropsDominatedPoints) {
  auto f = pareto_frontier({pt(0, 0.5, 100), pt(1, 0.4, 150), pt(2, 0.7, 300), pt(3, 0.7, 400), pt(4, 0.9, 90, false),
                            pt(5, 0.8, 500)});
  ASSERT_EQ(f.size(), 3u);
  EXPECT_EQ(f[0].threshold, 0);
  EXPECT_EQ(f[1].threshold, 2);
  EXPECT_EQ(f[2].threshold, 5);
}

TEST(Sweep, LearnedCutoffEndpoints) {
  fixture::World w;
  auto data = synth::generate_dataset(w.cfg, 20, 2);
  auto pol = std::make_shared<const RouterPolicy>(RouterPolicy::initialized(16, 2));
  auto pts = sweep(PolicyKind::learned(pol, 0.5), data, *w.srm, *w.lrm, EngineLimits{});
  ASSERT_EQ(pts.size(), 21u);
  EXPECT_EQ(pts.front().lrm_usage, 1.0);
  EXPECT_EQ(pts.back().lrm_usage, 0.0);
  const double lrm = evaluate(PolicyKind::lrm_only(), data, *w.srm, *w.lrm, EngineLimits{}).total_flops;
  const double srm = evaluate(PolicyKind::srm_only(), data, *w.srm, *w.lrm, EngineLimits{}).total_flops;
  EXPECT_EQ(pts.front().total_flops, lrm);
  EXPECT_EQ(pts.back().total_flops, srm);
  EXPECT_EQ(sweep_csv(pts), sweep_csv(sweep(PolicyKind::learned(pol, 0.5), data, *w.srm, *w.lrm, EngineLimits{})));
}

TEST(Evaluate, FlopsMatchOracle) {
  fixture::World w;
  auto data = synth::generate_dataset(w.cfg, 30, 3);
  auto run = evaluate(PolicyKind::entropy_threshold(0.4), data, *w.srm, *w.lrm, EngineLimits{});
  double expected = 0.0;
  for (const auto& t : run.trajectories) {
    std::size_t regen = 0;
    for (auto a : t.actions) regen += a == RoutingAction::Regenerate;
    expected += oracle::synthetic_flops(t.actions.size(), regen, w.cfg, 1.7e9, 14e9);
  }
  EXPECT_NEAR(run.total_flops, expected, 1e-6 * expected);
  EXPECT_EQ(run.failures, 0u);
}

TEST(Evaluate, MissingGoldRejected) {
  fixture::World w;
  auto data = synth::generate_dataset(w.cfg, 2, 3);
  data[1].gold_answer.reset();
  EXPECT_THROW(evaluate(PolicyKind::srm_only(), data, *w.srm, *w.lrm, EngineLimits{}), Error);
}

TEST(DifficultyBucket, Boundaries) {
  EXPECT_EQ(difficulty_bucket(1), DifficultyBucket::Easy);
  EXPECT_EQ(difficulty_bucket(3), DifficultyBucket::Easy);
  EXPECT_EQ(difficulty_bucket(4), DifficultyBucket::Medium);
  EXPECT_EQ(difficulty_bucket(5), DifficultyBucket::Medium);
  EXPECT_EQ(difficulty_bucket(6), DifficultyBucket::Hard);
  EXPECT_EQ(difficulty_bucket(7), DifficultyBucket::Hard);
  EXPECT_EQ(difficulty_bucket(8), DifficultyBucket::ExtraHard);
  EXPECT_EQ(difficulty_bucket(10), DifficultyBucket::ExtraHard);
  EXPECT_EQ(difficulty_bucket(3.4), DifficultyBucket::Easy);
  EXPECT_EQ(difficulty_bucket(3.5), DifficultyBucket::Medium);
}

TEST(DifficultyUsage, BucketMeans) {
  std::vector<RoutingTrajectory> ts = {with_usage(1, 5), with_usage(2, 5), with_usage(3, 5), with_usage(4, 5),
                                       with_usage(0, 5), with_usage(5, 5)};
  std::vector<std::optional<double>> d = {2.0, 4.0, 6.0, 9.0, std::nullopt, 9.0};
  auto b = difficulty_usage(ts, d);
  EXPECT_NEAR(b.usage[0], 0.2, 1e-12);
  EXPECT_NEAR(b.usage[1], 0.4, 1e-12);
  EXPECT_NEAR(b.usage[2], 0.6, 1e-12);
  EXPECT_NEAR(b.usage[3], 0.9, 1e-12);
  EXPECT_EQ(b.count[3], 2u);
  EXPECT_EQ(b.skipped, 1u);
  EXPECT_THROW(difficulty_usage(ts, {}), Error);

  std::vector<RoutingTrajectory> srm_only = {with_usage(0, 4), with_usage(0, 3)};
  auto z = difficulty_usage(srm_only, {1.0, 10.0});
  for (double u : z.usage) EXPECT_EQ(u, 0.0);
}

TEST(DifficultiesOf, LooksUpById) {
  QueryRecord a, b;
  a.id = "a";
  a.difficulty = 7.0;
  b.id = "b";
  RoutingTrajectory ta, tb, tc;
  ta.query_id = "a";
  tb.query_id = "b";
  tc.query_id = "zzz";
  auto d = difficulties_of({ta, tb, tc}, {a, b});
  EXPECT_EQ(d[0], 7.0);
  EXPECT_FALSE(d[1].has_value());
  EXPECT_FALSE(d[2].has_value());
}

TEST(Latency, Speedups) {
  EXPECT_NEAR(speedup(104.095, 41.375), 2.516, 5e-4);
  EXPECT_THROW(speedup(1.0, 0.0), Error);
  LatencyModel m{0.001, 0.010, false};
  auto policy = with_usage(5, 10);
  auto lrm = with_usage(10, 10);
  auto rep = latency_report({policy}, {lrm}, m);
  EXPECT_NEAR(rep.policy_seconds_per_query, 0.055, 1e-12);
  EXPECT_NEAR(rep.lrm_only_seconds_per_query, 0.100, 1e-12);
  EXPECT_NEAR(rep.speedup, 100.0 / 55.0, 1e-12);
  EXPECT_NEAR(latency_report({lrm}, {lrm}, m).speedup, 1.0, 1e-12);
  m.charge_replaced_drafts = true;
  EXPECT_NEAR(latency_report({policy}, {lrm}, m).speedup, 110.0 / 60.0, 1e-12);
}

TEST(Latency, RecordedSecondsAndFailures) {
  RoutingTrajectory a, b, bad;
  a.latency_seconds = 2.0;
  b.latency_seconds = 4.0;
  bad.failed = true;
  bad.latency_seconds = 100.0;
  auto r = latency_report({a, bad}, {b});
  EXPECT_NEAR(r.speedup, 2.0, 1e-12);
  EXPECT_THROW(latency_report({bad}, {b}), Error);
}

TEST(SignalComparison, MissingRouterOmitted) {
  fixture::World w;
  auto data = synth::generate_dataset(w.cfg, 10, 4);
  auto pol = std::make_shared<const RouterPolicy>(RouterPolicy::initialized(8, 4));
  auto out = signal_comparison(data, {Signal::AvgEntropy, Signal::AvgNll}, {{Signal::AvgEntropy, pol}}, *w.srm,
                               *w.lrm, EngineLimits{}, EvalOptions{});
  ASSERT_EQ(out.rows.size(), 1u);
  EXPECT_EQ(out.rows[0].signal, Signal::AvgEntropy);
  ASSERT_EQ(out.warnings.size(), 1u);
  for (const auto& ba : out.rows[0].ba) EXPECT_TRUE(ba.has_value());

  auto again = signal_comparison(data, {Signal::AvgEntropy}, {{Signal::AvgEntropy, pol}}, *w.srm, *w.lrm,
                                 EngineLimits{}, EvalOptions{});
  EXPECT_EQ(again.rows[0].ba, out.rows[0].ba);
}
