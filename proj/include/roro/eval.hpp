#pragma once

// Threshold sweeps, budgeted accuracy, accuracy/FLOPs frontiers, LRM usage by
// difficulty bucket, uncertainty-signal comparison and latency reporting.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "roro/backends.hpp"
#include "roro/core.hpp"
#include "roro/parallel.hpp"
#include "roro/rng.hpp"
#include "roro/routing.hpp"

namespace roro {

inline constexpr std::size_t kSweepPoints = 21;

// 0.00, 0.05, ..., 1.00
inline std::vector<double> threshold_grid() {
  std::vector<double> g;
  for (std::size_t i = 0; i < kSweepPoints; ++i) g.push_back(static_cast<double>(i) / 20.0);
  return g;
}

struct EvalOptions {
  Signal signal = Signal::AvgEntropy;
  FlopsModel flops;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  AnswerMatcher matcher = exact_match;
};

struct EvalRun {
  std::vector<RoutingTrajectory> trajectories;
  std::size_t failures = 0;
  double accuracy = 0.0;
  double total_flops = 0.0;
  double lrm_usage = 0.0;
  double wall_seconds = 0.0;
};

// Runs `pk` on every query. Query i uses trajectory stream (seed, id, 0), so
// all policies evaluated with the same seed see the same drafts.
inline EvalRun evaluate(const PolicyKind& pk, const std::vector<QueryRecord>& dataset, Backend& srm, Backend& lrm,
                        const EngineLimits& limits, const EvalOptions& opt = {}) {
  EvalRun run;
  run.trajectories.resize(dataset.size());
  RunOptions ro;
  ro.signal = opt.signal;
  ro.matcher = opt.matcher;
  const auto t0 = std::chrono::steady_clock::now();
  parallel_for(dataset.size(), opt.workers, [&](std::size_t i) {
    if (!dataset[i].gold_answer) throw Error("evaluate: query " + dataset[i].id + " has no gold answer");
    run.trajectories[i] =
        run_trajectory(dataset[i], srm, lrm, pk, limits, trajectory_stream(opt.seed, dataset[i].id, 0), ro).trajectory;
  });
  run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::size_t correct = 0, n = 0;
  double usage = 0.0;
  for (const auto& t : run.trajectories) {
    if (t.failed) {
      ++run.failures;
      continue;
    }
    ++n;
    correct += t.outcome_correct.value_or(false) ? 1 : 0;
    run.total_flops += flops_of_trajectory(t, opt.flops);
    usage += t.actions.empty() ? 0.0 : lrm_usage_rate(t);
  }
  if (n) {
    run.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    run.lrm_usage = usage / static_cast<double>(n);
  }
  return run;
}

struct SweepPoint {
  double threshold = 0.0;
  double accuracy = 0.0;
  double total_flops = 0.0;
  double lrm_usage = 0.0;
  double wall_seconds = 0.0;
  bool valid = true;
};

inline SweepPoint sweep_point(double threshold, const EvalRun& r) {
  return {threshold, r.accuracy, r.total_flops, r.lrm_usage, r.wall_seconds, r.failures == 0};
}

// One evaluation per grid threshold; the threshold replaces the policy's
// parameter (random probability, uncertainty threshold, or learned cutoff).
inline std::vector<SweepPoint> sweep(const PolicyKind& pk, const std::vector<QueryRecord>& dataset, Backend& srm,
                                     Backend& lrm, const EngineLimits& limits, const EvalOptions& opt = {}) {
  std::vector<SweepPoint> out;
  for (double th : threshold_grid()) out.push_back(sweep_point(th, evaluate(pk.with_param(th), dataset, srm, lrm, limits, opt)));
  return out;
}

struct BudgetReport {
  double budget_pct = 0.0;
  std::optional<double> ba;
  double achieving_threshold = 0.0;
  double lrm_only_flops = 0.0;
  std::size_t excluded_invalid = 0;
  std::string diagnostic;
};

// Highest accuracy among valid points within budget_pct% of LRM-only FLOPs.
// Ties on accuracy go to the cheaper point.
inline BudgetReport budgeted_accuracy(const std::vector<SweepPoint>& points, double lrm_only_flops, double budget_pct) {
  if (points.empty()) throw Error("budgeted_accuracy: empty point list");
  BudgetReport rep;
  rep.budget_pct = budget_pct;
  rep.lrm_only_flops = lrm_only_flops;
  const double cap = budget_pct / 100.0 * lrm_only_flops;
  const SweepPoint* best = nullptr;
  for (const auto& p : points) {
    if (!p.valid) {
      ++rep.excluded_invalid;
      continue;
    }
    if (p.total_flops > cap) continue;
    if (!best || p.accuracy > best->accuracy || (p.accuracy == best->accuracy && p.total_flops < best->total_flops))
      best = &p;
  }
  if (best) {
    rep.ba = best->accuracy;
    rep.achieving_threshold = best->threshold;
  } else {
    char buf[160];
    std::snprintf(buf, sizeof buf, "no valid point within %g%% of LRM-only FLOPs (cap %.6g)", budget_pct, cap);
    rep.diagnostic = buf;
  }
  return rep;
}

// Points not dominated in (lower FLOPs, higher accuracy), sorted by FLOPs.
inline std::vector<SweepPoint> pareto_frontier(std::vector<SweepPoint> points) {
  std::erase_if(points, [](const SweepPoint& p) { return !p.valid; });
  std::sort(points.begin(), points.end(), [](const SweepPoint& a, const SweepPoint& b) {
    return a.total_flops != b.total_flops ? a.total_flops < b.total_flops : a.accuracy > b.accuracy;
  });
  std::vector<SweepPoint> f;
  for (const auto& p : points)
    if (f.empty() || p.accuracy > f.back().accuracy) f.push_back(p);
  return f;
}

inline std::string sweep_csv(const std::vector<SweepPoint>& pts) {
  std::string out = "threshold,accuracy,total_flops,lrm_usage,valid\n";
  char buf[256];
  for (const auto& p : pts) {
    std::snprintf(buf, sizeof buf, "%.2f,%.10g,%.10g,%.10g,%d\n", p.threshold, p.accuracy, p.total_flops,
                  p.lrm_usage, p.valid ? 1 : 0);
    out += buf;
  }
  return out;
}

// Difficulty buckets on the 1-10 scale: easy 1-3, medium 4-5, hard 6-7,
// extra hard 8-10. Real-valued labels are rounded to the nearest integer.
enum class DifficultyBucket { Easy = 0, Medium = 1, Hard = 2, ExtraHard = 3 };

inline constexpr std::array<std::string_view, 4> kBucketNames = {"easy", "medium", "hard", "extra_hard"};

inline DifficultyBucket difficulty_bucket(double label) {
  const double r = std::round(label);
  if (r <= 3.0) return DifficultyBucket::Easy;
  if (r <= 5.0) return DifficultyBucket::Medium;
  if (r <= 7.0) return DifficultyBucket::Hard;
  return DifficultyBucket::ExtraHard;
}

struct BucketUsage {
  std::array<double, 4> usage{};
  std::array<std::size_t, 4> count{};
  std::size_t skipped = 0;  // trajectories without a difficulty label
};

inline BucketUsage difficulty_usage(const std::vector<RoutingTrajectory>& trajs,
                                    const std::vector<std::optional<double>>& difficulty) {
  if (trajs.size() != difficulty.size()) throw Error("difficulty_usage: one difficulty slot per trajectory required");
  BucketUsage b;
  std::array<double, 4> sum{};
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    if (!difficulty[i] || trajs[i].actions.empty()) {
      ++b.skipped;
      continue;
    }
    const auto k = static_cast<std::size_t>(difficulty_bucket(*difficulty[i]));
    sum[k] += lrm_usage_rate(trajs[i]);
    ++b.count[k];
  }
  for (std::size_t k = 0; k < 4; ++k) b.usage[k] = b.count[k] ? sum[k] / static_cast<double>(b.count[k]) : 0.0;
  return b;
}

inline std::vector<std::optional<double>> difficulties_of(const std::vector<RoutingTrajectory>& trajs,
                                                          const std::vector<QueryRecord>& dataset) {
  std::map<std::string, std::optional<double>> by_id;
  for (const auto& q : dataset) by_id[q.id] = q.difficulty;
  std::vector<std::optional<double>> out;
  for (const auto& t : trajs) {
    auto it = by_id.find(t.query_id);
    out.push_back(it == by_id.end() ? std::nullopt : it->second);
  }
  return out;
}

inline constexpr std::array<double, 3> kBudgets = {20.0, 40.0, 60.0};

struct SignalRow {
  Signal signal = Signal::AvgEntropy;
  std::array<std::optional<double>, 3> ba{};
};

struct SignalComparison {
  std::vector<SignalRow> rows;
  std::vector<std::string> warnings;
};

// BA at 20/40/60% for one learned router per signal; signals without a
// router are omitted with a warning.
inline SignalComparison signal_comparison(const std::vector<QueryRecord>& dataset, const std::vector<Signal>& signals,
                                          const std::map<Signal, std::shared_ptr<const RouterPolicy>>& routers,
                                          Backend& srm, Backend& lrm, const EngineLimits& limits, EvalOptions opt) {
  SignalComparison out;
  const double lrm_flops = evaluate(PolicyKind::lrm_only(), dataset, srm, lrm, limits, opt).total_flops;
  for (Signal s : signals) {
    auto it = routers.find(s);
    if (it == routers.end() || !it->second) {
      out.warnings.push_back("no router for signal " + std::string(to_string(s)) + ", row omitted");
      continue;
    }
    opt.signal = s;
    const auto pts = sweep(PolicyKind::learned(it->second, 0.5), dataset, srm, lrm, limits, opt);
    SignalRow row;
    row.signal = s;
    for (std::size_t b = 0; b < kBudgets.size(); ++b) row.ba[b] = budgeted_accuracy(pts, lrm_flops, kBudgets[b]).ba;
    out.rows.push_back(row);
  }
  return out;
}

// Per-step latency charged to the producer of each accepted step. With
// `charge_replaced_drafts`, the SRM draft behind every regenerated step is
// charged as well.
struct LatencyModel {
  double srm_seconds_per_step = 0.0;
  double lrm_seconds_per_step = 0.0;
  bool charge_replaced_drafts = false;
};

inline double trajectory_latency(const RoutingTrajectory& t, const LatencyModel& m) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    if (t.steps[i].producer == Producer::LRM) {
      s += m.lrm_seconds_per_step;
      if (m.charge_replaced_drafts) s += m.srm_seconds_per_step;
    } else {
      s += m.srm_seconds_per_step;
    }
  }
  return s;
}

struct LatencyReport {
  double policy_seconds_per_query = 0.0;
  double lrm_only_seconds_per_query = 0.0;
  double speedup = 0.0;
};

inline double speedup(double lrm_only_seconds, double policy_seconds) {
  if (!(policy_seconds > 0.0)) throw Error("speedup: policy latency must be positive");
  return lrm_only_seconds / policy_seconds;
}

// Mean latency per query from a latency model, or from the recorded
// per-trajectory latency when no model is given.
inline LatencyReport latency_report(const std::vector<RoutingTrajectory>& policy,
                                    const std::vector<RoutingTrajectory>& lrm_only,
                                    const std::optional<LatencyModel>& model = std::nullopt) {
  auto mean = [&](const std::vector<RoutingTrajectory>& ts) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& t : ts) {
      if (t.failed) continue;
      s += model ? trajectory_latency(t, *model) : t.latency_seconds;
      ++n;
    }
    if (n == 0) throw Error("latency_report: no successful trajectories");
    return s / static_cast<double>(n);
  };
  LatencyReport r;
  r.policy_seconds_per_query = mean(policy);
  r.lrm_only_seconds_per_query = mean(lrm_only);
  r.speedup = speedup(r.lrm_only_seconds_per_query, r.policy_seconds_per_query);
  return r;
}

}  // namespace roro
