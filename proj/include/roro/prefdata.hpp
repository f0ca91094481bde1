#pragma once

// Route preference data: trajectory pools collected from several routing
// policies, and rule-based preference pairs over each pool.

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "roro/backends.hpp"
#include "roro/core.hpp"
#include "roro/criteria.hpp"
#include "roro/routing.hpp"

namespace roro {

struct TrajectoryPool {
  std::string query_id;
  std::vector<RoutingTrajectory> trajectories;
};

enum class PairRule { Outcome, Cost, Process };

inline std::string_view to_string(PairRule r) {
  switch (r) {
    case PairRule::Outcome: return "outcome";
    case PairRule::Cost: return "cost";
    case PairRule::Process: return "process";
  }
  return "?";
}

inline PairRule pair_rule_from_string(std::string_view s) {
  if (s == "outcome") return PairRule::Outcome;
  if (s == "cost") return PairRule::Cost;
  if (s == "process") return PairRule::Process;
  throw Error("unknown pair rule: " + std::string(s));
}

// Indices into the owning pool.
struct PreferencePair {
  std::size_t winner = 0;
  std::size_t loser = 0;
  PairRule rule = PairRule::Outcome;
  bool operator==(const PreferencePair&) const = default;
};

struct PoolPairs {
  std::string query_id;
  std::vector<PreferencePair> pairs;
};

// A named routing policy used during collection.
struct CollectionPolicy {
  std::string tag;
  PolicyKind kind;
};

struct CollectOptions {
  std::size_t per_policy_count = 1;
  std::size_t min_pool_size = 2;
  RunOptions run;
};

inline std::uint64_t action_hash(const RoutingTrajectory& t) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < t.actions.size(); ++i) {
    h ^= static_cast<std::uint64_t>(t.actions[i]) + 1;
    h *= 1099511628211ULL;
    h ^= static_cast<std::uint64_t>(t.steps[i].producer) + 7;
    h *= 1099511628211ULL;
  }
  return h ^ t.actions.size();
}

// Rollout c of every policy shares trajectory stream c, so policies see the
// same drafts. Failed trajectories are dropped; duplicates by action and
// producer sequence keep the first occurrence. Returns nullopt (query
// skipped) when the pool ends up below `min_pool_size`.
inline std::optional<TrajectoryPool> collect_pool(const QueryRecord& q,
                                                  const std::vector<CollectionPolicy>& policies,
                                                  Backend& srm, Backend& lrm, const EngineLimits& limits,
                                                  std::uint64_t seed, const CollectOptions& opt = {},
                                                  std::string* warning = nullptr) {
  TrajectoryPool pool;
  pool.query_id = q.id;
  std::unordered_set<std::uint64_t> seen;
  for (const auto& pol : policies) {
    for (std::size_t c = 0; c < opt.per_policy_count; ++c) {
      Rollout r = run_trajectory(q, srm, lrm, pol.kind, limits, trajectory_stream(seed, q.id, c), opt.run);
      if (r.trajectory.failed) continue;
      r.trajectory.source_policy = pol.tag;
      if (!seen.insert(action_hash(r.trajectory)).second) continue;
      pool.trajectories.push_back(std::move(r.trajectory));
    }
  }
  if (pool.trajectories.size() < opt.min_pool_size) {
    if (warning)
      *warning = "query " + q.id + ": pool size " + std::to_string(pool.trajectories.size()) +
                 " below minimum " + std::to_string(opt.min_pool_size) + ", skipped";
    return std::nullopt;
  }
  return pool;
}

struct PairingConfig {
  double cost_sim_tol = 0.15;
  double score_gap_min = 0.1;
};

inline double relative_cost_gap(std::int64_t a, std::int64_t b) {
  const double mx = static_cast<double>(std::max(a, b));
  if (mx <= 0.0) return 0.0;
  return std::fabs(static_cast<double>(a - b)) / mx;
}

using TrajectoryScorer = std::function<double(const RoutingTrajectory&)>;

inline TrajectoryScorer seed_scorer(const Rubric& seed) {
  return [seed](const RoutingTrajectory& t) { return rubric_score(seed, t); };
}

// Rules in order for each unordered pair: exactly one correct -> outcome;
// both correct and costs differ -> cost; same outcome and similar cost ->
// process (seed rubric, minimum gap); otherwise no pair.
inline std::vector<PreferencePair> build_pairs(const TrajectoryPool& pool, const TrajectoryScorer& scorer,
                                               const PairingConfig& cfg = {}) {
  const auto& ts = pool.trajectories;
  for (const auto& t : ts)
    if (!t.outcome_correct) throw Error("build_pairs: trajectory without outcome label in pool " + pool.query_id);
  std::vector<double> score(ts.size(), 0.0);
  std::vector<bool> scored(ts.size(), false);
  auto get_score = [&](std::size_t i) {
    if (!scored[i]) {
      score[i] = scorer(ts[i]);
      scored[i] = true;
    }
    return score[i];
  };
  std::vector<PreferencePair> out;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    for (std::size_t j = i + 1; j < ts.size(); ++j) {
      const bool ci = *ts[i].outcome_correct, cj = *ts[j].outcome_correct;
      if (ci != cj) {
        out.push_back(ci ? PreferencePair{i, j, PairRule::Outcome} : PreferencePair{j, i, PairRule::Outcome});
        continue;
      }
      const double gap = relative_cost_gap(ts[i].lrm_tokens, ts[j].lrm_tokens);
      if (ci && gap > cfg.cost_sim_tol) {
        out.push_back(ts[i].lrm_tokens < ts[j].lrm_tokens ? PreferencePair{i, j, PairRule::Cost}
                                                          : PreferencePair{j, i, PairRule::Cost});
        continue;
      }
      if (gap <= cfg.cost_sim_tol) {
        const double si = get_score(i), sj = get_score(j);
        if (std::fabs(si - sj) >= cfg.score_gap_min)
          out.push_back(si > sj ? PreferencePair{i, j, PairRule::Process} : PreferencePair{j, i, PairRule::Process});
      }
    }
  }
  return out;
}

// The six collection policies: five training-free ones plus, when given,
// the outcome-only learned router.
inline std::vector<CollectionPolicy> standard_policies(double random_p, double entropy_theta,
                                                       double confidence_theta,
                                                       std::shared_ptr<const RouterPolicy> outcome_only = nullptr,
                                                       double outcome_only_cutoff = 0.5) {
  std::vector<CollectionPolicy> v = {
      {"srm_only", PolicyKind::srm_only()},
      {"lrm_only", PolicyKind::lrm_only()},
      {"random", PolicyKind::random(random_p)},
      {"entropy_threshold", PolicyKind::entropy_threshold(entropy_theta)},
      {"confidence_threshold", PolicyKind::confidence_threshold(confidence_theta)},
  };
  if (outcome_only) v.push_back({"outcome_only", PolicyKind::learned(std::move(outcome_only), outcome_only_cutoff, true)});
  return v;
}

}  // namespace roro
