#pragma once

// Group-relative policy optimization of the router. Each query gets K sampled
// rollouts; rewards combine outcome, LRM token cost and (optionally) the
// rubric process reward; advantages are normalized within the group and
// shared by every decision of a trajectory.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "roro/backends.hpp"
#include "roro/core.hpp"
#include "roro/parallel.hpp"
#include "roro/rng.hpp"
#include "roro/routing.hpp"
#include "roro/rubric.hpp"

namespace roro {

struct GrpoConfig {
  std::size_t group_size = 8;  // K
  double lambda_cost = 0.001;
  double beta_process = 0.5;
  double clip_eps = 0.2;
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int iterations = 200;
  int inner_epochs = 1;
  std::size_t batch_queries = 16;
  std::size_t hidden = 128;
  double advantage_eps = 1e-8;
  std::uint64_t seed = 0;
  Signal signal = Signal::AvgEntropy;
  unsigned workers = 1;

  void check() const {
    if (group_size < 2) throw Error("GrpoConfig: group size must be >= 2");
    if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw Error("GrpoConfig: clip_eps must lie in (0, 1)");
    if (lambda_cost < 0.0 || beta_process < 0.0) throw Error("GrpoConfig: lambda and beta must be >= 0");
    if (iterations < 0 || inner_epochs < 1 || batch_queries < 1 || !(lr >= 0.0))
      throw Error("GrpoConfig: invalid optimization settings");
  }
};

struct RewardBundle {
  int outcome = 0;
  std::int64_t cost_tokens = 0;
  std::optional<double> process;
  double total = 0.0;
};

inline double total_reward(int outcome, std::int64_t cost_tokens, std::optional<double> process,
                           double lambda_cost, double beta_process) {
  return static_cast<double>(outcome) - lambda_cost * static_cast<double>(cost_tokens) +
         beta_process * process.value_or(0.0);
}

inline double total_reward(int outcome, std::int64_t cost_tokens, std::optional<double> process,
                           const GrpoConfig& cfg) {
  return total_reward(outcome, cost_tokens, process, cfg.lambda_cost, cfg.beta_process);
}

// (R - mean) / (population std + eps)
inline std::vector<double> group_advantages(const std::vector<double>& r, double eps = 1e-8) {
  if (r.size() < 2) throw Error("group_advantages: group size must be >= 2");
  if (std::all_of(r.begin(), r.end(), [&](double x) { return x == r.front(); })) return std::vector<double>(r.size(), 0.0);
  const double n = static_cast<double>(r.size());
  const double mu = std::accumulate(r.begin(), r.end(), 0.0) / n;
  double var = 0.0;
  for (double x : r) var += (x - mu) * (x - mu);
  const double sd = std::sqrt(var / n);
  std::vector<double> a(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) a[i] = (r[i] - mu) / (sd + eps);
  return a;
}

struct RolloutGroup {
  std::string query_id;
  std::vector<Rollout> rollouts;
  std::vector<RewardBundle> rewards;
  std::vector<double> advantages;
};

struct GrpoMetrics {
  double mean_reward = 0.0;
  double mean_abs_advantage = 0.0;
  double clip_fraction = 0.0;
  double lrm_usage = 0.0;
  std::size_t decisions = 0;
};

// Gradient of the mean clipped surrogate over all decisions in the groups.
// A decision lies in the clipped region when the ratio has left
// [1 - eps, 1 + eps] on the side favored by its advantage; its gradient is 0.
inline RouterPolicy surrogate_gradient(const RouterPolicy& pol, const std::vector<RolloutGroup>& groups,
                                       double clip_eps, GrpoMetrics* metrics = nullptr) {
  RouterPolicy grad = pol.zeros_like();
  std::size_t n = 0, clipped = 0;
  for (const auto& g : groups) {
    if (g.advantages.size() != g.rollouts.size()) throw Error("grpo: advantages missing for group " + g.query_id);
    for (std::size_t k = 0; k < g.rollouts.size(); ++k) n += g.rollouts[k].decisions.size();
  }
  if (n == 0) return grad;
  for (const auto& g : groups) {
    for (std::size_t k = 0; k < g.rollouts.size(); ++k) {
      const double A = g.advantages[k];
      for (const auto& d : g.rollouts[k].decisions) {
        const auto c = policy_forward_cached(pol, d.state);
        const double logp = std::log(c.probs[d.action == RoutingAction::Regenerate ? 1 : 0]);
        const double ratio = std::exp(logp - d.behavior_logprob);
        const bool is_clipped = (A > 0.0 && ratio > 1.0 + clip_eps) || (A < 0.0 && ratio < 1.0 - clip_eps);
        if (is_clipped) {
          ++clipped;
          continue;
        }
        if (A == 0.0) continue;
        accumulate_grad_logprob(pol, c, d.action, A * ratio / static_cast<double>(n), grad);
      }
    }
  }
  if (metrics) {
    metrics->clip_fraction = static_cast<double>(clipped) / static_cast<double>(n);
    metrics->decisions = n;
  }
  return grad;
}

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
};

// One ascent step on flat parameters.
inline void adam_ascent(std::vector<double>& params, const std::vector<double>& grad, AdamState& st,
                        double lr, double b1, double b2, double eps) {
  if (st.m.empty()) {
    st.m.assign(params.size(), 0.0);
    st.v.assign(params.size(), 0.0);
  }
  ++st.t;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.m[i] = b1 * st.m[i] + (1.0 - b1) * grad[i];
    st.v[i] = b2 * st.v[i] + (1.0 - b2) * grad[i] * grad[i];
    params[i] += lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + eps);
  }
}

// One update per inner epoch on the clipped surrogate.
inline GrpoMetrics grpo_update(RouterPolicy& pol, const std::vector<RolloutGroup>& groups, const GrpoConfig& cfg,
                               AdamState& adam) {
  GrpoMetrics m;
  double rsum = 0.0, asum = 0.0, usage = 0.0;
  std::size_t nt = 0;
  for (const auto& g : groups)
    for (std::size_t k = 0; k < g.rollouts.size(); ++k) {
      rsum += g.rewards.at(k).total;
      asum += std::fabs(g.advantages.at(k));
      usage += g.rollouts[k].trajectory.actions.empty() ? 0.0 : lrm_usage_rate(g.rollouts[k].trajectory);
      ++nt;
    }
  if (nt) {
    m.mean_reward = rsum / static_cast<double>(nt);
    m.mean_abs_advantage = asum / static_cast<double>(nt);
    m.lrm_usage = usage / static_cast<double>(nt);
  }
  for (int e = 0; e < cfg.inner_epochs; ++e) {
    GrpoMetrics em;
    const RouterPolicy grad = surrogate_gradient(pol, groups, cfg.clip_eps, &em);
    if (!grad.finite()) throw Error("grpo_update: non-finite gradient");
    if (e == 0) {
      m.clip_fraction = em.clip_fraction;
      m.decisions = em.decisions;
    }
    auto flat = pol.flatten();
    adam_ascent(flat, grad.flatten(), adam, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    pol.assign(flat);
    if (!pol.finite()) throw Error("grpo_update: non-finite parameters after update");
  }
  return m;
}

// Process-reward provider for training; absent means outcome-only.
struct ProcessRewardSource {
  const RubricorModel* rubricor = nullptr;
  RubricJudge judge;
  const Gate* gate = nullptr;
};

struct TrainingCurvePoint {
  int iteration = 0;
  double mean_reward = 0.0;
  std::optional<double> probe_ba;
  double lrm_usage = 0.0;
  double clip_fraction = 0.0;
  std::size_t groups_used = 0;
  std::size_t groups_discarded = 0;
};

struct TrainResult {
  RouterPolicy policy;
  std::vector<TrainingCurvePoint> curve;
  std::vector<std::string> warnings;
};

inline std::string curve_csv(const std::vector<TrainingCurvePoint>& c) {
  std::string out = "iteration,mean_reward,probe_ba,lrm_usage,clip_fraction,groups_used,groups_discarded\n";
  char buf[256];
  for (const auto& p : c) {
    std::snprintf(buf, sizeof buf, "%d,%.10g,%s,%.10g,%.10g,%zu,%zu\n", p.iteration, p.mean_reward,
                  p.probe_ba ? std::to_string(*p.probe_ba).c_str() : "", p.lrm_usage, p.clip_fraction,
                  p.groups_used, p.groups_discarded);
    out += buf;
  }
  return out;
}

struct TrainHooks {
  // Evaluated every `probe_every` iterations (and after the last one).
  std::function<double(const RouterPolicy&)> probe;
  int probe_every = 10;
  // Called after every iteration with the current policy.
  std::function<void(int, const RouterPolicy&)> checkpoint;
};

// Samples the query batch of iteration `it`: a seeded shuffle of the dataset,
// consumed in order and reshuffled per pass.
inline std::vector<std::size_t> iteration_batch(std::size_t n, std::size_t batch, std::uint64_t seed, int it) {
  std::vector<std::size_t> out;
  const std::size_t start = static_cast<std::size_t>(it) * batch;
  std::size_t cached_pass = static_cast<std::size_t>(-1);
  std::vector<std::size_t> perm(n);
  for (std::size_t j = start; j < start + batch; ++j) {
    const std::size_t pass = j / n;
    if (pass != cached_pass) {
      std::iota(perm.begin(), perm.end(), 0);
      auto g = StreamKey(seed).child("batch").child(static_cast<std::uint64_t>(pass)).engine();
      for (std::size_t i = n; i > 1; --i) {
        const auto r = static_cast<std::size_t>(uniform01(g) * static_cast<double>(i));
        std::swap(perm[i - 1], perm[std::min(r, i - 1)]);
      }
      cached_pass = pass;
    }
    out.push_back(perm[j % n]);
  }
  return out;
}

inline TrainResult train_router(const GrpoConfig& cfg, const std::vector<QueryRecord>& dataset, Backend& srm,
                                Backend& lrm, const EngineLimits& limits,
                                const std::optional<ProcessRewardSource>& process, const TrainHooks& hooks = {},
                                std::optional<RouterPolicy> init = std::nullopt) {
  cfg.check();
  if (dataset.empty()) throw Error("train_router: empty dataset");
  if (process && (!process->rubricor || !process->gate || !process->judge))
    throw Error("train_router: process reward source incomplete");
  TrainResult res;
  res.policy = init ? *init : RouterPolicy::initialized(cfg.hidden, cfg.seed);
  AdamState adam;
  RunOptions ropt;
  ropt.signal = cfg.signal;
  ropt.record_decisions = true;
  const std::size_t K = cfg.group_size;

  for (int it = 0; it < cfg.iterations; ++it) {
    const auto batch = iteration_batch(dataset.size(), cfg.batch_queries, cfg.seed, it);
    auto snapshot = std::make_shared<const RouterPolicy>(res.policy);
    const PolicyKind pk = PolicyKind::learned(snapshot, 0.5, true);
    std::vector<Rollout> rollouts(batch.size() * K);
    parallel_for(rollouts.size(), cfg.workers, [&](std::size_t idx) {
      const QueryRecord& q = dataset[batch[idx / K]];
      StreamKey key = StreamKey(cfg.seed).child("train").child(
          {static_cast<std::uint64_t>(it), static_cast<std::uint64_t>(idx / K), static_cast<std::uint64_t>(idx % K)});
      rollouts[idx] = run_trajectory(q, srm, lrm, pk, limits, key.child(q.id), ropt);
    });

    std::vector<std::optional<RolloutGroup>> slots(batch.size());
    parallel_for(batch.size(), cfg.workers, [&](std::size_t b) {
      RolloutGroup g;
      g.query_id = dataset[batch[b]].id;
      for (std::size_t k = 0; k < K; ++k) {
        Rollout& r = rollouts[b * K + k];
        if (r.trajectory.failed) continue;  // a failed member is dropped from its group
        g.rollouts.push_back(std::move(r));
      }
      if (g.rollouts.size() < 2) return;
      std::optional<std::vector<double>> proc;
      if (process) {
        std::vector<RoutingTrajectory> trajs;
        for (const auto& r : g.rollouts) trajs.push_back(r.trajectory);
        StreamKey key = StreamKey(cfg.seed).child("process").child(
            {static_cast<std::uint64_t>(it), static_cast<std::uint64_t>(b)});
        proc = process_reward(*process->rubricor, process->judge, *process->gate, trajs, key.child(g.query_id));
        if (!proc) return;  // group discarded
      }
      std::vector<double> totals;
      for (std::size_t k = 0; k < g.rollouts.size(); ++k) {
        const auto& t = g.rollouts[k].trajectory;
        RewardBundle rb;
        rb.outcome = t.outcome_correct.value_or(false) ? 1 : 0;
        rb.cost_tokens = t.lrm_tokens;
        if (proc) rb.process = (*proc)[k];
        rb.total = total_reward(rb.outcome, rb.cost_tokens, rb.process, cfg);
        totals.push_back(rb.total);
        g.rewards.push_back(rb);
      }
      g.advantages = group_advantages(totals, cfg.advantage_eps);
      slots[b] = std::move(g);
    });

    std::vector<RolloutGroup> groups;
    for (auto& s : slots)
      if (s) groups.push_back(std::move(*s));
    TrainingCurvePoint pt;
    pt.iteration = it + 1;
    pt.groups_used = groups.size();
    pt.groups_discarded = batch.size() - groups.size();
    if (groups.empty()) {
      res.warnings.push_back("iteration " + std::to_string(it + 1) + ": all groups discarded, skipped");
    } else {
      const GrpoMetrics m = grpo_update(res.policy, groups, cfg, adam);
      pt.mean_reward = m.mean_reward;
      pt.lrm_usage = m.lrm_usage;
      pt.clip_fraction = m.clip_fraction;
    }
    if (hooks.probe && (((it + 1) % std::max(1, hooks.probe_every)) == 0 || it + 1 == cfg.iterations))
      pt.probe_ba = hooks.probe(res.policy);
    if (hooks.checkpoint) hooks.checkpoint(it + 1, res.policy);
    res.curve.push_back(pt);
  }
  return res;
}

}  // namespace roro
