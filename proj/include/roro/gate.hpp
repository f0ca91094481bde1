#pragma once

// Criterion validation gate. Every criterion of a candidate rubric is scored
// on a fixed held-out rollout set and must pass three tests: significant
// partial correlation with route preference given outcome and cost (Holm-
// Bonferroni across the rubric), a score spread floor, and an outcome-leakage
// cap on mutual information. Rubrics keeping fewer than `min_retained`
// criteria are discarded.

#include <algorithm>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "roro/core.hpp"
#include "roro/criteria.hpp"
#include "roro/prefdata.hpp"
#include "roro/stats.hpp"

namespace roro {

struct GateConfig {
  double alpha = 0.05;
  double sigma_min = 0.05;
  double mi_max_nats = 0.1;
  int knn_k = 5;
  std::size_t min_retained = 2;

  void check() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error("GateConfig: alpha must lie in (0, 1)");
    if (!(sigma_min > 0.0) || !(mi_max_nats > 0.0) || knn_k < 1 || min_retained < 1)
      throw Error("GateConfig: thresholds must be positive");
  }
};

// Held-out rollouts with the labels the tests need. `target` is the
// rollout's net win rate over the preference pairs it appears in.
struct HeldoutSet {
  std::vector<RoutingTrajectory> rollouts;
  std::vector<int> outcome;
  std::vector<double> norm_cost;
  std::vector<double> target;

  std::size_t size() const { return rollouts.size(); }
};

inline HeldoutSet build_heldout(const std::vector<TrajectoryPool>& pools, const std::vector<PoolPairs>& pairs) {
  if (pools.size() != pairs.size()) throw Error("build_heldout: pools and pairs differ in length");
  HeldoutSet h;
  std::int64_t max_cost = 0;
  for (std::size_t p = 0; p < pools.size(); ++p) {
    const auto& pool = pools[p];
    std::vector<int> wins(pool.trajectories.size(), 0), losses(pool.trajectories.size(), 0);
    for (const auto& pr : pairs[p].pairs) {
      ++wins.at(pr.winner);
      ++losses.at(pr.loser);
    }
    for (std::size_t i = 0; i < pool.trajectories.size(); ++i) {
      const auto& t = pool.trajectories[i];
      if (!t.outcome_correct) throw Error("build_heldout: rollout without outcome label");
      h.rollouts.push_back(t);
      h.outcome.push_back(*t.outcome_correct ? 1 : 0);
      h.norm_cost.push_back(static_cast<double>(t.lrm_tokens));
      const int games = wins[i] + losses[i];
      h.target.push_back(games == 0 ? 0.0 : static_cast<double>(wins[i] - losses[i]) / games);
      max_cost = std::max(max_cost, t.lrm_tokens);
    }
  }
  for (auto& c : h.norm_cost) c = max_cost > 0 ? c / static_cast<double>(max_cost) : 0.0;
  return h;
}

struct CriterionReport {
  std::string criterion;
  double partial_r = 0.0;
  double p_raw = 1.0;
  bool p_adjusted_reject = false;
  double score_std = 0.0;
  double mi_nats = 0.0;
  bool retained = false;
  std::string reason;
};

struct ValidationReport {
  std::vector<CriterionReport> criteria;
  std::size_t retained_count = 0;
  bool rubric_retained = false;
};

inline nlohmann::json to_json(const ValidationReport& r) {
  nlohmann::json j;
  j["rubric_retained"] = r.rubric_retained;
  j["retained_count"] = r.retained_count;
  j["criteria"] = nlohmann::json::array();
  for (const auto& c : r.criteria) {
    j["criteria"].push_back({{"criterion", c.criterion},
                             {"partial_r", c.partial_r},
                             {"p_raw", c.p_raw},
                             {"p_adjusted_reject", c.p_adjusted_reject},
                             {"score_std", c.score_std},
                             {"mi_nats", c.mi_nats},
                             {"retained", c.retained},
                             {"reason", c.reason}});
  }
  return j;
}

// Per-criterion statistics that do not depend on the rest of the rubric.
struct CriterionStats {
  stats::PartialCorrelation pc;
  double std = 0.0;
  double mi = 0.0;
};

inline CriterionStats criterion_stats(const std::vector<double>& v, const HeldoutSet& h, const GateConfig& cfg) {
  if (v.size() != h.size()) throw Error("criterion_stats: score column length mismatch");
  CriterionStats s;
  std::vector<double> outcome(h.outcome.begin(), h.outcome.end());
  s.pc = stats::partial_correlation(v, h.target, {outcome, h.norm_cost});
  s.std = stats::score_std(v);
  s.mi = stats::mixed_ksg_mi(v, h.outcome, cfg.knn_k);
  return s;
}

// Combines per-criterion statistics into retain/discard decisions.
inline ValidationReport decide_criteria(const std::vector<std::string>& names,
                                        const std::vector<CriterionStats>& st, const GateConfig& cfg) {
  ValidationReport rep;
  std::vector<double> p;
  for (const auto& s : st) p.push_back(s.pc.defined ? s.pc.p : 1.0);
  const std::vector<bool> reject = stats::holm_bonferroni(p, cfg.alpha);
  for (std::size_t i = 0; i < st.size(); ++i) {
    CriterionReport c;
    c.criterion = names[i];
    c.partial_r = st[i].pc.r;
    c.p_raw = p[i];
    c.p_adjusted_reject = st[i].pc.defined && reject[i];
    c.score_std = st[i].std;
    c.mi_nats = st[i].mi;
    const bool var_ok = st[i].std > cfg.sigma_min;
    const bool mi_ok = st[i].mi <= cfg.mi_max_nats;
    c.retained = c.p_adjusted_reject && var_ok && mi_ok;
    if (!st[i].pc.defined)
      c.reason = st[i].pc.reason;
    else if (!c.p_adjusted_reject)
      c.reason = "partial correlation not significant after Holm-Bonferroni";
    if (!var_ok) c.reason += std::string(c.reason.empty() ? "" : "; ") + "score std below sigma_min";
    if (!mi_ok) c.reason += std::string(c.reason.empty() ? "" : "; ") + "outcome leakage above MI cap";
    if (c.retained) ++rep.retained_count;
    rep.criteria.push_back(std::move(c));
  }
  rep.rubric_retained = rep.retained_count >= cfg.min_retained;
  return rep;
}

// Score columns for externally scored criteria (one column per criterion).
inline ValidationReport validate_scores(const std::vector<std::string>& names,
                                        const std::vector<std::vector<double>>& columns, const HeldoutSet& h,
                                        const GateConfig& cfg) {
  cfg.check();
  if (h.size() == 0) throw Error("validate: held-out set is empty");
  std::vector<CriterionStats> st;
  for (const auto& col : columns) st.push_back(criterion_stats(col, h, cfg));
  return decide_criteria(names, st, cfg);
}

// Scores a prompted criterion on one rollout (already averaged over calls).
using PromptedCriterionScorer = std::function<double(const Criterion&, const RoutingTrajectory&)>;

struct GateResult {
  std::optional<Rubric> rubric;  // validated rubric, or nullopt when discarded
  ValidationReport report;
};

// Validation gate bound to one held-out set. Per-criterion statistics are
// memoized by criterion signature; safe for concurrent use.
class Gate {
 public:
  Gate(HeldoutSet heldout, GateConfig cfg, PromptedCriterionScorer prompted = nullptr)
      : heldout_(std::move(heldout)), cfg_(cfg), prompted_(std::move(prompted)) {
    cfg_.check();
    if (heldout_.size() == 0) throw Error("Gate: held-out set is empty");
  }

  const HeldoutSet& heldout() const { return heldout_; }
  const GateConfig& config() const { return cfg_; }

  std::vector<double> score_column(const Criterion& c) const {
    std::vector<double> v;
    v.reserve(heldout_.size());
    for (const auto& t : heldout_.rollouts) {
      if (c.kind == CriterionKind::Prompted) {
        if (!prompted_) throw Error("Gate: prompted criterion without a prompted scorer");
        v.push_back(prompted_(c, t));
      } else {
        v.push_back(score_criterion(c, t));
      }
    }
    return v;
  }

  CriterionStats stats_for(const Criterion& c) const {
    const std::string key = c.signature();
    {
      std::lock_guard lk(mu_);
      if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    }
    CriterionStats s = criterion_stats(score_column(c), heldout_, cfg_);
    std::lock_guard lk(mu_);
    memo_.emplace(key, s);
    return s;
  }

  GateResult validate(const Rubric& r) const {
    r.check();
    std::vector<std::string> names;
    std::vector<CriterionStats> st;
    for (const auto& c : r.criteria) {
      names.push_back(c.signature());
      st.push_back(stats_for(c));
    }
    GateResult out;
    out.report = decide_criteria(names, st, cfg_);
    if (!out.report.rubric_retained) return out;
    Rubric v;
    double kept = 0.0;
    for (std::size_t i = 0; i < r.criteria.size(); ++i)
      if (out.report.criteria[i].retained) {
        v.criteria.push_back(r.criteria[i]);
        kept += r.criteria[i].weight;
      }
    // Renormalize retained weights to the original total.
    const double total = r.total_weight();
    if (kept > 0.0)
      for (auto& c : v.criteria) c.weight = std::min(1.0, c.weight * total / kept);
    v.validated = true;
    out.rubric = std::move(v);
    return out;
  }

 private:
  HeldoutSet heldout_;
  GateConfig cfg_;
  PromptedCriterionScorer prompted_;
  mutable std::mutex mu_;
  mutable std::map<std::string, CriterionStats> memo_;
};

}  // namespace roro
