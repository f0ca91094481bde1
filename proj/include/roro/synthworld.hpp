#pragma once

// Desk-scale synthetic reasoning world. Every query is a fixed sequence of
// steps with difficulties d in [0, 1]; each model solves a step with a known
// probability, so expected outcomes and optimal routings are exact.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "roro/core.hpp"
#include "roro/rng.hpp"

namespace roro::synth {

struct DifficultySpec {
  enum class Kind { Point, Uniform, Mixture };
  Kind kind = Kind::Mixture;
  double value = 0.0;             // point
  double lo = 0.0, hi = 1.0;      // uniform
  double easy_prob = 0.7;         // mixture: easy with this probability
  double easy_lo = 0.0, easy_hi = 0.1;
  double hard_lo = 0.5, hard_hi = 1.0;

  static DifficultySpec point(double v) {
    DifficultySpec s;
    s.kind = Kind::Point;
    s.value = v;
    return s;
  }
  static DifficultySpec uniform(double lo = 0.0, double hi = 1.0) {
    DifficultySpec s;
    s.kind = Kind::Uniform;
    s.lo = lo;
    s.hi = hi;
    return s;
  }

  double draw(std::mt19937_64& g) const {
    switch (kind) {
      case Kind::Point: return value;
      case Kind::Uniform: return lo + (hi - lo) * uniform01(g);
      case Kind::Mixture: {
        bool easy = uniform01(g) < easy_prob;
        double u = uniform01(g);
        return easy ? easy_lo + (easy_hi - easy_lo) * u : hard_lo + (hard_hi - hard_lo) * u;
      }
    }
    return value;
  }
};

struct WorldConfig {
  double srm_slope = 0.9;   // p_srm(d) = clamp(1 - srm_slope * d, 0, 1)
  double lrm_slope = 0.15;  // p_lrm(d) = clamp(1 - lrm_slope * d, 0, 1)
  std::int64_t srm_tokens_per_step = 40;
  std::int64_t lrm_tokens_per_step = 80;
  double noise_sd = 0.05;
  DifficultySpec difficulty;
  int min_steps = 2;
  int max_steps = 10;
  // Extension, off by default: final answer depends on the last step only
  // and a wrong step raises the next step's difficulty by `propagation_delta`.
  bool error_propagation = false;
  double propagation_delta = 0.3;

  void check() const {
    if (!(lrm_slope < srm_slope)) throw Error("WorldConfig: require lrm_slope < srm_slope");
    if (noise_sd < 0.0) throw Error("WorldConfig: noise_sd must be >= 0");
    if (min_steps < 1 || max_steps < min_steps) throw Error("WorldConfig: bad step range");
    if (srm_tokens_per_step < 1 || lrm_tokens_per_step < 1)
      throw Error("WorldConfig: tokens per step must be positive");
  }

  double p_srm(double d) const { return std::clamp(1.0 - srm_slope * d, 0.0, 1.0); }
  double p_lrm(double d) const { return std::clamp(1.0 - lrm_slope * d, 0.0, 1.0); }
  double p(double d, RoutingAction a) const {
    return a == RoutingAction::Regenerate ? p_lrm(d) : p_srm(d);
  }
};

inline double difficulty_label(const std::vector<double>& d) {
  if (d.empty()) return 1.0;
  double m = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
  return m * 9.0 + 1.0;
}

inline std::string gold_for(const std::string& id) { return "ans-" + id; }

inline std::vector<QueryRecord> generate_dataset(const WorldConfig& cfg, std::size_t size,
                                                 std::uint64_t seed) {
  cfg.check();
  if (size < 1) throw Error("generate_dataset: size must be >= 1");
  std::vector<QueryRecord> out;
  out.reserve(size);
  StreamKey root = StreamKey(seed).child("synthworld");
  for (std::size_t i = 0; i < size; ++i) {
    auto g = root.child(static_cast<std::uint64_t>(i)).engine();
    QueryRecord q;
    q.id = "syn-" + std::to_string(seed) + "-" + std::to_string(i);
    int span = cfg.max_steps - cfg.min_steps + 1;
    int n = cfg.min_steps + static_cast<int>(uniform01(g) * span);
    n = std::min(n, cfg.max_steps);
    q.step_difficulties.resize(static_cast<std::size_t>(n));
    for (auto& d : q.step_difficulties) d = std::clamp(cfg.difficulty.draw(g), 0.0, 1.0);
    q.text = "synthetic query " + q.id + " with " + std::to_string(n) + " steps";
    q.gold_answer = gold_for(q.id);
    q.difficulty = difficulty_label(q.step_difficulties);
    q.origin = Origin::Synthetic;
    out.push_back(std::move(q));
  }
  return out;
}

// Probability that the final answer is correct for a fixed action sequence.
inline double expected_outcome(const std::vector<RoutingAction>& actions, const QueryRecord& q,
                               const WorldConfig& cfg) {
  const auto& d = q.step_difficulties;
  if (actions.size() != d.size())
    throw Error("expected_outcome: action sequence length " + std::to_string(actions.size()) +
                " != step count " + std::to_string(d.size()));
  if (!cfg.error_propagation) {
    double p = 1.0;
    for (std::size_t i = 0; i < d.size(); ++i) p *= cfg.p(d[i], actions[i]);
    return p;
  }
  // Two-state forward recursion over "previous step correct".
  double ok = 1.0;  // P(previous step correct)
  for (std::size_t i = 0; i < d.size(); ++i) {
    double d_err = std::min(1.0, d[i] + cfg.propagation_delta);
    double p_ok = cfg.p(d[i], actions[i]);
    double p_err = cfg.p(d_err, actions[i]);
    ok = ok * p_ok + (1.0 - ok) * p_err;
  }
  return ok;
}

struct OracleResult {
  std::vector<RoutingAction> actions;
  double expected_reward = 0.0;
  double expected_outcome = 0.0;
  std::int64_t lrm_tokens = 0;
};

inline constexpr std::size_t kOracleMaxEnumSteps = 12;

namespace detail {
inline int regen_count(const std::vector<RoutingAction>& a) {
  return static_cast<int>(std::count(a.begin(), a.end(), RoutingAction::Regenerate));
}
// Lexicographic with Continue < Regenerate.
inline bool lex_less(const std::vector<RoutingAction>& a, const std::vector<RoutingAction>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(),
                                      [](RoutingAction x, RoutingAction y) {
                                        return static_cast<int>(x) < static_cast<int>(y);
                                      });
}
}  // namespace detail

// Exhaustive argmax over all 2^n action sequences of
// expected_outcome - lambda * lrm_tokens. Ties prefer fewer Regenerate
// actions, then the lexicographically smaller sequence.
inline OracleResult oracle_optimal(const QueryRecord& q, const WorldConfig& cfg, double lambda) {
  const std::size_t n = q.step_difficulties.size();
  if (n > kOracleMaxEnumSteps)
    throw Error("oracle_optimal: " + std::to_string(n) + " steps exceeds enumeration limit " +
                std::to_string(kOracleMaxEnumSteps) + "; use oracle_optimal_dp");
  OracleResult best;
  bool have = false;
  std::vector<RoutingAction> a(n);
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    for (std::size_t i = 0; i < n; ++i)
      a[i] = (mask >> i) & 1 ? RoutingAction::Regenerate : RoutingAction::Continue;
    double eo = expected_outcome(a, q, cfg);
    std::int64_t tok = detail::regen_count(a) * cfg.lrm_tokens_per_step;
    double r = eo - lambda * static_cast<double>(tok);
    bool better = !have || r > best.expected_reward;
    if (have && r == best.expected_reward) {
      int ca = detail::regen_count(a), cb = detail::regen_count(best.actions);
      better = ca < cb || (ca == cb && detail::lex_less(a, best.actions));
    }
    if (better) {
      best = {a, r, eo, tok};
      have = true;
    }
  }
  return best;
}

// Exact optimum for the default world rule at any length. For a fixed number
// k of escalations the product is maximized by escalating the k steps with the
// largest log(p_lrm / p_srm), so the search is over k only.
inline OracleResult oracle_optimal_dp(const QueryRecord& q, const WorldConfig& cfg, double lambda) {
  if (cfg.error_propagation)
    throw Error("oracle_optimal_dp: error-propagation worlds require enumeration");
  const auto& d = q.step_difficulties;
  const std::size_t n = d.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto gain = [&](std::size_t i) {
    double ps = cfg.p_srm(d[i]), pl = cfg.p_lrm(d[i]);
    if (ps <= 0.0) return pl > 0.0 ? INFINITY : 0.0;
    return std::log(pl / ps);
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    double ga = gain(a), gb = gain(b);
    if (ga != gb) return ga > gb;
    return a > b;  // later steps first on ties keeps the sequence lexicographically small
  });
  OracleResult best;
  bool have = false;
  std::vector<RoutingAction> a(n, RoutingAction::Continue);
  for (std::size_t k = 0; k <= n; ++k) {
    if (k > 0) a[order[k - 1]] = RoutingAction::Regenerate;
    double eo = expected_outcome(a, q, cfg);
    std::int64_t tok = static_cast<std::int64_t>(k) * cfg.lrm_tokens_per_step;
    double r = eo - lambda * static_cast<double>(tok);
    if (!have || r > best.expected_reward) {
      best = {a, r, eo, tok};
      have = true;
    }
  }
  return best;
}

}  // namespace roro::synth
