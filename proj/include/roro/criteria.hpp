#pragma once

// Routing-quality criteria. Each criterion kind maps a trajectory to a score
// in [0, 1] with a deterministic formula; its natural-language text travels
// alongside for prompted backends.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "roro/core.hpp"

namespace roro {

enum class CriterionKind {
  TimelyEscalation = 0,
  Recovery = 1,
  CostEfficiency = 2,
  NoThrashing = 3,
  HardStepCoverage = 4,
  EasyStepEconomy = 5,
  // Free-text criterion from a prompted rubric generator; scored only by a
  // prompted judge.
  Prompted = 6,
};

inline constexpr std::size_t kNumScoredKinds = 6;

inline constexpr std::array<CriterionKind, kNumScoredKinds> kScoredKinds = {
    CriterionKind::TimelyEscalation, CriterionKind::Recovery,         CriterionKind::CostEfficiency,
    CriterionKind::NoThrashing,      CriterionKind::HardStepCoverage, CriterionKind::EasyStepEconomy};

inline std::string_view to_string(CriterionKind k) {
  switch (k) {
    case CriterionKind::TimelyEscalation: return "timely_escalation";
    case CriterionKind::Recovery: return "recovery";
    case CriterionKind::CostEfficiency: return "cost_efficiency";
    case CriterionKind::NoThrashing: return "no_thrashing";
    case CriterionKind::HardStepCoverage: return "hard_step_coverage";
    case CriterionKind::EasyStepEconomy: return "easy_step_economy";
    case CriterionKind::Prompted: return "prompted";
  }
  return "?";
}

inline CriterionKind criterion_kind_from_string(std::string_view s) {
  for (auto k : kScoredKinds)
    if (to_string(k) == s) return k;
  if (s == "prompted") return CriterionKind::Prompted;
  throw Error("unknown criterion kind: " + std::string(s));
}

inline bool uses_threshold(CriterionKind k) {
  return k == CriterionKind::TimelyEscalation || k == CriterionKind::CostEfficiency ||
         k == CriterionKind::HardStepCoverage || k == CriterionKind::EasyStepEconomy;
}

inline bool uses_window(CriterionKind k) { return k == CriterionKind::TimelyEscalation; }

struct Criterion {
  CriterionKind kind = CriterionKind::NoThrashing;
  double threshold = 0.3;  // uncertainty threshold (entropy scale)
  double window = 2.0;     // escalation window in steps
  double weight = 1.0;
  std::string text;
  double guidance_score = 1.0;  // per-criterion score carried in prompted rubric JSON

  void check() const {
    if (!(weight >= 0.0 && weight <= 1.0)) throw Error("criterion weight must lie in [0, 1]");
    if (!(guidance_score >= 0.0 && guidance_score <= 1.0)) throw Error("criterion score must lie in [0, 1]");
    if (uses_threshold(kind) && !(threshold >= 0.0 && threshold <= 2.0))
      throw Error("criterion threshold must lie in [0, 2]");
    if (uses_window(kind) && !(window > 0.0)) throw Error("criterion window must be positive");
  }

  // Identity of what is scored (weight and text excluded).
  std::string signature() const {
    std::string s(to_string(kind));
    char buf[64];
    if (uses_threshold(kind)) {
      std::snprintf(buf, sizeof buf, ":t=%.17g", threshold);
      s += buf;
    }
    if (uses_window(kind)) {
      std::snprintf(buf, sizeof buf, ":w=%.17g", window);
      s += buf;
    }
    if (kind == CriterionKind::Prompted) s += ":" + text;
    return s;
  }

  bool operator==(const Criterion&) const = default;
};

inline std::string default_criterion_text(CriterionKind k, double threshold, double window) {
  char buf[320];
  switch (k) {
    case CriterionKind::TimelyEscalation:
      std::snprintf(buf, sizeof buf,
                    "Escalate to the LRM within about %g steps of the first step whose draft "
                    "uncertainty exceeds %g.",
                    window, threshold);
      return buf;
    case CriterionKind::Recovery:
      return "After an LRM step, the following step should be more certain than the draft the LRM "
             "replaced.";
    case CriterionKind::CostEfficiency:
      std::snprintf(buf, sizeof buf,
                    "Spend LRM calls only on steps whose draft uncertainty exceeds %g.", threshold);
      return buf;
    case CriterionKind::NoThrashing:
      return "Avoid alternating between the SRM and the LRM on consecutive steps.";
    case CriterionKind::HardStepCoverage:
      std::snprintf(buf, sizeof buf, "Route every step whose draft uncertainty exceeds %g to the LRM.",
                    threshold);
      return buf;
    case CriterionKind::EasyStepEconomy:
      std::snprintf(buf, sizeof buf, "Keep steps whose draft uncertainty is at most %g on the SRM.",
                    threshold);
      return buf;
    case CriterionKind::Prompted: return "";
  }
  return "";
}

inline Criterion make_criterion(CriterionKind k, double weight, double threshold = 0.3,
                                double window = 2.0) {
  Criterion c;
  c.kind = k;
  c.weight = weight;
  c.threshold = threshold;
  c.window = window;
  c.text = default_criterion_text(k, threshold, window);
  return c;
}

struct Rubric {
  std::vector<Criterion> criteria;
  bool validated = false;

  double total_weight() const {
    double s = 0.0;
    for (const auto& c : criteria) s += c.weight;
    return s;
  }

  void check() const {
    if (criteria.empty()) throw Error("rubric has no criteria");
    for (const auto& c : criteria) c.check();
    if (!(total_weight() > 0.0)) throw Error("rubric weights must sum to a positive value");
  }

  bool operator==(const Rubric&) const = default;
};

namespace detail {
inline double draft_u(const ReasoningStep& s) { return s.draft_uncertainty.avg_entropy; }
inline double ratio_or_one(std::size_t num, std::size_t den) {
  return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}
}  // namespace detail

// Deterministic criterion score in [0, 1]. Uncertainty is the average token
// entropy of the step's SRM draft.
inline double score_criterion(const Criterion& c, const RoutingTrajectory& t) {
  const std::size_t n = t.actions.size();
  if (t.steps.size() != n) throw Error("score_criterion: malformed trajectory");
  auto is_lrm = [&](std::size_t i) { return t.actions[i] == RoutingAction::Regenerate; };
  switch (c.kind) {
    case CriterionKind::TimelyEscalation: {
      std::size_t first_hard = n, first_lrm = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (first_hard == n && detail::draft_u(t.steps[i]) > c.threshold) first_hard = i;
        if (first_lrm == n && is_lrm(i)) first_lrm = i;
      }
      if (first_hard == n) return 1.0;
      if (first_lrm == n) return 0.0;
      double gap = std::max(0.0, static_cast<double>(first_lrm) - static_cast<double>(first_hard));
      return std::exp(-gap / c.window);
    }
    case CriterionKind::Recovery: {
      std::size_t num = 0, den = 0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        if (!is_lrm(i)) continue;
        ++den;
        if (t.steps[i + 1].uncertainty.avg_entropy < detail::draft_u(t.steps[i])) ++num;
      }
      return detail::ratio_or_one(num, den);
    }
    case CriterionKind::CostEfficiency: {
      std::size_t num = 0, den = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!is_lrm(i)) continue;
        ++den;
        if (detail::draft_u(t.steps[i]) > c.threshold) ++num;
      }
      return detail::ratio_or_one(num, den);
    }
    case CriterionKind::NoThrashing: {
      if (n == 0) throw Error("empty trajectory");
      if (n == 1) return 1.0;
      return 1.0 - static_cast<double>(switch_count(t.actions)) / static_cast<double>(n - 1);
    }
    case CriterionKind::HardStepCoverage: {
      std::size_t num = 0, den = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (detail::draft_u(t.steps[i]) <= c.threshold) continue;
        ++den;
        if (is_lrm(i)) ++num;
      }
      return detail::ratio_or_one(num, den);
    }
    case CriterionKind::EasyStepEconomy: {
      std::size_t num = 0, den = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (detail::draft_u(t.steps[i]) > c.threshold) continue;
        ++den;
        if (!is_lrm(i)) ++num;
      }
      return detail::ratio_or_one(num, den);
    }
    case CriterionKind::Prompted:
      throw Error("score_criterion: prompted criterion requires a prompted judge");
  }
  throw Error("score_criterion: unknown kind");
}

// Weighted mean criterion score.
inline double rubric_score(const Rubric& r, const RoutingTrajectory& t) {
  double s = 0.0, w = 0.0;
  for (const auto& c : r.criteria) {
    s += c.weight * score_criterion(c, t);
    w += c.weight;
  }
  if (!(w > 0.0)) throw Error("rubric_score: zero total weight");
  return s / w;
}

struct SeedRubricParams {
  double threshold = 0.3;
  double window = 2.0;
};

// Three criteria with uniform weights: timely escalation, recovery, and
// cost efficiency. Texts are the seed criteria handed to prompted judges.
inline Rubric seed_rubric(const SeedRubricParams& p = {}) {
  Rubric r;
  const double w = 1.0 / 3.0;
  r.criteria.push_back(make_criterion(CriterionKind::TimelyEscalation, w, p.threshold, p.window));
  r.criteria.back().text =
      "The route should switch to the LRM near the first SRM step that is likely to cause, or has "
      "just caused, a critical reasoning error, based on both the step content and its difficulty "
      "signals.";
  r.criteria.push_back(make_criterion(CriterionKind::Recovery, w, p.threshold, p.window));
  r.criteria.back().text =
      "The route should use the LRM to repair wrong, unstable, or misleading intermediate states "
      "produced by the SRM, and the later trajectory should reflect this recovery.";
  r.criteria.push_back(make_criterion(CriterionKind::CostEfficiency, w, p.threshold, p.window));
  r.criteria.back().text =
      "The route should allocate LRM calls only to steps where the expected reasoning benefit "
      "justifies the additional cost, while keeping easy or low-risk steps on the SRM.";
  return r;
}

}  // namespace roro
