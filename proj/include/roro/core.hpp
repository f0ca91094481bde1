#pragma once

// Domain types shared across the routing pipeline, the FLOPs cost model and
// trajectory-level features.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace roro {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Origin { Synthetic, External };

enum class Producer { SRM, LRM };

enum class RoutingAction { Continue, Regenerate };

// Per-step uncertainty signal kinds. Entropy is the default router input.
enum class Signal { AvgEntropy = 0, AvgConfidence = 1, AvgNll = 2, First3Entropy = 3 };

inline constexpr std::array<Signal, 4> kAllSignals = {
    Signal::AvgEntropy, Signal::AvgConfidence, Signal::AvgNll, Signal::First3Entropy};

inline std::string_view to_string(Signal s) {
  switch (s) {
    case Signal::AvgEntropy: return "avg_entropy";
    case Signal::AvgConfidence: return "avg_confidence";
    case Signal::AvgNll: return "avg_nll";
    case Signal::First3Entropy: return "first3_entropy";
  }
  return "?";
}

inline Signal signal_from_string(std::string_view s) {
  for (Signal k : kAllSignals)
    if (to_string(k) == s) return k;
  throw Error("unknown uncertainty signal: " + std::string(s));
}

inline std::string_view to_string(Producer p) { return p == Producer::SRM ? "SRM" : "LRM"; }

inline Producer producer_from_string(std::string_view s) {
  if (s == "SRM") return Producer::SRM;
  if (s == "LRM") return Producer::LRM;
  throw Error("unknown producer: " + std::string(s));
}

inline std::string_view to_string(RoutingAction a) {
  return a == RoutingAction::Continue ? "continue" : "regenerate";
}

inline RoutingAction action_from_string(std::string_view s) {
  if (s == "continue") return RoutingAction::Continue;
  if (s == "regenerate") return RoutingAction::Regenerate;
  throw Error("unknown routing action: " + std::string(s));
}

inline Producer producer_for(RoutingAction a) {
  return a == RoutingAction::Regenerate ? Producer::LRM : Producer::SRM;
}

struct Uncertainty {
  double avg_entropy = 0.0;
  double avg_confidence = 1.0;
  double avg_nll = 0.0;
  double first3_entropy = 0.0;

  double get(Signal s) const {
    switch (s) {
      case Signal::AvgEntropy: return avg_entropy;
      case Signal::AvgConfidence: return avg_confidence;
      case Signal::AvgNll: return avg_nll;
      case Signal::First3Entropy: return first3_entropy;
    }
    return avg_entropy;
  }

  // Declared ranges: entropies and nll nonnegative, confidence in (0, 1].
  bool valid() const {
    auto fin = [](double x) { return std::isfinite(x); };
    return fin(avg_entropy) && fin(avg_confidence) && fin(avg_nll) && fin(first3_entropy) &&
           avg_entropy >= 0.0 && first3_entropy >= 0.0 && avg_nll >= 0.0 && avg_confidence > 0.0 &&
           avg_confidence <= 1.0;
  }

  bool operator==(const Uncertainty&) const = default;
};

struct QueryRecord {
  std::string id;
  std::string text;
  std::optional<std::string> gold_answer;
  std::optional<double> difficulty;  // [1, 10]
  Origin origin = Origin::External;
  // Per-step difficulties in [0, 1]; non-empty only for synthetic queries.
  std::vector<double> step_difficulties;
};

// An accepted step. `draft_uncertainty` and `draft_token_count` describe the
// SRM draft that preceded the routing decision; for Continue steps they equal
// the accepted values.
struct ReasoningStep {
  std::string text;
  Producer producer = Producer::SRM;
  std::int64_t token_count = 0;
  Uncertainty uncertainty;
  Uncertainty draft_uncertainty;
  std::int64_t draft_token_count = 0;

  bool operator==(const ReasoningStep&) const = default;
};

struct RoutingTrajectory {
  std::string query_id;
  std::vector<ReasoningStep> steps;
  std::vector<RoutingAction> actions;
  std::optional<std::string> final_answer;
  std::optional<bool> outcome_correct;
  std::int64_t srm_tokens = 0;
  std::int64_t lrm_tokens = 0;
  std::string source_policy;
  bool failed = false;
  double latency_seconds = 0.0;

  std::size_t size() const { return actions.size(); }
  bool operator==(const RoutingTrajectory&) const = default;
};

// Throws if the structural invariants of a trajectory are violated.
inline void check_trajectory(const RoutingTrajectory& t) {
  if (t.steps.size() != t.actions.size()) throw Error("trajectory: |steps| != |actions|");
  std::int64_t lrm = 0;
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    if (t.steps[i].producer != producer_for(t.actions[i]))
      throw Error("trajectory: producer does not match action at step " + std::to_string(i));
    if (t.steps[i].token_count < 0) throw Error("trajectory: negative token count");
    if (t.steps[i].producer == Producer::LRM) lrm += t.steps[i].token_count;
  }
  if (lrm != t.lrm_tokens) throw Error("trajectory: lrm_tokens does not match LRM step tokens");
  if (t.srm_tokens < 0) throw Error("trajectory: negative srm_tokens");
}

struct FlopsModel {
  double srm_params = 1.7e9;
  double lrm_params = 14e9;
  // When false, SRM drafts that were replaced by the LRM are not charged.
  bool count_discarded_drafts = true;

  void check() const {
    if (!(srm_params > 0.0) || !(lrm_params > srm_params))
      throw Error("FlopsModel: require 0 < srm_params < lrm_params");
  }
};

// 2N FLOPs per generated token for a model with N parameters.
inline double flops_of_trajectory(const RoutingTrajectory& t, const FlopsModel& fm) {
  double srm = static_cast<double>(t.srm_tokens);
  if (!fm.count_discarded_drafts) {
    for (std::size_t i = 0; i < t.actions.size(); ++i)
      if (t.actions[i] == RoutingAction::Regenerate)
        srm -= static_cast<double>(t.steps[i].draft_token_count);
  }
  return 2.0 * fm.srm_params * srm + 2.0 * fm.lrm_params * static_cast<double>(t.lrm_tokens);
}

namespace detail {
inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}
}  // namespace detail

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && detail::is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && detail::is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Splits on the literal "\n\n" delimiter; segments empty after trimming are
// dropped.
inline std::vector<std::string> split_steps(std::string_view text) {
  constexpr std::string_view kDelim = "\n\n";
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t hit = text.find(kDelim, pos);
    std::string_view seg =
        text.substr(pos, hit == std::string_view::npos ? std::string_view::npos : hit - pos);
    seg = trim(seg);
    if (!seg.empty()) out.emplace_back(seg);
    if (hit == std::string_view::npos) break;
    pos = hit + kDelim.size();
  }
  return out;
}

inline std::size_t switch_count(const std::vector<RoutingAction>& actions) {
  if (actions.empty()) throw Error("empty trajectory");
  std::size_t n = 0;
  for (std::size_t i = 1; i < actions.size(); ++i)
    if (actions[i] != actions[i - 1]) ++n;
  return n;
}

inline std::size_t switch_count(const RoutingTrajectory& t) { return switch_count(t.actions); }

inline double lrm_usage_rate(const std::vector<RoutingAction>& actions) {
  if (actions.empty()) throw Error("empty trajectory");
  std::size_t r = 0;
  for (auto a : actions)
    if (a == RoutingAction::Regenerate) ++r;
  return static_cast<double>(r) / static_cast<double>(actions.size());
}

inline double lrm_usage_rate(const RoutingTrajectory& t) { return lrm_usage_rate(t.actions); }

}  // namespace roro
