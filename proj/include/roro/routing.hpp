#pragma once

// Stepwise routing: the SRM drafts each step, a policy decides whether to keep
// the draft or have the LRM regenerate it, and the accepted step is appended
// until the trace completes or hits the step limit.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "roro/backends.hpp"
#include "roro/core.hpp"
#include "roro/rng.hpp"

namespace roro {

inline constexpr std::size_t kStateDim = 5;

struct RouterState {
  double current_uncertainty = 0.0;
  double min_prefix_uncertainty = 0.0;
  double avg_prefix_uncertainty = 0.0;
  double norm_token_count = 0.0;
  double norm_step_index = 0.0;

  std::array<double, kStateDim> as_array() const {
    return {current_uncertainty, min_prefix_uncertainty, avg_prefix_uncertainty, norm_token_count,
            norm_step_index};
  }
  bool finite() const {
    for (double x : as_array())
      if (!std::isfinite(x)) return false;
    return true;
  }
  bool operator==(const RouterState&) const = default;
};

struct EngineLimits {
  std::size_t max_steps = 50;
  std::int64_t max_total_tokens = 1'000'000;
  double token_norm_constant = 200.0;

  void check() const {
    if (max_steps < 1 || max_total_tokens < 1 || !(token_norm_constant > 0.0))
      throw Error("EngineLimits: all limits must be positive");
  }
};

inline RouterState featurize(const GenerationContext& ctx, const StepDraft& draft, Signal signal,
                             const EngineLimits& limits) {
  RouterState s;
  s.current_uncertainty = draft.uncertainty.get(signal);
  const auto& prefix = *ctx.accepted_steps;
  if (prefix.empty()) {
    s.min_prefix_uncertainty = s.current_uncertainty;
    s.avg_prefix_uncertainty = s.current_uncertainty;
  } else {
    double mn = INFINITY, sum = 0.0;
    for (const auto& st : prefix) {
      double v = st.uncertainty.get(signal);
      mn = std::min(mn, v);
      sum += v;
    }
    s.min_prefix_uncertainty = mn;
    s.avg_prefix_uncertainty = sum / static_cast<double>(prefix.size());
  }
  s.norm_token_count = static_cast<double>(draft.token_count) / limits.token_norm_constant;
  s.norm_step_index = static_cast<double>(ctx.step_index) / static_cast<double>(limits.max_steps);
  return s;
}

// Two-layer MLP: hidden = ReLU(W1^T s + b1), logits = W2^T hidden + b2.
// Index 0 is Continue, index 1 is Regenerate. The same struct carries
// gradients.
struct RouterPolicy {
  std::size_t hidden = 128;
  std::vector<double> w1;  // kStateDim x hidden, row-major
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // hidden x 2, row-major
  std::vector<double> b2;  // 2

  RouterPolicy() : RouterPolicy(128) {}
  explicit RouterPolicy(std::size_t h)
      : hidden(h), w1(kStateDim * h, 0.0), b1(h, 0.0), w2(h * 2, 0.0), b2(2, 0.0) {
    if (h < 1) throw Error("RouterPolicy: hidden size must be positive");
  }

  static RouterPolicy initialized(std::size_t h, std::uint64_t seed) {
    RouterPolicy p(h);
    auto g = StreamKey(seed).child("router-init").engine();
    const double s1 = std::sqrt(2.0 / static_cast<double>(kStateDim));
    for (auto& w : p.w1) w = s1 * standard_normal(g);
    for (auto& w : p.w2) w = 0.01 * standard_normal(g);
    return p;
  }

  RouterPolicy zeros_like() const { return RouterPolicy(hidden); }

  std::size_t num_params() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

  template <class F>
  void for_each_array(F&& f) {
    f(w1);
    f(b1);
    f(w2);
    f(b2);
  }
  template <class F>
  void for_each_array(F&& f) const {
    f(w1);
    f(b1);
    f(w2);
    f(b2);
  }

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(num_params());
    for_each_array([&](const std::vector<double>& a) { out.insert(out.end(), a.begin(), a.end()); });
    return out;
  }

  void assign(std::span<const double> flat) {
    if (flat.size() != num_params()) throw Error("RouterPolicy: flat parameter size mismatch");
    std::size_t off = 0;
    for_each_array([&](std::vector<double>& a) {
      std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                flat.begin() + static_cast<std::ptrdiff_t>(off + a.size()), a.begin());
      off += a.size();
    });
  }

  bool finite() const {
    bool ok = true;
    for_each_array([&](const std::vector<double>& a) {
      for (double x : a) ok = ok && std::isfinite(x);
    });
    return ok;
  }

  bool operator==(const RouterPolicy&) const = default;
};

struct ForwardCache {
  std::array<double, kStateDim> input{};
  std::vector<double> pre;     // hidden pre-activations
  std::vector<double> act;     // ReLU outputs
  std::array<double, 2> logits{};
  std::array<double, 2> probs{};
};

inline ForwardCache policy_forward_cached(const RouterPolicy& pol, const RouterState& s) {
  if (!pol.finite()) throw Error("policy_forward: non-finite parameters");
  ForwardCache c;
  c.input = s.as_array();
  const std::size_t h = pol.hidden;
  c.pre.assign(pol.b1.begin(), pol.b1.end());
  for (std::size_t i = 0; i < kStateDim; ++i) {
    const double x = c.input[i];
    const double* row = &pol.w1[i * h];
    for (std::size_t j = 0; j < h; ++j) c.pre[j] += x * row[j];
  }
  c.act.resize(h);
  c.logits = {pol.b2[0], pol.b2[1]};
  for (std::size_t j = 0; j < h; ++j) {
    c.act[j] = c.pre[j] > 0.0 ? c.pre[j] : 0.0;
    c.logits[0] += c.act[j] * pol.w2[j * 2];
    c.logits[1] += c.act[j] * pol.w2[j * 2 + 1];
  }
  const double m = std::max(c.logits[0], c.logits[1]);
  const double e0 = std::exp(c.logits[0] - m), e1 = std::exp(c.logits[1] - m);
  c.probs = {e0 / (e0 + e1), e1 / (e0 + e1)};
  return c;
}

// Probability of Regenerate.
inline double policy_forward(const RouterPolicy& pol, const RouterState& s) {
  return policy_forward_cached(pol, s).probs[1];
}

inline double policy_logprob(const RouterPolicy& pol, const RouterState& s, RoutingAction a) {
  auto c = policy_forward_cached(pol, s);
  // log-softmax computed from logits for accuracy in the tails
  const double m = std::max(c.logits[0], c.logits[1]);
  const double lse = m + std::log(std::exp(c.logits[0] - m) + std::exp(c.logits[1] - m));
  return c.logits[a == RoutingAction::Regenerate ? 1 : 0] - lse;
}

// Adds scale * d log pi(a|s) / d params into `grad`.
inline void accumulate_grad_logprob(const RouterPolicy& pol, const ForwardCache& c, RoutingAction a,
                                    double scale, RouterPolicy& grad) {
  const std::size_t h = pol.hidden;
  const int ai = a == RoutingAction::Regenerate ? 1 : 0;
  const std::array<double, 2> g = {scale * ((ai == 0 ? 1.0 : 0.0) - c.probs[0]),
                                   scale * ((ai == 1 ? 1.0 : 0.0) - c.probs[1])};
  grad.b2[0] += g[0];
  grad.b2[1] += g[1];
  for (std::size_t j = 0; j < h; ++j) {
    grad.w2[j * 2] += c.act[j] * g[0];
    grad.w2[j * 2 + 1] += c.act[j] * g[1];
    if (c.pre[j] <= 0.0) continue;
    const double gh = pol.w2[j * 2] * g[0] + pol.w2[j * 2 + 1] * g[1];
    grad.b1[j] += gh;
    for (std::size_t i = 0; i < kStateDim; ++i) grad.w1[i * h + j] += c.input[i] * gh;
  }
}

inline RouterPolicy policy_grad_logprob(const RouterPolicy& pol, const RouterState& s, RoutingAction a) {
  auto c = policy_forward_cached(pol, s);
  RouterPolicy grad = pol.zeros_like();
  accumulate_grad_logprob(pol, c, a, 1.0, grad);
  return grad;
}

struct PolicyKind {
  enum class Kind { SrmOnly, LrmOnly, Random, EntropyThreshold, ConfidenceThreshold, Learned };
  Kind kind = Kind::SrmOnly;
  double param = 0.5;  // p for Random, theta for threshold kinds, cutoff for Learned
  std::shared_ptr<const RouterPolicy> policy;
  bool sample = false;  // Learned: sample the action instead of thresholding

  static PolicyKind srm_only() { return {Kind::SrmOnly, 0.0, nullptr, false}; }
  static PolicyKind lrm_only() { return {Kind::LrmOnly, 0.0, nullptr, false}; }
  static PolicyKind random(double p) { return {Kind::Random, p, nullptr, false}; }
  static PolicyKind entropy_threshold(double t) { return {Kind::EntropyThreshold, t, nullptr, false}; }
  static PolicyKind confidence_threshold(double t) {
    return {Kind::ConfidenceThreshold, t, nullptr, false};
  }
  static PolicyKind learned(std::shared_ptr<const RouterPolicy> p, double cutoff, bool sample = false) {
    return {Kind::Learned, cutoff, std::move(p), sample};
  }

  PolicyKind with_param(double p) const {
    PolicyKind k = *this;
    k.param = p;
    return k;
  }

  void check() const {
    if (kind != Kind::SrmOnly && kind != Kind::LrmOnly && (param < 0.0 || param > 1.0))
      throw Error("PolicyKind: parameter must lie in [0, 1]");
    if (kind == Kind::Learned && !policy) throw Error("PolicyKind: learned policy missing");
  }

  // Threshold baselines read a fixed signal; everything else uses the run's.
  Signal effective_signal(Signal run_signal) const {
    if (kind == Kind::EntropyThreshold) return Signal::AvgEntropy;
    if (kind == Kind::ConfidenceThreshold) return Signal::AvgConfidence;
    return run_signal;
  }

  std::string name() const {
    switch (kind) {
      case Kind::SrmOnly: return "srm_only";
      case Kind::LrmOnly: return "lrm_only";
      case Kind::Random: return "random";
      case Kind::EntropyThreshold: return "entropy_threshold";
      case Kind::ConfidenceThreshold: return "confidence_threshold";
      case Kind::Learned: return "learned";
    }
    return "?";
  }
};

inline RoutingAction decide(const PolicyKind& pk, const RouterState& s, std::mt19937_64& rng) {
  using K = PolicyKind::Kind;
  switch (pk.kind) {
    case K::SrmOnly: return RoutingAction::Continue;
    case K::LrmOnly: return RoutingAction::Regenerate;
    case K::Random: return uniform01(rng) < pk.param ? RoutingAction::Regenerate : RoutingAction::Continue;
    case K::EntropyThreshold:
      return s.current_uncertainty > pk.param ? RoutingAction::Regenerate : RoutingAction::Continue;
    case K::ConfidenceThreshold:
      return s.current_uncertainty < pk.param ? RoutingAction::Regenerate : RoutingAction::Continue;
    case K::Learned: {
      double p = policy_forward(*pk.policy, s);
      if (pk.sample) return uniform01(rng) < p ? RoutingAction::Regenerate : RoutingAction::Continue;
      return p >= pk.param ? RoutingAction::Regenerate : RoutingAction::Continue;
    }
  }
  return RoutingAction::Continue;
}

// One routing decision, kept for policy-gradient training.
struct Decision {
  RouterState state;
  RoutingAction action = RoutingAction::Continue;
  double behavior_logprob = 0.0;
};

struct Rollout {
  RoutingTrajectory trajectory;
  std::vector<Decision> decisions;
  std::string error;  // set when the trajectory failed
};

using AnswerMatcher = std::function<bool(const std::string& answer, const std::string& gold)>;

inline bool exact_match(const std::string& a, const std::string& g) { return trim(a) == trim(g); }

struct RunOptions {
  Signal signal = Signal::AvgEntropy;
  bool record_decisions = false;
  AnswerMatcher matcher = exact_match;
};

inline Rollout run_trajectory(const QueryRecord& q, Backend& srm, Backend& lrm, const PolicyKind& pk,
                              const EngineLimits& limits, StreamKey stream, const RunOptions& opt = {}) {
  pk.check();
  limits.check();
  Rollout out;
  RoutingTrajectory& t = out.trajectory;
  t.query_id = q.id;
  t.source_policy = pk.name();
  std::vector<std::optional<bool>> latent;
  const Signal sig = pk.effective_signal(opt.signal);
  bool finished = false;

  try {
    for (std::size_t i = 1; i <= limits.max_steps; ++i) {
      GenerationContext ctx{&q, &t.steps, i, latent.empty() ? std::nullopt : latent.back()};
      StepDraft draft = srm.draft_step(ctx, stream);
      RouterState state = featurize(ctx, draft, sig, limits);
      auto drng = stream.child("decide").child(static_cast<std::uint64_t>(i)).engine();
      RoutingAction a = decide(pk, state, drng);
      if (opt.record_decisions && pk.kind == PolicyKind::Kind::Learned)
        out.decisions.push_back({state, a, policy_logprob(*pk.policy, state, a)});

      ReasoningStep step;
      step.draft_uncertainty = draft.uncertainty;
      step.draft_token_count = draft.token_count;
      t.srm_tokens += draft.token_count;
      t.latency_seconds += draft.latency_seconds;
      bool is_final = draft.is_final;
      if (a == RoutingAction::Regenerate) {
        StepDraft regen = lrm.draft_step(ctx, stream);
        step.text = std::move(regen.text);
        step.producer = Producer::LRM;
        step.token_count = regen.token_count;
        step.uncertainty = regen.uncertainty;
        t.lrm_tokens += regen.token_count;
        t.latency_seconds += regen.latency_seconds;
        latent.push_back(regen.latent_correct);
        is_final = regen.is_final;
      } else {
        step.text = std::move(draft.text);
        step.producer = Producer::SRM;
        step.token_count = draft.token_count;
        step.uncertainty = draft.uncertainty;
        latent.push_back(draft.latent_correct);
      }
      t.steps.push_back(std::move(step));
      t.actions.push_back(a);
      if (is_final) {
        finished = true;
        break;
      }
      if (t.srm_tokens + t.lrm_tokens >= limits.max_total_tokens) break;
    }
  } catch (const std::exception& e) {
    t.failed = true;
    out.error = e.what();
    return out;
  }

  if (finished) t.final_answer = srm.final_answer(q, t.steps, latent);
  if (q.gold_answer) t.outcome_correct = t.final_answer && opt.matcher(*t.final_answer, *q.gold_answer);
  return out;
}

}  // namespace roro
