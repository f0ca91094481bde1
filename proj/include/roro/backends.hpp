#pragma once

// Generation backends: an interface producing one reasoning-step draft at a
// time, plus the simulated backend backed by the synthetic world.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "roro/core.hpp"
#include "roro/rng.hpp"
#include "roro/synthworld.hpp"

namespace roro {

struct StepDraft {
  std::string text;
  std::int64_t token_count = 1;
  Uncertainty uncertainty;
  std::optional<bool> latent_correct;  // simulated backend only
  bool is_final = false;
  double latency_seconds = 0.0;
};

struct GenerationContext {
  const QueryRecord* query = nullptr;
  const std::vector<ReasoningStep>* accepted_steps = nullptr;
  std::size_t step_index = 1;  // 1-based; == |accepted_steps| + 1
  // Hidden simulator state: correctness of the previous accepted step.
  std::optional<bool> prev_step_correct;

  void check() const {
    if (query == nullptr || accepted_steps == nullptr) throw Error("GenerationContext: null input");
    if (step_index != accepted_steps->size() + 1)
      throw Error("GenerationContext: step_index must equal |accepted_steps| + 1");
  }
};

struct BackendSpec {
  enum class Kind { Simulated, Remote };
  Kind kind = Kind::Simulated;
  Producer role = Producer::SRM;
  std::optional<std::string> endpoint;
  std::optional<std::string> model_name;
  double param_count = 1.7e9;
  double request_timeout_seconds = 120.0;
  int max_concurrent = 4;
  // Remote-only knobs.
  std::string api_key_env = "RORO_API_KEY";
  int top_k = 20;
  double temperature = 0.7;
  double top_p = 0.95;
  int max_tokens = 16384;
  int max_retries = 3;
  double backoff_base_seconds = 0.5;
  // Simulated-only: modeled wall time per generated step.
  double simulated_seconds_per_step = 0.0;

  void check() const {
    if (!(param_count > 0.0)) throw Error("BackendSpec: param_count must be positive");
    if (max_concurrent < 1) throw Error("BackendSpec: max_concurrent must be positive");
    if (kind == Kind::Remote && (!endpoint || !model_name))
      throw Error("BackendSpec: remote backend requires endpoint and model_name");
  }
};

class Backend {
 public:
  virtual ~Backend() = default;

  // Must be safe to call concurrently from several trajectory workers.
  virtual StepDraft draft_step(const GenerationContext& ctx, StreamKey stream) = 0;
  virtual const BackendSpec& spec() const = 0;

  // Final answer of a completed trace. `latent` holds simulator correctness
  // flags for each accepted step when available.
  virtual std::optional<std::string> final_answer(
      const QueryRecord& q, const std::vector<ReasoningStep>& steps,
      const std::vector<std::optional<bool>>& latent) const {
    (void)q;
    (void)latent;
    if (steps.empty()) return std::nullopt;
    return extract_boxed(steps.back().text);
  }

  // Contents of the last \boxed{...} in `text`, with brace matching.
  static std::optional<std::string> extract_boxed(std::string_view text) {
    constexpr std::string_view kTag = "\\boxed{";
    std::size_t at = text.rfind(kTag);
    if (at == std::string_view::npos) return std::nullopt;
    std::size_t i = at + kTag.size();
    int depth = 1;
    std::string out;
    for (; i < text.size(); ++i) {
      char c = text[i];
      if (c == '{') ++depth;
      if (c == '}' && --depth == 0) return std::string(trim(out));
      out.push_back(c);
    }
    return std::nullopt;
  }
};

// One (token, logprob) alternative returned for a generated position.
struct TokenLogprob {
  std::string token;
  double logprob = 0.0;
};

// Uncertainty of one generated step from per-token top-k log-probabilities.
// Top-k lists are renormalized before computing entropies and max
// probabilities.
inline double compute_uncertainty(Signal kind,
                                  const std::vector<std::vector<TokenLogprob>>& token_distributions,
                                  const std::vector<double>& chosen_logprobs) {
  auto entropy_of = [](const std::vector<TokenLogprob>& dist) {
    if (dist.empty()) throw Error("compute_uncertainty: empty top-k list");
    double mx = -INFINITY;
    for (const auto& t : dist) mx = std::max(mx, t.logprob);
    double z = 0.0;
    for (const auto& t : dist) z += std::exp(t.logprob - mx);
    double h = 0.0;
    for (const auto& t : dist) {
      double p = std::exp(t.logprob - mx) / z;
      if (p > 0.0) h -= p * std::log(p);
    }
    return h;
  };
  auto max_prob_of = [](const std::vector<TokenLogprob>& dist) {
    if (dist.empty()) throw Error("compute_uncertainty: empty top-k list");
    double mx = -INFINITY;
    for (const auto& t : dist) mx = std::max(mx, t.logprob);
    double z = 0.0;
    for (const auto& t : dist) z += std::exp(t.logprob - mx);
    return 1.0 / z;
  };
  auto mean_entropy = [&](std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += entropy_of(token_distributions[i]);
    return s / static_cast<double>(n);
  };

  switch (kind) {
    case Signal::AvgEntropy:
      if (token_distributions.empty()) throw Error("compute_uncertainty: no tokens");
      return mean_entropy(token_distributions.size());
    case Signal::First3Entropy:
      if (token_distributions.empty()) throw Error("compute_uncertainty: no tokens");
      return mean_entropy(std::min<std::size_t>(3, token_distributions.size()));
    case Signal::AvgConfidence: {
      if (token_distributions.empty()) throw Error("compute_uncertainty: no tokens");
      double s = 0.0;
      for (const auto& d : token_distributions) s += max_prob_of(d);
      return s / static_cast<double>(token_distributions.size());
    }
    case Signal::AvgNll: {
      if (chosen_logprobs.empty()) throw Error("compute_uncertainty: no tokens");
      double s = 0.0;
      for (double lp : chosen_logprobs) s += -lp;
      return std::max(0.0, s / static_cast<double>(chosen_logprobs.size()));
    }
  }
  throw Error("compute_uncertainty: unknown signal");
}

inline Uncertainty uncertainty_from_logprobs(
    const std::vector<std::vector<TokenLogprob>>& token_distributions,
    const std::vector<double>& chosen_logprobs) {
  Uncertainty u;
  u.avg_entropy = compute_uncertainty(Signal::AvgEntropy, token_distributions, chosen_logprobs);
  u.avg_confidence = compute_uncertainty(Signal::AvgConfidence, token_distributions, chosen_logprobs);
  u.avg_nll = compute_uncertainty(Signal::AvgNll, token_distributions, chosen_logprobs);
  u.first3_entropy = compute_uncertainty(Signal::First3Entropy, token_distributions, chosen_logprobs);
  return u;
}

// Backend over the synthetic world. A step's randomness is keyed by
// (trajectory stream, step index), so the draft at step i does not depend on
// earlier routing decisions. SRM and LRM share one correctness uniform per
// step: the LRM is correct whenever the SRM would have been.
class SimulatedBackend final : public Backend {
 public:
  SimulatedBackend(BackendSpec spec, synth::WorldConfig world)
      : spec_(std::move(spec)), world_(std::move(world)) {
    spec_.check();
    world_.check();
    if (spec_.kind != BackendSpec::Kind::Simulated)
      throw Error("SimulatedBackend: spec kind must be simulated");
  }

  const BackendSpec& spec() const override { return spec_; }
  const synth::WorldConfig& world() const { return world_; }

  StepDraft draft_step(const GenerationContext& ctx, StreamKey stream) override {
    ctx.check();
    const QueryRecord& q = *ctx.query;
    if (q.origin != Origin::Synthetic || q.step_difficulties.empty())
      throw Error("SimulatedBackend: query " + q.id + " is not synthetic");
    const std::size_t n = q.step_difficulties.size();
    if (ctx.step_index > n)
      throw Error("SimulatedBackend: step " + std::to_string(ctx.step_index) + " beyond query length");

    double d = q.step_difficulties[ctx.step_index - 1];
    if (world_.error_propagation && ctx.prev_step_correct.has_value() && !*ctx.prev_step_correct)
      d = std::min(1.0, d + world_.propagation_delta);

    StreamKey step_key = stream.child("step").child(static_cast<std::uint64_t>(ctx.step_index));
    auto shared = step_key.child("correct").engine();
    const double u = uniform01(shared);
    auto noise = step_key.child(spec_.role == Producer::SRM ? "srm" : "lrm").engine();

    const bool srm = spec_.role == Producer::SRM;
    const double base = srm ? d : d * (world_.lrm_slope / world_.srm_slope);
    const double sd = world_.noise_sd;
    StepDraft out;
    out.uncertainty.avg_entropy = std::clamp(base + sd * standard_normal(noise), 0.0, 2.0);
    out.uncertainty.avg_confidence =
        std::exp(-std::clamp(base + sd * standard_normal(noise), 0.0, 2.0));
    out.uncertainty.avg_nll = std::max(0.0, 0.8 * (base + sd * standard_normal(noise)));
    out.uncertainty.first3_entropy = std::clamp(base + 2.0 * sd * standard_normal(noise), 0.0, 2.0);

    const double p = srm ? world_.p_srm(d) : world_.p_lrm(d);
    out.latent_correct = u < p;
    out.token_count = srm ? world_.srm_tokens_per_step : world_.lrm_tokens_per_step;
    out.is_final = ctx.step_index == n;
    out.latency_seconds = spec_.simulated_seconds_per_step;
    out.text = "[" + std::string(to_string(spec_.role)) + "] step " + std::to_string(ctx.step_index) +
               " of " + q.id;
    if (out.is_final) out.text += " => final";
    return out;
  }

  std::optional<std::string> final_answer(const QueryRecord& q, const std::vector<ReasoningStep>& steps,
                                          const std::vector<std::optional<bool>>& latent) const override {
    if (steps.empty() || latent.size() != steps.size()) return std::nullopt;
    bool ok;
    if (world_.error_propagation) {
      ok = latent.back().value_or(false);
    } else {
      ok = std::all_of(latent.begin(), latent.end(),
                       [](const std::optional<bool>& b) { return b.value_or(false); });
    }
    std::string gold = q.gold_answer.value_or(synth::gold_for(q.id));
    return ok ? gold : "wrong-" + q.id;
  }

 private:
  BackendSpec spec_;
  synth::WorldConfig world_;
};

}  // namespace roro
