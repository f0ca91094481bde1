#pragma once

// Rubric-guided process reward modeling with parametric backends: a linear
// judge trained with Bradley-Terry losses, a factorized categorical rubric
// generator trained by policy gradient, their alternating optimization, and
// the process reward used during router training.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "roro/core.hpp"
#include "roro/criteria.hpp"
#include "roro/gate.hpp"
#include "roro/prefdata.hpp"
#include "roro/rng.hpp"

namespace roro {

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

inline double log_sigmoid(double x) { return -softplus(-x); }

// ---------------------------------------------------------------------------
// Judge

// One slot per scored criterion kind holding [v, w, v*w], then a bias.
inline constexpr std::size_t kJudgeSlotWidth = 3;
inline constexpr std::size_t kJudgeFeatures = kNumScoredKinds * kJudgeSlotWidth + 1;

inline std::vector<double> judge_features(const RoutingTrajectory& t, const Rubric& r) {
  std::vector<double> x(kJudgeFeatures, 0.0);
  std::vector<bool> used(kNumScoredKinds, false);
  for (const auto& c : r.criteria) {
    if (c.kind == CriterionKind::Prompted) throw Error("parametric judge cannot score prompted criteria");
    const auto slot = static_cast<std::size_t>(c.kind);
    if (used[slot]) throw Error("parametric judge: duplicate criterion kind in rubric");
    used[slot] = true;
    const double v = score_criterion(c, t);
    x[slot * kJudgeSlotWidth + 0] = v;
    x[slot * kJudgeSlotWidth + 1] = c.weight;
    x[slot * kJudgeSlotWidth + 2] = v * c.weight;
  }
  x.back() = 1.0;
  return x;
}

struct JudgeModel {
  std::vector<double> params = std::vector<double>(kJudgeFeatures, 0.0);

  double score(const std::vector<double>& features) const {
    if (features.size() != params.size()) throw Error("judge: feature size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) s += params[i] * features[i];
    return s;
  }
  double score(const RoutingTrajectory& t, const Rubric& r) const { return score(judge_features(t, r)); }

  // Indicator weights on every v*w slot: the score is the weighted criterion sum.
  static JudgeModel weighted_sum() {
    JudgeModel j;
    for (std::size_t k = 0; k < kNumScoredKinds; ++k) j.params[k * kJudgeSlotWidth + 2] = 1.0;
    return j;
  }

  bool operator==(const JudgeModel&) const = default;
};

inline double judge_score(const JudgeModel& j, const RoutingTrajectory& t, const Rubric& r) {
  return j.score(t, r);
}

// -log sigmoid(margin)
inline double bt_loss(double margin) { return softplus(-margin); }

inline double bt_pair_loss(const JudgeModel& j, const TrajectoryPool& pool, const PreferencePair& p,
                           const Rubric& r) {
  return bt_loss(j.score(pool.trajectories.at(p.winner), r) - j.score(pool.trajectories.at(p.loser), r));
}

// A query's pool together with its preference pairs.
struct PreferenceGroup {
  TrajectoryPool pool;
  std::vector<PreferencePair> pairs;
};

// Feature differences x(winner) - x(loser) under a rubric.
inline std::vector<std::vector<double>> pair_feature_diffs(const PreferenceGroup& g, const Rubric& r) {
  std::vector<std::vector<double>> feats(g.pool.trajectories.size());
  std::vector<std::vector<double>> out;
  auto f = [&](std::size_t i) -> const std::vector<double>& {
    if (feats.at(i).empty()) feats[i] = judge_features(g.pool.trajectories[i], r);
    return feats[i];
  };
  for (const auto& p : g.pairs) {
    const auto& a = f(p.winner);
    const auto& b = f(p.loser);
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = a[i] - b[i];
    out.push_back(std::move(d));
  }
  return out;
}

inline double mean_bt_loss(const JudgeModel& j, const std::vector<std::vector<double>>& diffs) {
  if (diffs.empty()) return 0.0;
  double s = 0.0;
  for (const auto& d : diffs) s += bt_loss(j.score(d));
  return s / static_cast<double>(diffs.size());
}

// Gradient of the mean BT loss: -(1/n) sum sigmoid(-m) * (x+ - x-).
inline std::vector<double> bt_gradient(const JudgeModel& j, const std::vector<std::vector<double>>& diffs) {
  std::vector<double> g(j.params.size(), 0.0);
  if (diffs.empty()) return g;
  for (const auto& d : diffs) {
    const double coef = -sigmoid(-j.score(d));
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += coef * d[i];
  }
  for (auto& x : g) x /= static_cast<double>(diffs.size());
  return g;
}

// Full-batch gradient descent; returns the mean loss after each epoch.
inline std::vector<double> train_bt(JudgeModel& j, const std::vector<std::vector<double>>& diffs, int epochs,
                                    double lr) {
  std::vector<double> curve;
  for (int e = 0; e < epochs; ++e) {
    const auto g = bt_gradient(j, diffs);
    for (std::size_t i = 0; i < g.size(); ++i) j.params[i] -= lr * g[i];
    const double loss = mean_bt_loss(j, diffs);
    if (!std::isfinite(loss)) throw Error("judge training: non-finite loss at epoch " + std::to_string(e));
    curve.push_back(loss);
  }
  return curve;
}

// Trains the judge under one fixed rubric (the seed rubric) on every pair.
inline std::vector<double> warm_start_judge(JudgeModel& j, const std::vector<PreferenceGroup>& groups,
                                            const Rubric& seed, int epochs, double lr) {
  std::vector<std::vector<double>> diffs;
  for (const auto& g : groups) {
    auto d = pair_feature_diffs(g, seed);
    diffs.insert(diffs.end(), std::make_move_iterator(d.begin()), std::make_move_iterator(d.end()));
  }
  return train_bt(j, diffs, epochs, lr);
}

// Trains on every pair of each query under that query's validated rubric.
// Groups without a rubric are skipped.
inline std::vector<double> judge_update_phase2(JudgeModel& j, const std::vector<PreferenceGroup>& groups,
                                               const std::vector<std::optional<Rubric>>& rubrics, int epochs,
                                               double lr) {
  if (rubrics.size() != groups.size()) throw Error("judge_update_phase2: one rubric slot per group required");
  std::vector<std::vector<double>> diffs;
  for (std::size_t q = 0; q < groups.size(); ++q) {
    if (!rubrics[q]) continue;
    auto d = pair_feature_diffs(groups[q], *rubrics[q]);
    diffs.insert(diffs.end(), std::make_move_iterator(d.begin()), std::make_move_iterator(d.end()));
  }
  return train_bt(j, diffs, epochs, lr);
}

// Fraction of pairs ranked correctly (ties count one half).
inline double judge_pair_accuracy(const JudgeModel& j, const std::vector<PreferenceGroup>& groups,
                                  const std::function<Rubric(std::size_t)>& rubric_for) {
  double ok = 0.0;
  std::size_t n = 0;
  for (std::size_t q = 0; q < groups.size(); ++q) {
    if (groups[q].pairs.empty()) continue;
    const Rubric r = rubric_for(q);
    for (const auto& d : pair_feature_diffs(groups[q], r)) {
      const double m = j.score(d);
      ok += m > 0.0 ? 1.0 : (m == 0.0 ? 0.5 : 0.0);
      ++n;
    }
  }
  return n == 0 ? 0.0 : ok / static_cast<double>(n);
}

// log sigmoid of the mean preference margin under a frozen judge.
inline double rubric_reward(const JudgeModel& j, const Rubric& validated, const PreferenceGroup& g) {
  if (g.pairs.empty()) throw Error("rubric_reward: empty pair set");
  double sum = 0.0;
  for (const auto& d : pair_feature_diffs(g, validated)) sum += j.score(d);
  return log_sigmoid(sum / static_cast<double>(g.pairs.size()));
}

// ---------------------------------------------------------------------------
// Rubric generator (parametric)
//
// A rubric is drawn as: size L ~ Cat(size_logits); a set of L distinct kinds
// drawn sequentially without replacement from softmax(kind_logits) over the
// remaining kinds; for each chosen kind a threshold and (timely escalation
// only) a window from categorical grids. Weights are uniform 1/L. The rubric
// is a set, so its probability sums the sequential probabilities over every
// ordering of the chosen kinds.

struct RubricorModel {
  std::vector<CriterionKind> vocab;
  std::vector<double> kind_logits;
  std::size_t min_size = 3;
  std::size_t max_size = 5;
  std::vector<double> size_logits;
  std::vector<double> threshold_grid;
  std::vector<std::vector<double>> threshold_logits;  // per vocab entry; empty if unused
  std::vector<double> window_grid;
  std::vector<double> window_logits;

  static RubricorModel uniform(std::vector<CriterionKind> vocab = {kScoredKinds.begin(), kScoredKinds.end()},
                               std::size_t min_size = 3, std::size_t max_size = 5,
                               std::vector<double> threshold_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8},
                               std::vector<double> window_grid = {1.0, 2.0, 4.0}) {
    RubricorModel g;
    g.vocab = std::move(vocab);
    g.min_size = min_size;
    g.max_size = max_size;
    g.threshold_grid = std::move(threshold_grid);
    g.window_grid = std::move(window_grid);
    g.kind_logits.assign(g.vocab.size(), 0.0);
    g.size_logits.assign(max_size - min_size + 1, 0.0);
    for (auto k : g.vocab)
      g.threshold_logits.emplace_back(uses_threshold(k) ? g.threshold_grid.size() : 0, 0.0);
    g.window_logits.assign(g.window_grid.size(), 0.0);
    g.check();
    return g;
  }

  void check() const {
    if (vocab.empty()) throw Error("rubricor: empty vocabulary");
    if (min_size < 1 || max_size < min_size || max_size > vocab.size())
      throw Error("rubricor: invalid rubric size range");
    if (kind_logits.size() != vocab.size() || size_logits.size() != max_size - min_size + 1 ||
        threshold_logits.size() != vocab.size() || window_logits.size() != window_grid.size())
      throw Error("rubricor: parameter shape mismatch");
    for (std::size_t i = 0; i < vocab.size(); ++i)
      if (vocab[i] == CriterionKind::Prompted) throw Error("rubricor: prompted kinds are not parametric");
  }

  std::size_t num_params() const {
    std::size_t n = kind_logits.size() + size_logits.size() + window_logits.size();
    for (const auto& t : threshold_logits) n += t.size();
    return n;
  }

  std::vector<double> flatten() const {
    std::vector<double> out(kind_logits);
    out.insert(out.end(), size_logits.begin(), size_logits.end());
    for (const auto& t : threshold_logits) out.insert(out.end(), t.begin(), t.end());
    out.insert(out.end(), window_logits.begin(), window_logits.end());
    return out;
  }

  void assign(const std::vector<double>& flat) {
    if (flat.size() != num_params()) throw Error("rubricor: flat parameter size mismatch");
    std::size_t off = 0;
    auto take = [&](std::vector<double>& v) {
      std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                flat.begin() + static_cast<std::ptrdiff_t>(off + v.size()), v.begin());
      off += v.size();
    };
    take(kind_logits);
    take(size_logits);
    for (auto& t : threshold_logits) take(t);
    take(window_logits);
  }

  std::size_t kind_offset() const { return 0; }
  std::size_t size_offset() const { return kind_logits.size(); }
  std::size_t threshold_offset(std::size_t vocab_index) const {
    std::size_t off = kind_logits.size() + size_logits.size();
    for (std::size_t i = 0; i < vocab_index; ++i) off += threshold_logits[i].size();
    return off;
  }
  std::size_t window_offset() const { return num_params() - window_logits.size(); }

  std::size_t vocab_index(CriterionKind k) const {
    for (std::size_t i = 0; i < vocab.size(); ++i)
      if (vocab[i] == k) return i;
    throw Error("rubricor: kind " + std::string(to_string(k)) + " outside vocabulary");
  }

  bool operator==(const RubricorModel&) const = default;
};

namespace detail {
inline std::vector<double> softmax(const std::vector<double>& l) {
  std::vector<double> p(l.size());
  if (l.empty()) return p;
  const double m = *std::max_element(l.begin(), l.end());
  double z = 0.0;
  for (std::size_t i = 0; i < l.size(); ++i) z += (p[i] = std::exp(l[i] - m));
  for (auto& x : p) x /= z;
  return p;
}
inline std::size_t sample_categorical(const std::vector<double>& p, std::mt19937_64& g) {
  double u = uniform01(g), acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return i;
  }
  return p.size() - 1;
}
inline std::size_t grid_index(const std::vector<double>& grid, double v, const char* what) {
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (grid[i] == v) return i;
  throw Error(std::string("rubricor: ") + what + " value not on grid");
}
// Adds d log softmax(l)[i] / d l into g at offset.
inline void add_log_softmax_grad(const std::vector<double>& l, std::size_t i, double scale,
                                 std::vector<double>& g, std::size_t off) {
  const auto p = softmax(l);
  for (std::size_t k = 0; k < l.size(); ++k) g[off + k] += scale * ((k == i ? 1.0 : 0.0) - p[k]);
}
}  // namespace detail

struct RubricSample {
  Rubric rubric;
  double log_prob = 0.0;
};

// Decomposition of a rubric into generator choices.
struct RubricChoices {
  std::vector<std::size_t> kinds;  // vocab indices, ascending
  std::vector<std::size_t> threshold_idx;
  std::vector<std::size_t> window_idx;
};

inline RubricChoices rubric_choices(const RubricorModel& g, const Rubric& r) {
  RubricChoices c;
  for (const auto& cr : r.criteria) c.kinds.push_back(g.vocab_index(cr.kind));
  std::vector<std::size_t> order(c.kinds.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return c.kinds[a] < c.kinds[b]; });
  RubricChoices s;
  for (std::size_t o : order) {
    const auto& cr = r.criteria[o];
    s.kinds.push_back(c.kinds[o]);
    s.threshold_idx.push_back(uses_threshold(cr.kind) ? detail::grid_index(g.threshold_grid, cr.threshold, "threshold") : 0);
    s.window_idx.push_back(uses_window(cr.kind) ? detail::grid_index(g.window_grid, cr.window, "window") : 0);
  }
  for (std::size_t i = 1; i < s.kinds.size(); ++i)
    if (s.kinds[i] == s.kinds[i - 1]) throw Error("rubricor: duplicate kind in rubric");
  return s;
}

inline Rubric build_rubric(const RubricorModel& g, const RubricChoices& c) {
  Rubric r;
  const double w = 1.0 / static_cast<double>(c.kinds.size());
  for (std::size_t i = 0; i < c.kinds.size(); ++i) {
    const CriterionKind k = g.vocab[c.kinds[i]];
    const double th = uses_threshold(k) ? g.threshold_grid[c.threshold_idx[i]] : 0.3;
    const double win = uses_window(k) ? g.window_grid[c.window_idx[i]] : 2.0;
    r.criteria.push_back(make_criterion(k, w, th, win));
  }
  return r;
}

namespace detail {
// Sum over orderings of the sequential without-replacement probabilities of
// a kind set; optionally accumulates the gradient of log P(set).
inline double kind_set_log_prob(const RubricorModel& g, std::vector<std::size_t> set,
                                std::vector<double>* grad) {
  std::sort(set.begin(), set.end());
  const std::size_t V = g.vocab.size();
  std::vector<double> probs;
  std::vector<std::vector<double>> grads;
  do {
    std::vector<bool> taken(V, false);
    double lp = 0.0;
    std::vector<double> gk(V, 0.0);
    for (std::size_t pos : set) {
      double m = -INFINITY;
      for (std::size_t k = 0; k < V; ++k)
        if (!taken[k]) m = std::max(m, g.kind_logits[k]);
      double z = 0.0;
      for (std::size_t k = 0; k < V; ++k)
        if (!taken[k]) z += std::exp(g.kind_logits[k] - m);
      lp += g.kind_logits[pos] - m - std::log(z);
      if (grad) {
        for (std::size_t k = 0; k < V; ++k)
          if (!taken[k]) gk[k] -= std::exp(g.kind_logits[k] - m) / z;
        gk[pos] += 1.0;
      }
      taken[pos] = true;
    }
    probs.push_back(lp);
    if (grad) grads.push_back(std::move(gk));
  } while (std::next_permutation(set.begin(), set.end()));
  const double m = *std::max_element(probs.begin(), probs.end());
  double z = 0.0;
  for (double lp : probs) z += std::exp(lp - m);
  const double log_set = m + std::log(z);
  if (grad) {
    for (std::size_t o = 0; o < probs.size(); ++o) {
      const double w = std::exp(probs[o] - log_set);
      for (std::size_t k = 0; k < V; ++k) (*grad)[g.kind_offset() + k] += w * grads[o][k];
    }
  }
  return log_set;
}
}  // namespace detail

inline double rubricor_log_prob(const RubricorModel& g, const Rubric& r, std::vector<double>* grad = nullptr) {
  const RubricChoices c = rubric_choices(g, r);
  const std::size_t L = c.kinds.size();
  if (L < g.min_size || L > g.max_size) return -INFINITY;
  if (grad) grad->assign(g.num_params(), 0.0);
  double lp = 0.0;
  const auto ps = detail::softmax(g.size_logits);
  lp += std::log(ps[L - g.min_size]);
  if (grad) detail::add_log_softmax_grad(g.size_logits, L - g.min_size, 1.0, *grad, g.size_offset());
  lp += detail::kind_set_log_prob(g, c.kinds, grad);
  for (std::size_t i = 0; i < L; ++i) {
    const std::size_t v = c.kinds[i];
    const CriterionKind k = g.vocab[v];
    if (uses_threshold(k)) {
      lp += std::log(detail::softmax(g.threshold_logits[v])[c.threshold_idx[i]]);
      if (grad) detail::add_log_softmax_grad(g.threshold_logits[v], c.threshold_idx[i], 1.0, *grad, g.threshold_offset(v));
    }
    if (uses_window(k)) {
      lp += std::log(detail::softmax(g.window_logits)[c.window_idx[i]]);
      if (grad) detail::add_log_softmax_grad(g.window_logits, c.window_idx[i], 1.0, *grad, g.window_offset());
    }
  }
  return lp;
}

inline std::vector<double> rubricor_grad_log_prob(const RubricorModel& g, const Rubric& r) {
  std::vector<double> grad;
  rubricor_log_prob(g, r, &grad);
  return grad;
}

inline RubricSample rubricor_draw(const RubricorModel& g, std::mt19937_64& rng) {
  RubricChoices c;
  const std::size_t L = g.min_size + detail::sample_categorical(detail::softmax(g.size_logits), rng);
  std::vector<double> logits = g.kind_logits;
  for (std::size_t s = 0; s < L; ++s) {
    const auto p = detail::softmax(logits);
    const std::size_t k = detail::sample_categorical(p, rng);
    c.kinds.push_back(k);
    logits[k] = -INFINITY;
  }
  std::sort(c.kinds.begin(), c.kinds.end());
  for (std::size_t v : c.kinds) {
    const CriterionKind k = g.vocab[v];
    c.threshold_idx.push_back(uses_threshold(k) ? detail::sample_categorical(detail::softmax(g.threshold_logits[v]), rng) : 0);
    c.window_idx.push_back(uses_window(k) ? detail::sample_categorical(detail::softmax(g.window_logits), rng) : 0);
  }
  RubricSample s;
  s.rubric = build_rubric(g, c);
  s.log_prob = rubricor_log_prob(g, s.rubric);
  return s;
}

// M independent draws. The parametric generator conditions on nothing but
// its parameters; the query and pool only key the random stream.
inline std::vector<RubricSample> rubricor_sample(const RubricorModel& g, std::size_t M, StreamKey stream) {
  if (M < 1) throw Error("rubricor_sample: M must be >= 1");
  auto rng = stream.engine();
  std::vector<RubricSample> out;
  for (std::size_t m = 0; m < M; ++m) out.push_back(rubricor_draw(g, rng));
  return out;
}

// Most likely size, top-scoring kinds and modal parameters.
inline Rubric rubricor_mode(const RubricorModel& g) {
  RubricChoices c;
  const std::size_t L =
      g.min_size + static_cast<std::size_t>(std::max_element(g.size_logits.begin(), g.size_logits.end()) - g.size_logits.begin());
  std::vector<std::size_t> idx(g.vocab.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return g.kind_logits[a] > g.kind_logits[b]; });
  c.kinds.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(L));
  std::sort(c.kinds.begin(), c.kinds.end());
  auto argmax = [](const std::vector<double>& v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
  };
  for (std::size_t v : c.kinds) {
    const CriterionKind k = g.vocab[v];
    c.threshold_idx.push_back(uses_threshold(k) ? argmax(g.threshold_logits[v]) : 0);
    c.window_idx.push_back(uses_window(k) ? argmax(g.window_logits) : 0);
  }
  return build_rubric(g, c);
}

// Reward of a candidate rubric; nullopt marks a rubric discarded by the gate.
struct ScoredRubric {
  Rubric rubric;
  std::optional<double> rho;
};

struct DiscardPolicy {
  enum class Mode { BatchMinMinus, Constant };
  Mode mode = Mode::BatchMinMinus;
  double value = 0.1;  // margin below the batch minimum, or the constant reward
};

struct RubricorUpdateStats {
  std::size_t groups_used = 0;
  std::size_t groups_skipped = 0;
  std::size_t discarded = 0;
  std::size_t total = 0;
};

// Policy-gradient ascent on sum (rho - b) * grad log G, with b the mean
// reward of the query's M samples. Discarded samples receive the discard
// policy's reward; queries whose samples are all discarded are skipped.
inline RubricorUpdateStats rubricor_update(RubricorModel& g, const std::vector<std::vector<ScoredRubric>>& groups,
                                           double lr, const DiscardPolicy& discard = {}) {
  RubricorUpdateStats st;
  std::vector<double> grad(g.num_params(), 0.0);
  std::size_t n_samples = 0;
  for (const auto& grp : groups) {
    st.total += grp.size();
    std::vector<double> valid;
    for (const auto& s : grp)
      if (s.rho) valid.push_back(*s.rho);
    st.discarded += grp.size() - valid.size();
    if (valid.empty()) {
      ++st.groups_skipped;
      continue;
    }
    const double disc = discard.mode == DiscardPolicy::Mode::Constant
                            ? discard.value
                            : *std::min_element(valid.begin(), valid.end()) - discard.value;
    std::vector<double> rho;
    for (const auto& s : grp) rho.push_back(s.rho.value_or(disc));
    const double b = std::accumulate(rho.begin(), rho.end(), 0.0) / static_cast<double>(rho.size());
    for (std::size_t m = 0; m < grp.size(); ++m) {
      const double adv = rho[m] - b;
      if (adv == 0.0) continue;
      const auto gl = rubricor_grad_log_prob(g, grp[m].rubric);
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += adv * gl[i];
    }
    n_samples += grp.size();
    ++st.groups_used;
  }
  if (n_samples == 0) return st;
  auto flat = g.flatten();
  for (std::size_t i = 0; i < flat.size(); ++i) flat[i] += lr * grad[i] / static_cast<double>(n_samples);
  g.assign(flat);
  return st;
}

// ---------------------------------------------------------------------------
// Alternating optimization

struct AlternateConfig {
  int rounds = 3;
  std::size_t samples_per_query = 4;  // M
  double rubricor_lr = 10.0;
  int rubricor_steps = 3;  // generator updates per round
  int judge_epochs = 500;
  double judge_lr = 1.0;
  DiscardPolicy discard;
  std::uint64_t seed = 0;
};

struct RoundMetrics {
  int round = 0;
  double mean_rho = 0.0;
  double discard_rate = 0.0;
  double phase2_discard_rate = 0.0;
  double judge_pair_accuracy = 0.0;
  double judge_loss = 0.0;
};

// Rubric used to evaluate the judge on held-out pairs: the generator's modal
// rubric if it passes the gate, else the fallback.
inline Rubric evaluation_rubric(const RubricorModel& g, const Gate& gate, const Rubric& fallback) {
  auto res = gate.validate(rubricor_mode(g));
  return res.rubric ? *res.rubric : fallback;
}

inline std::vector<RoundMetrics> alternate(RubricorModel& g, JudgeModel& j, const std::vector<PreferenceGroup>& train,
                                           const std::vector<PreferenceGroup>& heldout_groups, const Gate& gate,
                                           const Rubric& seed, const AlternateConfig& cfg) {
  std::vector<RoundMetrics> out;
  for (int t = 1; t <= cfg.rounds; ++t) {
    RoundMetrics rm;
    rm.round = t;
    // Phase 1: judge frozen, update the generator.
    double rho_sum = 0.0;
    std::size_t rho_n = 0, discarded = 0, drawn = 0;
    for (int step = 0; step < cfg.rubricor_steps; ++step) {
      std::vector<std::vector<ScoredRubric>> groups;
      for (std::size_t q = 0; q < train.size(); ++q) {
        if (train[q].pairs.empty()) continue;
        StreamKey key = StreamKey(cfg.seed).child("phase1").child({static_cast<std::uint64_t>(t),
                                                                   static_cast<std::uint64_t>(step)}).child(train[q].pool.query_id);
        std::vector<ScoredRubric> grp;
        for (auto& s : rubricor_sample(g, cfg.samples_per_query, key)) {
          ScoredRubric sr{s.rubric, std::nullopt};
          auto res = gate.validate(s.rubric);
          if (res.rubric) {
            sr.rho = rubric_reward(j, *res.rubric, train[q]);
            rho_sum += *sr.rho;
            ++rho_n;
          } else {
            ++discarded;
          }
          ++drawn;
          grp.push_back(std::move(sr));
        }
        groups.push_back(std::move(grp));
      }
      rubricor_update(g, groups, cfg.rubricor_lr, cfg.discard);
    }
    rm.mean_rho = rho_n ? rho_sum / static_cast<double>(rho_n) : 0.0;
    rm.discard_rate = drawn ? static_cast<double>(discarded) / static_cast<double>(drawn) : 0.0;

    // Phase 2: generator frozen, one validated rubric per query.
    std::vector<std::optional<Rubric>> rubrics(train.size());
    std::size_t p2_drawn = 0, p2_disc = 0;
    for (std::size_t q = 0; q < train.size(); ++q) {
      if (train[q].pairs.empty()) continue;
      StreamKey key = StreamKey(cfg.seed).child("phase2").child(static_cast<std::uint64_t>(t)).child(train[q].pool.query_id);
      auto s = rubricor_sample(g, 1, key).front();
      auto res = gate.validate(s.rubric);
      ++p2_drawn;
      if (res.rubric)
        rubrics[q] = std::move(res.rubric);
      else
        ++p2_disc;
    }
    rm.phase2_discard_rate = p2_drawn ? static_cast<double>(p2_disc) / static_cast<double>(p2_drawn) : 0.0;
    auto curve = judge_update_phase2(j, train, rubrics, cfg.judge_epochs, cfg.judge_lr);
    rm.judge_loss = curve.empty() ? 0.0 : curve.back();
    const Rubric eval_r = evaluation_rubric(g, gate, seed);
    rm.judge_pair_accuracy = judge_pair_accuracy(j, heldout_groups, [&](std::size_t) { return eval_r; });
    out.push_back(rm);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Process reward

using RubricJudge = std::function<double(const RoutingTrajectory&, const Rubric&)>;

inline RubricJudge parametric_judge(const JudgeModel& j) {
  return [j](const RoutingTrajectory& t, const Rubric& r) { return j.score(t, r); };
}

// Generates one rubric for the rollout group, validates it, and scores every
// trajectory under the shared rubric squashed to [0, 1]. nullopt means the
// group is discarded.
inline std::optional<std::vector<double>> process_reward(const RubricorModel& g, const RubricJudge& judge,
                                                         const Gate& gate,
                                                         const std::vector<RoutingTrajectory>& group,
                                                         StreamKey stream) {
  Rubric candidate;
  try {
    candidate = rubricor_sample(g, 1, stream).front().rubric;
  } catch (const std::exception&) {
    return std::nullopt;
  }
  auto res = gate.validate(candidate);
  if (!res.rubric) return std::nullopt;
  std::vector<double> out;
  out.reserve(group.size());
  for (const auto& t : group) out.push_back(sigmoid(judge(t, *res.rubric)));
  return out;
}

}  // namespace roro
