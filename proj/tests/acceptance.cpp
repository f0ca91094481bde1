// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "roro/checkpoint.hpp"
#include "roro/eval.hpp"
#include "roro/gate.hpp"
#include "roro/grpo.hpp"
#include "roro/json_io.hpp"
#include "roro/prefdata.hpp"
#include "roro/prompts.hpp"
#include "roro/rubric.hpp"
#include "roro/stats.hpp"
#include "roro/synthworld.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace roro;

namespace {

int failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("%s criterion %2d  %-28s %s\n", pass ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

RouterState random_state(std::mt19937_64& g) {
  RouterState s;
  s.current_uncertainty = 2.0 * uniform01(g);
  s.min_prefix_uncertainty = uniform01(g);
  s.avg_prefix_uncertainty = uniform01(g);
  s.norm_token_count = uniform01(g);
  s.norm_step_index = uniform01(g);
  return s;
}

void gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 g(101);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    auto pol = RouterPolicy::initialized(32, 1000 + static_cast<std::uint64_t>(trial));
    const auto s = random_state(g);
    const auto a = g() % 2 ? RoutingAction::Regenerate : RoutingAction::Continue;
    const auto grad = policy_grad_logprob(pol, s, a).flatten();
    auto flat = pol.flatten();
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < flat.size(); ++i) {
      const double x = flat[i];
      flat[i] = x + 1e-5;
      pol.assign(flat);
      const double up = policy_logprob(pol, s, a);
      flat[i] = x - 1e-5;
      pol.assign(flat);
      const double dn = policy_logprob(pol, s, a);
      flat[i] = x;
      pol.assign(flat);
      const double fd = (up - dn) / 2e-5;
      num += (grad[i] - fd) * (grad[i] - fd);
      den = std::max(den, std::max(grad[i] * grad[i], fd * fd));
    }
    worst = std::max(worst, std::sqrt(num) / std::max(std::sqrt(den), 1e-12));
  }
  const double secs = seconds_since(t0);
  report(1, "gradient correctness", worst <= 1e-4 && secs < 10.0,
         fmt("max relative error %.3g over 100 triples (limit 1e-4), %.2f s", worst, secs));
}

void advantage_normalization() {
  std::mt19937_64 g(102);
  double worst_mean = 0.0, worst_std = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> r(8);
    for (auto& x : r) x = standard_normal(g) * (0.05 + uniform01(g));
    const auto a = group_advantages(r, 1e-8);
    double mean = 0.0, var = 0.0;
    for (double x : a) mean += x / 8.0;
    for (double x : a) var += (x - mean) * (x - mean) / 8.0;
    worst_mean = std::max(worst_mean, std::abs(mean));
    worst_std = std::max(worst_std, std::abs(std::sqrt(var) - 1.0));
  }
  bool zeros = true;
  for (int trial = 0; trial < 100; ++trial) {
    const double c = standard_normal(g);
    for (double x : group_advantages(std::vector<double>(8, c), 1e-8)) zeros = zeros && x == 0.0;
  }
  report(2, "advantage normalization", worst_mean <= 1e-9 && worst_std <= 1e-6 && zeros,
         fmt("max |mean| %.2g, max |std-1| %.2g, all-equal groups zero: %s", worst_mean, worst_std,
             zeros ? "yes" : "no"));
}

void reward_formula() {
  const double v = total_reward(1, 500, 0.8, 0.001, 0.5);
  std::mt19937_64 g(103);
  std::size_t violations = 0;
  for (int i = 0; i < 10000; ++i) {
    const int o = static_cast<int>(g() % 2);
    const auto c = static_cast<std::int64_t>(g() % 5000);
    const double p = uniform01(g), lam = 0.01 * uniform01(g), beta = uniform01(g);
    const double base = total_reward(o, c, p, lam, beta);
    if (total_reward(o, c + 1 + static_cast<std::int64_t>(g() % 100), p, lam, beta) > base) ++violations;
    if (total_reward(o, c, std::min(1.0, p + uniform01(g)), lam, beta) < base) ++violations;
    if (total_reward(1, c, p, lam, beta) < total_reward(0, c, p, lam, beta)) ++violations;
  }
  report(3, "reward formula", v == 0.9 && violations == 0,
         fmt("total_reward(1,500,0.8) = %.17g, monotonicity violations %zu / 10000 probes", v, violations));
}

// Pairs of synthetic trajectories ranked by a hidden linear scorer on the
// criterion values, kept only when the hidden margin is at least `gap`.
std::vector<PreferenceGroup> separable_pairs(const std::vector<RoutingTrajectory>& pool, const Rubric& r,
                                             const std::vector<double>& hidden, std::size_t n, double gap,
                                             std::mt19937_64& g) {
  std::vector<double> s(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto x = judge_features(pool[i], r);
    for (std::size_t k = 0; k < x.size(); ++k) s[i] += hidden[k] * x[k];
  }
  std::vector<PreferenceGroup> out;
  while (out.size() < n) {
    const std::size_t a = g() % pool.size(), b = g() % pool.size();
    if (std::abs(s[a] - s[b]) < gap) continue;
    PreferenceGroup pg;
    pg.pool.query_id = "p" + std::to_string(out.size());
    pg.pool.trajectories = {pool[a], pool[b]};
    pg.pairs = {s[a] > s[b] ? PreferencePair{0, 1, PairRule::Process} : PreferencePair{1, 0, PairRule::Process}};
    out.push_back(std::move(pg));
  }
  return out;
}

void bt_machinery() {
  const auto t0 = std::chrono::steady_clock::now();
  const double zero_gap = std::abs(bt_loss(0.0) - std::log(2.0));
  fixture::World w;
  std::vector<RoutingTrajectory> pool;
  std::mt19937_64 g(104);
  for (const auto& q : synth::generate_dataset(w.cfg, 200, 104)) {
    const double th = 0.1 + 0.8 * uniform01(g);
    pool.push_back(run_trajectory(q, *w.srm, *w.lrm, PolicyKind::entropy_threshold(th), EngineLimits{},
                                  trajectory_stream(104, q.id, 0))
                       .trajectory);
  }
  Rubric r;
  for (auto k : kScoredKinds) r.criteria.push_back(make_criterion(k, 1.0 / 6.0, 0.4, 2.0));
  std::vector<double> hidden(kJudgeFeatures, 0.0);
  for (std::size_t k = 0; k < kNumScoredKinds; ++k) hidden[k * kJudgeSlotWidth] = standard_normal(g);
  const auto train = separable_pairs(pool, r, hidden, 500, 0.25, g);
  const auto held = separable_pairs(pool, r, hidden, 500, 0.25, g);
  JudgeModel j;
  const auto curve = warm_start_judge(j, train, r, 500, 1.0);
  const double acc = judge_pair_accuracy(j, held, [&](std::size_t) { return r; });
  const double secs = seconds_since(t0);
  report(4, "Bradley-Terry machinery", zero_gap <= 1e-12 && curve.back() < 0.15 && acc >= 0.95 && secs < 60.0,
         fmt("|L(0)-ln2| %.2g, warm-start loss %.4f (limit 0.15), heldout accuracy %.3f (limit 0.95), %.1f s",
             zero_gap, curve.back(), acc, secs));
}

std::vector<double> planted_column(const HeldoutSet& h, std::uint64_t seed) {
  Eigen::MatrixXd controls(h.size(), 2);
  Eigen::VectorXd t(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    controls(i, 0) = h.outcome[i];
    controls(i, 1) = h.norm_cost[i];
    t(i) = h.target[i];
  }
  const Eigen::VectorXd r = stats::regression_residuals(t, controls);
  auto g = StreamKey(seed).child("planted").engine();
  std::vector<double> v(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) v[i] = r(i) + standard_normal(g);
  return v;
}

void validation_gate() {
  const auto& h = fixture::synthetic_heldout();
  const GateConfig cfg;
  int planted = 0, constant = 0, leak = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    auto g = StreamKey(trial).child("leak").engine();
    std::vector<double> leaky(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) leaky[i] = h.outcome[i] + 0.01 * standard_normal(g);
    const auto rep = validate_scores({"planted", "constant", "leak"},
                                     {planted_column(h, trial), std::vector<double>(h.size(), 0.5), leaky}, h, cfg);
    planted += rep.criteria[0].retained;
    constant += !rep.criteria[1].retained && rep.criteria[1].score_std < cfg.sigma_min;
    leak += !rep.criteria[2].retained && rep.criteria[2].mi_nats > cfg.mi_max_nats;
  }
  const auto holm = stats::holm_bonferroni(std::vector<double>{0.01, 0.04, 0.03}, 0.05);
  const bool holm_ok = holm == std::vector<bool>{true, false, false};
  report(5, "validation gate",
         h.size() >= 1000 && planted >= 90 && constant == 100 && leak >= 95 && holm_ok,
         fmt("heldout %zu rollouts; planted retained %d/100 (>=90), constant removed %d/100, leak removed %d/100 "
             "(>=95), Holm fixture %s",
             h.size(), planted, constant, leak, holm_ok ? "ok" : "wrong"));
}

void mi_calibration() {
  double sum = 0.0, worst_indep = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 g(500 + seed);
    std::vector<double> x(2000), y(2000), z(2000);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = standard_normal(g);
      y[i] = 0.8 * x[i] + 0.6 * standard_normal(g);
      z[i] = standard_normal(g);
    }
    sum += stats::ksg_mi(x, y, 5);
    worst_indep = std::max(worst_indep, std::abs(stats::ksg_mi(x, z, 5)));
    std::vector<int> b(2000);
    for (auto& v : b) v = static_cast<int>(g() % 2);
    worst_indep = std::max(worst_indep, std::abs(stats::mixed_ksg_mi(z, b, 5)));
  }
  const double mean = sum / 20.0, truth = oracle::gaussian_mi(0.8);
  report(6, "MI estimator calibration", std::abs(mean - truth) <= 0.06 && worst_indep <= 0.05,
         fmt("mean MI %.4f vs analytic %.4f (tol 0.06), max independent |MI| %.4f (limit 0.05)", mean, truth,
             worst_indep));
}

void partial_correlation_check() {
  const double rvt = 0.6, rvc = 0.5, rtc = 0.3;
  Eigen::Matrix3d cov;
  cov << 1, rvt, rvc, rvt, 1, rtc, rvc, rtc, 1;
  const double expected = oracle::gaussian_partial_corr(cov);
  Eigen::Matrix3d L = cov.llt().matrixL();
  std::mt19937_64 g(107);
  const std::size_t n = 5000;
  std::vector<double> v(n), t(n), c(n);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Vector3d x = L * Eigen::Vector3d(standard_normal(g), standard_normal(g), standard_normal(g));
    v[i] = x(0), t[i] = x(1), c[i] = x(2);
  }
  const double gauss_err = std::abs(stats::partial_correlation(v, t, {c}).r - expected);
  double oracle_err = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(200), b(200), c1(200), c2(200);
    for (std::size_t i = 0; i < a.size(); ++i) {
      c1[i] = standard_normal(g);
      c2[i] = standard_normal(g);
      b[i] = standard_normal(g) + 0.5 * c2[i];
      a[i] = standard_normal(g) + 0.4 * b[i] + 0.3 * c1[i];
    }
    oracle_err = std::max(oracle_err, std::abs(stats::partial_correlation(a, b, {c1, c2}).r -
                                               oracle::partial_corr_normal_equations(a, b, {c1, c2})));
  }
  report(7, "partial correlation", gauss_err <= 0.02 && oracle_err <= 1e-10,
         fmt("Gaussian closed form error %.4f (tol 0.02), residual-regression oracle error %.2g (tol 1e-10)",
             gauss_err, oracle_err));
}

void flops_model() {
  RoutingTrajectory t;
  t.lrm_tokens = 100;
  const double f = flops_of_trajectory(t, FlopsModel{1.7e9, 14e9, true});
  RoutingTrajectory m;
  m.srm_tokens = 200;
  m.lrm_tokens = 50;
  const double fm = flops_of_trajectory(m, FlopsModel{1.7e9, 14e9, true});
  report(8, "FLOPs model", f == 2.8e12 && fm == 2.08e12,
         fmt("100 LRM tokens at 14e9 -> %.6g; 200 SRM + 50 LRM -> %.6g", f, fm));
}

void budgeted_accuracy_check() {
  auto pt = [](double th, double acc, double flops) {
    SweepPoint p;
    p.threshold = th;
    p.accuracy = acc;
    p.total_flops = flops;
    return p;
  };
  const auto r = budgeted_accuracy({pt(0.1, 0.70, 200), pt(0.2, 0.78, 380), pt(0.3, 0.85, 450)}, 1000, 40);
  std::mt19937_64 g(109);
  std::size_t violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<SweepPoint> pts;
    for (double th : threshold_grid()) pts.push_back(pt(th, uniform01(g), 1000 * uniform01(g)));
    std::optional<double> prev;
    for (double b = 0; b <= 100; b += 2.5) {
      const auto rep = budgeted_accuracy(pts, 1000, b);
      if (prev && (!rep.ba || *rep.ba < *prev)) ++violations;
      if (rep.ba) prev = rep.ba;
    }
  }
  report(9, "budgeted accuracy", r.ba && *r.ba == 0.78 && violations == 0,
         fmt("BA@40 on hand fixture %.2f (expect 0.78), monotonicity violations %zu over 1000 sweeps",
             r.ba.value_or(-1), violations));
}

struct SeedResult {
  double ba_process = 0.0;
  double ba_outcome = 0.0;
  double ba_random = 0.0;
  double ba_oracle = 0.0;
  std::vector<double> discard;
};

SeedResult synthetic_pipeline(std::uint64_t seed) {
  fixture::World w;
  const EngineLimits lim;
  const EvalOptions eo;
  const auto train = synth::generate_dataset(w.cfg, 200, seed);
  const auto held = synth::generate_dataset(w.cfg, 250, seed + 500);
  const auto test = synth::generate_dataset(w.cfg, 200, seed + 1000);
  const double lrm_flops = evaluate(PolicyKind::lrm_only(), test, *w.srm, *w.lrm, lim, eo).total_flops;

  GrpoConfig gc;
  gc.seed = seed;
  gc.lambda_cost = 0.001;
  gc.group_size = 8;
  gc.beta_process = 0.0;
  const auto outcome_only = train_router(gc, train, *w.srm, *w.lrm, lim, std::nullopt);
  auto oo = std::make_shared<const RouterPolicy>(outcome_only.policy);

  const auto policies = standard_policies(0.3, 0.3, std::exp(-0.3), oo, 0.5);
  CollectOptions co;
  co.per_policy_count = 2;
  const auto seed_scorer_fn = seed_scorer(seed_rubric());
  std::vector<PreferenceGroup> groups, held_groups;
  std::vector<TrajectoryPool> hp;
  std::vector<PoolPairs> hpp;
  for (const auto& q : train) {
    auto p = collect_pool(q, policies, *w.srm, *w.lrm, lim, seed, co);
    if (!p) continue;
    auto pairs = build_pairs(*p, seed_scorer_fn);
    groups.push_back({std::move(*p), std::move(pairs)});
  }
  for (const auto& q : held) {
    auto p = collect_pool(q, policies, *w.srm, *w.lrm, lim, seed + 7, co);
    if (!p) continue;
    auto pairs = build_pairs(*p, seed_scorer_fn);
    hp.push_back(*p);
    hpp.push_back({p->query_id, pairs});
    held_groups.push_back({std::move(*p), std::move(pairs)});
  }
  const Gate gate(build_heldout(hp, hpp), GateConfig{});
  JudgeModel judge;
  warm_start_judge(judge, groups, seed_rubric(), 500, 1.0);
  auto gen = RubricorModel::uniform();
  AlternateConfig ac;
  ac.seed = seed;
  const auto rounds = alternate(gen, judge, groups, held_groups, gate, seed_rubric(), ac);

  GrpoConfig pc = gc;
  pc.beta_process = 0.5;
  const auto process = train_router(pc, train, *w.srm, *w.lrm, lim,
                                    ProcessRewardSource{&gen, parametric_judge(judge), &gate});

  auto ba = [&](const PolicyKind& pk) {
    return budgeted_accuracy(sweep(pk, test, *w.srm, *w.lrm, lim, eo), lrm_flops, 40).ba.value_or(0.0);
  };
  SeedResult r;
  r.ba_process = ba(PolicyKind::learned(std::make_shared<const RouterPolicy>(process.policy), 0.5));
  r.ba_outcome = ba(PolicyKind::learned(oo, 0.5));
  r.ba_random = ba(PolicyKind::random(0.5));
  r.ba_oracle = oracle::oracle_budgeted_accuracy(test, w.cfg, eo.flops.srm_params, eo.flops.lrm_params, 0.4 * lrm_flops);
  for (const auto& m : rounds) r.discard.push_back(m.discard_rate);
  return r;
}

void synthetic_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<SeedResult> res;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    res.push_back(synthetic_pipeline(seed));
    const auto& r = res.back();
    std::printf("  seed %llu: BA@40 process %.3f outcome-only %.3f random %.3f oracle %.3f; discard %.3f %.3f %.3f\n",
                static_cast<unsigned long long>(seed), r.ba_process, r.ba_outcome, r.ba_random, r.ba_oracle,
                r.discard[0], r.discard[1], r.discard[2]);
    std::fflush(stdout);
  }
  const double secs = seconds_since(t0);
  double p = 0, o = 0, rnd = 0, orc = 0;
  std::vector<double> disc(3, 0.0);
  for (const auto& r : res) {
    p += r.ba_process / 5;
    o += r.ba_outcome / 5;
    rnd += r.ba_random / 5;
    orc += r.ba_oracle / 5;
    for (std::size_t k = 0; k < 3; ++k) disc[k] += r.discard[k] / 5;
  }
  report(10, "end-to-end synthetic training", p - rnd >= 0.10 && orc - p <= 0.05 && secs < 600.0,
         fmt("5-seed mean BA@40 %.3f vs random %.3f (+%.1f pts, need >=10) vs oracle %.3f (gap %.1f pts, need <=5); "
             "%.0f s for all seeds",
             p, rnd, 100 * (p - rnd), orc, 100 * (orc - p), secs));
  std::string per_seed;
  for (const auto& r : res) per_seed += fmt(" %.3f/%.3f", r.ba_process, r.ba_outcome);
  report(11, "process-reward trend", p >= o,
         fmt("mean BA@40 process %.3f vs outcome-only %.3f; per seed (process/outcome):%s", p, o, per_seed.c_str()));
  report(12, "discard-rate trend", disc[1] <= disc[0] && disc[2] <= disc[1],
         fmt("mean discard rate by round %.3f -> %.3f -> %.3f", disc[0], disc[1], disc[2]));
}

// Hashes of every artifact of a reduced pipeline run.
std::vector<std::string> pipeline_artifacts(unsigned workers) {
  fixture::World w;
  const EngineLimits lim;
  std::vector<std::string> out;
  const auto train = synth::generate_dataset(w.cfg, 30, 13);
  const auto held = synth::generate_dataset(w.cfg, 60, 14);
  std::vector<json> qj;
  for (const auto& q : train) qj.push_back(to_json(q));
  out.push_back(sha256_hex(to_jsonl(qj)));

  GrpoConfig gc;
  gc.iterations = 5;
  gc.batch_queries = 6;
  gc.hidden = 16;
  gc.seed = 13;
  gc.workers = workers;
  const auto router = train_router(gc, train, *w.srm, *w.lrm, lim, std::nullopt);
  out.push_back(sha256_hex(encode_router(router.policy)));
  out.push_back(sha256_hex(curve_csv(router.curve)));

  CollectOptions co;
  co.per_policy_count = 2;
  co.run.signal = Signal::AvgEntropy;
  const auto pols = standard_policies(0.3, 0.3, std::exp(-0.3), std::make_shared<const RouterPolicy>(router.policy));
  std::vector<PreferenceGroup> groups;
  std::vector<TrajectoryPool> hp;
  std::vector<PoolPairs> hpp;
  std::vector<json> pj, pairj;
  for (const auto& q : train) {
    auto p = collect_pool(q, pols, *w.srm, *w.lrm, lim, 13, co);
    if (!p) continue;
    auto pairs = build_pairs(*p, seed_scorer(seed_rubric()));
    pj.push_back(to_json(*p));
    pairj.push_back(to_json(PoolPairs{p->query_id, pairs}));
    groups.push_back({std::move(*p), std::move(pairs)});
  }
  for (const auto& q : held) {
    auto p = collect_pool(q, pols, *w.srm, *w.lrm, lim, 14, co);
    if (!p) continue;
    hpp.push_back({p->query_id, build_pairs(*p, seed_scorer(seed_rubric()))});
    hp.push_back(std::move(*p));
  }
  out.push_back(sha256_hex(to_jsonl(pj)));
  out.push_back(sha256_hex(to_jsonl(pairj)));
  const Gate gate(build_heldout(hp, hpp), GateConfig{});
  out.push_back(sha256_hex(to_json(gate.validate(seed_rubric()).report).dump()));
  JudgeModel j;
  warm_start_judge(j, groups, seed_rubric(), 100, 1.0);
  out.push_back(sha256_hex(encode_judge(j)));
  auto gen = RubricorModel::uniform();
  AlternateConfig ac;
  ac.rounds = 1;
  ac.judge_epochs = 50;
  ac.seed = 13;
  alternate(gen, j, groups, groups, gate, seed_rubric(), ac);
  out.push_back(sha256_hex(encode_rubricor(gen)));
  out.push_back(sha256_hex(encode_judge(j)));
  EvalOptions eo;
  eo.workers = workers;
  out.push_back(sha256_hex(
      sweep_csv(sweep(PolicyKind::learned(std::make_shared<const RouterPolicy>(router.policy), 0.5), held, *w.srm,
                      *w.lrm, lim, eo))));
  return out;
}

void determinism() {
  const auto a = pipeline_artifacts(1);
  const auto b = pipeline_artifacts(1);
  const auto c = pipeline_artifacts(3);
  std::size_t diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += (a[i] != b[i]) + (a[i] != c[i]);
  report(13, "determinism", diff == 0,
         fmt("%zu artifacts compared across 3 reruns (1, 1 and 3 workers); mismatches %zu", a.size(), diff));
}

void wire_format() {
  const std::string rubric_fixture =
      R"({"rubrics": [{"criterion": "Escalate before an uncertain step is built upon.", "score": 0.8, "weight": 0.25},)"
      R"( {"criterion": "Keep routine steps on the small model.", "score": 0.5, "weight": 0.75}]})";
  const auto r = parse_rubric_json(rubric_fixture);
  const auto back = parse_rubric_json(rubric_to_json(r).dump());
  bool rubric_ok = back.criteria.size() == 2 && rubric_to_json(back) == rubric_to_json(r) &&
                   rubric_to_json(r) == nlohmann::json::parse(rubric_fixture);

  Rubric single;
  Criterion c;
  c.kind = CriterionKind::Prompted;
  c.text = "Escalate before an uncertain step is built upon.";
  c.weight = 0.25;
  single.criteria = {c};
  const std::string judge_fixture =
      R"({"criterion_judgments": [{"criterion": "Escalate before an uncertain step is built upon.", "score": 0.5,)"
      R"( "satisfied": true}], "final_score": 0.125})";
  const auto jo = parse_judge_json(judge_fixture, single);
  const auto jback = parse_judge_json(judge_output_to_json(jo).dump(), single);
  const bool judge_ok = std::abs(jo.final_score - 0.125) <= 1e-6 && !jo.overridden &&
                        judge_output_to_json(jback) == nlohmann::json::parse(judge_fixture);

  std::mt19937_64 g(114);
  std::size_t bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Rubric rr;
    nlohmann::json arr = nlohmann::json::array();
    double expect = 0.0;
    const std::size_t n = 1 + g() % 5;
    for (std::size_t i = 0; i < n; ++i) {
      Criterion ci;
      ci.kind = CriterionKind::Prompted;
      ci.text = "c" + std::to_string(i);
      ci.weight = uniform01(g);
      rr.criteria.push_back(ci);
      const double s = uniform01(g);
      const bool sat = g() % 2;
      if (sat) expect += ci.weight * s;
      arr.push_back({{"criterion", ci.text}, {"score", s}, {"satisfied", sat}});
    }
    const nlohmann::json reply = {{"criterion_judgments", arr}, {"final_score", uniform01(g)}};
    if (std::abs(parse_judge_json(reply.dump(), rr).final_score - expect) > 1e-6) ++bad;
  }
  report(14, "wire-format conformance", rubric_ok && judge_ok && bad == 0,
         fmt("rubric round trip %s, judge round trip %s (final_score %.3f), recomputation mismatches %zu / 1000",
             rubric_ok ? "ok" : "broken", judge_ok ? "ok" : "broken", jo.final_score, bad));
}

}  // namespace

int main() {
  gradient_correctness();
  advantage_normalization();
  reward_formula();
  bt_machinery();
  validation_gate();
  mi_calibration();
  partial_correlation_check();
  flops_model();
  budgeted_accuracy_check();
  synthetic_suite();
  determinism();
  wire_format();
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
