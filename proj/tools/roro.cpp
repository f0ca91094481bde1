// roro: command-line driver for data generation, preference collection,
// judge and rubric-generator training, router training and evaluation.
//
// Exit codes: 0 success, 1 usage error, 2 precondition or input error,
// 3 transport failure talking to a remote backend.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "roro/checkpoint.hpp"
#include "roro/eval.hpp"
#include "roro/gate.hpp"
#include "roro/grpo.hpp"
#include "roro/io.hpp"
#include "roro/json_io.hpp"
#include "roro/parallel.hpp"
#include "roro/prefdata.hpp"
#include "roro/remote.hpp"
#include "roro/rubric.hpp"
#include "roro/synthworld.hpp"

using namespace roro;
namespace fs = std::filesystem;

namespace {

constexpr const char* kToolVersion = "0.1.0";

class Precondition : public Error {
 public:
  using Error::Error;
};

// Effective configuration: defaults, then the --config file, then flags.
struct Config {
  std::uint64_t seed = 0;
  unsigned workers = 1;
  synth::WorldConfig world;
  BackendSpec srm;
  BackendSpec lrm;
  EngineLimits limits;
  Signal signal = Signal::AvgEntropy;
  bool count_discarded_drafts = true;
  double random_p = 0.3;
  double entropy_theta = 0.3;
  double confidence_theta = std::exp(-0.3);
  double outcome_only_cutoff = 0.5;
  std::size_t per_policy_count = 2;
  PairingConfig pairing;
  GateConfig gate;
  int judge_epochs = 500;
  double judge_lr = 1.0;
  AlternateConfig alternate;
  GrpoConfig grpo;

  Config() {
    lrm.role = Producer::LRM;
    lrm.param_count = 14e9;
  }
};

json backend_to_json(const BackendSpec& b) {
  json j = {{"kind", b.kind == BackendSpec::Kind::Remote ? "remote" : "simulated"},
            {"param_count", b.param_count},
            {"simulated_seconds_per_step", b.simulated_seconds_per_step}};
  if (b.kind == BackendSpec::Kind::Remote) {
    j["endpoint"] = b.endpoint.value_or("");
    j["model_name"] = b.model_name.value_or("");
    j["api_key_env"] = b.api_key_env;
    j["request_timeout_seconds"] = b.request_timeout_seconds;
    j["max_concurrent"] = b.max_concurrent;
    j["top_k"] = b.top_k;
    j["temperature"] = b.temperature;
    j["top_p"] = b.top_p;
    j["max_tokens"] = b.max_tokens;
    j["max_retries"] = b.max_retries;
    j["backoff_base_seconds"] = b.backoff_base_seconds;
  }
  return j;
}

void backend_from_json(const json& j, BackendSpec& b) {
  const std::string kind = j.value("kind", "simulated");
  if (kind == "remote")
    b.kind = BackendSpec::Kind::Remote;
  else if (kind == "simulated")
    b.kind = BackendSpec::Kind::Simulated;
  else
    throw Precondition("backend kind must be 'simulated' or 'remote', got '" + kind + "'");
  if (j.contains("endpoint")) b.endpoint = j.at("endpoint").get<std::string>();
  if (j.contains("model_name")) b.model_name = j.at("model_name").get<std::string>();
  b.param_count = j.value("param_count", b.param_count);
  b.api_key_env = j.value("api_key_env", b.api_key_env);
  b.request_timeout_seconds = j.value("request_timeout_seconds", b.request_timeout_seconds);
  b.max_concurrent = j.value("max_concurrent", b.max_concurrent);
  b.top_k = j.value("top_k", b.top_k);
  b.temperature = j.value("temperature", b.temperature);
  b.top_p = j.value("top_p", b.top_p);
  b.max_tokens = j.value("max_tokens", b.max_tokens);
  b.max_retries = j.value("max_retries", b.max_retries);
  b.backoff_base_seconds = j.value("backoff_base_seconds", b.backoff_base_seconds);
  b.simulated_seconds_per_step = j.value("simulated_seconds_per_step", b.simulated_seconds_per_step);
  b.check();
}

json config_to_json(const Config& c) {
  const auto& a = c.alternate;
  const auto& g = c.grpo;
  return {
      {"seed", c.seed},
      {"workers", c.workers},
      {"world", to_json(c.world)},
      {"srm", backend_to_json(c.srm)},
      {"lrm", backend_to_json(c.lrm)},
      {"limits",
       {{"max_steps", c.limits.max_steps},
        {"max_total_tokens", c.limits.max_total_tokens},
        {"token_norm_constant", c.limits.token_norm_constant}}},
      {"signal", to_string(c.signal)},
      {"count_discarded_drafts", c.count_discarded_drafts},
      {"collect",
       {{"random_p", c.random_p},
        {"entropy_theta", c.entropy_theta},
        {"confidence_theta", c.confidence_theta},
        {"outcome_only_cutoff", c.outcome_only_cutoff},
        {"per_policy_count", c.per_policy_count}}},
      {"pairing", {{"cost_sim_tol", c.pairing.cost_sim_tol}, {"score_gap_min", c.pairing.score_gap_min}}},
      {"gate", to_json(c.gate)},
      {"judge", {{"epochs", c.judge_epochs}, {"lr", c.judge_lr}}},
      {"alternate",
       {{"rounds", a.rounds},
        {"samples_per_query", a.samples_per_query},
        {"rubricor_lr", a.rubricor_lr},
        {"rubricor_steps", a.rubricor_steps},
        {"judge_epochs", a.judge_epochs},
        {"judge_lr", a.judge_lr},
        {"discard_mode", a.discard.mode == DiscardPolicy::Mode::Constant ? "constant" : "batch_min_minus"},
        {"discard_value", a.discard.value}}},
      {"grpo",
       {{"group_size", g.group_size},
        {"lambda_cost", g.lambda_cost},
        {"beta_process", g.beta_process},
        {"clip_eps", g.clip_eps},
        {"lr", g.lr},
        {"iterations", g.iterations},
        {"inner_epochs", g.inner_epochs},
        {"batch_queries", g.batch_queries},
        {"hidden", g.hidden}}},
  };
}

void config_from_json(const json& j, Config& c) {
  c.seed = j.value("seed", c.seed);
  c.workers = j.value("workers", c.workers);
  if (j.contains("world")) c.world = world_config_from_json(j.at("world"));
  if (j.contains("srm")) backend_from_json(j.at("srm"), c.srm);
  if (j.contains("lrm")) backend_from_json(j.at("lrm"), c.lrm);
  if (j.contains("limits")) {
    const auto& l = j.at("limits");
    c.limits.max_steps = l.value("max_steps", c.limits.max_steps);
    c.limits.max_total_tokens = l.value("max_total_tokens", c.limits.max_total_tokens);
    c.limits.token_norm_constant = l.value("token_norm_constant", c.limits.token_norm_constant);
  }
  if (j.contains("signal")) c.signal = signal_from_string(j.at("signal").get<std::string>());
  c.count_discarded_drafts = j.value("count_discarded_drafts", c.count_discarded_drafts);
  if (j.contains("collect")) {
    const auto& k = j.at("collect");
    c.random_p = k.value("random_p", c.random_p);
    c.entropy_theta = k.value("entropy_theta", c.entropy_theta);
    c.confidence_theta = k.value("confidence_theta", c.confidence_theta);
    c.outcome_only_cutoff = k.value("outcome_only_cutoff", c.outcome_only_cutoff);
    c.per_policy_count = k.value("per_policy_count", c.per_policy_count);
  }
  if (j.contains("pairing")) {
    c.pairing.cost_sim_tol = j.at("pairing").value("cost_sim_tol", c.pairing.cost_sim_tol);
    c.pairing.score_gap_min = j.at("pairing").value("score_gap_min", c.pairing.score_gap_min);
  }
  if (j.contains("gate")) c.gate = gate_config_from_json(j.at("gate"));
  if (j.contains("judge")) {
    c.judge_epochs = j.at("judge").value("epochs", c.judge_epochs);
    c.judge_lr = j.at("judge").value("lr", c.judge_lr);
  }
  if (j.contains("alternate")) {
    const auto& k = j.at("alternate");
    auto& a = c.alternate;
    a.rounds = k.value("rounds", a.rounds);
    a.samples_per_query = k.value("samples_per_query", a.samples_per_query);
    a.rubricor_lr = k.value("rubricor_lr", a.rubricor_lr);
    a.rubricor_steps = k.value("rubricor_steps", a.rubricor_steps);
    a.judge_epochs = k.value("judge_epochs", a.judge_epochs);
    a.judge_lr = k.value("judge_lr", a.judge_lr);
    const std::string mode = k.value("discard_mode", std::string("batch_min_minus"));
    if (mode == "constant")
      a.discard.mode = DiscardPolicy::Mode::Constant;
    else if (mode == "batch_min_minus")
      a.discard.mode = DiscardPolicy::Mode::BatchMinMinus;
    else
      throw Precondition("alternate.discard_mode must be 'constant' or 'batch_min_minus'");
    a.discard.value = k.value("discard_value", a.discard.value);
  }
  if (j.contains("grpo")) {
    const auto& k = j.at("grpo");
    auto& g = c.grpo;
    g.group_size = k.value("group_size", g.group_size);
    g.lambda_cost = k.value("lambda_cost", g.lambda_cost);
    g.beta_process = k.value("beta_process", g.beta_process);
    g.clip_eps = k.value("clip_eps", g.clip_eps);
    g.lr = k.value("lr", g.lr);
    g.iterations = k.value("iterations", g.iterations);
    g.inner_epochs = k.value("inner_epochs", g.inner_epochs);
    g.batch_queries = k.value("batch_queries", g.batch_queries);
    g.hidden = k.value("hidden", g.hidden);
  }
}

// Flags shared by every subcommand.
struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::optional<double> beta, lambda;
  std::optional<int> iterations;
  std::string out;
};

Config load_config(const Common& co) {
  Config c;
  if (!co.config_path.empty()) {
    json j;
    try {
      j = json::parse(read_file(co.config_path));
    } catch (const json::exception& e) {
      throw Precondition(co.config_path + ": " + e.what());
    }
    config_from_json(j, c);
  }
  if (co.seed) c.seed = *co.seed;
  if (co.workers) c.workers = *co.workers;
  if (c.workers < 1) throw Precondition("--workers must be >= 1");
  if (co.beta) c.grpo.beta_process = *co.beta;
  if (co.lambda) c.grpo.lambda_cost = *co.lambda;
  if (co.iterations) c.grpo.iterations = *co.iterations;
  c.grpo.seed = c.seed;
  c.grpo.workers = c.workers;
  c.grpo.signal = c.signal;
  c.alternate.seed = c.seed;
  c.limits.check();
  c.grpo.check();
  return c;
}

struct Backends {
  std::unique_ptr<Backend> srm, lrm;
};

std::unique_ptr<Backend> make_backend(const BackendSpec& spec, const synth::WorldConfig& world) {
  if (spec.kind == BackendSpec::Kind::Remote) return std::make_unique<RemoteBackend>(spec);
  return std::make_unique<SimulatedBackend>(spec, world);
}

Backends make_backends(const Config& c) {
  BackendSpec s = c.srm, l = c.lrm;
  s.role = Producer::SRM;
  l.role = Producer::LRM;
  return {make_backend(s, c.world), make_backend(l, c.world)};
}

EvalOptions eval_options(const Config& c) {
  EvalOptions eo;
  eo.signal = c.signal;
  eo.flops = FlopsModel{c.srm.param_count, c.lrm.param_count, c.count_discarded_drafts};
  eo.flops.check();
  eo.seed = c.seed;
  eo.workers = c.workers;
  return eo;
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw Precondition(std::string("missing required input: ") + what);
  if (!fs::exists(path)) throw Precondition(std::string(what) + " not found: " + path);
}

// Records the inputs and outputs of one command and writes the manifest next
// to the primary output.
class Run {
 public:
  Run(std::string command, const Config& cfg) : command_(std::move(command)), cfg_(cfg) {}

  std::string input(const std::string& name, const std::string& path) {
    require_file(path, name.c_str());
    std::string bytes = read_file(path);
    inputs_[name] = sha256_hex(bytes);
    return bytes;
  }

  void output(const std::string& path, const std::string& bytes) {
    if (path.empty()) throw Precondition("missing required output path for " + command_);
    atomic_write_file(path, bytes);
    outputs_[fs::path(path).filename().string()] = sha256_hex(bytes);
    if (primary_.empty()) primary_ = path;
  }

  void arg(const std::string& k, json v) { args_[k] = std::move(v); }

  void finish() {
    Manifest m;
    m.tool_version = kToolVersion;
    m.command = command_;
    m.seed = cfg_.seed;
    m.config = config_to_json(cfg_);
    // Worker count does not affect results; keep it out of the hash.
    m.config.erase("workers");
    if (!args_.empty()) m.config["args"] = args_;
    m.inputs = inputs_;
    m.outputs = outputs_;
    atomic_write_file(primary_ + ".manifest.json", to_json(m).dump(2) + "\n");
  }

 private:
  std::string command_;
  const Config& cfg_;
  std::string primary_;
  json args_ = json::object();
  std::map<std::string, std::string> inputs_, outputs_;
};

template <class T, class F>
std::vector<T> parse_records(const std::string& bytes, const std::string& source, F&& from_json) {
  std::vector<T> out;
  for (const auto& j : parse_jsonl(bytes, source)) out.push_back(from_json(j));
  return out;
}

template <class T>
std::string records_jsonl(const std::vector<T>& items) {
  std::vector<json> js;
  js.reserve(items.size());
  for (const auto& x : items) js.push_back(to_json(x));
  return to_jsonl(js);
}

// Joins pools with their pairs by query id.
std::vector<PreferenceGroup> join_groups(const std::vector<TrajectoryPool>& pools, const std::vector<PoolPairs>& pairs) {
  std::map<std::string, const PoolPairs*> by_id;
  for (const auto& p : pairs) by_id[p.query_id] = &p;
  std::vector<PreferenceGroup> out;
  for (const auto& pool : pools) {
    auto it = by_id.find(pool.query_id);
    if (it == by_id.end()) throw Precondition("no pairs for pool " + pool.query_id);
    out.push_back({pool, it->second->pairs});
  }
  return out;
}

std::vector<PreferenceGroup> load_groups(Run& run, const std::string& prefix, const std::string& pools_path,
                                         const std::string& pairs_path) {
  auto pools = parse_records<TrajectoryPool>(run.input(prefix + "pools", pools_path), pools_path, pool_from_json);
  auto pairs = parse_records<PoolPairs>(run.input(prefix + "pairs", pairs_path), pairs_path, pairs_from_json);
  return join_groups(pools, pairs);
}

HeldoutSet load_heldout(Run& run, const std::string& pools_path, const std::string& pairs_path) {
  auto pools = parse_records<TrajectoryPool>(run.input("heldout_pools", pools_path), pools_path, pool_from_json);
  auto pairs = parse_records<PoolPairs>(run.input("heldout_pairs", pairs_path), pairs_path, pairs_from_json);
  return build_heldout(pools, pairs);
}

std::vector<QueryRecord> load_queries(Run& run, const std::string& path) {
  auto qs = parse_records<QueryRecord>(run.input("queries", path), path, query_from_json);
  if (qs.empty()) throw Precondition("query file is empty: " + path);
  return qs;
}

PolicyKind policy_kind(Run& run, const std::string& name, double param, const std::string& router_path) {
  if (name == "srm_only") return PolicyKind::srm_only();
  if (name == "lrm_only") return PolicyKind::lrm_only();
  if (name == "random") return PolicyKind::random(param);
  if (name == "entropy") return PolicyKind::entropy_threshold(param);
  if (name == "confidence") return PolicyKind::confidence_threshold(param);
  if (name == "learned") {
    const std::string bytes = run.input("router", router_path);
    return PolicyKind::learned(std::make_shared<const RouterPolicy>(decode_router(bytes)), param);
  }
  throw Precondition("unknown policy '" + name + "'");
}

std::vector<SweepPoint> parse_sweep_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "threshold,accuracy,total_flops,lrm_usage,valid")
    throw Precondition(source + ": not a sweep file");
  std::vector<SweepPoint> pts;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    SweepPoint p;
    int valid = 0;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%d", &p.threshold, &p.accuracy, &p.total_flops, &p.lrm_usage,
                    &valid) != 5)
      throw Precondition(source + ":" + std::to_string(n) + ": malformed sweep row");
    p.valid = valid != 0;
    pts.push_back(p);
  }
  return pts;
}

double lrm_only_flops(const Config& cfg, const std::vector<QueryRecord>& qs) {
  auto be = make_backends(cfg);
  return evaluate(PolicyKind::lrm_only(), qs, *be.srm, *be.lrm, cfg.limits, eval_options(cfg)).total_flops;
}

json run_summary(const EvalRun& r) {
  return {{"accuracy", r.accuracy},     {"total_flops", r.total_flops}, {"lrm_usage", r.lrm_usage},
          {"failures", r.failures},     {"queries", r.trajectories.size()}};
}

// ---------------------------------------------------------------------------
// Subcommands

void cmd_gen_world(const Common& co, std::size_t n) {
  const Config cfg = load_config(co);
  Run run("gen-world", cfg);
  run.arg("n", n);
  run.output(co.out, records_jsonl(synth::generate_dataset(cfg.world, n, cfg.seed)));
  run.finish();
}

void cmd_collect(const Common& co, const std::string& queries, const std::string& outcome_router) {
  const Config cfg = load_config(co);
  Run run("collect", cfg);
  const auto qs = load_queries(run, queries);
  std::shared_ptr<const RouterPolicy> oo;
  if (!outcome_router.empty())
    oo = std::make_shared<const RouterPolicy>(decode_router(run.input("outcome_router", outcome_router)));
  const auto policies =
      standard_policies(cfg.random_p, cfg.entropy_theta, cfg.confidence_theta, oo, cfg.outcome_only_cutoff);
  auto be = make_backends(cfg);
  CollectOptions opt;
  opt.per_policy_count = cfg.per_policy_count;
  opt.run.signal = cfg.signal;
  std::vector<std::optional<TrajectoryPool>> slots(qs.size());
  parallel_for(qs.size(), cfg.workers, [&](std::size_t i) {
    slots[i] = collect_pool(qs[i], policies, *be.srm, *be.lrm, cfg.limits, cfg.seed, opt);
  });
  std::vector<TrajectoryPool> pools;
  for (auto& s : slots)
    if (s) pools.push_back(std::move(*s));
  if (pools.empty()) throw Precondition("collect: every pool was below the minimum size");
  run.output(co.out, records_jsonl(pools));
  run.finish();
  std::cerr << "collect: " << pools.size() << " pools from " << qs.size() << " queries\n";
}

void cmd_pairs(const Common& co, const std::string& pools_path) {
  const Config cfg = load_config(co);
  Run run("pairs", cfg);
  const auto pools = parse_records<TrajectoryPool>(run.input("pools", pools_path), pools_path, pool_from_json);
  const auto scorer = seed_scorer(seed_rubric());
  std::vector<PoolPairs> out;
  std::size_t n = 0;
  for (const auto& p : pools) {
    out.push_back({p.query_id, build_pairs(p, scorer, cfg.pairing)});
    n += out.back().pairs.size();
  }
  run.output(co.out, records_jsonl(out));
  run.finish();
  std::cerr << "pairs: " << n << " pairs over " << pools.size() << " pools\n";
}

void cmd_warm_judge(const Common& co, const std::string& pools, const std::string& pairs) {
  const Config cfg = load_config(co);
  Run run("warm-judge", cfg);
  const auto groups = load_groups(run, "", pools, pairs);
  JudgeModel j;
  const auto curve = warm_start_judge(j, groups, seed_rubric(), cfg.judge_epochs, cfg.judge_lr);
  run.output(co.out, encode_judge(j));
  run.finish();
  if (!curve.empty()) std::cerr << "warm-judge: final loss " << curve.back() << "\n";
}

void cmd_alternate(const Common& co, const std::string& pools, const std::string& pairs, const std::string& hpools,
                   const std::string& hpairs, const std::string& judge_in, const std::string& rubricor_out,
                   const std::string& metrics_out) {
  const Config cfg = load_config(co);
  Run run("alternate", cfg);
  const auto train = load_groups(run, "", pools, pairs);
  const auto held = load_groups(run, "heldout_", hpools, hpairs);
  const Gate gate(load_heldout(run, hpools, hpairs), cfg.gate);
  JudgeModel j = decode_judge(run.input("judge", judge_in));
  auto g = RubricorModel::uniform();
  const auto rounds = alternate(g, j, train, held, gate, seed_rubric(), cfg.alternate);
  run.output(co.out, encode_judge(j));
  run.output(rubricor_out, encode_rubricor(g));
  if (!metrics_out.empty()) {
    std::string csv = "round,mean_rho,discard_rate,phase2_discard_rate,judge_pair_accuracy,judge_loss\n";
    char buf[256];
    for (const auto& m : rounds) {
      std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g,%.10g,%.10g\n", m.round, m.mean_rho, m.discard_rate,
                    m.phase2_discard_rate, m.judge_pair_accuracy, m.judge_loss);
      csv += buf;
    }
    run.output(metrics_out, csv);
  }
  run.finish();
}

void cmd_train_router(const Common& co, const std::string& queries, const std::string& rubricor,
                      const std::string& judge, const std::string& hpools, const std::string& hpairs,
                      const std::string& init, const std::string& curve_out) {
  const Config cfg = load_config(co);
  Run run("train-router", cfg);
  const bool process = cfg.grpo.beta_process > 0.0;
  if (process && (rubricor.empty() || judge.empty() || hpools.empty() || hpairs.empty()))
    throw Precondition(
        "train-router: beta_process > 0 needs --rubricor, --judge, --heldout-pools and --heldout-pairs "
        "(or set --beta 0 for outcome-only training)");
  const auto qs = load_queries(run, queries);
  std::optional<RouterPolicy> init_policy;
  if (!init.empty()) init_policy = decode_router(run.input("init", init));
  std::optional<RubricorModel> g;
  std::optional<JudgeModel> j;
  std::optional<Gate> gate;
  std::optional<ProcessRewardSource> src;
  if (process) {
    g = decode_rubricor(run.input("rubricor", rubricor));
    j = decode_judge(run.input("judge", judge));
    gate.emplace(load_heldout(run, hpools, hpairs), cfg.gate);
    src = ProcessRewardSource{&*g, parametric_judge(*j), &*gate};
  }
  auto be = make_backends(cfg);
  const auto res = train_router(cfg.grpo, qs, *be.srm, *be.lrm, cfg.limits, src, {}, init_policy);
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
  run.output(co.out, encode_router(res.policy));
  if (!curve_out.empty()) run.output(curve_out, curve_csv(res.curve));
  run.finish();
}

void cmd_route(const Common& co, const std::string& queries, const std::string& policy, double param,
               const std::string& router) {
  const Config cfg = load_config(co);
  Run run("route", cfg);
  run.arg("policy", policy);
  run.arg("param", param);
  const auto qs = load_queries(run, queries);
  const auto pk = policy_kind(run, policy, param, router);
  auto be = make_backends(cfg);
  const auto r = evaluate(pk, qs, *be.srm, *be.lrm, cfg.limits, eval_options(cfg));
  run.output(co.out, records_jsonl(r.trajectories));
  run.finish();
  std::cout << run_summary(r).dump() << "\n";
}

void cmd_sweep(const Common& co, const std::string& queries, const std::string& policy, const std::string& router) {
  const Config cfg = load_config(co);
  Run run("sweep", cfg);
  run.arg("policy", policy);
  const auto qs = load_queries(run, queries);
  const auto pk = policy_kind(run, policy, 0.5, router);
  if (pk.kind == PolicyKind::Kind::SrmOnly || pk.kind == PolicyKind::Kind::LrmOnly)
    throw Precondition("sweep: policy '" + policy + "' has no parameter to sweep");
  auto be = make_backends(cfg);
  run.output(co.out, sweep_csv(sweep(pk, qs, *be.srm, *be.lrm, cfg.limits, eval_options(cfg))));
  run.finish();
}

void cmd_eval_ba(const Common& co, const std::string& sweep_path, const std::string& queries,
                 std::optional<double> lrm_flops, std::vector<double> budgets) {
  const Config cfg = load_config(co);
  Run run("eval-ba", cfg);
  const auto pts = parse_sweep_csv(run.input("sweep", sweep_path), sweep_path);
  if (!lrm_flops) {
    if (queries.empty()) throw Precondition("eval-ba: give --queries or --lrm-flops");
    lrm_flops = lrm_only_flops(cfg, load_queries(run, queries));
  }
  if (budgets.empty()) budgets.assign(kBudgets.begin(), kBudgets.end());
  run.arg("budgets", budgets);
  json out = {{"lrm_only_flops", *lrm_flops}, {"budgets", json::array()}};
  for (double b : budgets) {
    const auto r = budgeted_accuracy(pts, *lrm_flops, b);
    json row = {{"budget_pct", b}, {"excluded_invalid", r.excluded_invalid}};
    if (r.ba) {
      row["ba"] = *r.ba;
      row["achieving_threshold"] = r.achieving_threshold;
    } else {
      row["ba"] = nullptr;
      row["diagnostic"] = r.diagnostic;
    }
    out["budgets"].push_back(row);
  }
  const std::string text = out.dump(2) + "\n";
  if (!co.out.empty()) {
    run.output(co.out, text);
    run.finish();
  }
  std::cout << text;
}

void cmd_report(const Common& co, const std::string& queries, const std::string& trajectories,
                const std::string& lrm_trajectories) {
  const Config cfg = load_config(co);
  Run run("report", cfg);
  const auto qs = load_queries(run, queries);
  const auto ts = parse_records<RoutingTrajectory>(run.input("trajectories", trajectories), trajectories,
                                                   trajectory_from_json);
  if (ts.empty()) throw Precondition("report: no trajectories in " + trajectories);
  const FlopsModel fm = eval_options(cfg).flops;
  std::size_t correct = 0, failed = 0;
  double flops = 0.0, usage = 0.0;
  for (const auto& t : ts) {
    if (t.failed) {
      ++failed;
      continue;
    }
    correct += t.outcome_correct.value_or(false);
    flops += flops_of_trajectory(t, fm);
    usage += t.actions.empty() ? 0.0 : lrm_usage_rate(t);
  }
  const double n = static_cast<double>(ts.size() - failed);
  json out = {{"trajectories", ts.size()},
              {"failures", failed},
              {"accuracy", n > 0 ? static_cast<double>(correct) / static_cast<double>(ts.size()) : 0.0},
              {"total_flops", flops},
              {"lrm_usage", n > 0 ? usage / n : 0.0}};
  const auto bu = difficulty_usage(ts, difficulties_of(ts, qs));
  json buckets = json::object();
  for (std::size_t b = 0; b < kBucketNames.size(); ++b)
    buckets[std::string(kBucketNames[b])] = {{"lrm_usage", bu.usage[b]}, {"count", bu.count[b]}};
  out["difficulty_usage"] = buckets;
  out["difficulty_unlabeled"] = bu.skipped;
  if (!lrm_trajectories.empty()) {
    const auto ls = parse_records<RoutingTrajectory>(run.input("lrm_trajectories", lrm_trajectories),
                                                     lrm_trajectories, trajectory_from_json);
    LatencyModel lm{cfg.srm.simulated_seconds_per_step, cfg.lrm.simulated_seconds_per_step, false};
    const bool modeled = lm.srm_seconds_per_step > 0.0 && lm.lrm_seconds_per_step > 0.0;
    try {
      const auto lr = modeled ? latency_report(ts, ls, lm) : latency_report(ts, ls);
      out["latency"] = {{"policy_seconds_per_query", lr.policy_seconds_per_query},
                        {"lrm_only_seconds_per_query", lr.lrm_only_seconds_per_query},
                        {"speedup", lr.speedup},
                        {"source", modeled ? "modeled" : "recorded"}};
    } catch (const Error& e) {
      // Simulated runs without simulated_seconds_per_step record no time.
      out["latency"] = {{"unavailable", e.what()}};
    }
  }
  const std::string text = out.dump(2) + "\n";
  if (!co.out.empty()) {
    run.output(co.out, text);
    run.finish();
  }
  std::cout << text;
}

void add_common(CLI::App* sub, Common& co, bool out_required = true) {
  sub->add_option("--config", co.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  sub->add_option("--seed", co.seed, "Master seed (overrides config)");
  sub->add_option("--workers", co.workers, "Worker threads (results do not depend on it)");
  auto* o = sub->add_option("--out,-o", co.out, "Primary output path");
  if (out_required) o->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"roro: rubric-guided step-level SRM/LRM routing"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  Common co;
  std::string queries, pools, pairs, hpools, hpairs, judge, rubricor, router, init, curve, metrics, policy,
      trajectories, lrm_trajectories, sweep_path;
  std::size_t n = 100;
  double param = 0.5;
  std::optional<double> lrm_flops;
  std::vector<double> budgets;

  auto* gen = app.add_subcommand("gen-world", "Generate a synthetic query set");
  add_common(gen, co);
  gen->add_option("--n", n, "Number of queries")->check(CLI::PositiveNumber);

  auto* col = app.add_subcommand("collect", "Roll out the collection policies into trajectory pools");
  add_common(col, co);
  col->add_option("--queries", queries)->required();
  col->add_option("--outcome-router", router, "Outcome-only router checkpoint added as sixth policy");

  auto* pr = app.add_subcommand("pairs", "Build preference pairs from pools");
  add_common(pr, co);
  pr->add_option("--pools", pools)->required();

  auto* wj = app.add_subcommand("warm-judge", "Fit the judge on the seed rubric");
  add_common(wj, co);
  wj->add_option("--pools", pools)->required();
  wj->add_option("--pairs", pairs)->required();

  auto* alt = app.add_subcommand("alternate", "Alternate rubric-generator and judge updates");
  add_common(alt, co);
  alt->add_option("--pools", pools)->required();
  alt->add_option("--pairs", pairs)->required();
  alt->add_option("--heldout-pools", hpools)->required();
  alt->add_option("--heldout-pairs", hpairs)->required();
  alt->add_option("--judge", judge, "Warm-started judge checkpoint")->required();
  alt->add_option("--rubricor-out", rubricor, "Rubric generator checkpoint output")->required();
  alt->add_option("--metrics", metrics, "Per-round metrics CSV");

  auto* tr = app.add_subcommand("train-router", "Train the router with group-relative policy optimization");
  add_common(tr, co);
  tr->add_option("--queries", queries)->required();
  tr->add_option("--rubricor", rubricor);
  tr->add_option("--judge", judge);
  tr->add_option("--heldout-pools", hpools);
  tr->add_option("--heldout-pairs", hpairs);
  tr->add_option("--init", init, "Initial router checkpoint");
  tr->add_option("--curve", curve, "Training curve CSV");
  tr->add_option("--beta", co.beta, "Process reward weight");
  tr->add_option("--lambda", co.lambda, "LRM token cost weight");
  tr->add_option("--iterations", co.iterations);

  auto* rt = app.add_subcommand("route", "Route queries with one policy and write trajectories");
  add_common(rt, co);
  rt->add_option("--queries", queries)->required();
  rt->add_option("--policy", policy, "srm_only|lrm_only|random|entropy|confidence|learned")->required();
  rt->add_option("--param", param, "Probability, threshold or cutoff");
  rt->add_option("--router", router);

  auto* sw = app.add_subcommand("sweep", "Sweep a policy parameter over the threshold grid");
  add_common(sw, co);
  sw->add_option("--queries", queries)->required();
  sw->add_option("--policy", policy, "random|entropy|confidence|learned")->required();
  sw->add_option("--router", router);

  auto* ba = app.add_subcommand("eval-ba", "Budgeted accuracy of a sweep");
  add_common(ba, co, false);
  ba->add_option("--sweep", sweep_path)->required();
  ba->add_option("--queries", queries, "Queries for the LRM-only reference cost");
  ba->add_option("--lrm-flops", lrm_flops, "LRM-only reference cost");
  ba->add_option("--budget", budgets, "Budget percentages (default 20 40 60)");

  auto* rep = app.add_subcommand("report", "Accuracy, cost and difficulty breakdown of routed trajectories");
  add_common(rep, co, false);
  rep->add_option("--queries", queries)->required();
  rep->add_option("--trajectories", trajectories)->required();
  rep->add_option("--lrm-trajectories", lrm_trajectories, "LRM-only trajectories for the latency speedup");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*gen) cmd_gen_world(co, n);
    if (*col) cmd_collect(co, queries, router);
    if (*pr) cmd_pairs(co, pools);
    if (*wj) cmd_warm_judge(co, pools, pairs);
    if (*alt) cmd_alternate(co, pools, pairs, hpools, hpairs, judge, rubricor, metrics);
    if (*tr) cmd_train_router(co, queries, rubricor, judge, hpools, hpairs, init, curve);
    if (*rt) cmd_route(co, queries, policy, param, router);
    if (*sw) cmd_sweep(co, queries, policy, router);
    if (*ba) cmd_eval_ba(co, sweep_path, queries, lrm_flops, budgets);
    if (*rep) cmd_report(co, queries, trajectories, lrm_trajectories);
  } catch (const TransportError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
