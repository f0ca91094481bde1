#pragma once

// JSON and JSONL encodings of queries, trajectories, pools, pairs, rubrics and
// configs, plus SHA-256 hashing and run manifests. Every JSONL record carries
// "v": 1.

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "roro/backends.hpp"
#include "roro/core.hpp"
#include "roro/criteria.hpp"
#include "roro/gate.hpp"
#include "roro/io.hpp"
#include "roro/prefdata.hpp"
#include "roro/synthworld.hpp"

namespace roro {

using json = nlohmann::json;

inline constexpr int kRecordVersion = 1;

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("sha256 failed");
  std::string out;
  char buf[3];
  for (unsigned i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    out += buf;
  }
  return out;
}

namespace detail {
inline void check_version(const json& j, std::string_view what) {
  if (!j.contains("v") || j.at("v") != kRecordVersion)
    throw Error(std::string(what) + ": missing or unsupported record version");
}
template <class T>
void put_opt(json& j, const char* k, const std::optional<T>& v) {
  if (v) j[k] = *v;
}
template <class T>
std::optional<T> get_opt(const json& j, const char* k) {
  if (!j.contains(k) || j.at(k).is_null()) return std::nullopt;
  return j.at(k).get<T>();
}
}  // namespace detail

inline json to_json(const Uncertainty& u) {
  return {{"avg_entropy", u.avg_entropy},
          {"avg_confidence", u.avg_confidence},
          {"avg_nll", u.avg_nll},
          {"first3_entropy", u.first3_entropy}};
}

inline Uncertainty uncertainty_from_json(const json& j) {
  Uncertainty u;
  u.avg_entropy = j.at("avg_entropy").get<double>();
  u.avg_confidence = j.at("avg_confidence").get<double>();
  u.avg_nll = j.at("avg_nll").get<double>();
  u.first3_entropy = j.at("first3_entropy").get<double>();
  return u;
}

inline json to_json(const QueryRecord& q) {
  json j = {{"v", kRecordVersion},
            {"id", q.id},
            {"text", q.text},
            {"origin", q.origin == Origin::Synthetic ? "synthetic" : "external"},
            {"step_difficulties", q.step_difficulties}};
  detail::put_opt(j, "gold_answer", q.gold_answer);
  detail::put_opt(j, "difficulty", q.difficulty);
  return j;
}

inline QueryRecord query_from_json(const json& j) {
  detail::check_version(j, "query");
  QueryRecord q;
  q.id = j.at("id").get<std::string>();
  q.text = j.value("text", std::string());
  const auto origin = j.value("origin", std::string("external"));
  if (origin != "synthetic" && origin != "external") throw Error("query: unknown origin " + origin);
  q.origin = origin == "synthetic" ? Origin::Synthetic : Origin::External;
  q.gold_answer = detail::get_opt<std::string>(j, "gold_answer");
  q.difficulty = detail::get_opt<double>(j, "difficulty");
  if (j.contains("step_difficulties")) q.step_difficulties = j.at("step_difficulties").get<std::vector<double>>();
  return q;
}

inline json to_json(const ReasoningStep& s) {
  return {{"text", s.text},
          {"producer", std::string(to_string(s.producer))},
          {"token_count", s.token_count},
          {"uncertainty", to_json(s.uncertainty)},
          {"draft_uncertainty", to_json(s.draft_uncertainty)},
          {"draft_token_count", s.draft_token_count}};
}

inline ReasoningStep step_from_json(const json& j) {
  ReasoningStep s;
  s.text = j.at("text").get<std::string>();
  s.producer = producer_from_string(j.at("producer").get<std::string>());
  s.token_count = j.at("token_count").get<std::int64_t>();
  s.uncertainty = uncertainty_from_json(j.at("uncertainty"));
  s.draft_uncertainty = uncertainty_from_json(j.at("draft_uncertainty"));
  s.draft_token_count = j.at("draft_token_count").get<std::int64_t>();
  return s;
}

inline json to_json(const RoutingTrajectory& t) {
  json steps = json::array(), actions = json::array();
  for (const auto& s : t.steps) steps.push_back(to_json(s));
  for (auto a : t.actions) actions.push_back(std::string(to_string(a)));
  json j = {{"v", kRecordVersion},   {"query_id", t.query_id},     {"steps", steps},
            {"actions", actions},    {"srm_tokens", t.srm_tokens}, {"lrm_tokens", t.lrm_tokens},
            {"source_policy", t.source_policy}, {"failed", t.failed}, {"latency_seconds", t.latency_seconds}};
  detail::put_opt(j, "final_answer", t.final_answer);
  detail::put_opt(j, "outcome_correct", t.outcome_correct);
  return j;
}

inline RoutingTrajectory trajectory_from_json(const json& j) {
  detail::check_version(j, "trajectory");
  RoutingTrajectory t;
  t.query_id = j.at("query_id").get<std::string>();
  for (const auto& s : j.at("steps")) t.steps.push_back(step_from_json(s));
  for (const auto& a : j.at("actions")) t.actions.push_back(action_from_string(a.get<std::string>()));
  t.final_answer = detail::get_opt<std::string>(j, "final_answer");
  t.outcome_correct = detail::get_opt<bool>(j, "outcome_correct");
  t.srm_tokens = j.at("srm_tokens").get<std::int64_t>();
  t.lrm_tokens = j.at("lrm_tokens").get<std::int64_t>();
  t.source_policy = j.value("source_policy", std::string());
  t.failed = j.value("failed", false);
  t.latency_seconds = j.value("latency_seconds", 0.0);
  check_trajectory(t);
  return t;
}

inline json to_json(const TrajectoryPool& p) {
  json ts = json::array();
  for (const auto& t : p.trajectories) ts.push_back(to_json(t));
  return {{"v", kRecordVersion}, {"query_id", p.query_id}, {"trajectories", ts}};
}

inline TrajectoryPool pool_from_json(const json& j) {
  detail::check_version(j, "pool");
  TrajectoryPool p;
  p.query_id = j.at("query_id").get<std::string>();
  for (const auto& t : j.at("trajectories")) p.trajectories.push_back(trajectory_from_json(t));
  return p;
}

inline json to_json(const PoolPairs& pp) {
  json arr = json::array();
  for (const auto& p : pp.pairs)
    arr.push_back({{"winner", p.winner}, {"loser", p.loser}, {"rule", std::string(to_string(p.rule))}});
  return {{"v", kRecordVersion}, {"query_id", pp.query_id}, {"pairs", arr}};
}

inline PoolPairs pairs_from_json(const json& j) {
  detail::check_version(j, "pairs");
  PoolPairs pp;
  pp.query_id = j.at("query_id").get<std::string>();
  for (const auto& p : j.at("pairs"))
    pp.pairs.push_back({p.at("winner").get<std::size_t>(), p.at("loser").get<std::size_t>(),
                        pair_rule_from_string(p.at("rule").get<std::string>())});
  return pp;
}

inline json to_json(const Criterion& c) {
  return {{"kind", std::string(to_string(c.kind))}, {"threshold", c.threshold}, {"window", c.window},
          {"weight", c.weight},                       {"text", c.text},           {"score", c.guidance_score}};
}

inline Criterion criterion_from_json(const json& j) {
  Criterion c;
  c.kind = criterion_kind_from_string(j.at("kind").get<std::string>());
  c.threshold = j.value("threshold", 0.3);
  c.window = j.value("window", 2.0);
  c.weight = j.at("weight").get<double>();
  c.text = j.value("text", std::string());
  c.guidance_score = j.value("score", 1.0);
  c.check();
  return c;
}

inline json to_json(const Rubric& r) {
  json arr = json::array();
  for (const auto& c : r.criteria) arr.push_back(to_json(c));
  return {{"v", kRecordVersion}, {"criteria", arr}, {"validated", r.validated}};
}

inline Rubric rubric_from_json(const json& j) {
  detail::check_version(j, "rubric");
  Rubric r;
  for (const auto& c : j.at("criteria")) r.criteria.push_back(criterion_from_json(c));
  r.validated = j.value("validated", false);
  r.check();
  return r;
}

// JSONL: one compact record per line.
inline std::string to_jsonl(const std::vector<json>& records) {
  std::string out;
  for (const auto& r : records) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

inline std::vector<json> parse_jsonl(std::string_view text, std::string_view source = "jsonl") {
  std::vector<json> out;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    ++line_no;
    const auto line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(std::string(source) + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

template <class T, class F>
std::vector<T> read_jsonl_file(const std::filesystem::path& p, F&& from_json) {
  std::vector<T> out;
  for (const auto& j : parse_jsonl(read_file(p), p.string())) out.push_back(from_json(j));
  return out;
}

template <class T>
void write_jsonl_file(const std::filesystem::path& p, const std::vector<T>& items) {
  std::vector<json> recs;
  for (const auto& x : items) recs.push_back(to_json(x));
  atomic_write_file(p, to_jsonl(recs));
}

inline json to_json(const synth::DifficultySpec& d) {
  using K = synth::DifficultySpec::Kind;
  json j;
  switch (d.kind) {
    case K::Point: j = {{"kind", "point"}, {"value", d.value}}; break;
    case K::Uniform: j = {{"kind", "uniform"}, {"lo", d.lo}, {"hi", d.hi}}; break;
    case K::Mixture:
      j = {{"kind", "mixture"}, {"easy_prob", d.easy_prob}, {"easy_lo", d.easy_lo},
           {"easy_hi", d.easy_hi}, {"hard_lo", d.hard_lo},     {"hard_hi", d.hard_hi}};
      break;
  }
  return j;
}

inline synth::DifficultySpec difficulty_spec_from_json(const json& j) {
  synth::DifficultySpec d;
  const auto kind = j.value("kind", std::string("mixture"));
  if (kind == "point") {
    d = synth::DifficultySpec::point(j.at("value").get<double>());
  } else if (kind == "uniform") {
    d = synth::DifficultySpec::uniform(j.value("lo", 0.0), j.value("hi", 1.0));
  } else if (kind == "mixture") {
    d.easy_prob = j.value("easy_prob", d.easy_prob);
    d.easy_lo = j.value("easy_lo", d.easy_lo);
    d.easy_hi = j.value("easy_hi", d.easy_hi);
    d.hard_lo = j.value("hard_lo", d.hard_lo);
    d.hard_hi = j.value("hard_hi", d.hard_hi);
  } else {
    throw Error("unknown difficulty kind: " + kind);
  }
  return d;
}

inline json to_json(const synth::WorldConfig& w) {
  return {{"srm_slope", w.srm_slope},
          {"lrm_slope", w.lrm_slope},
          {"srm_tokens_per_step", w.srm_tokens_per_step},
          {"lrm_tokens_per_step", w.lrm_tokens_per_step},
          {"noise_sd", w.noise_sd},
          {"difficulty", to_json(w.difficulty)},
          {"min_steps", w.min_steps},
          {"max_steps", w.max_steps},
          {"error_propagation", w.error_propagation},
          {"propagation_delta", w.propagation_delta}};
}

inline synth::WorldConfig world_config_from_json(const json& j) {
  synth::WorldConfig w;
  w.srm_slope = j.value("srm_slope", w.srm_slope);
  w.lrm_slope = j.value("lrm_slope", w.lrm_slope);
  w.srm_tokens_per_step = j.value("srm_tokens_per_step", w.srm_tokens_per_step);
  w.lrm_tokens_per_step = j.value("lrm_tokens_per_step", w.lrm_tokens_per_step);
  w.noise_sd = j.value("noise_sd", w.noise_sd);
  if (j.contains("difficulty")) w.difficulty = difficulty_spec_from_json(j.at("difficulty"));
  w.min_steps = j.value("min_steps", w.min_steps);
  w.max_steps = j.value("max_steps", w.max_steps);
  w.error_propagation = j.value("error_propagation", w.error_propagation);
  w.propagation_delta = j.value("propagation_delta", w.propagation_delta);
  w.check();
  return w;
}

inline json to_json(const GateConfig& g) {
  return {{"alpha", g.alpha}, {"sigma_min", g.sigma_min}, {"mi_max_nats", g.mi_max_nats},
          {"knn_k", g.knn_k}, {"min_retained", g.min_retained}};
}

inline GateConfig gate_config_from_json(const json& j) {
  GateConfig g;
  g.alpha = j.value("alpha", g.alpha);
  g.sigma_min = j.value("sigma_min", g.sigma_min);
  g.mi_max_nats = j.value("mi_max_nats", g.mi_max_nats);
  g.knn_k = j.value("knn_k", g.knn_k);
  g.min_retained = j.value("min_retained", g.min_retained);
  g.check();
  return g;
}

// Manifest written next to every output: seed, config hash, input and
// output hashes, tool version. No timestamps, so reruns are byte-identical.
struct Manifest {
  std::string tool_version;
  std::string command;
  std::uint64_t seed = 0;
  json config;
  std::map<std::string, std::string> inputs;   // name -> sha256
  std::map<std::string, std::string> outputs;  // name -> sha256
};

inline json to_json(const Manifest& m) {
  return {{"v", kRecordVersion},
          {"tool_version", m.tool_version},
          {"command", m.command},
          {"seed", m.seed},
          {"config", m.config},
          {"config_hash", sha256_hex(m.config.dump())},
          {"inputs", m.inputs},
          {"outputs", m.outputs}};
}

}  // namespace roro
