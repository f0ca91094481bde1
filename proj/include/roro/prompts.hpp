#pragma once

// Prompt templates and JSON wire formats for prompted rubric generation and
// judging, and adapters that drive them through a chat-completions client.

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "roro/core.hpp"
#include "roro/criteria.hpp"
#include "roro/gate.hpp"
#include "roro/prefdata.hpp"
#include "roro/remote.hpp"

namespace roro {

inline constexpr std::string_view kRubricorTemplate =
    "### System:\n"
    "You are the Rubricor in a stepwise model routing system for reasoning. A weak reasoning model (SRM) "
    "proposes each reasoning step. A router either accepts the SRM step or replaces it with a strong "
    "reasoning model step. The goal is to preserve reasoning quality while avoiding unnecessary LRM calls.\n"
    "You will be given one problem and a pool of routing trajectories for that problem. Each trajectory "
    "contains the selected reasoning steps and the model used at each step.\n"
    "### Input:\n"
    "[Question]: {question}\n"
    "[Trajectory 1]: {trajectory_1}\n"
    "[Trajectory 2]: {trajectory_2}\n"
    "...\n"
    "[Trajectory N]: {trajectory_N}\n"
    "The input does not provide final correctness labels or preference labels. Do not assume that any "
    "trajectory is preferred.\n"
    "### Task:\n"
    "Generate 3--5 general routing-quality criteria for evaluating routing trajectories under this question. "
    "Each criterion must satisfy all requirements:\n"
    "1. It evaluates the routing process rather than final answer correctness.\n"
    "2. It is label-agnostic: it must not refer to trajectory IDs, final correctness, reference answers, or "
    "which trajectory is preferred.\n"
    "3. It should be applicable beyond this specific problem, while still being relevant to the routing "
    "challenges shown in the trajectory pool.\n"
    "4. It should capture whether the route prevents, repairs, or verifies high-impact reasoning errors.\n"
    "5. It must not collapse into trivial heuristics such as \"always use LRM in later steps\", \"always "
    "minimize LRM calls\", \"always avoid switching\", or \"use LRM whenever the solution is long\".\n"
    "### Possible Aspects:\n"
    "Possible aspects include, but are not limited to: intervention before error propagation; timeliness of "
    "escalation under uncertainty; avoiding LRM calls on routine or already reliable steps; recovery after "
    "contradiction or uncertainty.\n"
    "### Output Format:\n"
    "Return only a JSON object:\n"
    "{\"rubrics\": [{\"criterion\": \"one sentence describing what the route should do or should not do\", "
    "\"score\": 0.8, \"weight\": 0.25}]}\n"
    "Each weight must be a number in [0,1].";

inline constexpr std::string_view kJudgeTemplate =
    "### System:\n"
    "You are the Judge in a stepwise model routing system for reasoning. A weak reasoning model (SRM) "
    "proposes each reasoning step. A router either accepts the SRM step or replaces it with a strong "
    "reasoning model step (LRM). The goal is to preserve reasoning quality while avoiding unnecessary LRM "
    "calls.\n"
    "You will be given one problem, one routing trajectory, and a rubric generated by the Rubricor. Your "
    "task is to decide whether the trajectory satisfies each rubric criterion, and then compute a weighted "
    "process score.\n"
    "### Input:\n"
    "[Question]: {question}\n"
    "[Routing Trajectory]: {trajectory}\n"
    "[Rubric]: {rubric_json}\n"
    "The trajectory contains the selected reasoning steps and the model used at each step. It may include a "
    "final answer in the text, but you must not judge whether the final answer is correct. You should "
    "evaluate only the routing process.\n"
    "### Task:\n"
    "For each rubric criterion:\n"
    "1. Decide whether the trajectory satisfies the criterion.\n"
    "2. Set \"satisfied\" to true if the routing behavior clearly satisfies the criterion.\n"
    "3. Set \"satisfied\" to false if the routing behavior clearly violates the criterion or lacks evidence "
    "for satisfying it.\n"
    "4. Use the criterion and score_guidance to make the decision.\n"
    "Compute the final process score as:\n"
    "final_score = sum of weight * score * indicator\n"
    "where indicator = 1 if satisfied is true and 0 otherwise.\n"
    "### Output Format:\n"
    "Return only a valid JSON object:\n"
    "{\"criterion_judgments\": [{\"criterion\": \"the original criterion text\", \"score\": 0.5, "
    "\"satisfied\": true} ...], \"final_score\": 0.0}";

namespace detail {
inline void replace_once(std::string& s, std::string_view from, std::string_view to) {
  const auto pos = s.find(from);
  if (pos == std::string::npos) throw Error("template placeholder missing: " + std::string(from));
  s.replace(pos, from.size(), to);
}
}  // namespace detail

// One line per step: "Step <i> [SRM|LRM]: <text>".
inline std::string render_trajectory(const RoutingTrajectory& t) {
  std::string out;
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    if (i) out += "\n";
    out += "Step " + std::to_string(i + 1) + " [" + std::string(to_string(t.steps[i].producer)) + "]: " +
           t.steps[i].text;
  }
  if (t.final_answer) out += "\nFinal answer: " + *t.final_answer;
  return out;
}

inline std::string render_rubricor_prompt(const std::string& question,
                                          const std::vector<RoutingTrajectory>& pool) {
  if (pool.empty()) throw Error("rubricor prompt: empty trajectory pool");
  std::string s(kRubricorTemplate);
  std::string block;
  for (std::size_t i = 0; i < pool.size(); ++i)
    block += "[Trajectory " + std::to_string(i + 1) + "]: " + render_trajectory(pool[i]) + "\n";
  detail::replace_once(s, "[Trajectory 1]: {trajectory_1}\n[Trajectory 2]: {trajectory_2}\n...\n"
                          "[Trajectory N]: {trajectory_N}\n", block);
  detail::replace_once(s, "{question}", question);
  return s;
}

// {"rubrics": [{criterion, score, weight}]} for a rubric.
inline nlohmann::json rubric_to_json(const Rubric& r) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : r.criteria)
    arr.push_back({{"criterion", c.text}, {"score", c.guidance_score}, {"weight", c.weight}});
  return {{"rubrics", arr}};
}

inline std::string render_judge_prompt(const std::string& question, const RoutingTrajectory& t,
                                       const Rubric& r) {
  std::string s(kJudgeTemplate);
  // Substitute in reverse order of appearance so inserted text is never rescanned.
  detail::replace_once(s, "{rubric_json}", rubric_to_json(r).dump());
  detail::replace_once(s, "{trajectory}", render_trajectory(t));
  detail::replace_once(s, "{question}", question);
  return s;
}

// Removes surrounding whitespace and a Markdown code fence, if any.
inline std::string strip_code_fence(std::string_view raw) {
  std::string s(trim(raw));
  if (s.rfind("```", 0) == 0) {
    const auto nl = s.find('\n');
    s = nl == std::string::npos ? std::string() : s.substr(nl + 1);
    const auto end = s.rfind("```");
    if (end != std::string::npos) s = s.substr(0, end);
    s = std::string(trim(s));
  }
  return s;
}

namespace detail {
inline nlohmann::json parse_json_payload(std::string_view raw) {
  const std::string body = strip_code_fence(raw);
  try {
    return nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), std::string(raw));
  }
}
inline const nlohmann::json& require(const nlohmann::json& obj, const char* key, std::string_view raw) {
  if (!obj.is_object() || !obj.contains(key)) throw ParseError(std::string("missing field: ") + key, std::string(raw));
  return obj.at(key);
}
inline double require_number(const nlohmann::json& obj, const char* key, std::string_view raw) {
  const auto& v = require(obj, key, raw);
  if (!v.is_number()) throw ParseError(std::string("field is not a number: ") + key, std::string(raw));
  return v.get<double>();
}
inline std::string require_string(const nlohmann::json& obj, const char* key, std::string_view raw) {
  const auto& v = require(obj, key, raw);
  if (!v.is_string()) throw ParseError(std::string("field is not a string: ") + key, std::string(raw));
  return v.get<std::string>();
}
}  // namespace detail

// Parses {"rubrics": [...]} into a rubric of prompted criteria.
inline Rubric parse_rubric_json(std::string_view raw) {
  const auto j = detail::parse_json_payload(raw);
  const auto& arr = detail::require(j, "rubrics", raw);
  if (!arr.is_array() || arr.empty()) throw ParseError("rubrics must be a non-empty array", std::string(raw));
  Rubric r;
  for (const auto& e : arr) {
    Criterion c;
    c.kind = CriterionKind::Prompted;
    c.text = detail::require_string(e, "criterion", raw);
    c.guidance_score = detail::require_number(e, "score", raw);
    c.weight = detail::require_number(e, "weight", raw);
    if (!(c.weight >= 0.0 && c.weight <= 1.0)) throw ParseError("weight outside [0,1]", std::string(raw));
    if (!(c.guidance_score >= 0.0 && c.guidance_score <= 1.0))
      throw ParseError("score outside [0,1]", std::string(raw));
    r.criteria.push_back(std::move(c));
  }
  return r;
}

struct CriterionJudgment {
  std::string criterion;
  double score = 0.0;
  bool satisfied = false;
  bool operator==(const CriterionJudgment&) const = default;
};

struct JudgeOutput {
  std::vector<CriterionJudgment> judgments;
  double reported_final = 0.0;
  double final_score = 0.0;  // recomputed from judgments and rubric weights
  bool overridden = false;
};

inline nlohmann::json judge_output_to_json(const JudgeOutput& o) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : o.judgments)
    arr.push_back({{"criterion", c.criterion}, {"score", c.score}, {"satisfied", c.satisfied}});
  return {{"criterion_judgments", arr}, {"final_score", o.final_score}};
}

inline constexpr double kFinalScoreTolerance = 1e-6;

// Parses {"criterion_judgments": [...], "final_score": x}. Judgments align with the rubric's criteria by
// position; final_score is recomputed as sum of weight * score * satisfied.
inline JudgeOutput parse_judge_json(std::string_view raw, const Rubric& r) {
  const auto j = detail::parse_json_payload(raw);
  const auto& arr = detail::require(j, "criterion_judgments", raw);
  if (!arr.is_array()) throw ParseError("criterion_judgments must be an array", std::string(raw));
  if (arr.size() != r.criteria.size())
    throw ParseError("judgment count " + std::to_string(arr.size()) + " does not match rubric size " +
                         std::to_string(r.criteria.size()),
                     std::string(raw));
  JudgeOutput out;
  out.reported_final = detail::require_number(j, "final_score", raw);
  double total = 0.0;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    CriterionJudgment c;
    c.criterion = detail::require_string(arr[i], "criterion", raw);
    c.score = detail::require_number(arr[i], "score", raw);
    const auto& sat = detail::require(arr[i], "satisfied", raw);
    if (!sat.is_boolean()) throw ParseError("field is not a boolean: satisfied", std::string(raw));
    c.satisfied = sat.get<bool>();
    if (c.satisfied) total += r.criteria[i].weight * c.score;
    out.judgments.push_back(std::move(c));
  }
  out.final_score = total;
  out.overridden = std::fabs(total - out.reported_final) > kFinalScoreTolerance;
  return out;
}

// Prompted rubric generation. Inference only: draws carry no log-probability.
class PromptedRubricor {
 public:
  explicit PromptedRubricor(std::shared_ptr<ChatClient> client) : client_(std::move(client)) {}

  struct Draw {
    std::optional<Rubric> rubric;  // nullopt: response failed to parse
    std::string error;
  };

  std::vector<Draw> sample(const std::string& question, const std::vector<RoutingTrajectory>& pool,
                           std::size_t M) {
    if (M < 1) throw Error("rubricor_sample: M must be >= 1");
    const std::string prompt = render_rubricor_prompt(question, pool);
    std::vector<Draw> out;
    for (std::size_t m = 0; m < M; ++m) {
      Draw d;
      try {
        d.rubric = parse_rubric_json(client_->complete({{{"user", prompt}}, false, {}, std::nullopt}).content);
      } catch (const ParseError& e) {
        d.error = e.what();
      }
      out.push_back(std::move(d));
    }
    return out;
  }

 private:
  std::shared_ptr<ChatClient> client_;
};

// Prompted judge: the mean final_score of `calls` independent requests. A
// response that fails to parse is retried once before giving up.
class PromptedJudge {
 public:
  explicit PromptedJudge(std::shared_ptr<ChatClient> client, int calls = 2)
      : client_(std::move(client)), calls_(calls) {
    if (calls_ < 1) throw Error("PromptedJudge: calls must be >= 1");
  }

  JudgeOutput judge_once(const std::string& question, const RoutingTrajectory& t, const Rubric& r) {
    const std::string prompt = render_judge_prompt(question, t, r);
    for (int attempt = 0;; ++attempt) {
      try {
        return parse_judge_json(client_->complete({{{"user", prompt}}, false, {}, std::nullopt}).content, r);
      } catch (const ParseError&) {
        if (attempt >= 1) throw;
      }
    }
  }

  double score(const std::string& question, const RoutingTrajectory& t, const Rubric& r) {
    double s = 0.0;
    for (int c = 0; c < calls_; ++c) s += judge_once(question, t, r).final_score;
    return s / calls_;
  }

 private:
  std::shared_ptr<ChatClient> client_;
  int calls_;
};

// Gate scorer for prompted criteria: the judge's score of the criterion on
// its own (weight 1). `question_of` maps a query id to its text.
inline PromptedCriterionScorer prompted_criterion_scorer(std::shared_ptr<PromptedJudge> judge,
                                                         std::function<std::string(const std::string&)> question_of) {
  return [judge = std::move(judge), question_of = std::move(question_of)](const Criterion& c,
                                                                          const RoutingTrajectory& t) {
    Rubric single;
    Criterion one = c;
    one.weight = 1.0;
    single.criteria.push_back(std::move(one));
    return judge->score(question_of(t.query_id), t, single);
  };
}

}  // namespace roro
