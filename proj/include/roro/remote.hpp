#pragma once

// Chat-completions client and the remote generation backend. Requests ask for
// token log-probabilities; uncertainty signals are computed from the returned
// top-k alternatives.

#include <chrono>
#include <cstdlib>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "roro/backends.hpp"
#include "roro/core.hpp"

namespace roro {

class TransportError : public Error {
 public:
  TransportError(const std::string& what, int attempts)
      : Error(what + " (after " + std::to_string(attempts) + " attempts)"), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string payload)
      : Error(what), payload_(std::move(payload)) {}
  const std::string& payload() const { return payload_; }

 private:
  std::string payload_;
};

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  bool logprobs = false;
  std::vector<std::string> stop;
  std::optional<int> max_tokens;
};

struct ChatResponse {
  std::string content;
  std::string finish_reason;
  std::vector<std::vector<TokenLogprob>> top_logprobs;  // per generated token
  std::vector<double> chosen_logprobs;
  std::int64_t completion_tokens = 0;
};

struct Endpoint {
  std::string scheme_host_port;
  std::string path;
};

inline Endpoint parse_endpoint(const std::string& url) {
  auto sep = url.find("://");
  if (sep == std::string::npos) throw Error("endpoint must include a scheme: " + url);
  auto slash = url.find('/', sep + 3);
  if (slash == std::string::npos) return {url, "/v1/chat/completions"};
  return {url.substr(0, slash), url.substr(slash)};
}

inline nlohmann::json build_chat_body(const BackendSpec& spec, const ChatRequest& req) {
  nlohmann::json body;
  body["model"] = spec.model_name.value_or("");
  body["messages"] = nlohmann::json::array();
  for (const auto& m : req.messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  body["temperature"] = spec.temperature;
  body["top_p"] = spec.top_p;
  body["max_tokens"] = req.max_tokens.value_or(spec.max_tokens);
  if (req.logprobs) {
    body["logprobs"] = true;
    body["top_logprobs"] = spec.top_k;
  }
  if (!req.stop.empty()) body["stop"] = req.stop;
  return body;
}

inline ChatResponse parse_chat_response(const std::string& raw, bool want_logprobs) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("chat response is not JSON: ") + e.what(), raw);
  }
  try {
    const auto& choice = j.at("choices").at(0);
    ChatResponse out;
    const auto& msg = choice.at("message");
    out.content = msg.at("content").is_null() ? "" : msg.at("content").get<std::string>();
    if (choice.contains("finish_reason") && choice["finish_reason"].is_string())
      out.finish_reason = choice["finish_reason"].get<std::string>();
    if (want_logprobs) {
      const auto& content = choice.at("logprobs").at("content");
      for (const auto& tok : content) {
        out.chosen_logprobs.push_back(tok.at("logprob").get<double>());
        std::vector<TokenLogprob> alts;
        for (const auto& alt : tok.at("top_logprobs"))
          alts.push_back({alt.at("token").get<std::string>(), alt.at("logprob").get<double>()});
        if (alts.empty()) alts.push_back({tok.value("token", ""), tok.at("logprob").get<double>()});
        out.top_logprobs.push_back(std::move(alts));
      }
    }
    if (j.contains("usage") && j["usage"].contains("completion_tokens"))
      out.completion_tokens = j["usage"]["completion_tokens"].get<std::int64_t>();
    else
      out.completion_tokens = static_cast<std::int64_t>(out.chosen_logprobs.size());
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed chat response: ") + e.what(), raw);
  }
}

// Thread-safe; at most `max_concurrent` requests are in flight.
class ChatClient {
 public:
  explicit ChatClient(BackendSpec spec)
      : spec_(std::move(spec)), slots_(spec_.max_concurrent) {
    if (!spec_.endpoint) throw Error("ChatClient: endpoint required");
    endpoint_ = parse_endpoint(*spec_.endpoint);
  }

  const BackendSpec& spec() const { return spec_; }

  ChatResponse complete(const ChatRequest& req) {
    const std::string body = build_chat_body(spec_, req).dump();
    httplib::Headers headers;
    if (const char* key = std::getenv(spec_.api_key_env.c_str()); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);

    std::string last_error;
    const int attempts = 1 + spec_.max_retries;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
      std::string raw;
      int status = 0;
      {
        slots_.acquire();
        struct Release {
          std::counting_semaphore<>& s;
          ~Release() { s.release(); }
        } release{slots_};
        httplib::Client cli(endpoint_.scheme_host_port);
        auto secs = std::chrono::duration<double>(spec_.request_timeout_seconds);
        cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
        cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
        auto res = cli.Post(endpoint_.path, headers, body, "application/json");
        if (!res) {
          last_error = "transport error: " + httplib::to_string(res.error());
        } else {
          status = res->status;
          raw = res->body;
        }
      }
      if (status == 200) return parse_chat_response(raw, req.logprobs);
      if (status != 0) {
        last_error = "HTTP " + std::to_string(status);
        bool retriable = status == 408 || status == 429 || status >= 500;
        if (!retriable) throw TransportError(last_error + ": " + raw.substr(0, 200), attempt);
      }
      if (attempt < attempts) {
        double wait = spec_.backoff_base_seconds * static_cast<double>(1 << (attempt - 1));
        std::this_thread::sleep_for(std::chrono::duration<double>(wait));
      }
    }
    throw TransportError(last_error, attempts);
  }

 private:
  BackendSpec spec_;
  Endpoint endpoint_;
  std::counting_semaphore<> slots_;
};

// Drafts one step per request by stopping generation at the step delimiter.
class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(BackendSpec spec) : client_(std::make_unique<ChatClient>(std::move(spec))) {
    client_->spec().check();
  }

  const BackendSpec& spec() const override { return client_->spec(); }

  static std::vector<ChatMessage> step_messages(const GenerationContext& ctx) {
    std::string user = ctx.query->text;
    if (!ctx.accepted_steps->empty()) {
      user += "\n\nReasoning so far:\n\n";
      for (std::size_t i = 0; i < ctx.accepted_steps->size(); ++i) {
        if (i) user += "\n\n";
        user += (*ctx.accepted_steps)[i].text;
      }
    }
    return {{"system",
             "Solve the problem step by step. Reply with only the next reasoning step. "
             "When the solution is complete, give the final answer in \\boxed{}."},
            {"user", user}};
  }

  StepDraft draft_step(const GenerationContext& ctx, StreamKey /*stream*/) override {
    ctx.check();
    ChatRequest req;
    req.messages = step_messages(ctx);
    req.logprobs = true;
    req.stop = {"\n\n"};
    auto t0 = std::chrono::steady_clock::now();
    ChatResponse r = client_->complete(req);
    auto t1 = std::chrono::steady_clock::now();

    auto segments = split_steps(r.content);
    if (segments.empty() || r.top_logprobs.empty())
      throw ParseError("remote draft: empty step", r.content);
    StepDraft d;
    d.text = segments.front();
    d.token_count = std::max<std::int64_t>(1, r.completion_tokens);
    d.uncertainty = uncertainty_from_logprobs(r.top_logprobs, r.chosen_logprobs);
    d.is_final = extract_boxed(d.text).has_value();
    d.latency_seconds = std::chrono::duration<double>(t1 - t0).count();
    return d;
  }

 private:
  std::unique_ptr<ChatClient> client_;
};

}  // namespace roro
