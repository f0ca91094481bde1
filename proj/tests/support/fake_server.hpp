#pragma once

// Local chat-completions endpoint for exercising the remote client.

#include <atomic>
#include <functional>
#include <string>
#include <thread>

#include <httplib.h>

#include <nlohmann/json.hpp>

#include "roro/backends.hpp"

namespace fixture {

class FakeServer {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  explicit FakeServer(Handler h) {
    svr_.Post("/v1/chat/completions", [this, h](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      last_body = req.body;
      last_auth = req.get_header_value("Authorization");
      h(req, res);
    });
    port_ = svr_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { svr_.listen_after_bind(); });
    svr_.wait_until_ready();
  }
  ~FakeServer() {
    svr_.stop();
    thread_.join();
  }

  roro::BackendSpec spec() const {
    roro::BackendSpec s;
    s.kind = roro::BackendSpec::Kind::Remote;
    s.endpoint = "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
    s.model_name = "stub-model";
    s.backoff_base_seconds = 0.001;
    s.request_timeout_seconds = 5.0;
    s.api_key_env = "RORO_TEST_KEY";
    return s;
  }

  std::atomic<int> hits{0};
  std::string last_body;
  std::string last_auth;

 private:
  httplib::Server svr_;
  int port_ = 0;
  std::thread thread_;
};

// Plain chat response with the given message content.
inline std::string content_response(const std::string& content) {
  return std::string(R"({"choices":[{"message":{"role":"assistant","content":)") +
         nlohmann::json(content).dump() + R"(},"finish_reason":"stop"}]})";
}

}  // namespace fixture
