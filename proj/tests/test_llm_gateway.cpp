#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <thread>

#include "skilltune/llm_gateway.hpp"
#include "test_support.hpp"

using namespace skilltune;
using namespace skilltune::llm;

namespace {

CompletionRequest json_request() {
  CompletionRequest r;
  r.system = "sys";
  r.user = "usr";
  r.schema = SchemaHint{{"answer"}};
  return r;
}

/// Accepts connections on 127.0.0.1 and never answers.
class SilentServer {
 public:
  SilentServer() {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    ::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
    ::listen(fd_, 8);
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
  }
  ~SilentServer() { ::close(fd_); }
  int port() const { return port_; }

 private:
  int fd_ = -1;
  int port_ = 0;
};

}  // namespace

TEST_CASE("offline gateway never touches the transport") {
  auto t = std::make_shared<testing::RecordingTransport>();
  auto cfg = testing::test_gateway_config();
  cfg.offline = true;
  testing::ScopedEnv key("SKILLTUNE_TEST_API_KEY", "k");
  Gateway g(cfg, t);
  CHECK_FALSE(g.enabled());
  const auto r = g.complete(json_request());
  REQUIRE(std::holds_alternative<Unavailable>(r));
  CHECK(std::get<Unavailable>(r).reason == UnavailableReason::Offline);
  CHECK(t->calls() == 0);
}

TEST_CASE("missing API key behaves as offline") {
  auto t = std::make_shared<testing::RecordingTransport>();
  testing::ScopedEnv key("SKILLTUNE_TEST_API_KEY", std::nullopt);
  Gateway g(testing::test_gateway_config(), t);
  CHECK_FALSE(g.enabled());
  const auto r = g.complete(json_request());
  REQUIRE(std::holds_alternative<Unavailable>(r));
  CHECK(std::get<Unavailable>(r).reason == UnavailableReason::Offline);
  CHECK(t->calls() == 0);
}

TEST_CASE("valid structured reply returns text and sends a chat request") {
  testing::ScopedEnv key("SKILLTUNE_TEST_API_KEY", "secret-key");
  auto t = std::make_shared<testing::ScriptedTransport>();
  t->push_content("```json\n{\"answer\": 42}\n```");
  Gateway g(testing::test_gateway_config(), t);
  CHECK(g.enabled());
  const auto r = g.complete(json_request());
  REQUIRE(std::holds_alternative<Text>(r));
  CHECK(extract_json_object(std::get<Text>(r).content)->at("answer") == 42);
  REQUIRE(t->bodies.size() == 1);
  const auto body = nlohmann::json::parse(t->bodies[0]);
  CHECK(body["model"] == g.config().model);
  CHECK(body["messages"][0]["content"] == "sys");
  CHECK(body["messages"][1]["content"] == "usr");
}

TEST_CASE("authorization header carries the key") {
  testing::ScopedEnv key("SKILLTUNE_TEST_API_KEY", "secret-key");
  auto t = std::make_shared<testing::RecordingTransport>(HttpResponse{HttpResponse::Failure::None, 200, testing::chat_body("{\"answer\":1}")});
  Gateway g(testing::test_gateway_config(), t);
  CHECK(std::holds_alternative<Text>(g.complete(json_request())));
  const auto reqs = t->requests();
  REQUIRE(reqs.size() == 1);
  bool auth = false;
  for (const auto& [k, v] : reqs[0].headers) auth |= (k == "Authorization" && v == "Bearer secret-key");
  CHECK(auth);
  CHECK(reqs[0].timeout_ms == 200);
}

TEST_CASE("failures map to Unavailable with bounded retries") {
  testing::ScopedEnv key("SKILLTUNE_TEST_API_KEY", "k");
  auto cfg = testing::test_gateway_config();
  cfg.max_retries = 2;

  SUBCASE("schema invalid") {
    auto t = std::make_shared<testing::RecordingTransport>(HttpResponse{HttpResponse::Failure::None, 200, testing::chat_body("no json here")});
    const auto r = Gateway(cfg, t).complete(json_request());
    REQUIRE(std::holds_alternative<Unavailable>(r));
    CHECK(std::get<Unavailable>(r).reason == UnavailableReason::SchemaInvalid);
    CHECK(t->calls() == 3);
  }
  SUBCASE("missing key in the object") {
    auto t = std::make_shared<testing::RecordingTransport>(HttpResponse{HttpResponse::Failure::None, 200, testing::chat_body("{\"other\": 1}")});
    const auto r = Gateway(cfg, t).complete(json_request());
    CHECK(std::get<Unavailable>(r).reason == UnavailableReason::SchemaInvalid);
  }
  SUBCASE("timeout") {
    auto t = std::make_shared<testing::RecordingTransport>(HttpResponse{HttpResponse::Failure::Timeout, 0, {}});
    const auto r = Gateway(cfg, t).complete(json_request());
    CHECK(std::get<Unavailable>(r).reason == UnavailableReason::Timeout);
    CHECK(t->calls() == 3);
  }
  SUBCASE("client error is not retried") {
    auto t = std::make_shared<testing::RecordingTransport>(HttpResponse{HttpResponse::Failure::None, 401, "{}"});
    const auto r = Gateway(cfg, t).complete(json_request());
    CHECK(std::get<Unavailable>(r).reason == UnavailableReason::HttpError);
    CHECK(t->calls() == 1);
  }
  SUBCASE("server error is retried") {
    auto t = std::make_shared<testing::RecordingTransport>(HttpResponse{HttpResponse::Failure::None, 503, "{}"});
    const auto r = Gateway(cfg, t).complete(json_request());
    CHECK(std::get<Unavailable>(r).reason == UnavailableReason::HttpError);
    CHECK(t->calls() == 3);
  }
  SUBCASE("garbage body") {
    auto t = std::make_shared<testing::RecordingTransport>(HttpResponse{HttpResponse::Failure::None, 200, "<html>"});
    CHECK(std::holds_alternative<Unavailable>(Gateway(cfg, t).complete(json_request())));
  }
  SUBCASE("recovers on a later attempt") {
    auto t = std::make_shared<testing::ScriptedTransport>();
    t->push({HttpResponse::Failure::Timeout, 0, {}});
    t->push_content("{\"answer\": true}");
    CHECK(std::holds_alternative<Text>(Gateway(cfg, t).complete(json_request())));
    CHECK(t->bodies.size() == 2);
  }
}

TEST_CASE("HTTP transport: wall clock stays within (retries+1) x timeout") {
  testing::ScopedEnv key("SKILLTUNE_TEST_API_KEY", "k");
  SilentServer server;
  auto cfg = testing::test_gateway_config();
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(server.port()) + "/v1/chat/completions";
  cfg.timeout_ms = 300;
  cfg.max_retries = 1;
  Gateway g(cfg, make_http_transport());
  const auto start = std::chrono::steady_clock::now();
  const auto r = g.complete(json_request());
  const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
  REQUIRE(std::holds_alternative<Unavailable>(r));
  CHECK(std::get<Unavailable>(r).reason == UnavailableReason::Timeout);
  CHECK(elapsed <= 2 * 300 + 500);
}

TEST_CASE("HTTP transport: refused connection is an HttpError") {
  testing::ScopedEnv key("SKILLTUNE_TEST_API_KEY", "k");
  int port = 0;
  {
    SilentServer s;
    port = s.port();
  }
  auto cfg = testing::test_gateway_config();
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/x";
  const auto r = Gateway(cfg, make_http_transport()).complete(json_request());
  REQUIRE(std::holds_alternative<Unavailable>(r));
  CHECK(std::get<Unavailable>(r).reason != UnavailableReason::Offline);
}

TEST_CASE("extract_json_object") {
  CHECK(extract_json_object("prefix {\"a\": [1, 2]} suffix")->at("a").size() == 2);
  CHECK_FALSE(extract_json_object("nothing"));
  CHECK_FALSE(extract_json_object("{broken"));
  CHECK_FALSE(extract_json_object("[1, 2]"));
}

TEST_CASE("token bucket limits the rate") {
  TokenBucket bucket(20.0, 1);
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < 4; ++i) bucket.acquire();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
  CHECK(ms >= 120);
}
