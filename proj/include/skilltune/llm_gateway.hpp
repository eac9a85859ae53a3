#pragma once

#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace skilltune::llm {

struct GatewayConfig {
  std::string endpoint = "https://api.anthropic.com/v1/chat/completions";
  std::string model = "claude-sonnet-4-6";
  std::string api_key_env = "ANTHROPIC_API_KEY";
  int timeout_ms = 60000;
  int max_retries = 1;
  bool offline = false;
  bool trace = false;
  double rate_per_second = 2.0;  // token bucket refill; <= 0 disables limiting
  int burst = 4;
};

/// Minimal HTTP surface the gateway needs; swapped for a recording/scripted
/// transport in tests.
struct HttpRequest {
  std::string url;
  std::vector<std::pair<std::string, std::string>> headers;
  std::string body;
  int timeout_ms = 0;
};

struct HttpResponse {
  enum class Failure { None, Timeout, Connection };
  Failure failure = Failure::None;
  int status = 0;
  std::string body;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const HttpRequest& request) = 0;
};

/// cpp-httplib backed transport (http and https).
std::shared_ptr<Transport> make_http_transport();

/// Schema hint: the content must be a JSON object carrying these keys.
struct SchemaHint {
  std::vector<std::string> required_keys;
};

struct CompletionRequest {
  std::string system;
  std::string user;
  std::optional<SchemaHint> schema;
};

enum class UnavailableReason { Offline, Timeout, HttpError, SchemaInvalid };
std::string_view to_string(UnavailableReason r) noexcept;

struct Text {
  std::string content;
};

struct Unavailable {
  UnavailableReason reason = UnavailableReason::Offline;
  std::string detail;
};

using CompletionResult = std::variant<Text, Unavailable>;

/// Parses the first JSON object embedded in model output (code fences allowed).
std::optional<nlohmann::json> extract_json_object(std::string_view content);

class TokenBucket {
 public:
  TokenBucket(double rate_per_second, int burst);
  void acquire();

 private:
  using Clock = std::chrono::steady_clock;
  std::mutex mu_;
  double rate_;
  double capacity_;
  double tokens_;
  Clock::time_point last_;
};

class Gateway {
 public:
  Gateway(GatewayConfig cfg, std::shared_ptr<Transport> transport);

  /// Total: every failure maps to Unavailable.
  CompletionResult complete(const CompletionRequest& req) const;

  /// False when no call could possibly be issued (offline or missing key).
  bool enabled() const;
  const GatewayConfig& config() const noexcept { return cfg_; }

 private:
  GatewayConfig cfg_;
  std::shared_ptr<Transport> transport_;
  std::shared_ptr<TokenBucket> bucket_;
};

/// Convenience form using the default HTTP transport.
CompletionResult complete(const CompletionRequest& req, const GatewayConfig& cfg);

}  // namespace skilltune::llm
