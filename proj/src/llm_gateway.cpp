#include "skilltune/llm_gateway.hpp"

#include <cstdlib>
#include <spdlog/spdlog.h>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

namespace skilltune::llm {
namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

std::optional<ParsedUrl> parse_url(std::string_view url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) return std::nullopt;
  auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.origin = std::string(url.substr(0, path_start));
  out.path = path_start == std::string_view::npos ? "/" : std::string(url.substr(path_start));
  return out;
}

class HttplibTransport final : public Transport {
 public:
  HttpResponse post(const HttpRequest& request) override {
    HttpResponse out;
    auto url = parse_url(request.url);
    if (!url) {
      out.failure = HttpResponse::Failure::Connection;
      return out;
    }
    httplib::Client client(url->origin);
    const auto secs = request.timeout_ms / 1000;
    const auto usecs = (request.timeout_ms % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    for (const auto& [k, v] : request.headers) headers.emplace(k, v);
    auto res = client.Post(url->path, headers, request.body, "application/json");
    if (!res) {
      out.failure = res.error() == httplib::Error::Read || res.error() == httplib::Error::Write ||
                            res.error() == httplib::Error::ConnectionTimeout
                        ? HttpResponse::Failure::Timeout
                        : HttpResponse::Failure::Connection;
      return out;
    }
    out.status = res->status;
    out.body = res->body;
    return out;
  }
};

bool schema_ok(const std::string& content, const std::optional<SchemaHint>& schema) {
  if (content.empty()) return false;
  if (!schema) return true;
  auto obj = extract_json_object(content);
  if (!obj) return false;
  for (const auto& key : schema->required_keys) {
    if (!obj->contains(key)) return false;
  }
  return true;
}

}  // namespace

std::shared_ptr<Transport> make_http_transport() { return std::make_shared<HttplibTransport>(); }

std::string_view to_string(UnavailableReason r) noexcept {
  switch (r) {
    case UnavailableReason::Offline: return "Offline";
    case UnavailableReason::Timeout: return "Timeout";
    case UnavailableReason::HttpError: return "HttpError";
    case UnavailableReason::SchemaInvalid: return "SchemaInvalid";
  }
  return "Offline";
}

std::optional<nlohmann::json> extract_json_object(std::string_view content) {
  auto open = content.find('{');
  auto close = content.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) return std::nullopt;
  auto parsed = nlohmann::json::parse(content.substr(open, close - open + 1), nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object()) return std::nullopt;
  return parsed;
}

TokenBucket::TokenBucket(double rate_per_second, int burst)
    : rate_(rate_per_second), capacity_(std::max(1, burst)), tokens_(capacity_), last_(Clock::now()) {}

void TokenBucket::acquire() {
  if (rate_ <= 0.0) return;
  while (true) {
    std::chrono::duration<double> wait{};
    {
      std::lock_guard lock(mu_);
      auto now = Clock::now();
      tokens_ = std::min(capacity_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
      last_ = now;
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
    }
    std::this_thread::sleep_for(wait);
  }
}

Gateway::Gateway(GatewayConfig cfg, std::shared_ptr<Transport> transport)
    : cfg_(std::move(cfg)),
      transport_(std::move(transport)),
      bucket_(std::make_shared<TokenBucket>(cfg_.rate_per_second, cfg_.burst)) {}

bool Gateway::enabled() const {
  if (cfg_.offline || !transport_) return false;
  if (cfg_.api_key_env.empty()) return true;
  const char* key = std::getenv(cfg_.api_key_env.c_str());
  return key != nullptr && *key != '\0';
}

CompletionResult Gateway::complete(const CompletionRequest& req) const {
  if (cfg_.offline || !transport_) return Unavailable{UnavailableReason::Offline, "offline mode"};
  std::string key;
  if (!cfg_.api_key_env.empty()) {
    const char* env = std::getenv(cfg_.api_key_env.c_str());
    if (env == nullptr || *env == '\0') {
      return Unavailable{UnavailableReason::Offline, "environment variable " + cfg_.api_key_env + " not set"};
    }
    key = env;
  }

  try {
    nlohmann::json body = {{"model", cfg_.model},
                           {"messages",
                            nlohmann::json::array({{{"role", "system"}, {"content", req.system}},
                                                   {{"role", "user"}, {"content", req.user}}})}};
    HttpRequest http;
    http.url = cfg_.endpoint;
    http.body = body.dump();
    http.timeout_ms = cfg_.timeout_ms;
    http.headers.emplace_back("Content-Type", "application/json");
    if (!key.empty()) http.headers.emplace_back("Authorization", "Bearer " + key);

    Unavailable last{UnavailableReason::HttpError, "no attempt made"};
    for (int attempt = 0; attempt <= std::max(0, cfg_.max_retries); ++attempt) {
      bucket_->acquire();
      if (cfg_.trace) {
        spdlog::info("llm request #{} to {} (Authorization: Bearer [REDACTED]) body={}", attempt + 1, http.url,
                     http.body);
      }
      HttpResponse res = transport_->post(http);
      if (cfg_.trace) spdlog::info("llm response status={} body={}", res.status, res.body);

      if (res.failure == HttpResponse::Failure::Timeout) {
        last = {UnavailableReason::Timeout, "request timed out"};
        continue;
      }
      if (res.failure == HttpResponse::Failure::Connection) {
        last = {UnavailableReason::HttpError, "connection failed"};
        continue;
      }
      if (res.status >= 500) {
        last = {UnavailableReason::HttpError, "HTTP " + std::to_string(res.status)};
        continue;
      }
      if (res.status < 200 || res.status >= 300) {
        return Unavailable{UnavailableReason::HttpError, "HTTP " + std::to_string(res.status)};
      }
      auto parsed = nlohmann::json::parse(res.body, nullptr, false);
      std::string content;
      if (!parsed.is_discarded() && parsed.is_object()) {
        const auto* choices = parsed.contains("choices") ? &parsed["choices"] : nullptr;
        if (choices && choices->is_array() && !choices->empty()) {
          const auto& msg = (*choices)[0].value("message", nlohmann::json::object());
          if (msg.contains("content") && msg["content"].is_string()) content = msg["content"].get<std::string>();
        }
      }
      if (!schema_ok(content, req.schema)) {
        last = {UnavailableReason::SchemaInvalid, "response failed schema validation"};
        continue;
      }
      return Text{std::move(content)};
    }
    return last;
  } catch (const std::exception& e) {
    return Unavailable{UnavailableReason::HttpError, e.what()};
  }
}

CompletionResult complete(const CompletionRequest& req, const GatewayConfig& cfg) {
  return Gateway(cfg, cfg.offline ? nullptr : make_http_transport()).complete(req);
}

}  // namespace skilltune::llm
