#include "qap/llm_gateway.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"
#include "qap/grading.hpp"
#include "qap/jsonl.hpp"

namespace qap {

using nlohmann::json;

// ---- clocks ----

std::chrono::milliseconds SystemClock::now() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now().time_since_epoch());
}

void SystemClock::sleep_for(std::chrono::milliseconds d) {
  if (d.count() > 0) std::this_thread::sleep_for(d);
}

std::chrono::milliseconds ManualClock::now() {
  std::lock_guard<std::mutex> lock(mutex_);
  return now_;
}

void ManualClock::sleep_for(std::chrono::milliseconds d) {
  std::lock_guard<std::mutex> lock(mutex_);
  if (d.count() > 0) now_ += d;
  sleeps_.push_back(d);
}

std::vector<std::chrono::milliseconds> ManualClock::sleeps() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return sleeps_;
}

// ---- rate limiter ----

RateLimiter::RateLimiter(double permits_per_sec, std::shared_ptr<Clock> clock)
    : clock_(std::move(clock)) {
  if (permits_per_sec > 0) {
    interval_ = std::chrono::milliseconds(
        static_cast<long>(std::llround(1000.0 / permits_per_sec)));
  }
}

void RateLimiter::acquire() {
  if (interval_.count() <= 0) return;
  std::chrono::milliseconds wait{0};
  {
    std::lock_guard<std::mutex> lock(mutex_);
    const auto now = clock_->now();
    const auto slot = std::max(next_slot_, now);
    wait = slot - now;
    next_slot_ = slot + interval_;
  }
  if (wait.count() > 0) clock_->sleep_for(wait);
}

// ---- digests ----

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string messages_digest(const MessageSequence& messages) {
  return sha256_hex(json(message_sequence_to_json(messages)).dump());
}

std::string cache_key(const std::string& endpoint_id, const ChatRequest& request) {
  json j;
  j["endpoint"] = endpoint_id;
  j["model"] = request.model;
  j["temperature"] = request.temperature;
  j["max_output_tokens"] = request.max_output_tokens;
  j["messages"] = json(message_sequence_to_json(request.messages));
  return sha256_hex(j.dump());
}

// ---- http backend ----

HttpBackend::HttpBackend(std::string endpoint_url, std::string api_key_env,
                         std::chrono::milliseconds timeout)
    : endpoint_url_(std::move(endpoint_url)),
      api_key_env_(std::move(api_key_env)),
      timeout_(timeout) {}

namespace {

// Splits "https://host:port/v1" into client origin and base path.
bool split_url(const std::string& url, std::string& origin, std::string& base_path) {
  const size_t scheme = url.find("://");
  if (scheme == std::string::npos) return false;
  const size_t path_start = url.find('/', scheme + 3);
  if (path_start == std::string::npos) {
    origin = url;
    base_path.clear();
  } else {
    origin = url.substr(0, path_start);
    base_path = url.substr(path_start);
    while (!base_path.empty() && base_path.back() == '/') base_path.pop_back();
  }
  return true;
}

BackendReply parse_chat_completion(const std::string& body) {
  BackendReply reply;
  json payload = json::parse(body, nullptr, false);
  if (payload.is_discarded() || !payload.contains("choices") || !payload.at("choices").is_array() ||
      payload.at("choices").empty()) {
    throw GatewayError(GatewayError::Kind::malformed_payload,
                       "backend payload has no choices: " + body.substr(0, 200));
  }
  const auto& choice = payload.at("choices").at(0);
  if (!choice.contains("message") || !choice.at("message").contains("content")) {
    throw GatewayError(GatewayError::Kind::malformed_payload,
                       "backend payload has no message content");
  }
  const auto& content = choice.at("message").at("content");
  reply.response.text = content.is_null() ? "" : content.get<std::string>();
  std::string finish = "stop";
  if (choice.contains("finish_reason") && choice.at("finish_reason").is_string()) {
    finish = choice.at("finish_reason").get<std::string>();
  }
  reply.response.finish_reason = FinishReason::from_raw(finish);
  if (payload.contains("usage") && payload.at("usage").is_object()) {
    reply.response.prompt_tokens = payload.at("usage").value("prompt_tokens", 0);
    reply.response.completion_tokens = payload.at("usage").value("completion_tokens", 0);
  }
  reply.raw_payload = body;
  return reply;
}

}  // namespace

BackendReply HttpBackend::send(const ChatRequest& request) {
  const char* key = std::getenv(api_key_env_.c_str());
  if (!key || !*key) {
    throw GatewayError(GatewayError::Kind::config,
                       "API key environment variable " + api_key_env_ + " is not set");
  }
  std::string origin, base_path;
  if (!split_url(endpoint_url_, origin, base_path)) {
    throw GatewayError(GatewayError::Kind::config, "bad endpoint URL: " + endpoint_url_);
  }

  json body;
  body["model"] = request.model;
  auto messages = json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  body["messages"] = std::move(messages);
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_output_tokens;

  httplib::Client client(origin);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout_));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout_));
  client.set_write_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout_));
  httplib::Headers headers = {{"Authorization", std::string("Bearer ") + key}};

  auto result = client.Post(base_path + "/chat/completions", headers, body.dump(),
                            "application/json");
  BackendReply reply;
  if (!result) {
    reply.status = BackendReply::Status::transport_error;
    reply.error = httplib::to_string(result.error());
    return reply;
  }
  if (result->status < 200 || result->status >= 300) {
    reply.status = BackendReply::Status::http_error;
    reply.http_status = result->status;
    reply.error = result->body.substr(0, 500);
    return reply;
  }
  return parse_chat_completion(result->body);
}

// ---- mock backend ----

MockBackend::MockBackend(DefaultMode default_mode) : default_mode_(default_mode) {}

void MockBackend::add_entry(const std::string& tag, MockEntry entry) {
  std::lock_guard<std::mutex> lock(mutex_);
  by_tag_[tag] = std::move(entry);
}

void MockBackend::add_digest_entry(const std::string& digest, MockEntry entry) {
  std::lock_guard<std::mutex> lock(mutex_);
  by_digest_[digest] = std::move(entry);
}

namespace {

MockEntry mock_entry_from_json(const json& j) {
  MockEntry entry;
  entry.text = j.value("text", "");
  entry.finish_reason = FinishReason::from_raw(j.value("finish_reason", "stop"));
  if (j.contains("failures")) {
    for (const auto& f : j.at("failures")) entry.failures.push_back(f.get<int>());
  }
  return entry;
}

int synthetic_word_count(const std::string& text) {
  int count = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++count;
    in_word = !space;
  }
  return count;
}

}  // namespace

std::shared_ptr<MockBackend> MockBackend::from_script_json(const json& script) {
  DefaultMode mode = DefaultMode::echo;
  if (script.contains("default") && script.at("default").get<std::string>() == "error") {
    mode = DefaultMode::error;
  }
  auto backend = std::make_shared<MockBackend>(mode);
  if (script.contains("entries")) {
    for (const auto& e : script.at("entries")) {
      backend->add_entry(e.at("tag").get<std::string>(), mock_entry_from_json(e));
    }
  }
  if (script.contains("by_digest")) {
    for (const auto& e : script.at("by_digest")) {
      backend->add_digest_entry(e.at("digest").get<std::string>(), mock_entry_from_json(e));
    }
  }
  return backend;
}

std::shared_ptr<MockBackend> MockBackend::from_script_file(const std::filesystem::path& path) {
  json script = json::parse(read_file(path), nullptr, false);
  if (script.is_discarded()) {
    throw std::invalid_argument("malformed mock script: " + path.string());
  }
  return from_script_json(script);
}

BackendReply MockBackend::send(const ChatRequest& request) {
  std::lock_guard<std::mutex> lock(mutex_);
  ++total_calls_;
  ++calls_[request.request_tag];

  const MockEntry* entry = nullptr;
  std::string consume_key;
  auto tag_it = by_tag_.find(request.request_tag);
  if (tag_it != by_tag_.end()) {
    entry = &tag_it->second;
    consume_key = "tag:" + request.request_tag;
  } else {
    auto digest_it = by_digest_.find(messages_digest(request.messages));
    if (digest_it != by_digest_.end()) {
      entry = &digest_it->second;
      consume_key = "digest:" + digest_it->first;
    }
  }

  BackendReply reply;
  if (!entry) {
    if (default_mode_ == DefaultMode::error) {
      reply.status = BackendReply::Status::http_error;
      reply.http_status = 500;
      reply.error = "mock: no entry for tag " + request.request_tag;
      return reply;
    }
    std::string last_user;
    for (const auto& m : request.messages) {
      if (m.role == Role::user) last_user = m.content;
    }
    reply.response.text = last_user;
    reply.response.finish_reason = FinishReason::stop();
  } else {
    size_t& used = consumed_failures_[consume_key];
    if (used < entry->failures.size()) {
      const int status = entry->failures[used++];
      reply.status = BackendReply::Status::http_error;
      reply.http_status = status;
      reply.error = "mock: scripted failure " + std::to_string(status);
      return reply;
    }
    reply.response.text = entry->text;
    reply.response.finish_reason = entry->finish_reason;
  }

  int prompt_words = 0;
  for (const auto& m : request.messages) prompt_words += synthetic_word_count(m.content);
  reply.response.prompt_tokens = prompt_words;
  reply.response.completion_tokens = synthetic_word_count(reply.response.text);
  reply.response.latency_ms = 0;

  json raw;
  raw["choices"] = json::array(
      {{{"message", {{"role", "assistant"}, {"content", reply.response.text}}},
        {"finish_reason", reply.response.finish_reason.raw}}});
  raw["usage"] = {{"prompt_tokens", reply.response.prompt_tokens},
                  {"completion_tokens", reply.response.completion_tokens}};
  reply.raw_payload = raw.dump();
  return reply;
}

int MockBackend::total_calls() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return total_calls_;
}

int MockBackend::calls_for(const std::string& tag) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = calls_.find(tag);
  return it == calls_.end() ? 0 : it->second;
}

BackendReply SentinelBackend::send(const ChatRequest& request) {
  ++calls_;
  throw GatewayError(GatewayError::Kind::config,
                     "sentinel backend dispatched for tag " + request.request_tag);
}

// ---- cache ----

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::optional<ChatResponse> ResponseCache::get(const std::string& key) const {
  const auto path = dir_ / (key + ".json");
  if (!std::filesystem::exists(path)) return std::nullopt;
  try {
    json j = json::parse(read_file(path));
    const auto& resp = j.at("response");
    ChatResponse r;
    r.text = resp.at("text").get<std::string>();
    r.finish_reason = FinishReason::from_raw(resp.at("finish_reason").get<std::string>());
    r.prompt_tokens = resp.value("prompt_tokens", 0);
    r.completion_tokens = resp.value("completion_tokens", 0);
    r.latency_ms = resp.value("latency_ms", 0L);
    return r;
  } catch (const std::exception& e) {
    std::cerr << "warning: corrupt cache entry " << path.string() << " (" << e.what()
              << "), treating as miss\n";
    return std::nullopt;
  }
}

void ResponseCache::put(const std::string& key, const ChatRequest& request,
                        const ChatResponse& response, const std::string& raw_payload) {
  json j;
  j["key"] = key;
  j["request"] = {{"model", request.model},
                  {"temperature", request.temperature},
                  {"max_output_tokens", request.max_output_tokens},
                  {"messages", json(message_sequence_to_json(request.messages))}};
  j["response"] = {{"text", response.text},
                   {"finish_reason", response.finish_reason.raw},
                   {"prompt_tokens", response.prompt_tokens},
                   {"completion_tokens", response.completion_tokens},
                   {"latency_ms", response.latency_ms}};
  j["raw"] = raw_payload;
  atomic_write(dir_ / (key + ".json"), j.dump());
}

ResponseCache::Stats ResponseCache::stats() const {
  Stats s;
  if (!std::filesystem::exists(dir_)) return s;
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      ++s.entries;
      s.bytes += entry.file_size();
    }
  }
  return s;
}

void ResponseCache::clear() {
  if (!std::filesystem::exists(dir_)) return;
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      std::filesystem::remove(entry.path());
    }
  }
}

// ---- gateway ----

Gateway::Gateway(std::shared_ptr<ChatBackend> backend, std::shared_ptr<Clock> clock,
                 RetryPolicy policy, std::shared_ptr<RateLimiter> limiter)
    : backend_(std::move(backend)),
      clock_(std::move(clock)),
      policy_(policy),
      limiter_(std::move(limiter)),
      endpoint_id_(backend_->endpoint_id()) {
  std::random_device rd;
  rng_state_ = (static_cast<std::uint64_t>(rd()) << 32) ^ rd() ^ 0x9e3779b97f4a7c15ULL;
}

Gateway::RawResult Gateway::complete_raw(const ChatRequest& request) {
  if (request.messages.empty()) {
    throw GatewayError(GatewayError::Kind::config, "request has no messages");
  }
  std::string last_error;
  for (int attempt = 1; attempt <= policy_.max_attempts; ++attempt) {
    if (limiter_) limiter_->acquire();
    const auto start = clock_->now();
    const BackendReply reply = backend_->send(request);
    switch (reply.status) {
      case BackendReply::Status::ok: {
        ChatResponse response = reply.response;
        response.latency_ms = (clock_->now() - start).count();
        return {std::move(response), reply.raw_payload};
      }
      case BackendReply::Status::http_error: {
        if (reply.http_status == 401 || reply.http_status == 403) {
          throw GatewayError(GatewayError::Kind::auth,
                             "authentication failed (HTTP " + std::to_string(reply.http_status) +
                                 "): " + reply.error);
        }
        if (reply.http_status != 429 && reply.http_status < 500) {
          throw GatewayError(GatewayError::Kind::request_failed,
                             "HTTP " + std::to_string(reply.http_status) + ": " + reply.error);
        }
        last_error = "HTTP " + std::to_string(reply.http_status);
        break;
      }
      case BackendReply::Status::transport_error: {
        last_error = "transport: " + reply.error;
        break;
      }
    }
    if (attempt == policy_.max_attempts) break;
    // Exponential backoff with full jitter: uniform in [0, min(cap, base*2^k)].
    long long ceiling = policy_.base_delay.count();
    for (int k = 1; k < attempt && ceiling < policy_.max_delay.count(); ++k) ceiling *= 2;
    ceiling = std::min<long long>(ceiling, policy_.max_delay.count());
    long long jittered = 0;
    {
      std::lock_guard<std::mutex> lock(rng_mutex_);
      rng_state_ ^= rng_state_ << 13;
      rng_state_ ^= rng_state_ >> 7;
      rng_state_ ^= rng_state_ << 17;
      jittered = static_cast<long long>(rng_state_ % static_cast<std::uint64_t>(ceiling + 1));
    }
    clock_->sleep_for(std::chrono::milliseconds(jittered));
  }
  throw GatewayError(GatewayError::Kind::exhausted_retries,
                     "request " + request.request_tag + " failed after " +
                         std::to_string(policy_.max_attempts) + " attempts (" + last_error + ")");
}

ChatResponse Gateway::complete(const ChatRequest& request) {
  return complete_raw(request).response;
}

std::pair<ChatResponse, bool> Gateway::cached_complete(const ChatRequest& request,
                                                       ResponseCache& cache) {
  const std::string key = cache_key(endpoint_id_, request);
  if (auto hit = cache.get(key)) {
    return {std::move(*hit), true};
  }
  RawResult result = complete_raw(request);
  cache.put(key, request, result.response, result.raw_payload);
  return {std::move(result.response), false};
}

}  // namespace qap
