#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "qap/types.hpp"

namespace qap {

// Injectable time source so retry/backoff and rate limiting are testable
// without real sleeps.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::chrono::milliseconds now() = 0;
  virtual void sleep_for(std::chrono::milliseconds d) = 0;
};

class SystemClock final : public Clock {
 public:
  std::chrono::milliseconds now() override;
  void sleep_for(std::chrono::milliseconds d) override;
};

// Virtual clock: sleeping advances time instantly. Thread-safe.
class ManualClock final : public Clock {
 public:
  std::chrono::milliseconds now() override;
  void sleep_for(std::chrono::milliseconds d) override;
  std::vector<std::chrono::milliseconds> sleeps() const;

 private:
  mutable std::mutex mutex_;
  std::chrono::milliseconds now_{0};
  std::vector<std::chrono::milliseconds> sleeps_;
};

// Enforces a minimum spacing of 1/permits_per_sec between dispatches.
// permits_per_sec <= 0 disables limiting. Shared across workers.
class RateLimiter {
 public:
  RateLimiter(double permits_per_sec, std::shared_ptr<Clock> clock);
  void acquire();

 private:
  std::shared_ptr<Clock> clock_;
  std::chrono::milliseconds interval_{0};
  std::mutex mutex_;
  std::chrono::milliseconds next_slot_{0};
};

class GatewayError : public std::runtime_error {
 public:
  enum class Kind { config, auth, exhausted_retries, request_failed, malformed_payload };
  GatewayError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Outcome of one backend attempt.
struct BackendReply {
  enum class Status { ok, http_error, transport_error };
  Status status = Status::ok;
  int http_status = 0;       // for http_error
  std::string error;         // transport/diagnostic text
  ChatResponse response;     // for ok
  std::string raw_payload;   // for ok; retained in the cache
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual BackendReply send(const ChatRequest& request) = 0;
  // Identity folded into cache keys (endpoint URL or a mock label).
  virtual std::string endpoint_id() const = 0;
};

// OpenAI-compatible chat-completions endpoint. The API key is read from an
// environment variable, never from configuration files.
class HttpBackend final : public ChatBackend {
 public:
  HttpBackend(std::string endpoint_url, std::string api_key_env = "OPENAI_API_KEY",
              std::chrono::milliseconds timeout = std::chrono::milliseconds(120000));
  BackendReply send(const ChatRequest& request) override;
  std::string endpoint_id() const override { return endpoint_url_; }

 private:
  std::string endpoint_url_;
  std::string api_key_env_;
  std::chrono::milliseconds timeout_;
};

struct MockEntry {
  std::string text;
  FinishReason finish_reason = FinishReason::stop();
  std::vector<int> failures;  // HTTP statuses consumed one per attempt
};

// Deterministic scripted backend keyed by request_tag or message digest.
// Unknown keys echo the last user message or fail, per `default_mode`.
class MockBackend final : public ChatBackend {
 public:
  enum class DefaultMode { echo, error };

  explicit MockBackend(DefaultMode default_mode = DefaultMode::echo);
  static std::shared_ptr<MockBackend> from_script_file(const std::filesystem::path& path);
  static std::shared_ptr<MockBackend> from_script_json(const nlohmann::json& script);

  void add_entry(const std::string& tag, MockEntry entry);
  void add_digest_entry(const std::string& digest, MockEntry entry);

  BackendReply send(const ChatRequest& request) override;
  std::string endpoint_id() const override { return "mock"; }

  int total_calls() const;
  int calls_for(const std::string& tag) const;

 private:
  DefaultMode default_mode_;
  mutable std::mutex mutex_;
  std::map<std::string, MockEntry> by_tag_;
  std::map<std::string, MockEntry> by_digest_;
  std::map<std::string, size_t> consumed_failures_;
  std::map<std::string, int> calls_;
  int total_calls_ = 0;
};

// Backend that must never be reached; throws on any dispatch. It can
// impersonate another backend's endpoint id so cache replay still matches.
class SentinelBackend final : public ChatBackend {
 public:
  explicit SentinelBackend(std::string endpoint_id = "sentinel")
      : endpoint_id_(std::move(endpoint_id)) {}
  BackendReply send(const ChatRequest& request) override;
  std::string endpoint_id() const override { return endpoint_id_; }
  int calls() const { return calls_; }

 private:
  std::string endpoint_id_;
  std::atomic<int> calls_{0};
};

// SHA-256 hex digest of the canonical request serialization; any field
// change produces a different key.
std::string cache_key(const std::string& endpoint_id, const ChatRequest& request);
std::string messages_digest(const MessageSequence& messages);
std::string sha256_hex(const std::string& data);

// Content-addressed on-disk store, one file per key, atomic writes.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);
  std::optional<ChatResponse> get(const std::string& key) const;
  void put(const std::string& key, const ChatRequest& request, const ChatResponse& response,
           const std::string& raw_payload);
  struct Stats {
    size_t entries = 0;
    std::uintmax_t bytes = 0;
  };
  Stats stats() const;
  void clear();
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{1000};
  std::chrono::milliseconds max_delay{60000};
};

// Drives requests against a backend with exponential backoff (full jitter)
// on transient failures and optional rate limiting. Safe for concurrent use.
class Gateway {
 public:
  Gateway(std::shared_ptr<ChatBackend> backend, std::shared_ptr<Clock> clock,
          RetryPolicy policy = {}, std::shared_ptr<RateLimiter> limiter = nullptr);

  ChatResponse complete(const ChatRequest& request);
  std::pair<ChatResponse, bool> cached_complete(const ChatRequest& request, ResponseCache& cache);

  const std::string& endpoint_id() const { return endpoint_id_; }

 private:
  struct RawResult {
    ChatResponse response;
    std::string raw_payload;
  };
  RawResult complete_raw(const ChatRequest& request);

  std::shared_ptr<ChatBackend> backend_;
  std::shared_ptr<Clock> clock_;
  RetryPolicy policy_;
  std::shared_ptr<RateLimiter> limiter_;
  std::string endpoint_id_;
  std::mutex rng_mutex_;
  std::uint64_t rng_state_;
};

}  // namespace qap
