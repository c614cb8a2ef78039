#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "jitfb/error.hpp"
#include "jitfb/prompt.hpp"

namespace jitfb {

struct CompletionParams {
  int max_tokens = 512;
  double temperature = 0.0;
  std::chrono::milliseconds timeout{30'000};
  std::string idempotency_key;
  int attempt = 0;  // 0-based retry counter
};

/// A completion provider. Implementations honour params.timeout themselves
/// and throw TimeoutError or BackendError on failure.
class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  virtual std::string id() const = 0;
  /// When false the gateway serialises calls into this backend.
  virtual bool concurrent_safe() const noexcept { return true; }
  virtual std::string complete(std::string_view prompt_text, const CompletionParams& params) = 0;
};

class CompletionError : public Error {
 public:
  CompletionError(const std::string& what, int attempts) : Error(what), attempts_(attempts) {}
  int attempts() const noexcept { return attempts_; }
  void set_attempts(int n) noexcept { attempts_ = n; }

 private:
  int attempts_;
};

class BackendError : public CompletionError {
 public:
  explicit BackendError(const std::string& detail, int attempts = 1)
      : CompletionError("BackendError: " + detail, attempts) {}
};

class TimeoutError : public CompletionError {
 public:
  explicit TimeoutError(const std::string& detail = "deadline exceeded", int attempts = 1)
      : CompletionError("Timeout: " + detail, attempts) {}
};

struct CompletionRequest {
  PromptText prompt;
  int max_tokens = 512;
  double temperature = 0.0;
  double timeout_s = 30.0;
  std::string idempotency_key;

  /// Throws Error unless timeout_s > 0, max_tokens > 0, temperature >= 0.
  void validate() const;
  CompletionParams params(int attempt) const;
};

struct CompletionResult {
  std::string text;
  std::string backend_id;
  std::int64_t elapsed_ms = 0;
  int attempts = 1;
};

struct GatewayConfig {
  double rate_limit_per_s = 20.0;
  int burst = 40;
  int max_in_flight = 32;
  int retry_limit = 2;
  std::vector<int> retry_backoff_ms{250, 1000};
  int queue_capacity = 256;

  void validate() const;
};

struct RetryPolicy {
  int retry_limit = 0;
  std::vector<int> backoff_ms;
};

/// Calls the backend up to retry_limit + 1 times. A reply arriving after the
/// request timeout counts as a timeout. On exhaustion rethrows the last
/// failure with attempts() set.
CompletionResult complete(CompletionBackend& backend, const CompletionRequest& request,
                          const RetryPolicy& policy = {});

/// Token bucket with reservation: callers take a token immediately and sleep
/// off any deficit, so calls by time t never exceed burst + rate * t.
class TokenBucket {
 public:
  TokenBucket(double rate_per_s, int burst);
  void acquire();

 private:
  using Clock = std::chrono::steady_clock;
  std::mutex mutex_;
  double rate_;
  double capacity_;
  double tokens_;
  Clock::time_point last_;
};

struct Busy {};

struct Degraded {
  int attempts = 0;
  std::string last_error;
};

using DispatchOutcome = std::variant<CompletionResult, Busy, Degraded>;

struct GatewayStats {
  std::uint64_t admitted = 0;
  std::uint64_t rejected_busy = 0;
  std::uint64_t succeeded = 0;
  std::uint64_t degraded = 0;
  std::uint64_t backend_calls = 0;
  std::uint64_t backend_failures = 0;
  int peak_in_flight = 0;
  int peak_outstanding = 0;
  int outstanding = 0;
};

/// Shared, internally synchronised front door to a backend. Admission is
/// bounded by queue_capacity counting every admitted request that has not
/// finished (waiting or in flight); beyond that dispatch answers Busy at once.
class Gateway {
 public:
  Gateway(std::shared_ptr<CompletionBackend> backend, GatewayConfig config);

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  DispatchOutcome dispatch(const CompletionRequest& request);

  GatewayStats stats() const;
  const GatewayConfig& config() const noexcept { return config_; }
  const CompletionBackend& backend() const noexcept { return *backend_; }

 private:
  bool admit();
  void finish(bool ok);
  void acquire_slot();
  void release_slot();
  std::string call_backend(std::string_view prompt, const CompletionParams& params);

  std::shared_ptr<CompletionBackend> backend_;
  GatewayConfig config_;
  TokenBucket bucket_;
  std::mutex backend_mutex_;

  mutable std::mutex mutex_;
  std::condition_variable slot_free_;
  int outstanding_ = 0;
  int in_flight_ = 0;
  GatewayStats stats_;
};

}  // namespace jitfb
