#include "jitfb/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <thread>

namespace jitfb {

using Clock = std::chrono::steady_clock;

void CompletionRequest::validate() const {
  if (!(timeout_s > 0.0)) throw Error("completion request timeout_s must be positive");
  if (max_tokens <= 0) throw Error("completion request max_tokens must be positive");
  if (!(temperature >= 0.0)) throw Error("completion request temperature must be non-negative");
}

CompletionParams CompletionRequest::params(int attempt) const {
  CompletionParams p;
  p.max_tokens = max_tokens;
  p.temperature = temperature;
  p.timeout = std::chrono::milliseconds(static_cast<std::int64_t>(std::ceil(timeout_s * 1000.0)));
  p.idempotency_key = idempotency_key;
  p.attempt = attempt;
  return p;
}

void GatewayConfig::validate() const {
  if (!(rate_limit_per_s > 0.0)) throw Error("gateway rate_limit_per_s must be positive");
  if (burst <= 0) throw Error("gateway burst must be positive");
  if (max_in_flight <= 0) throw Error("gateway max_in_flight must be positive");
  if (queue_capacity <= 0) throw Error("gateway queue_capacity must be positive");
  if (retry_limit < 0) throw Error("gateway retry_limit must be non-negative");
  if (retry_backoff_ms.size() < static_cast<std::size_t>(retry_limit)) {
    throw Error("gateway retry_backoff_ms needs at least retry_limit entries");
  }
  for (int ms : retry_backoff_ms) {
    if (ms < 0) throw Error("gateway retry_backoff_ms entries must be non-negative");
  }
}

namespace {

void sleep_backoff(const std::vector<int>& backoff, int attempt) {
  if (static_cast<std::size_t>(attempt) < backoff.size() && backoff[attempt] > 0) {
    std::this_thread::sleep_for(std::chrono::milliseconds(backoff[attempt]));
  }
}

// One timed backend call. Late replies are converted into timeouts.
std::string timed_call(const std::function<std::string()>& call, std::chrono::milliseconds timeout) {
  const auto start = Clock::now();
  auto text = call();
  if (Clock::now() - start > timeout) throw TimeoutError("reply arrived after the deadline");
  return text;
}

std::int64_t elapsed_ms(Clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count();
}

}  // namespace

CompletionResult complete(CompletionBackend& backend, const CompletionRequest& request,
                          const RetryPolicy& policy) {
  request.validate();
  const auto start = Clock::now();
  for (int attempt = 0;; ++attempt) {
    const auto params = request.params(attempt);
    try {
      auto text = timed_call([&] { return backend.complete(request.prompt.text, params); }, params.timeout);
      return {std::move(text), backend.id(), elapsed_ms(start), attempt + 1};
    } catch (CompletionError& e) {
      if (attempt >= policy.retry_limit) {
        e.set_attempts(attempt + 1);
        throw;
      }
    }
    sleep_backoff(policy.backoff_ms, attempt);
  }
}

TokenBucket::TokenBucket(double rate_per_s, int burst)
    : rate_(rate_per_s), capacity_(burst), tokens_(burst), last_(Clock::now()) {}

void TokenBucket::acquire() {
  double deficit = 0.0;
  {
    std::lock_guard lock(mutex_);
    const auto now = Clock::now();
    const double dt = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    tokens_ = std::min(capacity_, tokens_ + dt * rate_);
    tokens_ -= 1.0;
    if (tokens_ < 0.0) deficit = -tokens_;
  }
  if (deficit > 0.0) std::this_thread::sleep_for(std::chrono::duration<double>(deficit / rate_));
}

Gateway::Gateway(std::shared_ptr<CompletionBackend> backend, GatewayConfig config)
    : backend_(std::move(backend)),
      config_((config.validate(), std::move(config))),
      bucket_(config_.rate_limit_per_s, config_.burst) {
  if (!backend_) throw Error("gateway requires a backend");
}

bool Gateway::admit() {
  std::lock_guard lock(mutex_);
  if (outstanding_ >= config_.queue_capacity) {
    ++stats_.rejected_busy;
    return false;
  }
  ++outstanding_;
  ++stats_.admitted;
  stats_.peak_outstanding = std::max(stats_.peak_outstanding, outstanding_);
  return true;
}

void Gateway::finish(bool ok) {
  std::lock_guard lock(mutex_);
  --outstanding_;
  ++(ok ? stats_.succeeded : stats_.degraded);
}

void Gateway::acquire_slot() {
  std::unique_lock lock(mutex_);
  slot_free_.wait(lock, [&] { return in_flight_ < config_.max_in_flight; });
  ++in_flight_;
  ++stats_.backend_calls;
  stats_.peak_in_flight = std::max(stats_.peak_in_flight, in_flight_);
}

void Gateway::release_slot() {
  {
    std::lock_guard lock(mutex_);
    --in_flight_;
  }
  slot_free_.notify_one();
}

std::string Gateway::call_backend(std::string_view prompt, const CompletionParams& params) {
  if (backend_->concurrent_safe()) return backend_->complete(prompt, params);
  std::lock_guard lock(backend_mutex_);
  return backend_->complete(prompt, params);
}

DispatchOutcome Gateway::dispatch(const CompletionRequest& request) {
  request.validate();
  if (!admit()) return Busy{};

  const auto start = Clock::now();
  std::string last_error;
  for (int attempt = 0; attempt <= config_.retry_limit; ++attempt) {
    if (attempt > 0) sleep_backoff(config_.retry_backoff_ms, attempt - 1);
    bucket_.acquire();
    acquire_slot();
    const auto params = request.params(attempt);
    try {
      auto text = timed_call([&] { return call_backend(request.prompt.text, params); }, params.timeout);
      release_slot();
      finish(true);
      return CompletionResult{std::move(text), backend_->id(), elapsed_ms(start), attempt + 1};
    } catch (const CompletionError& e) {
      last_error = e.what();
    } catch (const std::exception& e) {
      last_error = std::string("BackendError: ") + e.what();
    }
    release_slot();
    std::lock_guard lock(mutex_);
    ++stats_.backend_failures;
  }
  finish(false);
  return Degraded{config_.retry_limit + 1, std::move(last_error)};
}

GatewayStats Gateway::stats() const {
  std::lock_guard lock(mutex_);
  auto s = stats_;
  s.outstanding = outstanding_;
  return s;
}

}  // namespace jitfb
