#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <limits>
#include <mutex>
#include <utility>

namespace rtfe {

/// Counting gate: at most `limit` holders at once, at most `max_queue`
/// waiters, each waiting at most `timeout`. Tracks the in-flight high-water
/// mark.
class AdmissionGate {
 public:
  enum class Result { kAdmitted, kQueueFull, kTimeout };

  static constexpr std::size_t kUnboundedQueue = std::numeric_limits<std::size_t>::max();

  explicit AdmissionGate(std::size_t limit, std::size_t max_queue = kUnboundedQueue,
                         std::chrono::nanoseconds timeout = std::chrono::nanoseconds::max())
      : limit_(limit), max_queue_(max_queue), timeout_(timeout) {}

  AdmissionGate(const AdmissionGate&) = delete;
  AdmissionGate& operator=(const AdmissionGate&) = delete;

  Result acquire() {
    if (try_acquire()) return Result::kAdmitted;
    std::unique_lock lock(mu_);
    if (waiting_.load() >= max_queue_) return Result::kQueueFull;
    waiting_.fetch_add(1);
    note_queue(waiting_.load());
    bool ok = true;
    if (timeout_ == std::chrono::nanoseconds::max()) {
      cv_.wait(lock, [&] { return try_acquire(); });
    } else {
      ok = cv_.wait_for(lock, timeout_, [&] { return try_acquire(); });
    }
    waiting_.fetch_sub(1);
    return ok ? Result::kAdmitted : Result::kTimeout;
  }

  void release() {
    in_flight_.fetch_sub(1);
    if (waiting_.load() > 0) {
      std::lock_guard lock(mu_);
      cv_.notify_one();
    }
  }

  std::size_t limit() const { return limit_; }
  std::size_t in_flight() const { return in_flight_.load(); }
  std::size_t high_water() const { return high_water_.load(); }
  std::size_t queued() const { return waiting_.load(); }
  std::size_t queue_high_water() const { return queue_high_water_.load(); }
  std::size_t max_queue() const { return max_queue_; }
  std::chrono::nanoseconds timeout() const { return timeout_; }

  void reset_high_water() {
    high_water_.store(in_flight_.load());
    queue_high_water_.store(waiting_.load());
  }

  /// RAII holder of one admission.
  class Permit {
   public:
    Permit() = default;
    explicit Permit(AdmissionGate& gate) : gate_(&gate) {}
    Permit(Permit&& o) noexcept : gate_(std::exchange(o.gate_, nullptr)) {}
    Permit& operator=(Permit&& o) noexcept {
      if (this != &o) {
        reset();
        gate_ = std::exchange(o.gate_, nullptr);
      }
      return *this;
    }
    ~Permit() { reset(); }
    void reset() {
      if (gate_) std::exchange(gate_, nullptr)->release();
    }
    explicit operator bool() const { return gate_ != nullptr; }

   private:
    AdmissionGate* gate_ = nullptr;
  };

  /// Blocks until admitted (the queue bound and timeout still apply).
  Permit enter(Result* result = nullptr) {
    const Result r = acquire();
    if (result) *result = r;
    return r == Result::kAdmitted ? Permit(*this) : Permit();
  }

 private:
  bool try_acquire() {
    std::size_t cur = in_flight_.load();
    while (cur < limit_) {
      if (in_flight_.compare_exchange_weak(cur, cur + 1)) {
        note_high_water(cur + 1);
        return true;
      }
    }
    return false;
  }

  void note_high_water(std::size_t v) {
    std::size_t hw = high_water_.load();
    while (v > hw && !high_water_.compare_exchange_weak(hw, v)) {
    }
  }

  void note_queue(std::size_t v) {
    std::size_t hw = queue_high_water_.load();
    while (v > hw && !queue_high_water_.compare_exchange_weak(hw, v)) {
    }
  }

  const std::size_t limit_;
  const std::size_t max_queue_;
  const std::chrono::nanoseconds timeout_;
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> high_water_{0};
  std::atomic<std::size_t> waiting_{0};
  std::atomic<std::size_t> queue_high_water_{0};
  std::mutex mu_;
  std::condition_variable cv_;
};

}  // namespace rtfe
