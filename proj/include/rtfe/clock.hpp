#pragma once

#include <chrono>
#include <cstdint>

namespace rtfe {

// Single monotonic clock used for every latency term.
using MonoClock = std::chrono::steady_clock;

inline std::int64_t now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             MonoClock::now().time_since_epoch())
      .count();
}

class Stopwatch {
 public:
  Stopwatch() : start_(now_ns()) {}
  std::int64_t elapsed_ns() const { return now_ns() - start_; }
  std::int64_t start_ns() const { return start_; }

 private:
  std::int64_t start_;
};

}  // namespace rtfe
