#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>

#include "rtfe/lru_cache.hpp"
#include "rtfe/planner.hpp"

namespace rtfe::plan {

inline constexpr std::size_t kDefaultPlanCacheCapacity = 256;

struct PlanCacheStats {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::size_t size = 0;
  std::size_t pinned = 0;
};

/// Normalized query text -> compiled plan, LRU-evicted; plus a pinned map of
/// deployment name -> plan that is never evicted.
class PlanCache {
 public:
  explicit PlanCache(std::size_t capacity = kDefaultPlanCacheCapacity) : lru_(capacity) {}

  using PlanPtr = std::shared_ptr<const PhysicalPlan>;

  PlanPtr get(const std::string& key);

  /// Throws kFingerprintMismatch unless plan->fingerprint == fingerprint_of(key).
  std::optional<std::string> put(const std::string& key, PlanPtr plan);

  /// Pins a deployment plan; returns false if the name is taken.
  bool pin(const std::string& name, PlanPtr plan);
  PlanPtr get_pinned(std::string_view name);

  PlanCacheStats stats() const;
  std::size_t capacity() const { return lru_.capacity(); }

 private:
  struct StringHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };

  mutable std::mutex mu_;
  LruCache<std::string, PlanPtr> lru_;
  mutable std::shared_mutex pin_mu_;
  std::unordered_map<std::string, PlanPtr, StringHash, std::equal_to<>> pinned_;
  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> misses_{0};
};

}  // namespace rtfe::plan
