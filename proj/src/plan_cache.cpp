#include "rtfe/plan_cache.hpp"

#include "rtfe/error.hpp"

namespace rtfe::plan {

PlanCache::PlanPtr PlanCache::get(const std::string& key) {
  std::lock_guard lock(mu_);
  auto hit = lru_.get(key);
  if (!hit) {
    misses_.fetch_add(1, std::memory_order_relaxed);
    return nullptr;
  }
  hits_.fetch_add(1, std::memory_order_relaxed);
  return *hit;
}

std::optional<std::string> PlanCache::put(const std::string& key, PlanPtr plan) {
  if (!plan || plan->fingerprint != fingerprint_of(key)) {
    throw Error(ErrorCode::kFingerprintMismatch, "plan does not belong to this statement");
  }
  std::lock_guard lock(mu_);
  return lru_.put(key, std::move(plan));
}

bool PlanCache::pin(const std::string& name, PlanPtr plan) {
  std::unique_lock lock(pin_mu_);
  return pinned_.emplace(name, std::move(plan)).second;
}

PlanCache::PlanPtr PlanCache::get_pinned(std::string_view name) {
  std::shared_lock lock(pin_mu_);
  auto it = pinned_.find(name);
  return it == pinned_.end() ? nullptr : it->second;
}

PlanCacheStats PlanCache::stats() const {
  PlanCacheStats s;
  s.hits = hits_.load(std::memory_order_relaxed);
  s.misses = misses_.load(std::memory_order_relaxed);
  {
    std::lock_guard lock(mu_);
    s.size = lru_.size();
  }
  std::shared_lock lock(pin_mu_);
  s.pinned = pinned_.size();
  return s;
}

}  // namespace rtfe::plan
