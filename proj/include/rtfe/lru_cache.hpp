#pragma once

#include <cstddef>
#include <functional>
#include <list>
#include <optional>
#include <unordered_map>
#include <utility>
#include <vector>

namespace rtfe {

/// Fixed-capacity map with least-recently-used eviction. Not thread-safe.
template <class K, class V, class Hash = std::hash<K>>
class LruCache {
 public:
  explicit LruCache(std::size_t capacity) : capacity_(capacity) {}

  std::size_t size() const { return map_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool contains(const K& key) const { return map_.count(key) != 0; }

  /// Hit moves the entry to most-recently-used.
  std::optional<V> get(const K& key) {
    auto it = map_.find(key);
    if (it == map_.end()) return std::nullopt;
    order_.splice(order_.begin(), order_, it->second);
    return it->second->second;
  }

  /// Inserts or replaces as most-recently-used; returns the evicted key, if any.
  std::optional<K> put(const K& key, V value) {
    if (auto it = map_.find(key); it != map_.end()) {
      it->second->second = std::move(value);
      order_.splice(order_.begin(), order_, it->second);
      return std::nullopt;
    }
    if (capacity_ == 0) return key;
    order_.emplace_front(key, std::move(value));
    map_.emplace(key, order_.begin());
    if (map_.size() <= capacity_) return std::nullopt;
    K victim = std::move(order_.back().first);
    map_.erase(victim);
    order_.pop_back();
    return victim;
  }

  bool erase(const K& key) {
    auto it = map_.find(key);
    if (it == map_.end()) return false;
    order_.erase(it->second);
    map_.erase(it);
    return true;
  }

  /// Keys from most- to least-recently used.
  std::vector<K> keys() const {
    std::vector<K> out;
    for (const auto& [k, _] : order_) out.push_back(k);
    return out;
  }

 private:
  using Entry = std::pair<K, V>;
  std::size_t capacity_;
  std::list<Entry> order_;
  std::unordered_map<K, typename std::list<Entry>::iterator, Hash> map_;
};

}  // namespace rtfe
