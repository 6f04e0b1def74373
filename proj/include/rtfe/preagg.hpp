#pragma once

// Incrementally maintained window pre-aggregates.
//
// A PrefixSeries keeps the running sum F(j) of the first j values so that the
// sum of any contiguous event range [lo, hi) is F(hi) - F(lo) in O(1).
// A BucketTree keeps min/max/count partials of sealed blocks of B events so a
// MIN/MAX over [lo, hi) touches at most (hi - lo) / B partials plus the
// elements of the two boundary blocks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "rtfe/types.hpp"

namespace rtfe::preagg {

inline constexpr std::size_t kDefaultBucketSize = 256;

// Serialized index state starts with this byte.
inline constexpr std::uint8_t kFormatTag = 1;

struct SumCount {
  double sum = 0.0;
  std::int64_t count = 0;  // non-null values in range
};

struct MinMaxResult {
  std::optional<double> min;
  std::optional<double> max;
  std::int64_t count = 0;
  std::size_t touched = 0;  // elements + partials read; instrumentation only
};

/// Half-open event index range [lo, hi).
struct IndexRange {
  std::size_t lo = 0;
  std::size_t hi = 0;
  bool empty() const { return lo >= hi; }
  std::size_t size() const { return empty() ? 0 : hi - lo; }
  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

/// The W events strictly preceding event `anchor`.
inline IndexRange rows_range(std::size_t anchor, std::int64_t w) {
  const auto width = static_cast<std::size_t>(std::max<std::int64_t>(w, 0));
  return {anchor > width ? anchor - width : 0, anchor};
}

/// Events whose timestamp lies in (t - duration, t].
inline IndexRange time_interval(std::span<const std::int64_t> ts, std::int64_t t,
                                std::int64_t duration) {
  const auto lo = std::upper_bound(ts.begin(), ts.end(), t - duration);
  const auto hi = std::upper_bound(lo, ts.end(), t);
  return {static_cast<std::size_t>(lo - ts.begin()), static_cast<std::size_t>(hi - ts.begin())};
}

/// Which pre-aggregate answers a given aggregate over a given frame.
enum class Route : std::uint8_t { kPrefixSeries, kBucketTree };

inline Route route_for(AggregateKind kind, const Frame& /*frame*/) {
  // Both ROWS and RANGE frames resolve to a contiguous index range (RANGE via
  // binary search on timestamps), so the route depends on the aggregate only.
  switch (kind) {
    case AggregateKind::kSum:
    case AggregateKind::kAvg:
    case AggregateKind::kCount:
      return Route::kPrefixSeries;
    case AggregateKind::kMin:
    case AggregateKind::kMax:
      return Route::kBucketTree;
  }
  return Route::kBucketTree;
}

namespace detail {

template <class T>
void put_pod(std::string& out, const T& v) {
  static_assert(std::is_trivially_copyable_v<T>);
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
void put_array(std::string& out, std::span<const T> xs) {
  put_pod<std::uint64_t>(out, xs.size());
  if (!xs.empty()) out.append(reinterpret_cast<const char*>(xs.data()), xs.size_bytes());
}

}  // namespace detail

/// Prefix counts of non-null values; cnt[0] = 0.
class CountSeries {
 public:
  CountSeries() : counts_{0} {}

  void append(bool valid) { counts_.push_back(counts_.back() + (valid ? 1 : 0)); }
  std::size_t size() const { return counts_.size() - 1; }
  std::int64_t count(std::size_t lo, std::size_t hi) const { return counts_[hi] - counts_[lo]; }
  std::int64_t at(std::size_t j) const { return counts_[j]; }

  void serialize(std::string& out) const { detail::put_array<std::int64_t>(out, counts_); }

 private:
  std::vector<std::int64_t> counts_;
};

template <class T>
class PrefixSeries;

/// Exact int64 running sums.
template <>
class PrefixSeries<std::int64_t> {
 public:
  PrefixSeries() : sums_{0} {}

  void append(std::optional<std::int64_t> x) {
    sums_.push_back(sums_.back() + x.value_or(0));
    counts_.append(x.has_value());
  }

  std::size_t size() const { return counts_.size(); }
  /// F(j): sum of the first j values.
  double prefix(std::size_t j) const { return static_cast<double>(sums_[j]); }
  std::int64_t exact_prefix(std::size_t j) const { return sums_[j]; }

  SumCount window(std::size_t lo, std::size_t hi) const {
    return {static_cast<double>(sums_[hi] - sums_[lo]), counts_.count(lo, hi)};
  }

  void serialize(std::string& out) const {
    detail::put_array<std::int64_t>(out, sums_);
    counts_.serialize(out);
  }

 private:
  std::vector<std::int64_t> sums_;
  CountSeries counts_;
};

/// Float64 running sums with Neumaier compensation. F(j) is represented as
/// hi[j] + lo[j]; the pair carries roughly twice the precision of a double,
/// so F(hi) - F(lo) stays accurate for short windows late in long histories.
template <>
class PrefixSeries<double> {
 public:
  PrefixSeries() : hi_{0.0}, lo_{0.0} {}

  void append(std::optional<double> x) {
    const double v = x.value_or(0.0);
    const double t = sum_ + v;
    if (std::fabs(sum_) >= std::fabs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
    hi_.push_back(sum_);
    lo_.push_back(comp_);
    counts_.append(x.has_value());
  }

  std::size_t size() const { return counts_.size(); }
  double prefix(std::size_t j) const { return hi_[j] + lo_[j]; }

  SumCount window(std::size_t lo, std::size_t hi) const {
    return {(hi_[hi] - hi_[lo]) + (lo_[hi] - lo_[lo]), counts_.count(lo, hi)};
  }

  void serialize(std::string& out) const {
    detail::put_array<double>(out, hi_);
    detail::put_array<double>(out, lo_);
    counts_.serialize(out);
  }

 private:
  std::vector<double> hi_;
  std::vector<double> lo_;
  double sum_ = 0.0;
  double comp_ = 0.0;
  CountSeries counts_;
};

template <class T>
struct Bucket {
  T min = std::numeric_limits<T>::max();
  T max = std::numeric_limits<T>::lowest();
  std::int64_t count = 0;  // non-null values
  std::int64_t first_ts = 0;
  std::int64_t last_ts = 0;
  std::size_t size = 0;  // events, null or not

  void add(std::optional<T> x, std::int64_t ts) {
    if (size == 0) first_ts = ts;
    last_ts = ts;
    ++size;
    if (x) {
      ++count;
      min = std::min(min, *x);
      max = std::max(max, *x);
    }
  }
};

template <class T>
class BucketTree {
 public:
  explicit BucketTree(std::size_t bucket_size = kDefaultBucketSize)
      : bucket_size_(std::max<std::size_t>(bucket_size, 1)) {}

  void append(std::optional<T> x, std::int64_t ts) {
    tail_.add(x, ts);
    if (tail_.size == bucket_size_) {
      sealed_.push_back(tail_);
      tail_ = Bucket<T>{};
    }
  }

  std::size_t bucket_size() const { return bucket_size_; }
  std::span<const Bucket<T>> sealed() const { return sealed_; }
  const Bucket<T>& tail() const { return tail_; }

  /// MIN/MAX over [lo, hi); `values`/`valid` are the column's element arrays.
  MinMaxResult query(std::span<const T> values, std::span<const std::uint8_t> valid,
                     std::size_t lo, std::size_t hi) const {
    Acc acc;
    if (lo >= hi) return acc.finish();
    const std::size_t b = bucket_size_;
    const std::size_t first_full = (lo + b - 1) / b;  // first bucket starting at or after lo
    const std::size_t end_full = hi / b;              // buckets [first_full, end_full) lie inside
    if (first_full >= end_full) {
      acc.scan(values, valid, lo, hi);
      return acc.finish();
    }
    acc.scan(values, valid, lo, first_full * b);
    for (std::size_t k = first_full; k < end_full; ++k) acc.merge(sealed_[k]);
    acc.scan(values, valid, end_full * b, hi);
    return acc.finish();
  }

  void serialize(std::string& out) const {
    detail::put_pod<std::uint64_t>(out, bucket_size_);
    detail::put_pod<std::uint64_t>(out, sealed_.size());
    for (const auto& bk : sealed_) put_bucket(out, bk);
    put_bucket(out, tail_);
  }

  /// Bulk construction: seals every complete block of B events directly.
  static BucketTree build(std::span<const T> values, std::span<const std::uint8_t> valid,
                          std::span<const std::int64_t> ts, std::size_t bucket_size) {
    BucketTree tree(bucket_size);
    const std::size_t b = tree.bucket_size_;
    const std::size_t n = values.size();
    for (std::size_t start = 0; start < n; start += b) {
      const std::size_t end = std::min(n, start + b);
      Bucket<T> bk;
      bk.first_ts = ts[start];
      bk.last_ts = ts[end - 1];
      bk.size = end - start;
      for (std::size_t i = start; i < end; ++i) {
        if (!valid[i]) continue;
        ++bk.count;
        if (values[i] < bk.min) bk.min = values[i];
        if (values[i] > bk.max) bk.max = values[i];
      }
      if (bk.size == b) {
        tree.sealed_.push_back(bk);
      } else {
        tree.tail_ = bk;
      }
    }
    return tree;
  }

 private:
  struct Acc {
    T lo = std::numeric_limits<T>::max();
    T hi = std::numeric_limits<T>::lowest();
    std::int64_t count = 0;
    std::size_t touched = 0;

    void scan(std::span<const T> values, std::span<const std::uint8_t> valid, std::size_t from,
              std::size_t to) {
      for (std::size_t i = from; i < to; ++i) {
        ++touched;
        if (!valid[i]) continue;
        ++count;
        lo = std::min(lo, values[i]);
        hi = std::max(hi, values[i]);
      }
    }
    void merge(const Bucket<T>& bk) {
      ++touched;
      if (bk.count == 0) return;
      count += bk.count;
      lo = std::min(lo, bk.min);
      hi = std::max(hi, bk.max);
    }
    MinMaxResult finish() const {
      MinMaxResult r;
      r.count = count;
      r.touched = touched;
      if (count > 0) {
        r.min = static_cast<double>(lo);
        r.max = static_cast<double>(hi);
      }
      return r;
    }
  };

  static void put_bucket(std::string& out, const Bucket<T>& bk) {
    // All-null buckets carry sentinel min/max; normalize so equal states
    // serialize identically regardless of construction path.
    detail::put_pod<T>(out, bk.count ? bk.min : T{});
    detail::put_pod<T>(out, bk.count ? bk.max : T{});
    detail::put_pod<std::int64_t>(out, bk.count);
    detail::put_pod<std::int64_t>(out, bk.size ? bk.first_ts : 0);
    detail::put_pod<std::int64_t>(out, bk.size ? bk.last_ts : 0);
    detail::put_pod<std::uint64_t>(out, bk.size);
  }

  std::size_t bucket_size_;
  std::vector<Bucket<T>> sealed_;
  Bucket<T> tail_;
};

/// One numeric column of one key: element values plus both pre-aggregates,
/// always updated together.
template <class T>
class ColumnIndex {
 public:
  explicit ColumnIndex(std::size_t bucket_size = kDefaultBucketSize) : buckets_(bucket_size) {}

  void append(std::optional<T> x, std::int64_t ts) {
    values_.push_back(x.value_or(T{}));
    valid_.push_back(x.has_value() ? 1 : 0);
    prefix_.append(x);
    buckets_.append(x, ts);
  }

  std::size_t size() const { return values_.size(); }
  std::span<const T> values() const { return values_; }
  std::span<const std::uint8_t> validity() const { return valid_; }
  bool valid(std::size_t i) const { return valid_[i] != 0; }

  const PrefixSeries<T>& prefix() const { return prefix_; }
  const BucketTree<T>& buckets() const { return buckets_; }

  SumCount sum(IndexRange r) const {
    if (r.empty()) return {};
    return prefix_.window(r.lo, r.hi);
  }

  MinMaxResult minmax(IndexRange r) const {
    return buckets_.query(values_, valid_, r.lo, r.hi);
  }

  void serialize(std::string& out) const {
    detail::put_pod<std::uint8_t>(out, kFormatTag);
    detail::put_array<T>(out, values_);
    detail::put_array<std::uint8_t>(out, valid_);
    prefix_.serialize(out);
    buckets_.serialize(out);
  }

  static ColumnIndex build(std::span<const T> values, std::span<const std::uint8_t> valid,
                           std::span<const std::int64_t> ts, std::size_t bucket_size) {
    ColumnIndex idx(bucket_size);
    idx.values_.assign(values.begin(), values.end());
    idx.valid_.assign(valid.begin(), valid.end());
    for (std::size_t i = 0; i < values.size(); ++i) {
      idx.prefix_.append(valid[i] ? std::optional<T>(values[i]) : std::nullopt);
    }
    idx.buckets_ = BucketTree<T>::build(values, valid, ts, bucket_size);
    return idx;
  }

 private:
  std::vector<T> values_;
  std::vector<std::uint8_t> valid_;
  PrefixSeries<T> prefix_;
  BucketTree<T> buckets_;
};

/// String column: values plus non-null prefix counts (COUNT is the only
/// aggregate defined over strings).
class StringColumn {
 public:
  void append(std::optional<std::string> x) {
    counts_.append(x.has_value());
    valid_.push_back(x.has_value() ? 1 : 0);
    values_.push_back(x ? std::move(*x) : std::string{});
  }

  std::size_t size() const { return values_.size(); }
  std::span<const std::string> values() const { return values_; }
  std::span<const std::uint8_t> validity() const { return valid_; }
  bool valid(std::size_t i) const { return valid_[i] != 0; }
  const CountSeries& counts() const { return counts_; }

  std::int64_t count(IndexRange r) const { return r.empty() ? 0 : counts_.count(r.lo, r.hi); }

  void serialize(std::string& out) const {
    detail::put_pod<std::uint8_t>(out, kFormatTag);
    detail::put_pod<std::uint64_t>(out, values_.size());
    for (const auto& s : values_) {
      detail::put_pod<std::uint64_t>(out, s.size());
      out += s;
    }
    detail::put_array<std::uint8_t>(out, valid_);
    counts_.serialize(out);
  }

 private:
  std::vector<std::string> values_;
  std::vector<std::uint8_t> valid_;
  CountSeries counts_;
};

}  // namespace rtfe::preagg
