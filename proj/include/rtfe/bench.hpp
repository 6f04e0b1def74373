#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rtfe/exec.hpp"
#include "rtfe/planner.hpp"
#include "rtfe/serving.hpp"
#include "rtfe/storage.hpp"

namespace rtfe::bench {

struct WorkloadConfig {
  std::size_t keys = 50;
  std::size_t events_per_key = 20'000;
  std::size_t records_per_batch = 100;  // [100, 500]
  std::size_t parallel = 8;             // closed-loop clients
  std::int64_t window = 10'000;         // ROWS preceding
  std::vector<AggregateKind> aggregates = {AggregateKind::kSum, AggregateKind::kAvg,
                                           AggregateKind::kCount};
  std::uint64_t seed = 42;
  double seconds = 30.0;        // measured phase length
  std::size_t requests = 0;     // when > 0, measured requests per client instead of seconds
  std::size_t warmup = 500;     // requests before measuring, spread over the clients
  std::size_t anchor_pool = 10'000;

  /// Throws kInvalidConfig.
  void validate() const;
};

inline constexpr const char* kTable = "tx";
inline constexpr const char* kDeployment = "ref_features";

/// tx(user int64 key, ts timestamp, amount float64, category string).
TableSchema reference_schema();

/// The workload's feature query: the configured aggregates over `amount`
/// sharing one ROWS window.
std::string reference_sql(const WorkloadConfig& config);

/// Deterministic dataset: per-key increasing timestamps, uniform amounts,
/// categorical labels. Records are interleaved across keys.
std::vector<Record> generate(const WorkloadConfig& config);

/// Writes the dataset as JSON-lines plus `<out>.manifest.json`.
void write_dataset(const WorkloadConfig& config, const std::filesystem::path& out);

/// Brute-force window aggregate over one key's events (ordered by time),
/// anchored at time t with request semantics.
Value oracle_aggregate(std::span<const Record> events, std::size_t ts_column,
                       std::size_t target, AggregateKind kind, const Frame& frame, std::int64_t t,
                       bool strict_w = false);

struct Anchor {
  Key key;
  std::int64_t t = 0;
};
std::vector<Anchor> sample_anchors(std::span<const Record> records, std::size_t key_column,
                                   std::size_t ts_column, std::size_t count, std::uint64_t seed);

/// One load client: issues a request and returns the server-side breakdown.
class Session {
 public:
  virtual ~Session() = default;
  virtual exec::LatencyBreakdown request(const Key& key, std::int64_t t) = 0;
};
using SessionFactory = std::function<std::unique_ptr<Session>()>;

/// Requests against a deployment of an in-process engine.
SessionFactory in_process(std::shared_ptr<serving::Engine> engine, std::string deployment);
/// Ad-hoc query requests against an in-process engine.
SessionFactory in_process_query(std::shared_ptr<serving::Engine> engine, std::string sql);
/// Requests over the wire, one connection per session.
SessionFactory over_tcp(std::string host, std::uint16_t port, std::string deployment);

struct Sample {
  std::int64_t client_ns = 0;
  exec::LatencyBreakdown server;
};

struct BenchReport {
  std::string label;
  std::string flags;
  std::size_t parallel = 0;
  std::size_t requests = 0;
  std::size_t errors = 0;
  double seconds = 0.0;
  double qps = 0.0;
  // Client-observed latency, microseconds, nearest-rank percentiles.
  double p50_us = 0.0, p95_us = 0.0, p99_us = 0.0, mean_us = 0.0;
  // Server-side mean breakdown, microseconds.
  double parse_us = 0.0, plan_us = 0.0, exec_us = 0.0, total_us = 0.0;
  double server_p50_us = 0.0;
  double predicted_qps = 0.0;  // P / L_p50
  std::size_t inflight_high_water = 0;
  std::size_t cmax = 0;
  std::uint64_t bytes_used = 0;
  bool saturated = false;

  std::vector<Sample> samples;  // measured phase only
};

/// Closed-loop load: `config.parallel` clients, warm-up then a measured phase.
/// `engine`, when given, supplies governor and memory statistics.
BenchReport run_load(const SessionFactory& factory, std::span<const Anchor> anchors,
                     const WorkloadConfig& config, std::string label,
                     serving::Engine* engine = nullptr);

/// Nearest-rank percentile (q in (0, 100]) of unsorted values.
double percentile(std::vector<double> values, double q);

struct AblationRow {
  std::string name;       // "baseline", "full" or a flag name
  std::string flags;
  double latency_us = 0.0;  // mean client-observed
  double p50_us = 0.0;
  double qps = 0.0;
  double marginal_us = 0.0;  // raw leave-one-out marginal (flag rows)
  double percent = 0.0;      // clamped, normalized (flag rows)
  bool clamped = false;
};

struct AblationResult {
  AblationRow baseline;
  AblationRow full;
  std::vector<AblationRow> flags;  // one per optimization flag, fixed order
  double speedup = 0.0;            // baseline / full latency
  bool coherent = true;            // full <= baseline
  std::vector<BenchReport> reports;
};

/// Loads the workload once into a shared catalog and measures all-off,
/// all-on and each leave-one-out configuration with in-process clients.
AblationResult run_ablation(const WorkloadConfig& config, const serving::EngineConfig& base = {});

/// Normalizes marginals into percentages; exposed for testing.
void normalize_contributions(AblationResult& result);

struct ModelCheck {
  bool additivity_ok = false;
  double additivity_ratio = 0.0;  // sum(parts) / sum(total)
  bool parts_within_total = false;
  struct Throughput {
    std::string label;
    double measured = 0.0;
    double predicted = 0.0;
    double relative_error = 0.0;
    bool skipped = false;  // saturated
    bool ok = false;
  };
  std::vector<Throughput> throughput;
  bool ok() const;
  std::string summary() const;
};

/// Latency additivity over every sample and throughput-vs-P/L per report.
/// Throws kInsufficientData with fewer than two reports at distinct P.
ModelCheck validate_models(std::span<const BenchReport> reports);

std::string report_csv_header();
std::string report_csv(std::span<const BenchReport> reports);
std::string report_text(std::span<const BenchReport> reports);
std::string ablation_csv(const AblationResult& result);
std::string contribution_csv(const AblationResult& result);
std::string ablation_text(const AblationResult& result);

void write_file(const std::filesystem::path& path, const std::string& content);

/// Loads records into a catalog table created from `schema` (if missing).
void load(Catalog& catalog, const TableSchema& schema, std::span<const Record> records);
/// Streams records over the wire in batches of `records_per_batch`.
void stream(serving::Client& client, const TableSchema& schema, std::span<const Record> records,
            std::size_t records_per_batch);

}  // namespace rtfe::bench
