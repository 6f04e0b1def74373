#include "rtfe/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <latch>
#include <random>
#include <thread>

#include "json.hpp"
#include "rtfe/clock.hpp"
#include "rtfe/error.hpp"
#include "rtfe/formats.hpp"

namespace rtfe::bench {

using nlohmann::json;

namespace {

constexpr std::int64_t kBaseTimestamp = 1'700'000'000'000;
constexpr const char* kCategories[] = {"grocery", "travel", "dining", "online", "fuel"};

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

void WorkloadConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::kInvalidConfig, m); };
  if (keys < 1) bad("keys must be >= 1");
  if (events_per_key < 1) bad("events_per_key must be >= 1");
  if (records_per_batch < 100 || records_per_batch > 500) {
    bad("records_per_batch must be in [100, 500]");
  }
  if (parallel < 1 || parallel > 64) bad("parallel must be in [1, 64]");
  if (window < 1) bad("window must be >= 1");
  if (aggregates.empty()) bad("at least one aggregate is required");
  if (requests == 0 && !(seconds > 0.0)) bad("seconds must be > 0 when requests is 0");
  if (anchor_pool < 1) bad("anchor_pool must be >= 1");
}

TableSchema reference_schema() {
  TableSchema s;
  s.name = kTable;
  s.columns = {{"user", ColumnType::kInt64},
               {"ts", ColumnType::kTimestamp},
               {"amount", ColumnType::kFloat64},
               {"category", ColumnType::kString}};
  s.key_column = "user";
  s.ts_column = "ts";
  return s;
}

std::string reference_sql(const WorkloadConfig& config) {
  std::string sql = "SELECT user";
  for (AggregateKind k : config.aggregates) {
    sql += ", " + std::string(to_string(k)) + "(amount) OVER w";
  }
  sql += " FROM " + std::string(kTable) +
         " WINDOW w AS (PARTITION BY user ORDER BY ts ROWS BETWEEN " +
         std::to_string(config.window) + " PRECEDING AND 1 PRECEDING)";
  return sql;
}

std::vector<Record> generate(const WorkloadConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::vector<std::int64_t> last(config.keys, kBaseTimestamp);
  std::vector<Record> out;
  out.reserve(config.keys * config.events_per_key);
  for (std::size_t i = 0; i < config.events_per_key; ++i) {
    for (std::size_t k = 0; k < config.keys; ++k) {
      last[k] += 1 + static_cast<std::int64_t>(rng() % 1000);
      const double amount = static_cast<double>(rng() >> 11) * 0x1p-53 * 1000.0;
      const char* category = kCategories[rng() % std::size(kCategories)];
      out.push_back(Record{{static_cast<std::int64_t>(k), last[k], amount, std::string(category)}});
    }
  }
  return out;
}

void write_dataset(const WorkloadConfig& config, const std::filesystem::path& out) {
  const TableSchema schema = reference_schema();
  const auto records = generate(config);
  std::string text;
  for (const auto& r : records) {
    text += formats::to_json_line(schema, r);
    text += '\n';
  }
  write_file(out, text);
  json columns = json::array();
  for (const auto& c : schema.columns) {
    columns.push_back({{"name", c.name}, {"type", to_string(c.type)}});
  }
  const json manifest = {{"seed", config.seed},
                         {"keys", config.keys},
                         {"events_per_key", config.events_per_key},
                         {"records", records.size()},
                         {"table", schema.name},
                         {"columns", columns},
                         {"key", schema.key_column},
                         {"ts", schema.ts_column},
                         {"file", out.filename().string()}};
  write_file(out.string() + ".manifest.json", manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Oracle: a direct loop over the window, sharing nothing with the engine.

Value oracle_aggregate(std::span<const Record> events, std::size_t ts_column, std::size_t target,
                       AggregateKind kind, const Frame& frame, std::int64_t t, bool strict_w) {
  auto ts_of = [&](const Record& r) { return std::get<std::int64_t>(r.values[ts_column]); };
  std::vector<const Record*> window;
  double capacity = 0.0;
  if (const auto* rows = std::get_if<RowsFrame>(&frame)) {
    std::size_t before = 0;
    for (const auto& e : events) {
      if (ts_of(e) < t) ++before;
    }
    const auto w = static_cast<std::size_t>(rows->rows);
    for (std::size_t i = before > w ? before - w : 0; i < before; ++i) window.push_back(&events[i]);
    if (rows->include_current && before < events.size() && ts_of(events[before]) == t) {
      window.push_back(&events[before]);
    }
    capacity = static_cast<double>(rows->rows + (rows->include_current ? 1 : 0));
  } else {
    const std::int64_t d = std::get<RangeFrame>(frame).duration_ms;
    for (const auto& e : events) {
      if (ts_of(e) > t - d && ts_of(e) <= t) window.push_back(&e);
    }
  }

  std::int64_t count = 0;
  std::int64_t isum = 0;
  long double dsum = 0.0L;
  bool any_double = false;
  std::optional<double> lo, hi;
  for (const Record* r : window) {
    const Value& v = r->values[target];
    if (is_null(v)) continue;
    ++count;
    double x = 0.0;
    if (const auto* i = std::get_if<std::int64_t>(&v)) {
      isum += *i;
      x = static_cast<double>(*i);
    } else if (const auto* d = std::get_if<double>(&v)) {
      any_double = true;
      dsum += *d;
      x = *d;
    } else {
      continue;  // strings only count
    }
    if (!lo || x < *lo) lo = x;
    if (!hi || x > *hi) hi = x;
  }
  const double sum = any_double ? static_cast<double>(dsum) : static_cast<double>(isum);
  switch (kind) {
    case AggregateKind::kCount: return count;
    case AggregateKind::kSum: return sum;
    case AggregateKind::kAvg:
      if (count == 0) return {};
      return sum / (strict_w && capacity > 0 ? capacity : static_cast<double>(count));
    case AggregateKind::kMin: return lo ? Value{*lo} : Value{};
    case AggregateKind::kMax: return hi ? Value{*hi} : Value{};
  }
  return {};
}

std::vector<Anchor> sample_anchors(std::span<const Record> records, std::size_t key_column,
                                   std::size_t ts_column, std::size_t count, std::uint64_t seed) {
  std::vector<Anchor> out;
  if (records.empty()) return out;
  std::mt19937_64 rng(seed);
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Record& r = records[rng() % records.size()];
    const Value& k = r.values[key_column];
    Key key = std::holds_alternative<std::int64_t>(k) ? Key{std::get<std::int64_t>(k)}
                                                      : Key{std::get<std::string>(k)};
    out.push_back({std::move(key), std::get<std::int64_t>(r.values[ts_column])});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sessions

namespace {

class EngineSession final : public Session {
 public:
  EngineSession(std::shared_ptr<serving::Engine> engine, std::string deployment)
      : engine_(std::move(engine)), deployment_(std::move(deployment)) {}
  exec::LatencyBreakdown request(const Key& key, std::int64_t t) override {
    return engine_->request(deployment_, key, t).latency;
  }

 private:
  std::shared_ptr<serving::Engine> engine_;
  std::string deployment_;
};

class QuerySession final : public Session {
 public:
  QuerySession(std::shared_ptr<serving::Engine> engine, std::string sql)
      : engine_(std::move(engine)), sql_(std::move(sql)) {}
  exec::LatencyBreakdown request(const Key& key, std::int64_t t) override {
    return engine_->query_request(sql_, key, t).latency;
  }

 private:
  std::shared_ptr<serving::Engine> engine_;
  std::string sql_;
};

class TcpSession final : public Session {
 public:
  TcpSession(const std::string& host, std::uint16_t port, std::string deployment)
      : client_(host, port), deployment_(std::move(deployment)) {}
  exec::LatencyBreakdown request(const Key& key, std::int64_t t) override {
    const json msg = {{"op", "request"},
                      {"id", ++id_},
                      {"payload",
                       {{"name", deployment_},
                        {"key", std::visit([](const auto& k) { return json(k); }, key)},
                        {"t", t}}}};
    const json resp = client_.call(msg);
    if (resp.value("status", "") != "ok") {
      const auto& err = resp.at("error");
      throw Error(ErrorCode::kInternal, err.value("code", "error") + ": " + err.value("message", ""));
    }
    const auto& l = resp.at("latency");
    exec::LatencyBreakdown out;
    out.parse_ns = l.at("parse_ns").get<std::int64_t>();
    out.plan_ns = l.at("plan_ns").get<std::int64_t>();
    out.exec_ns = l.at("exec_ns").get<std::int64_t>();
    out.total_ns = l.at("total_ns").get<std::int64_t>();
    out.queue_ns = l.value("queue_ns", std::int64_t{0});
    return out;
  }

 private:
  serving::Client client_;
  std::string deployment_;
  std::int64_t id_ = 0;
};

}  // namespace

SessionFactory in_process(std::shared_ptr<serving::Engine> engine, std::string deployment) {
  return [engine, deployment] { return std::make_unique<EngineSession>(engine, deployment); };
}

SessionFactory in_process_query(std::shared_ptr<serving::Engine> engine, std::string sql) {
  return [engine, sql] { return std::make_unique<QuerySession>(engine, sql); };
}

SessionFactory over_tcp(std::string host, std::uint16_t port, std::string deployment) {
  return [host, port, deployment] { return std::make_unique<TcpSession>(host, port, deployment); };
}

// ---------------------------------------------------------------------------
// Load

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double rank = std::ceil(q / 100.0 * static_cast<double>(values.size()));
  const auto idx = static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(values.size())));
  return values[idx - 1];
}

BenchReport run_load(const SessionFactory& factory, std::span<const Anchor> anchors,
                     const WorkloadConfig& config, std::string label, serving::Engine* engine) {
  config.validate();
  if (anchors.empty()) throw Error(ErrorCode::kInsufficientData, "no anchors to request");
  const std::size_t p = config.parallel;
  std::vector<std::unique_ptr<Session>> sessions;
  for (std::size_t i = 0; i < p; ++i) sessions.push_back(factory());

  const std::size_t warmup_each = (config.warmup + p - 1) / p;
  std::vector<std::vector<Sample>> samples(p);
  std::vector<std::size_t> errors(p, 0);
  std::latch warmed(static_cast<std::ptrdiff_t>(p));
  std::atomic<bool> go{false};
  std::atomic<std::int64_t> deadline{0};

  auto client = [&](std::size_t i) {
    std::mt19937_64 rng(config.seed ^ (0x9E3779B97F4A7C15ULL * (i + 1)));
    Session& s = *sessions[i];
    auto one = [&](bool keep) {
      const Anchor& a = anchors[rng() % anchors.size()];
      Stopwatch sw;
      try {
        const auto server = s.request(a.key, a.t);
        if (keep) samples[i].push_back({sw.elapsed_ns(), server});
      } catch (const Error&) {
        if (keep) ++errors[i];
      }
    };
    for (std::size_t k = 0; k < warmup_each; ++k) one(false);
    warmed.count_down();
    while (!go.load(std::memory_order_acquire)) std::this_thread::yield();
    if (config.requests > 0) {
      samples[i].reserve(config.requests);
      for (std::size_t k = 0; k < config.requests; ++k) one(true);
    } else {
      const std::int64_t end = deadline.load();
      while (now_ns() < end) one(true);
    }
  };

  std::vector<std::jthread> threads;
  for (std::size_t i = 0; i < p; ++i) threads.emplace_back(client, i);
  warmed.wait();
  if (engine) engine->governor().reset_high_water();
  const std::int64_t start = now_ns();
  deadline.store(start + static_cast<std::int64_t>(config.seconds * 1e9));
  go.store(true, std::memory_order_release);
  threads.clear();  // joins
  const std::int64_t elapsed = now_ns() - start;

  BenchReport r;
  r.label = std::move(label);
  r.parallel = p;
  r.seconds = static_cast<double>(elapsed) / 1e9;
  for (std::size_t i = 0; i < p; ++i) {
    r.errors += errors[i];
    std::move(samples[i].begin(), samples[i].end(), std::back_inserter(r.samples));
  }
  r.requests = r.samples.size();
  r.qps = r.seconds > 0 ? static_cast<double>(r.requests) / r.seconds : 0.0;
  std::vector<double> client_us, total_us;
  client_us.reserve(r.samples.size());
  total_us.reserve(r.samples.size());
  double parse = 0, plan = 0, exec = 0, total = 0, observed = 0;
  for (const auto& s : r.samples) {
    client_us.push_back(static_cast<double>(s.client_ns) / 1e3);
    total_us.push_back(static_cast<double>(s.server.total_ns) / 1e3);
    parse += static_cast<double>(s.server.parse_ns);
    plan += static_cast<double>(s.server.plan_ns);
    exec += static_cast<double>(s.server.exec_ns);
    total += static_cast<double>(s.server.total_ns);
    observed += static_cast<double>(s.client_ns);
  }
  if (r.requests > 0) {
    const double n = static_cast<double>(r.requests) * 1e3;
    r.parse_us = parse / n;
    r.plan_us = plan / n;
    r.exec_us = exec / n;
    r.total_us = total / n;
    r.mean_us = observed / n;
  }
  r.p50_us = percentile(client_us, 50);
  r.p95_us = percentile(client_us, 95);
  r.p99_us = percentile(client_us, 99);
  r.server_p50_us = percentile(total_us, 50);
  r.predicted_qps = r.p50_us > 0 ? static_cast<double>(p) / (r.p50_us * 1e-6) : 0.0;
  if (engine) {
    r.flags = engine->config().flags.to_string();
    r.inflight_high_water = engine->governor().high_water();
    r.cmax = engine->governor().cmax();
    r.bytes_used = engine->catalog().memory().used();
    r.saturated = r.inflight_high_water >= r.cmax;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Ablation

void load(Catalog& catalog, const TableSchema& schema, std::span<const Record> records) {
  if (!catalog.find(schema.name)) catalog.create_table(schema);
  auto table = catalog.table(schema.name);
  for (const auto& r : records) table->ingest(r);
}

void normalize_contributions(AblationResult& result) {
  double sum = 0.0;
  for (auto& row : result.flags) {
    row.clamped = row.marginal_us < 0.0;
    sum += std::max(row.marginal_us, 0.0);
  }
  for (auto& row : result.flags) {
    row.percent = sum > 0.0 ? std::max(row.marginal_us, 0.0) / sum * 100.0
                            : 100.0 / static_cast<double>(result.flags.size());
  }
}

AblationResult run_ablation(const WorkloadConfig& config, const serving::EngineConfig& base) {
  config.validate();
  const TableSchema schema = reference_schema();
  const auto records = generate(config);
  auto catalog = std::make_shared<Catalog>(base.mmax_bytes, base.bucket_size);
  load(*catalog, schema, records);
  auto registry = std::make_shared<MlRegistry>();
  const auto anchors = sample_anchors(records, 0, 1, config.anchor_pool, config.seed + 1);
  const std::string sql = reference_sql(config);

  AblationResult result;
  auto run = [&](const std::string& name, const plan::OptimizationFlags& flags) {
    serving::EngineConfig ec = base;
    ec.flags = flags;
    ec.workers = config.parallel;
    ec.cmax = std::max(ec.cmax, config.parallel);
    auto engine = std::make_shared<serving::Engine>(ec, catalog, registry);
    engine->deploy(kDeployment, sql);
    BenchReport rep = run_load(in_process(engine, kDeployment), anchors, config, name, engine.get());
    AblationRow row;
    row.name = name;
    row.flags = flags.to_string();
    row.latency_us = rep.mean_us;
    row.p50_us = rep.p50_us;
    row.qps = rep.qps;
    rep.samples.clear();
    rep.samples.shrink_to_fit();
    result.reports.push_back(std::move(rep));
    return row;
  };

  result.baseline = run("baseline", plan::OptimizationFlags::all_off());
  result.full = run("full", plan::OptimizationFlags::all_on());
  for (std::size_t i = 0; i < 5; ++i) {
    plan::OptimizationFlags f = plan::OptimizationFlags::all_on();
    f[i] = false;
    AblationRow row = run(plan::OptimizationFlags::kNames[i], f);
    row.marginal_us = row.latency_us - result.full.latency_us;
    result.flags.push_back(std::move(row));
  }
  normalize_contributions(result);
  result.speedup = result.full.latency_us > 0 ? result.baseline.latency_us / result.full.latency_us
                                              : 0.0;
  result.coherent = result.full.latency_us <= result.baseline.latency_us;
  return result;
}

// ---------------------------------------------------------------------------
// Model checks

bool ModelCheck::ok() const {
  if (!additivity_ok || !parts_within_total) return false;
  for (const auto& t : throughput) {
    if (!t.skipped && !t.ok) return false;
  }
  return true;
}

std::string ModelCheck::summary() const {
  std::string out = "latency additivity: sum(parse+plan+exec)/sum(total) = " +
                    fixed(additivity_ratio, 4) + (additivity_ok ? " ok" : " FAIL") +
                    "; parts within total: " + (parts_within_total ? "ok" : "FAIL") + "\n";
  for (const auto& t : throughput) {
    out += "throughput " + t.label + ": measured " + fixed(t.measured, 1) + " qps, P/L_p50 " +
           fixed(t.predicted, 1) + " qps, error " + fixed(t.relative_error, 3);
    out += t.skipped ? " (saturated, skipped)\n" : (t.ok ? " ok\n" : " FAIL\n");
  }
  return out;
}

ModelCheck validate_models(std::span<const BenchReport> reports) {
  std::vector<std::size_t> ps;
  for (const auto& r : reports) ps.push_back(r.parallel);
  std::sort(ps.begin(), ps.end());
  ps.erase(std::unique(ps.begin(), ps.end()), ps.end());
  if (ps.size() < 2) {
    throw Error(ErrorCode::kInsufficientData, "model check needs runs at two or more client counts");
  }
  ModelCheck mc;
  double parts = 0, total = 0;
  mc.parts_within_total = true;
  for (const auto& r : reports) {
    for (const auto& s : r.samples) {
      parts += static_cast<double>(s.server.parts_ns());
      total += static_cast<double>(s.server.total_ns);
      if (s.server.parts_ns() > s.server.total_ns) mc.parts_within_total = false;
    }
  }
  mc.additivity_ratio = total > 0 ? parts / total : 0.0;
  mc.additivity_ok = total > 0 && parts >= 0.85 * total;
  for (const auto& r : reports) {
    ModelCheck::Throughput t;
    t.label = r.label;
    t.measured = r.qps;
    t.predicted = r.predicted_qps;
    t.relative_error = t.predicted > 0 ? std::abs(t.measured - t.predicted) / t.predicted : 1.0;
    t.skipped = r.saturated;
    t.ok = t.relative_error <= 0.3;
    mc.throughput.push_back(t);
  }
  return mc;
}

// ---------------------------------------------------------------------------
// Reports

std::string report_csv_header() {
  return "label,flags,parallel,requests,errors,seconds,qps,predicted_qps,p50_us,p95_us,p99_us,"
         "mean_us,parse_us,plan_us,exec_us,total_us,inflight_high_water,cmax,bytes_used,"
         "saturated";
}

std::string report_csv(std::span<const BenchReport> reports) {
  std::string out = report_csv_header() + "\n";
  for (const auto& r : reports) {
    out += formats::csv_escape(r.label) + "," + formats::csv_escape(r.flags) + "," +
           std::to_string(r.parallel) + "," + std::to_string(r.requests) + "," +
           std::to_string(r.errors) + "," + fixed(r.seconds) + "," + fixed(r.qps, 1) + "," +
           fixed(r.predicted_qps, 1) + "," + fixed(r.p50_us) + "," + fixed(r.p95_us) + "," +
           fixed(r.p99_us) + "," + fixed(r.mean_us) + "," + fixed(r.parse_us) + "," +
           fixed(r.plan_us) + "," + fixed(r.exec_us) + "," + fixed(r.total_us) + "," +
           std::to_string(r.inflight_high_water) + "," + std::to_string(r.cmax) + "," +
           std::to_string(r.bytes_used) + "," + (r.saturated ? "1" : "0") + "\n";
  }
  return out;
}

std::string report_text(std::span<const BenchReport> reports) {
  char line[256];
  std::string out;
  std::snprintf(line, sizeof(line), "%-16s %3s %10s %10s %10s %10s %10s %10s\n", "run", "P", "qps",
                "p50_us", "p95_us", "p99_us", "exec_us", "total_us");
  out += line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof(line), "%-16s %3zu %10.1f %10.3f %10.3f %10.3f %10.3f %10.3f\n",
                  r.label.c_str(), r.parallel, r.qps, r.p50_us, r.p95_us, r.p99_us, r.exec_us,
                  r.total_us);
    out += line;
  }
  out += "reference point: ~17k QPS at ~4 ms (context only, not asserted)\n";
  return out;
}

std::string ablation_csv(const AblationResult& result) {
  std::string out = "name,flags,latency_us,p50_us,qps,marginal_us,percent,clamped\n";
  auto row = [&](const AblationRow& r, bool flag_row) {
    out += r.name + "," + formats::csv_escape(r.flags) + "," + fixed(r.latency_us) + "," +
           fixed(r.p50_us) + "," + fixed(r.qps, 1) + "," +
           (flag_row ? fixed(r.marginal_us) : std::string()) + "," +
           (flag_row ? fixed(r.percent, 2) : std::string()) + "," +
           (flag_row ? (r.clamped ? "1" : "0") : "") + "\n";
  };
  row(result.baseline, false);
  row(result.full, false);
  for (const auto& r : result.flags) row(r, true);
  return out;
}

std::string contribution_csv(const AblationResult& result) {
  std::string out = "flag,marginal_us,percent\n";
  for (const auto& r : result.flags) {
    out += r.name + "," + fixed(r.marginal_us) + "," + fixed(r.percent, 2) + "\n";
  }
  return out;
}

std::string ablation_text(const AblationResult& result) {
  char line[256];
  std::string out;
  std::snprintf(line, sizeof(line), "%-16s %12s %12s %12s %9s\n", "config", "mean_us", "p50_us",
                "marginal_us", "percent");
  out += line;
  auto emit = [&](const AblationRow& r, bool flag_row) {
    if (flag_row) {
      std::snprintf(line, sizeof(line), "%-16s %12.3f %12.3f %12.3f %8.2f%%%s\n", r.name.c_str(),
                    r.latency_us, r.p50_us, r.marginal_us, r.percent, r.clamped ? " (clamped)" : "");
    } else {
      std::snprintf(line, sizeof(line), "%-16s %12.3f %12.3f\n", r.name.c_str(), r.latency_us,
                    r.p50_us);
    }
    out += line;
  };
  emit(result.baseline, false);
  emit(result.full, false);
  for (const auto& r : result.flags) emit(r, true);
  out += "speedup (baseline/full): " + fixed(result.speedup, 2) + "x" +
         (result.coherent ? "" : "  INCOHERENT: full slower than baseline") + "\n";
  out += "reference split 35/25/20 (context only, not asserted)\n";
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
  f << content;
  if (!f) throw Error(ErrorCode::kIoError, "write failed: " + path.string());
}

void stream(serving::Client& client, const TableSchema& schema, std::span<const Record> records,
            std::size_t records_per_batch) {
  json columns = json::array();
  for (const auto& c : schema.columns) {
    columns.push_back({{"name", c.name}, {"type", to_string(c.type)}});
  }
  const json created = client.call({{"op", "create_table"},
                                    {"id", 0},
                                    {"payload",
                                     {{"name", schema.name},
                                      {"columns", columns},
                                      {"key", schema.key_column},
                                      {"ts", schema.ts_column}}}});
  if (created.value("status", "") != "ok" &&
      created["error"].value("code", "") != "duplicate_table") {
    throw Error(ErrorCode::kIoError, "create_table failed: " + created.dump());
  }
  std::int64_t id = 1;
  for (std::size_t start = 0; start < records.size(); start += records_per_batch) {
    const std::size_t end = std::min(records.size(), start + records_per_batch);
    json batch = json::array();
    for (std::size_t i = start; i < end; ++i) {
      json obj = json::object();
      for (std::size_t c = 0; c < schema.columns.size(); ++c) {
        obj[schema.columns[c].name] = formats::value_to_json(records[i].values[c]);
      }
      batch.push_back(std::move(obj));
    }
    const json resp = client.call(
        {{"op", "ingest"}, {"id", id++}, {"payload", {{"table", schema.name}, {"records", batch}}}});
    if (resp.value("status", "") != "ok") {
      throw Error(ErrorCode::kIoError, "ingest failed: " + resp.dump());
    }
  }
}

}  // namespace rtfe::bench
