#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "json.hpp"
#include "rtfe/admission.hpp"
#include "rtfe/exec.hpp"
#include "rtfe/ml.hpp"
#include "rtfe/plan_cache.hpp"
#include "rtfe/planner.hpp"
#include "rtfe/storage.hpp"

namespace rtfe::serving {

struct EngineConfig {
  std::string host = "127.0.0.1";
  std::uint16_t port = 7070;
  std::size_t workers = 8;  // P, execution lanes
  std::size_t cmax = 64;    // max in-flight requests
  std::uint64_t mmax_bytes = std::uint64_t{1} << 30;
  std::size_t queue_depth = 128;
  std::chrono::milliseconds queue_timeout{100};
  plan::OptimizationFlags flags;
  std::size_t plan_cache_capacity = plan::kDefaultPlanCacheCapacity;
  std::size_t bucket_size = preagg::kDefaultBucketSize;
  bool strict_w = false;
  std::string models;  // model file loaded at startup, optional

  /// Throws kInvalidConfig (P >= 1, C_max >= 1, M_max > 0, ...).
  void validate() const;

  /// Overlays the keys present in `obj`; unknown keys throw kInvalidConfig.
  void apply_json(const nlohmann::json& obj);
  static EngineConfig from_file(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

/// Caps concurrent requests at C_max with a bounded, timed wait queue. The
/// byte budget M_max is enforced by the catalog's MemoryAccount.
class Governor {
 public:
  Governor(std::size_t cmax, std::size_t queue_depth, std::chrono::milliseconds timeout)
      : gate_(cmax, queue_depth, timeout) {}

  /// Throws kAdmissionTimeout when the queue is full or the wait times out.
  AdmissionGate::Permit admit();

  std::size_t cmax() const { return gate_.limit(); }
  std::size_t in_flight() const { return gate_.in_flight(); }
  std::size_t high_water() const { return gate_.high_water(); }
  std::size_t queued() const { return gate_.queued(); }
  std::uint64_t rejected() const { return rejected_.load(); }
  void reset_high_water() { gate_.reset_high_water(); }

 private:
  AdmissionGate gate_;
  std::atomic<std::uint64_t> rejected_{0};
};

struct Deployment {
  std::string name;
  std::string source;  // normalized statement text
  std::shared_ptr<const plan::PhysicalPlan> plan;  // null when plan caching is off
  std::int64_t created_ns = 0;
};

struct Compiled {
  std::shared_ptr<const plan::PhysicalPlan> plan;
  exec::LatencyBreakdown latency;  // parse and plan terms
  bool cache_hit = false;
};

struct RequestResult {
  exec::FeatureRow row;
  exec::LatencyBreakdown latency;
};

struct BatchQueryResult {
  exec::BatchResult batch;
  exec::LatencyBreakdown latency;
};

struct EngineStats {
  std::map<std::string, TableStats> tables;
  std::uint64_t memory_used = 0;
  std::uint64_t memory_limit = 0;
  std::size_t in_flight = 0;
  std::size_t in_flight_high_water = 0;
  std::size_t cmax = 0;
  std::uint64_t rejected = 0;
  std::size_t lanes = 0;
  std::size_t lane_high_water = 0;
  plan::PlanCacheStats plan_cache;
  std::size_t deployments = 0;
  std::string flags;
};

/// The in-process engine behind the wire: catalog, compiler with plan cache,
/// deployments, governor and execution lanes. Engines may share a catalog.
class Engine {
 public:
  explicit Engine(EngineConfig config, std::shared_ptr<Catalog> catalog = nullptr,
                  std::shared_ptr<MlRegistry> registry = nullptr);

  const EngineConfig& config() const { return config_; }
  Catalog& catalog() { return *catalog_; }
  std::shared_ptr<Catalog> shared_catalog() const { return catalog_; }
  MlRegistry& registry() { return *registry_; }
  std::shared_ptr<MlRegistry> shared_registry() const { return registry_; }
  Governor& governor() { return governor_; }
  exec::LanePool& lanes() { return lanes_; }
  plan::PlanCache& plan_cache() { return cache_; }

  std::string create_table(TableSchema schema) { return catalog_->create_table(std::move(schema)); }
  IngestAck ingest(std::string_view table, const Record& record) {
    return catalog_->ingest(table, record);
  }

  /// Parses and plans `sql`, going through the plan cache when enabled.
  Compiled compile(std::string_view sql);

  /// Ad-hoc statement evaluated at one anchor.
  RequestResult query_request(std::string_view sql, const Key& key, std::int64_t t);
  /// Ad-hoc statement evaluated over the whole table.
  BatchQueryResult query_batch(std::string_view sql);

  /// Compiles and pins `sql` under `name`. A DEPLOY statement carries its
  /// own name, which must agree with `name` when both are given. Throws
  /// kDuplicateDeployment and any parse/plan error.
  Deployment deploy(std::string name, std::string_view sql);
  RequestResult request(std::string_view deployment, const Key& key, std::int64_t t);
  std::shared_ptr<const Deployment> find_deployment(std::string_view name) const;

  EngineStats stats() const;

 private:
  Compiled compile_uncached(std::string_view sql, std::string normalized);
  RequestResult run_request(const plan::PhysicalPlan& plan, const Key& key, std::int64_t t);

  EngineConfig config_;
  std::shared_ptr<Catalog> catalog_;
  std::shared_ptr<MlRegistry> registry_;
  Governor governor_;
  exec::LanePool lanes_;
  plan::PlanCache cache_;
  mutable std::shared_mutex deploy_mu_;
  std::map<std::string, std::shared_ptr<const Deployment>, std::less<>> deployments_;
};

/// Newline-delimited JSON protocol over an Engine. Each input line yields
/// exactly one response line; malformed input yields an error response.
class Service {
 public:
  explicit Service(std::shared_ptr<Engine> engine) : engine_(std::move(engine)) {}

  std::string handle_line(std::string_view line);
  nlohmann::json handle(const nlohmann::json& message);

  Engine& engine() { return *engine_; }

 private:
  std::shared_ptr<Engine> engine_;
};

/// TCP front end: one reader thread per connection, messages on a
/// connection answered in order.
class Server {
 public:
  Server(std::shared_ptr<Engine> engine, std::string host, std::uint16_t port);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts accepting. Throws kBindFailure.
  void start();
  /// Stops accepting, lets connections finish their current message, joins.
  void stop();
  std::uint16_t port() const { return port_; }
  std::size_t connections_served() const { return served_.load(); }

 private:
  void accept_loop();
  void serve_connection(int fd);

  Service service_;
  std::string host_;
  std::uint16_t port_;
  int listen_fd_ = -1;
  std::atomic<bool> running_{false};
  std::atomic<std::size_t> served_{0};
  std::thread acceptor_;
  std::mutex conn_mu_;
  std::vector<int> conn_fds_;
  std::vector<std::thread> conn_threads_;
};

/// Blocking line client for the wire protocol.
class Client {
 public:
  Client(const std::string& host, std::uint16_t port);  // throws kIoError
  ~Client();
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  void send_line(std::string_view line);
  std::string read_line();
  nlohmann::json call(const nlohmann::json& message);

 private:
  int fd_ = -1;
  std::string buffer_;
};

/// JSON integer or string -> key, or nullopt.
std::optional<Key> key_from_json(const nlohmann::json& v);
nlohmann::json latency_json(const exec::LatencyBreakdown& l);
nlohmann::json row_json(const exec::FeatureRow& row);

}  // namespace rtfe::serving
