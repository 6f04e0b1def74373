#include "rtfe/serving.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>

#include "rtfe/clock.hpp"
#include "rtfe/error.hpp"
#include "rtfe/formats.hpp"
#include "rtfe/sql.hpp"

namespace rtfe::serving {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

void EngineConfig::validate() const {
  auto bad = [](const std::string& msg) { throw Error(ErrorCode::kInvalidConfig, msg); };
  if (workers < 1) bad("workers must be >= 1");
  if (cmax < 1) bad("cmax must be >= 1");
  if (mmax_bytes == 0) bad("mmax_bytes must be > 0");
  if (bucket_size < 1) bad("bucket_size must be >= 1");
  if (queue_timeout.count() < 0) bad("queue_timeout_ms must be >= 0");
}

namespace {

plan::OptimizationFlags flags_from_json(const json& v) {
  if (v.is_string()) return plan::OptimizationFlags::parse(v.get<std::string>());
  plan::OptimizationFlags f = plan::OptimizationFlags::all_off();
  if (v.is_array()) {
    std::string list;
    for (const auto& x : v) {
      if (!list.empty()) list += ',';
      list += x.get<std::string>();
    }
    return plan::OptimizationFlags::parse(list);
  }
  if (v.is_object()) {
    f = plan::OptimizationFlags::all_on();
    for (const auto& [name, on] : v.items()) {
      bool found = false;
      for (std::size_t i = 0; i < 5; ++i) {
        if (name == plan::OptimizationFlags::kNames[i]) {
          f[i] = on.get<bool>();
          found = true;
        }
      }
      if (!found) throw Error(ErrorCode::kInvalidConfig, "unknown optimization flag '" + name + "'");
    }
    return f;
  }
  throw Error(ErrorCode::kInvalidConfig, "flags must be a string, list or object");
}

}  // namespace

void EngineConfig::apply_json(const json& obj) {
  if (!obj.is_object()) throw Error(ErrorCode::kInvalidConfig, "config must be a JSON object");
  try {
    for (const auto& [k, v] : obj.items()) {
      if (k == "host") host = v.get<std::string>();
      else if (k == "port") port = v.get<std::uint16_t>();
      else if (k == "workers") workers = v.get<std::size_t>();
      else if (k == "cmax") cmax = v.get<std::size_t>();
      else if (k == "mmax_bytes") mmax_bytes = v.get<std::uint64_t>();
      else if (k == "queue_depth") queue_depth = v.get<std::size_t>();
      else if (k == "queue_timeout_ms") queue_timeout = std::chrono::milliseconds(v.get<std::int64_t>());
      else if (k == "flags") flags = flags_from_json(v);
      else if (k == "plan_cache_capacity") plan_cache_capacity = v.get<std::size_t>();
      else if (k == "bucket_size") bucket_size = v.get<std::size_t>();
      else if (k == "strict_w") strict_w = v.get<bool>();
      else if (k == "models") models = v.get<std::string>();
      else throw Error(ErrorCode::kInvalidConfig, "unknown config key '" + k + "'");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("bad config value: ") + e.what());
  }
}

EngineConfig EngineConfig::from_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::kIoError, "cannot read config " + path.string());
  json obj;
  try {
    obj = json::parse(f);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
  EngineConfig c;
  c.apply_json(obj);
  return c;
}

json EngineConfig::to_json() const {
  return {{"host", host},
          {"port", port},
          {"workers", workers},
          {"cmax", cmax},
          {"mmax_bytes", mmax_bytes},
          {"queue_depth", queue_depth},
          {"queue_timeout_ms", queue_timeout.count()},
          {"flags", flags.to_string()},
          {"plan_cache_capacity", plan_cache_capacity},
          {"bucket_size", bucket_size},
          {"strict_w", strict_w},
          {"models", models}};
}

// ---------------------------------------------------------------------------
// Governor

AdmissionGate::Permit Governor::admit() {
  AdmissionGate::Result r;
  auto permit = gate_.enter(&r);
  if (!permit) {
    rejected_.fetch_add(1);
    throw Error(ErrorCode::kAdmissionTimeout, r == AdmissionGate::Result::kQueueFull
                                                  ? "admission queue is full"
                                                  : "timed out waiting for admission");
  }
  return permit;
}

// ---------------------------------------------------------------------------
// Engine

Engine::Engine(EngineConfig config, std::shared_ptr<Catalog> catalog,
               std::shared_ptr<MlRegistry> registry)
    : config_((config.validate(), std::move(config))),
      catalog_(catalog ? std::move(catalog)
                       : std::make_shared<Catalog>(config_.mmax_bytes, config_.bucket_size)),
      registry_(std::move(registry)),
      governor_(config_.cmax, config_.queue_depth, config_.queue_timeout),
      lanes_(config_.flags.parallel_exec ? config_.workers : 1),
      cache_(config_.plan_cache_capacity) {
  if (!registry_) {
    registry_ = std::make_shared<MlRegistry>();
    if (!config_.models.empty()) registry_->load_file(config_.models);
  }
}

Compiled Engine::compile_uncached(std::string_view sql, std::string normalized) {
  Compiled c;
  const sql::ParseResult parsed = sql::parse(sql);
  c.latency.parse_ns = parsed.parse_ns;
  Stopwatch sw;
  const plan::LogicalPlan logical =
      plan::build_logical(parsed.ast, *catalog_, *registry_, std::move(normalized));
  c.plan = plan::optimize(logical, config_.flags, config_.strict_w).plan;
  c.latency.plan_ns = sw.elapsed_ns();
  return c;
}

Compiled Engine::compile(std::string_view sql) {
  std::string normalized = sql::normalize(sql);
  if (config_.flags.plan_cache) {
    if (auto plan = cache_.get(normalized)) {
      Compiled c;
      c.plan = std::move(plan);
      c.cache_hit = true;
      return c;
    }
  }
  Compiled c = compile_uncached(sql, normalized);
  if (config_.flags.plan_cache) cache_.put(normalized, c.plan);
  return c;
}

RequestResult Engine::run_request(const plan::PhysicalPlan& plan, const Key& key, std::int64_t t) {
  RequestResult r;
  Stopwatch sw;
  {
    auto lane = lanes_.enter();
    r.row = exec::execute_request(plan, key, t);
  }
  r.latency.exec_ns = sw.elapsed_ns();
  return r;
}

RequestResult Engine::query_request(std::string_view sql, const Key& key, std::int64_t t) {
  Stopwatch queued;
  auto permit = governor_.admit();
  const std::int64_t queue_ns = queued.elapsed_ns();
  Stopwatch sw;
  Compiled c = compile(sql);
  RequestResult r = run_request(*c.plan, key, t);
  r.latency.parse_ns = c.latency.parse_ns;
  r.latency.plan_ns = c.latency.plan_ns;
  r.latency.total_ns = sw.elapsed_ns();
  r.latency.queue_ns = queue_ns;
  return r;
}

BatchQueryResult Engine::query_batch(std::string_view sql) {
  Stopwatch queued;
  auto permit = governor_.admit();
  const std::int64_t queue_ns = queued.elapsed_ns();
  Stopwatch sw;
  Compiled c = compile(sql);
  BatchQueryResult r;
  r.batch = exec::execute_batch(*c.plan, lanes_);
  r.latency.parse_ns = c.latency.parse_ns;
  r.latency.plan_ns = c.latency.plan_ns;
  r.latency.exec_ns = r.batch.latency.exec_ns;
  r.latency.total_ns = sw.elapsed_ns();
  r.latency.queue_ns = queue_ns;
  return r;
}

Deployment Engine::deploy(std::string name, std::string_view sql) {
  const sql::ParseResult parsed = sql::parse(sql);
  if (parsed.ast.kind == sql::StatementKind::kDeploy) {
    const std::string& stated = parsed.ast.deploy_name->name;
    if (!name.empty() && name != stated) {
      throw Error(ErrorCode::kMalformed,
                  "deployment name '" + name + "' does not match statement name '" + stated + "'");
    }
    name = stated;
  }
  if (name.empty()) throw Error(ErrorCode::kMalformed, "deployment needs a name");
  if (find_deployment(name)) {
    throw Error(ErrorCode::kDuplicateDeployment, "deployment '" + name + "' already exists");
  }
  std::string normalized = sql::normalize(sql);
  const plan::LogicalPlan logical =
      plan::build_logical(parsed.ast, *catalog_, *registry_, normalized);
  auto plan = plan::optimize(logical, config_.flags, config_.strict_w).plan;

  auto dep = std::make_shared<Deployment>();
  dep->name = name;
  dep->source = std::move(normalized);
  dep->created_ns = now_ns();
  if (config_.flags.plan_cache) dep->plan = plan;
  {
    std::unique_lock lock(deploy_mu_);
    if (deployments_.count(name)) {
      throw Error(ErrorCode::kDuplicateDeployment, "deployment '" + name + "' already exists");
    }
    if (config_.flags.plan_cache) cache_.pin(name, plan);
    deployments_.emplace(name, dep);
  }
  return *dep;
}

std::shared_ptr<const Deployment> Engine::find_deployment(std::string_view name) const {
  std::shared_lock lock(deploy_mu_);
  auto it = deployments_.find(name);
  return it == deployments_.end() ? nullptr : it->second;
}

RequestResult Engine::request(std::string_view deployment, const Key& key, std::int64_t t) {
  Stopwatch queued;
  auto permit = governor_.admit();
  const std::int64_t queue_ns = queued.elapsed_ns();
  Stopwatch sw;
  std::shared_ptr<const plan::PhysicalPlan> plan;
  Compiled c;
  if (config_.flags.plan_cache) plan = cache_.get_pinned(deployment);
  if (!plan) {
    auto dep = find_deployment(deployment);
    if (!dep) {
      throw Error(ErrorCode::kUnknownDeployment,
                  "no deployment named '" + std::string(deployment) + "'");
    }
    c = compile_uncached(dep->source, dep->source);
    plan = c.plan;
  }
  RequestResult r = run_request(*plan, key, t);
  r.latency.parse_ns = c.latency.parse_ns;
  r.latency.plan_ns = c.latency.plan_ns;
  r.latency.total_ns = sw.elapsed_ns();
  r.latency.queue_ns = queue_ns;
  return r;
}

EngineStats Engine::stats() const {
  EngineStats s;
  for (const auto& name : catalog_->table_names()) s.tables[name] = catalog_->snapshot_stats(name);
  s.memory_used = catalog_->memory().used();
  s.memory_limit = catalog_->memory().limit();
  s.in_flight = governor_.in_flight();
  s.in_flight_high_water = governor_.high_water();
  s.cmax = governor_.cmax();
  s.rejected = governor_.rejected();
  s.lanes = lanes_.lanes();
  s.lane_high_water = lanes_.high_water();
  s.plan_cache = cache_.stats();
  {
    std::shared_lock lock(deploy_mu_);
    s.deployments = deployments_.size();
  }
  s.flags = config_.flags.to_string();
  return s;
}

// ---------------------------------------------------------------------------
// Wire helpers

std::optional<Key> key_from_json(const json& v) {
  if (v.is_number_integer()) return Key{v.get<std::int64_t>()};
  if (v.is_string()) return Key{v.get<std::string>()};
  return std::nullopt;
}

json latency_json(const exec::LatencyBreakdown& l) {
  return {{"parse_us", l.parse_us()}, {"plan_us", l.plan_us()},   {"exec_us", l.exec_us()},
          {"total_us", l.total_us()}, {"parse_ns", l.parse_ns},   {"plan_ns", l.plan_ns},
          {"exec_ns", l.exec_ns},     {"total_ns", l.total_ns},   {"queue_ns", l.queue_ns}};
}

namespace {

json value_json(const Value& v) {
  if (const auto* d = std::get_if<double>(&v)) {
    return std::isfinite(*d) ? json(*d) : json(nullptr);
  }
  return formats::value_to_json(v);
}

json key_json(const Key& k) { return std::visit([](const auto& x) { return json(x); }, k); }

}  // namespace

json row_json(const exec::FeatureRow& row) {
  json values = json::array();
  for (const auto& v : row.values) values.push_back(value_json(v));
  return {{"key", key_json(row.key)},
          {"ts", row.ts},
          {"columns", row.names ? json(*row.names) : json::array()},
          {"values", std::move(values)}};
}

namespace {

const json& field(const json& payload, const char* name) {
  auto it = payload.find(name);
  if (it == payload.end()) {
    throw Error(ErrorCode::kMalformed, std::string("missing field '") + name + "'");
  }
  return *it;
}

std::string string_field(const json& payload, const char* name) {
  const json& v = field(payload, name);
  if (!v.is_string()) {
    throw Error(ErrorCode::kMalformed, std::string("field '") + name + "' must be a string");
  }
  return v.get<std::string>();
}

std::int64_t int_field(const json& payload, const char* name) {
  const json& v = field(payload, name);
  if (!v.is_number_integer()) {
    throw Error(ErrorCode::kMalformed, std::string("field '") + name + "' must be an integer");
  }
  return v.get<std::int64_t>();
}

Key key_field(const json& payload) {
  auto key = key_from_json(field(payload, "key"));
  if (!key) throw Error(ErrorCode::kMalformed, "field 'key' must be an integer or string");
  return *key;
}

TableSchema schema_from_json(const json& p) {
  TableSchema schema;
  schema.name = string_field(p, "name");
  const json& cols = field(p, "columns");
  if (!cols.is_array()) throw Error(ErrorCode::kMalformed, "field 'columns' must be a list");
  for (const auto& c : cols) {
    if (!c.is_object()) throw Error(ErrorCode::kMalformed, "each column must be an object");
    ColumnDef def;
    def.name = string_field(c, "name");
    const std::string type = string_field(c, "type");
    const auto t = parse_column_type(type);
    if (!t) throw Error(ErrorCode::kInvalidSchema, "unknown column type '" + type + "'");
    def.type = *t;
    schema.columns.push_back(std::move(def));
  }
  schema.key_column = string_field(p, "key");
  schema.ts_column = string_field(p, "ts");
  return schema;
}

json stats_json(const EngineStats& s) {
  json tables = json::object();
  for (const auto& [name, t] : s.tables) {
    tables[name] = {{"row_count", t.row_count}, {"key_count", t.key_count},
                    {"bytes_used", t.bytes_used}};
  }
  return {{"tables", tables},
          {"memory", {{"used", s.memory_used}, {"limit", s.memory_limit}}},
          {"governor",
           {{"in_flight", s.in_flight},
            {"high_water", s.in_flight_high_water},
            {"cmax", s.cmax},
            {"rejected", s.rejected}}},
          {"lanes", {{"count", s.lanes}, {"high_water", s.lane_high_water}}},
          {"plan_cache",
           {{"hits", s.plan_cache.hits},
            {"misses", s.plan_cache.misses},
            {"size", s.plan_cache.size},
            {"pinned", s.plan_cache.pinned}}},
          {"deployments", s.deployments},
          {"flags", s.flags}};
}

json error_json(const Error& e) {
  json err = {{"code", wire_code(e.code())}, {"message", e.what()}};
  if (e.has_offset()) err["offset"] = e.offset();
  if (!e.expected().empty()) err["expected"] = e.expected();
  return err;
}

}  // namespace

json Service::handle(const json& message) {
  json resp = {{"id", nullptr}};
  if (message.is_object()) {
    if (auto it = message.find("id"); it != message.end()) resp["id"] = *it;
  }
  try {
    if (!message.is_object()) throw Error(ErrorCode::kMalformed, "message must be a JSON object");
    auto op_it = message.find("op");
    if (op_it == message.end() || !op_it->is_string()) {
      throw Error(ErrorCode::kMalformed, "message needs a string 'op'");
    }
    const std::string op = op_it->get<std::string>();
    json payload = json::object();
    if (auto it = message.find("payload"); it != message.end() && !it->is_null()) {
      if (!it->is_object()) throw Error(ErrorCode::kMalformed, "'payload' must be an object");
      payload = *it;
    }
    Engine& engine = *engine_;
    json data;
    std::optional<exec::LatencyBreakdown> latency;

    if (op == "ping") {
      data = {{"pong", true}};
    } else if (op == "create_table") {
      data = {{"table", engine.create_table(schema_from_json(payload))}};
    } else if (op == "ingest") {
      const std::string table_name = string_field(payload, "table");
      auto table = engine.catalog().table(table_name);
      if (auto it = payload.find("records"); it != payload.end()) {
        if (!it->is_array()) throw Error(ErrorCode::kMalformed, "'records' must be a list");
        std::uint64_t first = 0, last = 0;
        std::size_t n = 0;
        for (const auto& obj : *it) {
          if (!obj.is_object()) throw Error(ErrorCode::kMalformed, "each record must be an object");
          try {
            const auto ack = table->ingest(formats::record_from_json(table->schema(), obj));
            if (n == 0) first = ack.seq;
            last = ack.seq;
            ++n;
          } catch (const Error& e) {
            throw Error(e.code(), "record " + std::to_string(n) + ": " + e.what());
          }
        }
        data = {{"count", n}, {"first_seq", first}, {"last_seq", last}};
      } else {
        const json& obj = field(payload, "record");
        if (!obj.is_object()) throw Error(ErrorCode::kMalformed, "'record' must be an object");
        const auto ack = table->ingest(formats::record_from_json(table->schema(), obj));
        data = {{"seq", ack.seq}};
      }
    } else if (op == "query") {
      const std::string sql = string_field(payload, "sql");
      if (payload.contains("key")) {
        auto r = engine.query_request(sql, key_field(payload), int_field(payload, "t"));
        data = row_json(r.row);
        latency = r.latency;
      } else {
        auto r = engine.query_batch(sql);
        json columns = {"key", "ts"};
        if (r.batch.names) {
          for (const auto& n : *r.batch.names) columns.push_back(n);
        }
        json rows = json::array();
        for (const auto& row : r.batch.rows) {
          json out = {key_json(row.key), row.ts};
          for (const auto& v : row.values) out.push_back(value_json(v));
          rows.push_back(std::move(out));
        }
        data = {{"columns", std::move(columns)}, {"rows", std::move(rows)}};
        latency = r.latency;
      }
    } else if (op == "deploy") {
      std::string name;
      if (auto it = payload.find("name"); it != payload.end()) {
        if (!it->is_string()) throw Error(ErrorCode::kMalformed, "field 'name' must be a string");
        name = it->get<std::string>();
      }
      Stopwatch sw;
      const Deployment d = engine.deploy(name, string_field(payload, "sql"));
      data = {{"name", d.name}};
      exec::LatencyBreakdown l;
      l.total_ns = sw.elapsed_ns();
      latency = l;
    } else if (op == "request") {
      auto r = engine.request(string_field(payload, "name"), key_field(payload),
                              int_field(payload, "t"));
      data = row_json(r.row);
      latency = r.latency;
    } else if (op == "stats") {
      data = stats_json(engine.stats());
    } else {
      throw Error(ErrorCode::kMalformed, "unknown op '" + op + "'");
    }
    resp["status"] = "ok";
    resp["data"] = std::move(data);
    if (latency) resp["latency"] = latency_json(*latency);
  } catch (const Error& e) {
    resp["status"] = "error";
    resp["error"] = error_json(e);
  } catch (const json::exception& e) {
    resp["status"] = "error";
    resp["error"] = {{"code", "malformed"}, {"message", e.what()}};
  } catch (const std::exception& e) {
    resp["status"] = "error";
    resp["error"] = {{"code", "internal"}, {"message", e.what()}};
  }
  return resp;
}

std::string Service::handle_line(std::string_view line) {
  json message;
  try {
    message = json::parse(line);
  } catch (const json::exception& e) {
    json resp = {{"id", nullptr},
                 {"status", "error"},
                 {"error", {{"code", "malformed"}, {"message", std::string("invalid JSON: ") + e.what()}}}};
    return resp.dump(-1, ' ', false, json::error_handler_t::replace);
  }
  return handle(message).dump(-1, ' ', false, json::error_handler_t::replace);
}

// ---------------------------------------------------------------------------
// TCP

namespace {

constexpr std::size_t kMaxLineBytes = 1 << 20;

bool send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

}  // namespace

Server::Server(std::shared_ptr<Engine> engine, std::string host, std::uint16_t port)
    : service_(std::move(engine)), host_(std::move(host)), port_(port) {}

Server::~Server() { stop(); }

void Server::start() {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port_text = std::to_string(port_);
  if (::getaddrinfo(host_.empty() ? nullptr : host_.c_str(), port_text.c_str(), &hints, &res) != 0 ||
      !res) {
    throw Error(ErrorCode::kBindFailure, "cannot resolve " + host_);
  }
  const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) {
    ::freeaddrinfo(res);
    throw Error(ErrorCode::kBindFailure, std::string("socket: ") + std::strerror(errno));
  }
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(fd, res->ai_addr, res->ai_addrlen) != 0 || ::listen(fd, 128) != 0) {
    const std::string why = std::strerror(errno);
    ::freeaddrinfo(res);
    ::close(fd);
    throw Error(ErrorCode::kBindFailure, "cannot bind " + host_ + ":" + port_text + ": " + why);
  }
  ::freeaddrinfo(res);
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  listen_fd_ = fd;
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void Server::accept_loop() {
  while (running_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR || errno == ECONNABORTED) continue;
      return;  // listening socket shut down
    }
    set_nodelay(fd);
    std::lock_guard lock(conn_mu_);
    if (!running_) {
      ::close(fd);
      return;
    }
    conn_fds_.push_back(fd);
    conn_threads_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void Server::serve_connection(int fd) {
  served_.fetch_add(1);
  std::string buffer;
  char chunk[16384];
  bool discarding = false;  // inside an over-long line
  for (;;) {
    const ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));
    std::size_t start = 0;
    bool ok = true;
    for (;;) {
      const std::size_t nl = buffer.find('\n', start);
      if (nl == std::string::npos) break;
      std::string_view line(buffer.data() + start, nl - start);
      start = nl + 1;
      if (discarding) {
        discarding = false;
        continue;
      }
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
      if (!send_all(fd, service_.handle_line(line) + "\n")) {
        ok = false;
        break;
      }
    }
    if (!ok) break;
    buffer.erase(0, start);
    if (buffer.size() > kMaxLineBytes) {
      buffer.clear();
      if (!discarding) {
        discarding = true;
        const std::string resp =
            R"({"id":null,"status":"error","error":{"code":"malformed","message":"message exceeds 1 MiB"}})";
        if (!send_all(fd, resp + "\n")) break;
      }
    }
  }
  std::lock_guard lock(conn_mu_);
  std::erase(conn_fds_, fd);
  ::close(fd);
}

void Server::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  if (acceptor_.joinable()) acceptor_.join();
  ::close(listen_fd_);
  listen_fd_ = -1;
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(conn_mu_);
    for (int fd : conn_fds_) ::shutdown(fd, SHUT_RD);
    threads = std::move(conn_threads_);
  }
  for (auto& t : threads) t.join();
}

Client::Client(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
    throw Error(ErrorCode::kIoError, "cannot resolve " + host);
  }
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd_ < 0 || ::connect(fd_, res->ai_addr, res->ai_addrlen) != 0) {
    const std::string why = std::strerror(errno);
    ::freeaddrinfo(res);
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
    throw Error(ErrorCode::kIoError,
                "cannot connect to " + host + ":" + std::to_string(port) + ": " + why);
  }
  ::freeaddrinfo(res);
  set_nodelay(fd_);
}

Client::~Client() {
  if (fd_ >= 0) ::close(fd_);
}

void Client::send_line(std::string_view line) {
  std::string data(line);
  data += '\n';
  if (!send_all(fd_, data)) throw Error(ErrorCode::kIoError, "send failed");
}

std::string Client::read_line() {
  for (;;) {
    const std::size_t nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    char chunk[16384];
    const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw Error(ErrorCode::kIoError, "connection closed");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

json Client::call(const json& message) {
  send_line(message.dump());
  return json::parse(read_line());
}

}  // namespace rtfe::serving
