#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "rtfe/bench.hpp"
#include "rtfe/error.hpp"
#include "rtfe/exec.hpp"
#include "rtfe/formats.hpp"
#include "rtfe/serving.hpp"
#include "rtfe/sql.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rtfe;

namespace {

TableSchema schema_from_file(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::kIoError, "cannot read " + path.string());
  const json j = json::parse(f);
  TableSchema s;
  s.name = j.value("table", j.value("name", std::string("tx")));
  for (const auto& c : j.at("columns")) {
    const auto type = parse_column_type(c.at("type").get<std::string>());
    if (!type) throw Error(ErrorCode::kInvalidSchema, "unknown column type in " + path.string());
    s.columns.push_back({c.at("name").get<std::string>(), *type});
  }
  s.key_column = j.at("key").get<std::string>();
  s.ts_column = j.at("ts").get<std::string>();
  s.validate();
  return s;
}

// --schema, else the dataset's manifest, else the reference table.
TableSchema resolve_schema(const std::string& schema_path, const fs::path& input) {
  if (!schema_path.empty()) return schema_from_file(schema_path);
  const fs::path manifest = input.string() + ".manifest.json";
  if (!input.empty() && fs::exists(manifest)) return schema_from_file(manifest);
  return bench::reference_schema();
}

std::vector<std::size_t> parse_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoul(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rtfe: real-time SQL feature engine"};
  app.require_subcommand(1);

  // serve
  auto* serve = app.add_subcommand("serve", "Run the NDJSON/TCP service");
  std::string config_path, flags_text, host, models;
  std::uint16_t port = 0;
  std::size_t workers = 0, cmax = 0, queue_depth = 0;
  std::uint64_t mmax = 0;
  std::int64_t queue_timeout_ms = -1;
  serve->add_option("--config", config_path, "JSON config file; flags below override it");
  serve->add_option("--host", host, "Listen address");
  serve->add_option("--port", port, "Listen port (0 picks a free port)");
  serve->add_option("--workers", workers, "Execution lanes P");
  serve->add_option("--cmax", cmax, "Max in-flight requests");
  serve->add_option("--mmax-bytes", mmax, "Memory budget in bytes");
  serve->add_option("--queue-depth", queue_depth, "Admission queue depth");
  serve->add_option("--queue-timeout-ms", queue_timeout_ms, "Admission wait limit");
  serve->add_option("--flags", flags_text, "Enabled optimizations, comma separated, or none/all");
  serve->add_option("--models", models, "ML model file");

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  bench::WorkloadConfig gen_cfg;
  std::string gen_out = "dataset.jsonl";
  gen->add_option("--keys", gen_cfg.keys);
  gen->add_option("--events", gen_cfg.events_per_key, "Events per key");
  gen->add_option("--seed", gen_cfg.seed);
  gen->add_option("--out", gen_out);

  // bench
  auto* bnch = app.add_subcommand("bench", "Closed-loop load against a running service");
  bench::WorkloadConfig bench_cfg;
  std::string bench_host = "127.0.0.1", deployment = bench::kDeployment, bench_out = "report.csv";
  std::string parallel_list = "8";
  std::uint16_t bench_port = 7070;
  bool load_data = false;
  bnch->add_option("--host", bench_host);
  bnch->add_option("--port", bench_port);
  bnch->add_option("--deployment", deployment);
  bnch->add_option("--parallel", parallel_list, "Client counts, comma separated");
  bnch->add_option("--records-per-batch", bench_cfg.records_per_batch);
  bnch->add_option("--seconds", bench_cfg.seconds);
  bnch->add_option("--requests", bench_cfg.requests, "Measured requests per client (overrides seconds)");
  bnch->add_option("--keys", bench_cfg.keys);
  bnch->add_option("--events", bench_cfg.events_per_key);
  bnch->add_option("--window", bench_cfg.window);
  bnch->add_option("--seed", bench_cfg.seed);
  bnch->add_flag("--load", load_data, "Generate, stream and deploy the workload first");
  bnch->add_option("--out", bench_out);

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Leave-one-out ablation over optimization flags");
  bench::WorkloadConfig abl_cfg;
  std::string workload = "ref", abl_out = "ablation.csv";
  bool flags_all = false;
  ablate->add_option("--workload", workload)->check(CLI::IsMember({"ref"}));
  ablate->add_flag("--flags-all", flags_all, "Ablate every flag (the only mode)");
  ablate->add_option("--seconds", abl_cfg.seconds);
  ablate->add_option("--parallel", abl_cfg.parallel);
  ablate->add_option("--out", abl_out);

  // batch
  auto* batch = app.add_subcommand("batch", "Run a feature query over a dataset file");
  std::string batch_sql, batch_input, batch_out = "features.csv", schema_path, batch_flags = "all";
  std::size_t lanes = 1;
  batch->add_option("--sql", batch_sql)->required();
  batch->add_option("--input", batch_input)->required();
  batch->add_option("--schema", schema_path, "Schema JSON (defaults to the dataset manifest)");
  batch->add_option("--lanes", lanes);
  batch->add_option("--flags", batch_flags);
  batch->add_option("--models", models);
  batch->add_option("--out", batch_out, ".csv or .jsonl");

  // explain
  auto* explain = app.add_subcommand("explain", "Print logical and physical plans");
  std::string explain_sql, explain_flags = "all";
  explain->add_option("--sql", explain_sql)->required();
  explain->add_option("--schema", schema_path);
  explain->add_option("--flags", explain_flags);
  explain->add_option("--models", models);

  CLI11_PARSE(app, argc, argv);

  try {
    if (serve->parsed()) {
      serving::EngineConfig cfg;
      if (!config_path.empty()) cfg = serving::EngineConfig::from_file(config_path);
      if (serve->count("--host")) cfg.host = host;
      if (serve->count("--port")) cfg.port = port;
      if (serve->count("--workers")) cfg.workers = workers;
      if (serve->count("--cmax")) cfg.cmax = cmax;
      if (serve->count("--mmax-bytes")) cfg.mmax_bytes = mmax;
      if (serve->count("--queue-depth")) cfg.queue_depth = queue_depth;
      if (serve->count("--queue-timeout-ms")) cfg.queue_timeout = std::chrono::milliseconds(queue_timeout_ms);
      if (serve->count("--flags")) cfg.flags = plan::OptimizationFlags::parse(flags_text);
      if (serve->count("--models")) cfg.models = models;
      cfg.validate();

      sigset_t set;
      sigemptyset(&set);
      sigaddset(&set, SIGINT);
      sigaddset(&set, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &set, nullptr);

      auto engine = std::make_shared<serving::Engine>(cfg);
      serving::Server server(engine, cfg.host, cfg.port);
      server.start();
      std::printf("listening on %s:%u flags=%s\n", cfg.host.c_str(), server.port(),
                  cfg.flags.to_string().c_str());
      std::fflush(stdout);
      int sig = 0;
      sigwait(&set, &sig);
      server.stop();
      return 0;
    }

    if (gen->parsed()) {
      bench::write_dataset(gen_cfg, gen_out);
      std::printf("wrote %zu records to %s\n", gen_cfg.keys * gen_cfg.events_per_key,
                  gen_out.c_str());
      return 0;
    }

    if (bnch->parsed()) {
      const auto counts = parse_list(parallel_list);
      bench_cfg.parallel = counts.empty() ? 8 : counts.front();
      bench_cfg.validate();
      const auto records = bench::generate(bench_cfg);
      if (load_data) {
        serving::Client c(bench_host, bench_port);
        bench::stream(c, bench::reference_schema(), records, bench_cfg.records_per_batch);
        const json resp = c.call({{"op", "deploy"},
                                  {"id", "deploy"},
                                  {"payload", {{"name", deployment}, {"sql", bench::reference_sql(bench_cfg)}}}});
        if (resp.value("status", "") != "ok" &&
            resp["error"].value("code", "") != "duplicate_deployment") {
          throw Error(ErrorCode::kIoError, "deploy failed: " + resp.dump());
        }
      }
      const auto anchors =
          bench::sample_anchors(records, 0, 1, bench_cfg.anchor_pool, bench_cfg.seed + 1);
      std::vector<bench::BenchReport> reports;
      for (std::size_t p : counts) {
        bench::WorkloadConfig cfg = bench_cfg;
        cfg.parallel = p;
        auto rep = bench::run_load(bench::over_tcp(bench_host, bench_port, deployment), anchors,
                                   cfg, "P=" + std::to_string(p));
        serving::Client c(bench_host, bench_port);
        const json st = c.call({{"op", "stats"}, {"id", "stats"}});
        if (st.value("status", "") == "ok") {
          const auto& g = st["data"]["governor"];
          rep.flags = st["data"].value("flags", "");
          rep.inflight_high_water = g.value("high_water", std::size_t{0});
          rep.cmax = g.value("cmax", std::size_t{0});
          rep.bytes_used = st["data"]["memory"].value("used", std::uint64_t{0});
          rep.saturated = rep.cmax > 0 && rep.inflight_high_water >= rep.cmax;
        }
        reports.push_back(std::move(rep));
      }
      bench::write_file(bench_out, bench::report_csv(reports));
      std::cout << bench::report_text(reports);
      try {
        const auto check = bench::validate_models(reports);
        std::cout << check.summary();
        return check.ok() ? 0 : 2;
      } catch (const Error& e) {
        std::cout << "model check skipped: " << e.what() << "\n";
        return 0;
      }
    }

    if (ablate->parsed()) {
      (void)flags_all;
      const auto result = bench::run_ablation(abl_cfg);
      bench::write_file(abl_out, bench::ablation_csv(result));
      fs::path contrib = abl_out;
      contrib.replace_extension(".contrib.csv");
      bench::write_file(contrib, bench::contribution_csv(result));
      std::cout << bench::ablation_text(result);
      return result.coherent ? 0 : 2;
    }

    if (batch->parsed()) {
      const TableSchema schema = resolve_schema(schema_path, batch_input);
      serving::EngineConfig cfg;
      cfg.flags = plan::OptimizationFlags::parse(batch_flags);
      cfg.models = models;
      cfg.workers = std::max<std::size_t>(lanes, 1);
      serving::Engine engine(cfg);
      engine.create_table(schema);
      for (const auto& r : formats::read_records(schema, batch_input)) engine.ingest(schema.name, r);
      const auto result = engine.query_batch(batch_sql);
      exec::write_batch(result.batch, batch_out);
      std::printf("%zu rows -> %s (exec %lld us)\n", result.batch.rows.size(), batch_out.c_str(),
                  static_cast<long long>(result.latency.exec_us()));
      return 0;
    }

    if (explain->parsed()) {
      const TableSchema schema = resolve_schema(schema_path, {});
      Catalog catalog(std::uint64_t{1} << 30);
      catalog.create_table(schema);
      MlRegistry registry;
      if (!models.empty()) registry.load_file(models);
      const auto parsed = sql::parse(explain_sql);
      const auto logical =
          plan::build_logical(parsed.ast, catalog, registry, sql::normalize(explain_sql));
      const auto physical = plan::optimize(logical, plan::OptimizationFlags::parse(explain_flags));
      std::cout << "logical:\n" << plan::explain(logical) << "physical:\n"
                << plan::explain(*physical.plan);
      return 0;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", std::string(wire_code(e.code())).c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
