// thermoviz: server, headless client and inspection tools.
#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <pthread.h>
#include <spdlog/spdlog.h>

#include "thermoviz/client.hpp"
#include "thermoviz/config.hpp"
#include "thermoviz/engine.hpp"
#include "thermoviz/server.hpp"

namespace {

using namespace thermoviz;

struct ServeArgs {
  std::string config;
  std::optional<int> port;
  std::optional<int> ws_port;
  std::optional<int> tick_ms;
  std::string source;
  std::string mode;
  std::string lod_kind;
  bool diffusion = false;
};

ServerConfig resolve_config(const ServeArgs& a) {
  ServerConfig c = a.config.empty() ? ServerConfig{} : load_config(a.config);
  if (a.port) c.port = static_cast<std::uint16_t>(*a.port);
  if (a.ws_port) c.ws_port = *a.ws_port;
  if (a.tick_ms) c.tick_period = std::chrono::milliseconds(*a.tick_ms);
  if (!a.source.empty()) {
    if (a.source == "synthetic") {
      c.source.kind = SourceConfig::Kind::Synthetic;
    } else {
      c.source.kind = SourceConfig::Kind::Csv;
      c.source.csv_path = a.source;
    }
  }
  if (!a.mode.empty()) c.mode = parse_mode(a.mode);
  if (!a.lod_kind.empty()) c.lod_kind = parse_lod_kind(a.lod_kind);
  if (a.diffusion) c.diffusion = true;
  validate(c);
  return c;
}

int serve(const ServeArgs& args) {
  const auto config = resolve_config(args);
  // Signals go to sigwait below, not to the worker threads.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  Server server(config);
  server.start();
  int received = 0;
  sigwait(&signals, &received);
  spdlog::info("signal {}: shutting down", received);
  server.stop();
  return 0;
}

std::unique_ptr<client::Client> connect(const std::string& endpoint) {
  const auto [host, port] = parse_endpoint(endpoint);
  return std::make_unique<client::Client>(connect_tcp(host, port));
}

// Maps client failures to their exit statuses.
template <typename F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const ConnectionRefused& e) {
    std::cerr << "error: " << e.what() << '\n';
    return client::kConnectionRefused;
  } catch (const ProtocolError& e) {
    std::cerr << "protocol violation: " << e.what() << '\n';
    return client::kProtocolViolation;
  } catch (const client::ChecksumMismatch& e) {
    std::cerr << "checksum mismatch: " << e.what() << '\n';
    return client::kChecksumMismatch;
  } catch (const client::ConnectionLost& e) {
    std::cerr << "connection lost: " << e.what() << '\n';
    return client::kConnectionLost;
  }
}

void write_weights(const FieldEngine& engine, std::ostream& out) {
  out << "particle_id,kind,tet_or_sensor,w0,w1,w2,w3\n";
  const auto& wm = engine.weights();
  const auto& sensors = engine.sensors();
  char buf[160];
  for (std::size_t p = 0; p < wm.size(); ++p) {
    const auto& e = wm[p];
    const bool inside = e.kind == WeightEntry::Kind::Inside;
    const auto ref = inside ? e.tet : sensors[e.sensors[0]].id;
    std::snprintf(buf, sizeof buf, "%zu,%s,%u,%.17g,%.17g,%.17g,%.17g\n", p, inside ? "inside" : "outside", ref,
                  e.weights[0], e.weights[1], e.weights[2], e.weights[3]);
    out << buf;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Thermal field server and headless client"};
  app.require_subcommand(1);

  ServeArgs serve_args;
  auto* serve_cmd = app.add_subcommand("serve", "run the server");
  serve_cmd->add_option("--config", serve_args.config, "JSON configuration file")->check(CLI::ExistingFile);
  serve_cmd->add_option("--port", serve_args.port, "TCP port (0 picks a free one)");
  serve_cmd->add_option("--ws-port", serve_args.ws_port, "websocket/HTTP port, negative disables");
  serve_cmd->add_option("--tick-ms", serve_args.tick_ms, "tick period in milliseconds")->check(CLI::PositiveNumber);
  serve_cmd->add_option("--source", serve_args.source, "'synthetic' or a readings CSV to replay");
  serve_cmd->add_option("--mode", serve_args.mode, "initial session mode: full|delta");
  serve_cmd->add_option("--lod-kind", serve_args.lod_kind, "resolution|cluster|significant");
  serve_cmd->add_flag("--diffusion", serve_args.diffusion, "send delta updates in nearest-first waves");

  auto* client_cmd = app.add_subcommand("client", "headless client");
  client_cmd->require_subcommand(1);
  std::string endpoint = "127.0.0.1:7878";
  std::string script_path;
  std::string report_path;
  client::RunOptions run_options;
  auto* run_cmd = client_cmd->add_subcommand("run", "run a camera script and report every cycle");
  run_cmd->add_option("--connect", endpoint, "server host:port")->capture_default_str();
  run_cmd->add_option("--script", script_path, "CSV t_ms,x,y,z (centimeters)")->check(CLI::ExistingFile);
  run_cmd->add_option("--report", report_path, "JSON lines output (default stdout)");
  run_cmd->add_option("--tail", run_options.tail_cycles, "cycles after the last command")->capture_default_str();
  run_cmd->add_option("--max-cycles", run_options.max_cycles, "stop after this many cycles (0: no cap)");

  std::string format = "csv";
  std::string out_path;
  std::size_t export_cycles = 1;
  auto* export_cmd = client_cmd->add_subcommand("export", "export the mirrored field");
  export_cmd->add_option("--connect", endpoint, "server host:port")->capture_default_str();
  export_cmd->add_option("--format", format, "csv|ply")->check(CLI::IsMember({"csv", "ply"}))->capture_default_str();
  export_cmd->add_option("--out", out_path, "output file")->required();
  export_cmd->add_option("--cycles", export_cycles, "cycles to run before exporting")->check(CLI::PositiveNumber);

  client::VerifyOptions verify_options;
  std::uint32_t mutate = 0;
  auto* verify_cmd = client_cmd->add_subcommand("verify", "check CRCs, delta soundness and band switching");
  verify_cmd->add_option("--connect", endpoint, "server host:port")->capture_default_str();
  verify_cmd->add_option("--epsilon", verify_options.epsilon, "per-particle tolerance")->capture_default_str();
  verify_cmd->add_option("--quiet-cycles", verify_options.quiet_cycles, "empty delta cycles taken as steady");
  verify_cmd->add_option("--settle-cycles", verify_options.settle_cycles, "cycles to wait for a steady field");
  verify_cmd->add_option("--thresholds", verify_options.thresholds, "band thresholds in cm");
  auto* mutate_opt = verify_cmd->add_option("--mutate", mutate, "planted fault: perturb this particle id");

  auto* debug_cmd = app.add_subcommand("debug", "inspect preprocessing output");
  debug_cmd->require_subcommand(1);
  std::string debug_config;
  std::string debug_out;
  int debug_band = 0;
  auto* weights_cmd = debug_cmd->add_subcommand("weights", "per-particle weight map as CSV");
  weights_cmd->add_option("--config", debug_config, "JSON configuration file")->check(CLI::ExistingFile);
  weights_cmd->add_option("--out", debug_out, "output file (default stdout)");
  auto* lod_cmd = debug_cmd->add_subcommand("lod", "one band's level after one synthetic tick, as CSV");
  lod_cmd->add_option("--config", debug_config, "JSON configuration file")->check(CLI::ExistingFile);
  lod_cmd->add_option("--band", debug_band, "band index")->capture_default_str();
  lod_cmd->add_option("--out", debug_out, "output file (default stdout)");

  std::size_t sensor_count = 35;
  std::uint32_t sensor_seed = 7;
  auto* gen_cmd = app.add_subcommand("gen-sensors", "write the generated default sensor layout");
  gen_cmd->add_option("--count", sensor_count)->capture_default_str();
  gen_cmd->add_option("--seed", sensor_seed)->capture_default_str();
  gen_cmd->add_option("--out", out_path)->required();

  CLI11_PARSE(app, argc, argv);

  auto with_output = [&](const std::string& path, auto&& write) {
    if (path.empty()) {
      write(std::cout);
    } else {
      std::ofstream out(path, std::ios::binary);
      if (!out) throw std::runtime_error("cannot write " + path);
      write(out);
    }
  };

  try {
    if (*serve_cmd) return serve(serve_args);

    if (*run_cmd) {
      const auto script = script_path.empty() ? std::vector<client::ScriptStep>{} : client::load_script(script_path);
      std::ofstream file;
      if (!report_path.empty()) {
        file.open(report_path);
        if (!file) throw std::runtime_error("cannot write " + report_path);
      }
      std::ostream& report = report_path.empty() ? std::cout : file;
      return guarded([&] {
        auto c = connect(endpoint);
        client::run_script(*c, script, report, run_options);
        return int{client::kOk};
      });
    }

    if (*export_cmd) {
      return guarded([&] {
        auto c = connect(endpoint);
        for (std::size_t i = 0; i < export_cycles || !c->mirror().complete; ++i) c->run_cycle(std::nullopt);
        client::export_snapshot(c->mirror(), out_path, format);
        std::cerr << "wrote " << c->mirror().particles.size() << " points (tick " << c->mirror().header.tick
                  << ", band " << int(c->mirror().header.band) << ") to " << out_path << '\n';
        return int{client::kOk};
      });
    }

    if (*verify_cmd) {
      if (*mutate_opt) verify_options.mutate = mutate;
      return guarded([&] {
        auto c = connect(endpoint);
        const auto report = client::verify(*c, verify_options);
        for (const auto& check : report.checks) {
          std::cout << client::to_string(check.outcome) << ' ' << check.name << ": " << check.detail << '\n';
        }
        return int{report.passed() ? client::kOk : client::kVerifyFailed};
      });
    }

    if (*weights_cmd || *lod_cmd) {
      const ServerConfig config = debug_config.empty() ? ServerConfig{} : load_config(debug_config);
      validate(config);
      auto engine = make_engine(config);
      if (*weights_cmd) {
        with_output(debug_out, [&](std::ostream& out) { write_weights(*engine, out); });
        return 0;
      }
      if (debug_band < 0 || static_cast<std::size_t>(debug_band) >= config.bands.count()) {
        throw std::invalid_argument("band must be in [0, " + std::to_string(config.bands.count()) + ")");
      }
      SyntheticStream stream(engine->sensors(), config.source.seed, config.tick_period, config.source.synthetic);
      const auto snap = engine->tick(stream.generate(0));
      const auto level = engine->level(snap, debug_band);
      with_output(debug_out, [&](std::ostream& out) {
        out << "x,y,z,value\n";
        char buf[128];
        for (std::size_t i = 0; i < level->size(); ++i) {
          const auto& p = level->layout->positions[i];
          std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g,%.9g\n", p[0], p[1], p[2], level->values_f32[i]);
          out << buf;
        }
      });
      return 0;
    }

    if (*gen_cmd) {
      const ServerConfig defaults;
      write_sensor_layout(out_path, default_sensor_layout(defaults.room, defaults.layers, sensor_count, sensor_seed));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return client::kUsage;
  }
  return client::kUsage;
}
