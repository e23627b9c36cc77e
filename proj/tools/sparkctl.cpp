#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spark/harness/config.hpp"
#include "spark/harness/report.hpp"
#include "spark/harness/run.hpp"
#include "spark/harness/serve.hpp"

namespace {

using namespace spark::harness;

constexpr int kExitSuccess = 0;
constexpr int kExitFailure = 1;
constexpr int kExitTimeout = 2;
constexpr int kExitConfig = 3;

struct Common {
  std::string scenario = "place";
  std::string variant = "basic";
  std::uint64_t seed = 0;
  std::string channel = "inperson";
  std::string config;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--scenario", c.scenario, "bundled scenario name or scenario JSON file")->required();
  cmd->add_option("--variant", c.variant, "basic | fg | fc | fgc")->required();
  cmd->add_option("--seed", c.seed, "RNG seed");
  cmd->add_option("--channel", c.channel, "inperson | remote");
  cmd->add_option("--config", c.config, "JSON overrides (gains, haptics, channel, world, ...)");
}

RunOptions resolve(const Common& c) {
  std::optional<nlohmann::json> ov;
  if (!c.config.empty()) ov = load_json_file(c.config);
  return build_options(c.scenario, c.variant, c.seed, c.channel, ov);
}

int cmd_run(const Common& c, const std::string& log_path) {
  const RunOptions opts = resolve(c);
  const RunResult r = run_scenario(opts);
  if (!log_path.empty()) r.log.write(log_path);
  std::cout << r.log.summary->dump() << "\n";
  return r.outcome == Outcome::Success ? kExitSuccess : kExitTimeout;
}

int cmd_replay(const std::string& path, const std::string& out_path, const std::string& expect_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string original = buf.str();
  const SessionLog log = SessionLog::parse_string(original);
  std::optional<std::string> expected;
  if (!expect_hash.empty()) expected = expect_hash;
  const RunResult r = replay(log, expected);
  const std::string again = r.log.to_jsonl();
  if (!out_path.empty()) r.log.write(out_path);

  const std::string reference = log.to_jsonl();
  if (again == reference) {
    std::cout << "replay identical: " << r.log.ticks().size() << " ticks, outcome " << outcome_name(r.outcome) << "\n";
    return kExitSuccess;
  }
  std::istringstream a(reference), b(again);
  std::string la, lb;
  std::size_t line = 0;
  while (true) {
    ++line;
    const bool ga = static_cast<bool>(std::getline(a, la));
    const bool gb = static_cast<bool>(std::getline(b, lb));
    if (!ga || !gb || la != lb) break;
  }
  std::cout << "replay differs at line " << line << "\n";
  return kExitFailure;
}

int cmd_report(const std::vector<std::string>& paths, bool csv) {
  std::vector<SessionLog> logs;
  for (const auto& p : paths) logs.push_back(SessionLog::load(p));
  const auto rows = build_report(logs);
  std::cout << (csv ? report_csv(rows) : report_table(rows));
  return kExitSuccess;
}

SessionServer* g_server = nullptr;

int cmd_serve(const Common& c, const std::string& bind) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) throw ConfigError("--bind expects host:port");
  const std::string host = bind.substr(0, colon);
  unsigned long port = 0;
  try {
    port = std::stoul(bind.substr(colon + 1));
  } catch (const std::exception&) {
    throw ConfigError("--bind: bad port");
  }
  if (port > 65535) throw ConfigError("--bind: bad port");
  const RunOptions opts = resolve(c);
  SessionServer server(opts, host, static_cast<unsigned short>(port));
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::cerr << "serving " << opts.scenario.name << "/" << variant_name(opts.variant.mode) << " on " << host << ":"
            << server.port() << " (/control, /view)\n";
  server.run();
  g_server = nullptr;
  return kExitSuccess;
}

int cmd_scenarios(const std::string& dump) {
  if (!dump.empty()) {
    std::cout << scenario_to_json(bundled_scenario(dump)).dump(2) << "\n";
    return kExitSuccess;
  }
  for (const auto& n : bundled_scenario_names()) {
    const Scenario s = bundled_scenario(n);
    std::string tags;
    for (const auto& t : s.tags) tags += (tags.empty() ? "" : ",") + t;
    std::cout << n << "\t" << tags << "\n";
  }
  return kExitSuccess;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Leader/follower teleoperation simulator"};
  app.require_subcommand(1);

  Common run_opts;
  std::string log_path;
  auto* run = app.add_subcommand("run", "run one scenario and record a session log");
  add_common(run, run_opts);
  run->add_option("--log", log_path, "write the session log (JSON lines)");

  std::string replay_log, replay_out, replay_hash;
  auto* rep = app.add_subcommand("replay", "re-simulate a session log and compare");
  rep->add_option("--log", replay_log, "session log")->required();
  rep->add_option("--out", replay_out, "write the re-simulated log");
  rep->add_option("--expect-hash", replay_hash, "refuse logs whose config hash differs");

  std::vector<std::string> report_logs;
  bool csv = false;
  auto* report = app.add_subcommand("report", "aggregate session logs per scenario and variant");
  report->add_option("logs", report_logs, "session logs")->required();
  report->add_flag("--csv", csv, "CSV output");

  Common serve_opts;
  std::string bind = "127.0.0.1:8765";
  auto* serve = app.add_subcommand("serve", "host a live session over WebSocket");
  add_common(serve, serve_opts);
  serve->add_option("--bind", bind, "host:port");

  std::string dump;
  auto* list = app.add_subcommand("scenarios", "list bundled scenarios");
  list->add_option("--json", dump, "print one scenario as JSON (usable as a --config 'scenario')");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*run) return cmd_run(run_opts, log_path);
    if (*rep) return cmd_replay(replay_log, replay_out, replay_hash);
    if (*report) return cmd_report(report_logs, csv);
    if (*serve) return cmd_serve(serve_opts, bind);
    if (*list) return cmd_scenarios(dump);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ConfigMismatch& e) {
    std::cerr << "config mismatch: " << e.what() << "\n";
    return kExitConfig;
  } catch (const LogFormatError& e) {
    std::cerr << "bad log: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
