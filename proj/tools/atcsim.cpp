#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "atcsim/error.hpp"
#include "atcsim/exercise/planning.hpp"
#include "atcsim/exercise/scenario.hpp"
#include "atcsim/exercise/validate.hpp"
#include "atcsim/host/event_log.hpp"
#include "atcsim/host/headless.hpp"
#include "atcsim/host/host.hpp"
#include "atcsim/host/replay.hpp"
#include "atcsim/host/server.hpp"

namespace fs = std::filesystem;
using namespace atcsim;

namespace {

constexpr int kUsage = 4;

bool read_file(const std::string& path, std::string& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::ostringstream ss;
  ss << in.rdbuf();
  out = ss.str();
  return static_cast<bool>(in) || in.eof();
}

// ---------------------------------------------------------------- validate

int cmd_validate(const std::string& path) {
  std::string bytes;
  if (!read_file(path, bytes)) {
    std::cerr << "cannot read " << path << "\n";
    return 2;
  }
  exercise::ParsedScenario parsed;
  try {
    parsed = exercise::parse_scenario_with_warnings(bytes);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ParseError) {
      std::cerr << path << ": " << e.what() << "\n";
      return 2;
    }
    // Structural problems are reported as issues, like the semantic ones.
    // what() is "Code: /path: message"; print it in the issue layout.
    std::string line = e.what();
    if (const auto colon = line.find(": "); colon != std::string::npos) line.replace(colon, 2, " ");
    std::cout << "ERROR " << line << "\n";
    return 1;
  }
  auto issues = parsed.warnings;
  const auto more = exercise::validate_scenario(parsed.scenario);
  issues.insert(issues.end(), more.begin(), more.end());
  for (const auto& i : issues) std::cout << exercise::render_issue(i) << "\n";
  return exercise::has_errors(issues) ? 1 : 0;
}

// -------------------------------------------------------------------- plan

int cmd_plan(long long students, long long capacity, double duration_s, int stations) {
  if (students < 0 || capacity < static_cast<long long>(exercise::kMinGroupSize) || stations < 1 || duration_s <= 0) {
    std::cerr << "usage: --students >= 0, --capacity >= " << exercise::kMinGroupSize
              << ", --stations >= 1, --duration-s > 0\n";
    return kUsage;
  }
  std::vector<std::string> ids;
  for (long long i = 1; i <= students; ++i) {
    std::ostringstream id;
    id << 'S' << std::setw(3) << std::setfill('0') << i;
    ids.push_back(id.str());
  }
  const auto plan = exercise::plan_sessions(ids, static_cast<std::size_t>(capacity), {duration_s, stations});
  std::cout << "sessions: " << plan.session_count << "\n";
  std::size_t infeasible = 0;
  for (const auto& s : plan.sessions) {
    std::cout << "session " << s.session_index << ":";
    for (const auto& id : s.students) std::cout << ' ' << id;
    if (s.rotation_infeasible) {
      std::cout << " [rotation-infeasible]";
      ++infeasible;
    }
    std::cout << "\n";
  }
  std::cout << "# " << students << " students, capacity " << capacity << ", " << plan.session_count
            << " sessions, " << infeasible << " with an incomplete rotation\n";
  return 0;
}

// ------------------------------------------------------------------ replay

int cmd_replay(const std::string& log_path, const std::string& scenario_path, bool verify) {
  std::ifstream in(log_path, std::ios::binary);
  if (!in) {
    std::cerr << "cannot read " << log_path << "\n";
    return 2;
  }
  std::string bytes;
  if (!read_file(scenario_path, bytes)) {
    std::cerr << "cannot read " << scenario_path << "\n";
    return 2;
  }
  host::EventLog log;
  exercise::Scenario scenario;
  try {
    log = host::read_event_log(in);
  } catch (const Error& e) {
    std::cerr << log_path << ": " << e.what() << "\n";
    return 2;
  }
  try {
    scenario = exercise::parse_scenario(bytes);
  } catch (const Error& e) {
    std::cerr << scenario_path << ": " << e.what() << "\n";
    return 2;
  }
  host::ReplayResult r;
  try {
    r = host::replay(log, scenario, verify);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  std::cout << "final_digest: " << r.final_digest << "\n";
  std::cout << "ticks: " << r.ticks << "\n";
  std::cout << "separation_events: " << r.separation_events << "\n";
  if (verify) {
    std::cout << "verified_digests: " << r.verified << "\n";
    if (r.divergence) {
      std::cout << "divergence_tick: " << r.divergence->tick << "\n";
      std::cout << "# diverged at tick " << r.divergence->tick << ": recorded " << r.divergence->recorded
                << ", replayed " << (r.divergence->replayed.empty() ? "(nothing)" : r.divergence->replayed) << "\n";
      return 1;
    }
    std::cout << "# " << r.verified << " recorded digests reproduced\n";
  }
  return 0;
}

// ---------------------------------------------------------------- headless

int cmd_headless(const std::string& scenario_path, const std::string& script_path, double duration_s,
                 const std::string& out_path) {
  std::string bytes;
  if (!read_file(scenario_path, bytes)) {
    std::cerr << "cannot read " << scenario_path << "\n";
    return 2;
  }
  exercise::Scenario scenario;
  try {
    scenario = exercise::parse_scenario(bytes);
  } catch (const Error& e) {
    std::cerr << scenario_path << ": " << e.what() << "\n";
    return 2;
  }
  if (exercise::has_errors(exercise::validate_scenario(scenario))) {
    std::cerr << scenario_path << ": scenario has validation errors\n";
    return 2;
  }

  std::vector<host::ScriptLine> script;
  if (!script_path.empty()) {
    std::ifstream in(script_path);
    if (!in) {
      std::cerr << "cannot read " << script_path << "\n";
      return 2;
    }
    try {
      script = host::parse_pilot_script(in, scenario);
    } catch (const Error& e) {
      std::cerr << script_path << ": " << e.what() << "\n";
      return e.code() == ErrorCode::UnknownCallsign ? 1 : 2;
    }
  }

  host::HeadlessResult r;
  try {
    r = host::run_headless(scenario, script, duration_s, [&](const host::LogHeader& h) {
      return std::make_unique<host::FileLogSink>(out_path, h);
    });
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  std::cout << "final_digest: " << r.final_digest << "\n";
  std::cout << "ticks: " << r.ticks << "\n";
  std::cout << "separation_events: " << r.separation_events << "\n";
  std::cout << "log: " << out_path << "\n";
  for (const auto& rej : r.rejects) std::cout << "# rejected: " << rej << "\n";
  std::cout << "# ran " << r.ticks << " ticks with " << script.size() << " scripted commands\n";
  return 0;
}

// ------------------------------------------------------------------- serve

exercise::Scenario placeholder_scenario() {
  exercise::Scenario s;
  s.title = "empty";
  s.sectors.push_back({"SECTOR", {{-50, -50}, {50, -50}, {50, 50}, {-50, 50}}, ""});
  return s;
}

std::sig_atomic_t volatile g_stop = 0;

int cmd_serve(int port, const std::string& scenario_dir, int blocks, const std::string& log_dir, int threads,
              const std::string& token, double heartbeat_timeout_s, double grace_s) {
  if (blocks < 1 || port < 0 || port > 65535 || threads < 1) {
    std::cerr << "usage: --blocks >= 1, --port in 0..65535, --threads >= 1\n";
    return kUsage;
  }

  std::error_code ec;
  std::map<std::string, fs::path> files;
  for (fs::directory_iterator it(scenario_dir, ec), end; !ec && it != end; it.increment(ec)) {
    if (it->path().extension() == ".json") files.emplace(it->path().stem().string(), it->path());
  }
  if (ec) {
    std::cerr << "cannot read scenario dir " << scenario_dir << ": " << ec.message() << "\n";
    return 3;
  }
  fs::create_directories(log_dir, ec);
  if (ec) {
    std::cerr << "cannot create log dir " << log_dir << ": " << ec.message() << "\n";
    return 3;
  }

  const auto load = [files](const std::string& name) {
    auto it = files.find(name);
    if (it == files.end()) it = files.find(fs::path(name).stem().string());
    if (it == files.end()) throw Error(ErrorCode::InvalidScenario, "no scenario named " + name);
    std::string bytes;
    if (!read_file(it->second.string(), bytes)) throw Error(ErrorCode::InvalidScenario, "cannot read " + name);
    return exercise::parse_scenario(bytes);
  };

  exercise::Scenario initial = placeholder_scenario();
  std::string initial_name = "(empty)";
  for (const auto& [name, _] : files) {
    try {
      auto s = load(name);
      if (exercise::has_errors(exercise::validate_scenario(s))) continue;
      initial = std::move(s);
      initial_name = name;
      break;
    } catch (const Error& e) {
      std::cerr << "skipping scenario " << name << ": " << e.what() << "\n";
    }
  }

  host::SessionOptions opts;
  opts.session_token = token;
  opts.heartbeat_timeout_s = heartbeat_timeout_s;
  opts.grace_s = grace_s;
  host::Host h(opts);
  const protocol::BlockConfig tmpl{"B1"};
  h.blocks().add(tmpl);
  for (int i = 2; i <= blocks; ++i) h.blocks().clone_block(tmpl, "B" + std::to_string(i));
  for (const auto& [id, _] : h.blocks().all()) {
    auto runs = std::make_shared<int>(0);
    h.create_session(
        id, initial,
        [log_dir, id, runs](const host::LogHeader& header) {
          const auto path = fs::path(log_dir) / (id + "-" + std::to_string(++*runs) + ".atclog");
          return std::make_unique<host::FileLogSink>(path.string(), header);
        },
        load);
  }

  host::Server server(h, {"0.0.0.0", static_cast<unsigned short>(port), threads});
  try {
    server.start();
  } catch (const std::system_error& e) {
    std::cerr << "cannot listen on port " << port << ": " << e.what() << "\n";
    return 2;
  }
  std::cerr << "atcsim: listening on port " << server.port() << " with " << blocks << " block(s), scenario "
            << initial_name << "\n";

  std::signal(SIGINT, [](int) { g_stop = 1; });
  std::signal(SIGTERM, [](int) { g_stop = 1; });
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  std::cerr << "atcsim: stopped\n";
  return 0;
}

int default_port() {
  if (const char* env = std::getenv("ATCSIM_PORT")) {
    try {
      return std::stoi(env);
    } catch (...) {
    }
  }
  return 9100;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Air traffic control training simulator"};
  app.require_subcommand(1);

  int port = default_port();
  std::string scenario_dir = "scenarios";
  std::string log_dir = "logs";
  int blocks = 1;
  int threads = 2;
  std::string token;
  double heartbeat_s = 10.0;
  double grace_s = 120.0;
  auto* serve = app.add_subcommand("serve", "run the host service");
  serve->add_option("--port", port, "listen port (default $ATCSIM_PORT or 9100)");
  serve->add_option("--scenario-dir", scenario_dir, "directory of scenario files");
  serve->add_option("--blocks", blocks, "number of cloned blocks");
  serve->add_option("--log-dir", log_dir, "where session logs are written");
  serve->add_option("--threads", threads, "network threads");
  serve->add_option("--session-token", token, "token every HELLO must carry");
  serve->add_option("--heartbeat-timeout", heartbeat_s, "seconds of silence before a client is dead");
  serve->add_option("--grace", grace_s, "seconds a dead client may resume");

  std::string validate_file;
  auto* validate = app.add_subcommand("validate", "check a scenario file");
  validate->add_option("scenario-file", validate_file)->required();

  long long students = 0;
  long long capacity = 6;
  double plan_duration = 3600.0;
  int stations = 2;
  auto* plan = app.add_subcommand("plan", "split a cohort into sessions");
  plan->add_option("--students", students)->required();
  plan->add_option("--capacity", capacity)->required();
  plan->add_option("--duration-s", plan_duration, "session length");
  plan->add_option("--stations", stations, "controller stations per session");

  std::string log_file;
  std::string replay_scenario;
  bool verify = false;
  auto* replay = app.add_subcommand("replay", "re-run a recorded session");
  replay->add_option("logfile", log_file)->required();
  replay->add_option("--scenario", replay_scenario)->required();
  replay->add_flag("--verify-digests", verify);

  std::string hl_scenario;
  std::string hl_script;
  double hl_duration = 60.0;
  std::string hl_out = "headless.atclog";
  auto* headless = app.add_subcommand("headless", "run a scripted exercise without clients");
  headless->add_option("--scenario", hl_scenario)->required();
  headless->add_option("--pilot-script", hl_script, "lines of '<tick> <command>'");
  headless->add_option("--duration", hl_duration, "seconds to run");
  headless->add_option("--out", hl_out, "log file to write");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  if (*serve) return cmd_serve(port, scenario_dir, blocks, log_dir, threads, token, heartbeat_s, grace_s);
  if (*validate) return cmd_validate(validate_file);
  if (*plan) return cmd_plan(students, capacity, plan_duration, stations);
  if (*replay) return cmd_replay(log_file, replay_scenario, verify);
  if (*headless) return cmd_headless(hl_scenario, hl_script, hl_duration, hl_out);
  return kUsage;
}
