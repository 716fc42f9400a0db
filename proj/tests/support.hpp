#pragma once

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "atcsim/exercise/scenario.hpp"
#include "atcsim/host/session.hpp"
#include "atcsim/sim/types.hpp"

namespace atcsim::test {

namespace fs = std::filesystem;

// A 200 NM square sector with a handful of fixes and `n` aircraft entering
// over the first few ticks on well-separated levels.
inline exercise::Scenario make_scenario(int n = 1, double duration_s = 3600.0) {
  exercise::Scenario s;
  s.title = "test";
  s.duration_s = duration_s;
  s.waypoints = {{"ALPHA", 0.0, 40.0}, {"BRAVO", 40.0, 0.0}, {"CHARLIE", 0.0, -40.0}, {"DELTA", -40.0, 0.0}};
  s.sectors.push_back({"WEST", {{-100, -100}, {0, -100}, {0, 100}, {-100, 100}}, "124.5"});
  s.sectors.push_back({"EAST", {{0, -100}, {100, -100}, {100, 100}, {0, 100}}, "128.2"});
  for (int i = 0; i < n; ++i) {
    exercise::ScheduledEntry e;
    char cs[16];
    std::snprintf(cs, sizeof cs, "AC%03d", i + 1);
    e.callsign = cs;
    e.entry_tick = static_cast<std::uint64_t>(i % 5);
    e.initial.x_nm = -80.0 + 8.0 * (i % 20);
    e.initial.y_nm = -80.0 + 8.0 * (i / 20);
    e.initial.alt_ft = 10000.0 + 1000.0 * i;
    e.initial.heading_deg = 90.0;
    e.initial.ground_speed_kt = 250.0;
    e.sector = e.initial.x_nm < 0 ? "WEST" : "EAST";
    s.schedule.push_back(e);
  }
  return s;
}

inline std::string callsign(int i) {
  char cs[16];
  std::snprintf(cs, sizeof cs, "AC%03d", i);
  return cs;
}

inline sim::AircraftState random_aircraft(std::mt19937_64& rng, const std::string& cs, double extent_nm) {
  std::uniform_real_distribution<double> xy(-extent_nm, extent_nm);
  std::uniform_real_distribution<double> alt(0.0, 12000.0);
  std::uniform_real_distribution<double> hdg(0.0, 360.0);
  sim::AircraftState a;
  a.callsign = cs;
  a.position = {xy(rng), xy(rng), alt(rng)};
  a.heading_deg = hdg(rng);
  a.ground_speed_kt = 250.0;
  return a;
}

struct TempDir {
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "atcsim-XXXXXX").string();
    path = mkdtemp(tmpl.data());
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  fs::path file(const std::string& name) const { return path / name; }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(path / name, std::ios::binary) << text;
    return path / name;
  }

  fs::path path;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

inline std::string shell_quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

// Runs the atcsim binary with `args` and captures both streams.
inline CliResult run_cli(const std::vector<std::string>& args, const std::string& env = "") {
  TempDir tmp;
  std::string cmd = env.empty() ? std::string() : env + " ";
  cmd += shell_quote(ATCSIM_CLI);
  for (const auto& a : args) cmd += " " + shell_quote(a);
  cmd += " >" + shell_quote(tmp.file("out").string()) + " 2>" + shell_quote(tmp.file("err").string());
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(tmp.file("out"));
  r.err = slurp(tmp.file("err"));
  return r;
}

inline std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

// In-process stand-in for a network client talking to a Session.
class FakeClient {
 public:
  FakeClient(host::Session& s, host::ConnectionId conn, std::string name) : s_(s), conn_(conn), name_(std::move(name)) {}

  template <class P>
  host::Outbox send(P payload) {
    auto out = s_.receive(conn_, protocol::make_message(s_.id(), name_, ++seq_, s_.runner().tick(), std::move(payload)));
    keep(out);
    return out;
  }

  host::Outbox hello(protocol::Role role, std::optional<int> station = std::nullopt,
                     std::optional<std::string> resume = std::nullopt) {
    return send(protocol::Hello{role, station, name_, "", std::move(resume)});
  }

  // Collects what the session addressed to this client.
  void keep(const host::Outbox& out) {
    for (const auto& o : out) {
      if (o.connection == conn_) inbox.push_back(o.message);
    }
  }

  template <class T>
  const protocol::Message* last() const {
    for (auto it = inbox.rbegin(); it != inbox.rend(); ++it) {
      if (it->is<T>()) return &*it;
    }
    return nullptr;
  }

  host::ConnectionId conn() const { return conn_; }
  void set_conn(host::ConnectionId c) { conn_ = c; }
  std::uint64_t seq() const { return seq_; }

  std::vector<protocol::Message> inbox;

 private:
  host::Session& s_;
  host::ConnectionId conn_;
  std::string name_;
  std::uint64_t seq_ = 0;
};

inline protocol::SupervisorCmd supervisor_cmd(protocol::SupervisorVerb verb) {
  protocol::SupervisorCmd c;
  c.verb = verb;
  return c;
}

}  // namespace atcsim::test
