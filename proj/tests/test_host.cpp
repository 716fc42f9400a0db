#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "atcsim/host/event_log.hpp"
#include "atcsim/host/headless.hpp"
#include "atcsim/host/host.hpp"
#include "atcsim/host/replay.hpp"
#include "atcsim/host/runner.hpp"
#include "atcsim/host/session.hpp"
#include "support.hpp"

using namespace atcsim;
using namespace atcsim::host;
using protocol::Message;
using protocol::RejectReason;
using protocol::Role;
using protocol::SupervisorVerb;
using test::FakeClient;

namespace {

// Keeps the log text alive after the session that wrote it is gone.
struct Recorder {
  struct Sink : EventLogSink {
    Sink(std::shared_ptr<std::vector<std::string>> l, const LogHeader& h) : lines(std::move(l)) {
      lines->push_back(header_line(h));
    }
    void write_line(const std::string& line) override { lines->push_back(line); }
    std::shared_ptr<std::vector<std::string>> lines;
  };

  std::shared_ptr<std::vector<std::string>> lines;
  LogFactory factory() {
    return [this](const LogHeader& h) {
      lines = std::make_shared<std::vector<std::string>>();
      return std::make_unique<Sink>(lines, h);
    };
  }
  std::string text() const {
    std::string out;
    for (const auto& l : *lines) out += l + '\n';
    return out;
  }
  EventLog parsed() const {
    std::istringstream in(text());
    return read_event_log(in);
  }
};

sim::PilotCommand cmd(const std::string& text) {
  return sim::parse_pilot_command(text, test::make_scenario().waypoint_table());
}

std::optional<RejectReason> rejected(const Outbox& out, ConnectionId conn) {
  for (const auto& o : out) {
    if (o.connection == conn && o.message.is<protocol::Reject>()) return o.message.as<protocol::Reject>().reason;
  }
  return std::nullopt;
}

template <class T>
std::size_t count_to(const Outbox& out, ConnectionId conn) {
  std::size_t n = 0;
  for (const auto& o : out) n += o.connection == conn && o.message.is<T>();
  return n;
}

SessionOptions short_timers() {
  SessionOptions o;
  o.heartbeat_timeout_s = 4;
  o.grace_s = 10;
  return o;
}

}  // namespace

// ------------------------------------------------------------------- runner

TEST(Runner, ScriptedEventsFireOnceWhenTheTargetIsAirborne) {
  auto s = test::make_scenario(2);
  s.schedule[1].entry_tick = 5;
  s.events.push_back({2, exercise::EventKind::EmergencyDeclared, "AC002", "fuel"});
  s.events.push_back({3, exercise::EventKind::RadioFailure, "AC001", ""});
  ExerciseRunner r(s);
  std::vector<std::pair<std::uint64_t, protocol::AlertKind>> seen;
  for (int i = 0; i < 10; ++i) {
    for (const auto& a : r.advance().alerts) seen.push_back({a.tick, a.kind});
  }
  // AC002 only exists from tick 6; its emergency fires on the next step.
  ASSERT_EQ(seen.size(), 2u);
  EXPECT_EQ(seen[0], std::make_pair(std::uint64_t{4}, protocol::AlertKind::RadioFailure));
  EXPECT_EQ(seen[1], std::make_pair(std::uint64_t{7}, protocol::AlertKind::EmergencyDeclared));
  EXPECT_TRUE(r.world().find("AC002")->status.emergency);
  EXPECT_TRUE(r.world().find("AC001")->status.radio_failure);
}

TEST(Runner, FailedInputsAreReportedNotThrown) {
  ExerciseRunner r(test::make_scenario(2));
  r.advance();
  r.queue(protocol::make_message("B1", "c1", 7, 1, protocol::PilotCmd{cmd("AC002 FH 180")}));
  const auto rep = r.advance();
  // AC002 launches during the step from tick 1, after that step's inputs.
  ASSERT_EQ(rep.failures.size(), 1u);
  EXPECT_EQ(rep.failures[0].code, ErrorCode::UnknownCallsign);
  EXPECT_EQ(rep.failures[0].seq, 7u);
  r.queue(protocol::make_message("B1", "c1", 8, 1, protocol::PilotCmd{cmd("AC002 FH 180")}));
  EXPECT_TRUE(r.advance().failures.empty());
  EXPECT_EQ(r.world().find("AC002")->cleared_heading_deg, 180.0);
}

TEST(Runner, FinishesAtDurationOrStop) {
  ExerciseRunner r(test::make_scenario(1, 5.0));
  for (int i = 0; i < 5; ++i) r.advance();
  EXPECT_TRUE(r.finished());
  ExerciseRunner r2(test::make_scenario(1, 5.0));
  r2.stop();
  EXPECT_TRUE(r2.finished());
  EXPECT_TRUE(r2.stopped());
}

// ---------------------------------------------------------------- event log

TEST(EventLog, MemoryLogRoundTrips) {
  LogHeader h{kLogSchemaVersion, "abc", 1.0, "2026-01-01T00:00:00Z", "B1", "B1"};
  MemoryLogSink sink(h);
  const auto m = protocol::make_message("B1", "c1", 1, 0, protocol::PilotCmd{cmd("AC001 C 12000")});
  sink.append_message(0, m, true);
  sink.append_digest(1, "d1");
  sink.append_message(1, protocol::make_message("B1", "c1", 2, 1, protocol::Heartbeat{}), false);
  std::istringstream in(sink.text());
  const auto log = read_event_log(in);
  EXPECT_EQ(log.header, h);
  ASSERT_EQ(log.entries.size(), 3u);
  EXPECT_EQ(log.entries[0].message, m);
  EXPECT_TRUE(log.entries[0].apply);
  EXPECT_EQ(log.entries[1].digest, "d1");
  EXPECT_EQ(log.entries[1].line, 3u);
  EXPECT_EQ(log.message_count(), 2u);
  EXPECT_EQ(sink.messages_written(), 2u);
}

TEST(EventLog, CorruptionNamesLineAndEntry) {
  LogHeader h{kLogSchemaVersion, "abc", 1.0, "t", "B1", "B1"};
  const std::string head = header_line(h) + "\n";
  const auto expect_corrupt = [](const std::string& text, const std::string& where) {
    std::istringstream in(text);
    try {
      read_event_log(in);
      ADD_FAILURE() << "accepted";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::CorruptLog);
      EXPECT_NE(std::string(e.what()).find(where), std::string::npos) << e.what();
    }
  };
  expect_corrupt("", "line 1");
  expect_corrupt("{not json}\n", "line 1");
  expect_corrupt(head + digest_line(1, "a") + "\n{\"tick_index\":\n", "line 3 (entry 1)");
  expect_corrupt(head + digest_line(5, "a") + "\n" + digest_line(4, "b") + "\n", "line 3 (entry 1)");
  expect_corrupt(head + "{\"tick_index\":0,\"message\":{\"protocol_version\":1},\"apply\":true}\n", "line 2 (entry 0)");
  auto h2 = h;
  h2.schema_version = 9;
  expect_corrupt(header_line(h2) + "\n", "line 1");
}

TEST(EventLog, FileSinkWritesHeaderFirst) {
  test::TempDir dir;
  const auto path = dir.file("x.atclog").string();
  {
    FileLogSink sink(path, LogHeader{kLogSchemaVersion, "abc", 1.0, "t", "B1", "B1"});
    sink.append_digest(1, "d");
  }
  const auto lines = test::lines_of(test::slurp(path));
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_NE(lines[0].find("\"scenario_digest\":\"abc\""), std::string::npos);
}

// ------------------------------------------------------------------ session

class SessionTest : public ::testing::Test {
 protected:
  void make(int aircraft = 4, double duration = 600.0, SessionOptions opts = {}) {
    session = std::make_unique<Session>("B1", protocol::BlockConfig{"B1"}, test::make_scenario(aircraft, duration),
                                        std::move(opts), rec.factory());
  }
  FakeClient client(const std::string& name) { return FakeClient(*session, ++next_conn, name); }
  void start(FakeClient& sup) { ASSERT_FALSE(rejected(sup.send(test::supervisor_cmd(SupervisorVerb::Start)), sup.conn())); }
  void tick(std::vector<FakeClient*> clients, int n = 1) {
    for (int i = 0; i < n; ++i) {
      const auto out = session->on_timer();
      for (auto* c : clients) c->keep(out);
    }
  }

  Recorder rec;
  std::unique_ptr<Session> session;
  ConnectionId next_conn = 0;
};

TEST_F(SessionTest, HelloGetsWelcomeAndSnapshot) {
  make();
  auto ctl = client("alice");
  const auto out = ctl.hello(Role::Controller);
  ASSERT_EQ(count_to<protocol::Welcome>(out, ctl.conn()), 1u);
  const auto& w = ctl.last<protocol::Welcome>()->as<protocol::Welcome>();
  EXPECT_EQ(w.client_id, "c1");
  EXPECT_EQ(w.station->label(), "B1/C1");
  EXPECT_EQ(w.phase, "LOBBY");
  EXPECT_FALSE(w.resume_token.empty());
  EXPECT_EQ(count_to<protocol::StateSnapshot>(out, ctl.conn()), 1u);
  EXPECT_EQ(session->client("c1")->name, "alice");
}

TEST_F(SessionTest, AdmissionRejections) {
  SessionOptions o;
  o.session_token = "s3cret";
  make(4, 600, o);
  auto anon = client("x");
  EXPECT_EQ(rejected(anon.send(protocol::Heartbeat{}), anon.conn()), RejectReason::NotJoined);
  EXPECT_EQ(rejected(anon.hello(Role::Controller), anon.conn()), RejectReason::Forbidden);

  Message wrong = protocol::make_message("B9", "x", 5, 0, protocol::Hello{Role::Controller, {}, "x", "s3cret", {}});
  EXPECT_EQ(rejected(session->receive(anon.conn(), wrong), anon.conn()), RejectReason::NoSuchSession);

  Message ok = protocol::make_message("B1", "x", 6, 0, protocol::Hello{Role::Controller, {}, "x", "s3cret", {}});
  EXPECT_FALSE(rejected(session->receive(anon.conn(), ok), anon.conn()));
  Message dup = protocol::make_message("B1", "x", 6, 0, protocol::Heartbeat{});
  EXPECT_EQ(rejected(session->receive(anon.conn(), dup), anon.conn()), RejectReason::DuplicateSeq);
  Message again = protocol::make_message("B1", "x", 7, 0, protocol::Hello{Role::Controller, {}, "x", "s3cret", {}});
  EXPECT_EQ(rejected(session->receive(anon.conn(), again), anon.conn()), RejectReason::BadRequest);
}

TEST_F(SessionTest, BlockCapacityThroughTheSession) {
  make();
  std::vector<FakeClient> clients;
  for (int i = 0; i < 10; ++i) {
    clients.push_back(client("ctl"));
    ASSERT_FALSE(rejected(clients.back().hello(Role::Controller), clients.back().conn()));
    clients.push_back(client("pil"));
    ASSERT_FALSE(rejected(clients.back().hello(Role::PseudoPilot), clients.back().conn()));
  }
  auto sup = client("sup");
  EXPECT_FALSE(rejected(sup.hello(Role::Supervisor), sup.conn()));
  auto c11 = client("c11");
  EXPECT_EQ(rejected(c11.hello(Role::Controller), c11.conn()), RejectReason::BlockFull);
  auto p11 = client("p11");
  EXPECT_EQ(rejected(p11.hello(Role::PseudoPilot), p11.conn()), RejectReason::BlockFull);
  auto sup2 = client("sup2");
  EXPECT_EQ(rejected(sup2.hello(Role::Supervisor), sup2.conn()), RejectReason::BlockFull);
  EXPECT_EQ(session->occupancy().controller_count(), 10u);
}

TEST_F(SessionTest, PhaseMachine) {
  make();
  auto sup = client("sup");
  auto ctl = client("ctl");
  sup.hello(Role::Supervisor);
  ctl.hello(Role::Controller);
  EXPECT_EQ(rejected(ctl.send(test::supervisor_cmd(SupervisorVerb::Start)), ctl.conn()), RejectReason::NotSupervisor);
  EXPECT_EQ(rejected(sup.send(test::supervisor_cmd(SupervisorVerb::Pause)), sup.conn()), RejectReason::BadPhase);
  EXPECT_TRUE(session->run_tick().empty());
  start(sup);
  EXPECT_EQ(session->phase(), Phase::Running);
  tick({&ctl}, 3);
  EXPECT_EQ(session->runner().tick(), 3u);
  ctl.keep(sup.send(test::supervisor_cmd(SupervisorVerb::Pause)));
  tick({&ctl}, 3);
  EXPECT_EQ(session->runner().tick(), 3u);
  EXPECT_EQ(ctl.last<protocol::StateDelta>()->as<protocol::StateDelta>().phase, "PAUSED");
  EXPECT_EQ(rejected(sup.send(test::supervisor_cmd(SupervisorVerb::Start)), sup.conn()), RejectReason::BadPhase);
  sup.send(test::supervisor_cmd(SupervisorVerb::Resume));
  tick({&ctl}, 2);
  EXPECT_EQ(session->runner().tick(), 5u);
  sup.send(test::supervisor_cmd(SupervisorVerb::Stop));
  EXPECT_EQ(session->phase(), Phase::Ended);
  tick({&ctl}, 2);
  EXPECT_EQ(session->runner().tick(), 5u);
  EXPECT_EQ(rejected(ctl.send(protocol::PilotCmd{cmd("AC001 FH 10")}), ctl.conn()), RejectReason::BadPhase);
}

TEST_F(SessionTest, EndsByItselfAtScenarioDuration) {
  make(2, 4.0);
  auto sup = client("sup");
  sup.hello(Role::Supervisor);
  start(sup);
  tick({&sup}, 6);
  EXPECT_EQ(session->phase(), Phase::Ended);
  EXPECT_EQ(session->runner().tick(), 4u);
  EXPECT_EQ(sup.last<protocol::StateDelta>()->as<protocol::StateDelta>().phase, "ENDED");
}

TEST_F(SessionTest, PilotCommandsAreCheckedAndApplied) {
  make();
  auto sup = client("sup");
  auto pil = client("pil");
  sup.hello(Role::Supervisor);
  pil.hello(Role::PseudoPilot);
  start(sup);
  tick({&pil}, 2);
  EXPECT_EQ(rejected(pil.send(protocol::PilotCmd{cmd("ZZ999 FH 10")}), pil.conn()), RejectReason::UnknownCallsign);
  auto dct = cmd("AC001 FH 10");
  dct.verb = sim::CommandVerb::DirectTo;
  dct.waypoint = "NOWHERE";
  EXPECT_EQ(rejected(pil.send(protocol::PilotCmd{dct}), pil.conn()), RejectReason::WaypointNotInScenario);
  EXPECT_FALSE(rejected(pil.send(protocol::PilotCmd{cmd("AC001 C 15000")}), pil.conn()));
  tick({&pil});
  EXPECT_EQ(session->runner().world().find("AC001")->cleared_alt_ft, 15000.0);
  EXPECT_EQ(session->runner().world().find("AC001")->position.alt_ft, 10030.0);
  EXPECT_EQ(sup.send(protocol::PilotCmd{cmd("AC001 FH 10")}).size(), 1u);
}

TEST_F(SessionTest, TutorsAttachGrantAndTakeControl) {
  make();
  auto sup = client("sup");
  auto ctl = client("ctl");
  auto tut = client("tut");
  auto tut2 = client("tut2");
  sup.hello(Role::Supervisor);
  ctl.hello(Role::Controller);
  EXPECT_EQ(rejected(tut.hello(Role::RemoteTutor), tut.conn()), RejectReason::InvalidStation);
  EXPECT_EQ(rejected(tut.hello(Role::RemoteTutor, 2), tut.conn()), RejectReason::NoOccupant);
  ASSERT_FALSE(rejected(tut.hello(Role::RemoteTutor, 1), tut.conn()));
  EXPECT_EQ(rejected(tut2.hello(Role::RemoteTutor, 1), tut2.conn()), RejectReason::AlreadyAttached);
  EXPECT_EQ(tut.last<protocol::Welcome>()->as<protocol::Welcome>().tutor_id, "c3");
  EXPECT_TRUE(tut.last<protocol::MirrorFrameMsg>()->as<protocol::MirrorFrameMsg>().frame.full_snapshot);

  start(sup);
  tick({&ctl, &tut}, 2);
  const protocol::StationId c1{"B1", protocol::StationKind::Controller, 1};
  const protocol::StationId c2{"B1", protocol::StationKind::Controller, 2};
  protocol::ControlInput ci{"", c1, cmd("AC001 FH 45")};
  EXPECT_EQ(rejected(tut.send(ci), tut.conn()), RejectReason::Forbidden);
  EXPECT_EQ(rejected(tut.send(protocol::PilotCmd{cmd("AC001 FH 45")}), tut.conn()), RejectReason::Forbidden);
  EXPECT_EQ(rejected(ctl.send(protocol::ControlGrantMsg{{"", c1, 0, true}}), ctl.conn()), RejectReason::Forbidden);

  auto out = tut.send(protocol::ControlGrantMsg{{"spoofed", c1, 0, true}});
  ctl.keep(out);
  ASSERT_EQ(count_to<protocol::ControlGrantMsg>(out, ctl.conn()), 1u);
  EXPECT_EQ(ctl.last<protocol::ControlGrantMsg>()->as<protocol::ControlGrantMsg>().grant.tutor_id, "c3");
  EXPECT_EQ(rejected(tut.send(protocol::ControlGrantMsg{{"", c1, 0, true}}), tut.conn()), RejectReason::GrantExists);
  EXPECT_EQ(rejected(tut.send(protocol::ControlGrantMsg{{"", c2, 0, true}}), tut.conn()), RejectReason::NoOccupant);

  out = tut.send(ci);
  EXPECT_FALSE(rejected(out, tut.conn()));
  EXPECT_EQ(count_to<protocol::ControlInput>(out, ctl.conn()), 1u);
  tick({&ctl, &tut});
  EXPECT_EQ(session->runner().world().find("AC001")->cleared_heading_deg, 45.0);

  out = tut.send(protocol::ControlRevoke{"", c1});
  EXPECT_EQ(count_to<protocol::ControlRevoke>(out, ctl.conn()), 1u);
  EXPECT_EQ(rejected(tut.send(ci), tut.conn()), RejectReason::Forbidden);
  EXPECT_FALSE(rejected(tut.send(protocol::ControlRevoke{"", c1}), tut.conn()));
}

TEST_F(SessionTest, TransmissionsCarryTheSpeaker) {
  make();
  auto ctl = client("ctl");
  auto tut = client("tut");
  auto pil = client("pil");
  ctl.hello(Role::Controller);
  tut.hello(Role::RemoteTutor, 1);
  pil.hello(Role::PseudoPilot);
  auto out = tut.send(protocol::Transmission{"124.5", "say again", "forged", std::nullopt});
  pil.keep(out);
  const auto& t = pil.last<protocol::Transmission>()->as<protocol::Transmission>();
  EXPECT_EQ(t.from, "REMOTE_TUTOR");
  EXPECT_EQ(t.tutor_id, "c2");
  out = ctl.send(protocol::Transmission{"124.5", "QFA1 climb", "", "c9"});
  pil.keep(out);
  EXPECT_EQ(pil.last<protocol::Transmission>()->as<protocol::Transmission>().from, "B1/C1");
  EXPECT_FALSE(pil.last<protocol::Transmission>()->as<protocol::Transmission>().tutor_id);
  EXPECT_EQ(count_to<protocol::Transmission>(out, tut.conn()), 1u);
}

TEST_F(SessionTest, PointersReachOnlyTheAttachedStation) {
  auto now = std::chrono::steady_clock::time_point{} + std::chrono::hours(1);
  SessionOptions o;
  o.clock = [&now] { return now; };
  make(4, 600, o);
  auto ctl = client("ctl");
  auto ctl2 = client("ctl2");
  auto tut = client("tut");
  ctl.hello(Role::Controller);
  ctl2.hello(Role::Controller);
  tut.hello(Role::RemoteTutor, 1);
  const protocol::StationId c1{"B1", protocol::StationKind::Controller, 1};
  auto out = tut.send(protocol::Pointer{{"", c1, 1, 1, true}});
  EXPECT_EQ(count_to<protocol::Pointer>(out, ctl.conn()), 1u);
  EXPECT_EQ(count_to<protocol::Pointer>(out, ctl2.conn()), 0u);
  out = tut.send(protocol::Pointer{{"", c1, 2, 2, true}});
  EXPECT_EQ(count_to<protocol::Pointer>(out, ctl.conn()), 0u);
  now += std::chrono::milliseconds(100);
  out = session->flush_pointers();
  ASSERT_EQ(count_to<protocol::Pointer>(out, ctl.conn()), 1u);
  EXPECT_EQ(out[0].message.as<protocol::Pointer>().overlay.x_nm, 2.0);
  const protocol::StationId c2{"B1", protocol::StationKind::Controller, 2};
  EXPECT_EQ(rejected(tut.send(protocol::Pointer{{"", c2, 1, 1, true}}), tut.conn()), RejectReason::NotAttached);
}

TEST_F(SessionTest, EveryReceiverStaysInSync) {
  make(30, 600);
  auto sup = client("sup");
  auto ctl = client("ctl");
  auto tut = client("tut");
  auto pil = client("pil");
  sup.hello(Role::Supervisor);
  ctl.hello(Role::Controller);
  tut.hello(Role::RemoteTutor, 1);
  pil.hello(Role::PseudoPilot);
  start(sup);
  protocol::PictureTracker rx_ctl, rx_tut;
  for (const auto& m : ctl.inbox) ASSERT_TRUE(rx_ctl.apply(m));
  for (const auto& m : tut.inbox) ASSERT_TRUE(rx_tut.apply(m));
  std::mt19937_64 rng(4);
  std::size_t snapshots = 0;
  for (int t = 0; t < 120; ++t) {
    for (auto* c : {&sup, &ctl, &tut, &pil}) c->send(protocol::Heartbeat{});
    if (t % 7 == 3) {
      const auto cs = test::callsign(1 + static_cast<int>(rng() % 30));
      pil.send(protocol::PilotCmd{cmd(cs + " FH " + std::to_string(rng() % 360))});
    }
    for (const auto& o : session->on_timer()) {
      if (o.connection == ctl.conn()) {
        snapshots += o.message.is<protocol::StateSnapshot>();
        ASSERT_TRUE(rx_ctl.apply(o.message)) << "tick " << t;
      }
      if (o.connection == tut.conn()) ASSERT_TRUE(rx_tut.apply(o.message)) << "tick " << t;
    }
    ASSERT_EQ(rx_ctl.digest(), session->picture_digest());
    ASSERT_EQ(rx_tut.digest(), session->picture_digest());
  }
  EXPECT_EQ(rx_ctl.picture().size(), 30u);
  // Controllers get deltas after the first frame; the tutor stream refreshes every 50.
  EXPECT_EQ(snapshots, 0u);
  EXPECT_GE(session->stats().snapshots_sent, 2u + 2u);
}

TEST_F(SessionTest, HeartbeatWithStaleDigestTriggersSnapshot) {
  make();
  auto sup = client("sup");
  auto ctl = client("ctl");
  sup.hello(Role::Supervisor);
  ctl.hello(Role::Controller);
  start(sup);
  tick({&ctl}, 3);
  auto out = ctl.send(protocol::Heartbeat{session->picture_digest()});
  EXPECT_EQ(count_to<protocol::StateSnapshot>(out, ctl.conn()), 0u);
  out = ctl.send(protocol::Heartbeat{"garbage"});
  ASSERT_EQ(count_to<protocol::StateSnapshot>(out, ctl.conn()), 1u);
  EXPECT_EQ(out.back().message.as<protocol::StateSnapshot>().digest, session->picture_digest());
}

TEST_F(SessionTest, SilentClientIsDeclaredDeadThenForgotten) {
  make(4, 600, short_timers());
  auto sup = client("sup");
  auto ctl = client("ctl");
  auto tut = client("tut");
  sup.hello(Role::Supervisor);
  ctl.hello(Role::Controller);
  tut.hello(Role::RemoteTutor, 1);
  start(sup);
  const protocol::StationId c1{"B1", protocol::StationKind::Controller, 1};
  tut.send(protocol::ControlGrantMsg{{"", c1, 0, true}});
  for (int t = 0; t < 4; ++t) {
    sup.send(protocol::Heartbeat{});
    tut.send(protocol::Heartbeat{});
    tick({&ctl, &tut});
    EXPECT_NE(session->liveness("c2"), protocol::Liveness::Dead) << t;
  }
  EXPECT_EQ(session->liveness("c2"), protocol::Liveness::Suspect);
  sup.send(protocol::Heartbeat{});
  tut.send(protocol::Heartbeat{});
  tick({&ctl, &tut});
  EXPECT_EQ(session->liveness("c2"), protocol::Liveness::Dead);
  EXPECT_TRUE(ctl.last<protocol::Bye>());
  EXPECT_EQ(session->occupancy().controller_count(), 0u);
  EXPECT_EQ(session->grants().size(), 0u);
  EXPECT_TRUE(tut.last<protocol::ControlRevoke>());
  EXPECT_EQ(session->tutors().size(), 1u);
  EXPECT_NE(session->client("c2"), nullptr);
  for (int t = 0; t < 11; ++t) {
    sup.send(protocol::Heartbeat{});
    tut.send(protocol::Heartbeat{});
    tick({});
  }
  EXPECT_EQ(session->client("c2"), nullptr);
}

TEST_F(SessionTest, ResumeWithinGraceRestoresSeatAndPicture) {
  make(6, 600, short_timers());
  auto sup = client("sup");
  auto ctl = client("ctl");
  sup.hello(Role::Supervisor);
  ctl.hello(Role::Controller, 3);
  const auto token = ctl.last<protocol::Welcome>()->as<protocol::Welcome>().resume_token;
  start(sup);
  tick({&ctl}, 2);
  session->disconnect(ctl.conn());
  for (int t = 0; t < 8; ++t) {
    sup.send(protocol::Heartbeat{});
    tick({});
  }
  ASSERT_EQ(session->liveness("c2"), protocol::Liveness::Dead);

  FakeClient back(*session, 99, "ctl");
  const auto out = back.hello(Role::Controller, std::nullopt, token);
  ASSERT_FALSE(rejected(out, 99));
  const auto& w = back.last<protocol::Welcome>()->as<protocol::Welcome>();
  EXPECT_EQ(w.client_id, "c2");
  EXPECT_EQ(w.station->index, 3);
  const auto& snap = back.last<protocol::StateSnapshot>()->as<protocol::StateSnapshot>();
  EXPECT_EQ(snap.digest, session->picture_digest());
  EXPECT_EQ(protocol::picture_digest(protocol::picture_from_tracks(snap.tracks)), snap.digest);
  EXPECT_EQ(session->liveness("c2"), protocol::Liveness::Alive);
}

TEST_F(SessionTest, ResumeBeforeDeathJustRebinds) {
  make(4, 600, short_timers());
  auto ctl = client("ctl");
  ctl.hello(Role::Controller);
  const auto token = ctl.last<protocol::Welcome>()->as<protocol::Welcome>().resume_token;
  FakeClient back(*session, 50, "ctl");
  ASSERT_FALSE(rejected(back.hello(Role::Controller, std::nullopt, token), 50));
  EXPECT_EQ(session->connected_count(), 1u);
  EXPECT_EQ(rejected(ctl.send(protocol::Heartbeat{}), ctl.conn()), RejectReason::NotJoined);
}

TEST_F(SessionTest, ResumeAfterGraceIsRejected) {
  make(4, 600, short_timers());
  auto sup = client("sup");
  auto ctl = client("ctl");
  sup.hello(Role::Supervisor);
  ctl.hello(Role::Controller);
  const auto token = ctl.last<protocol::Welcome>()->as<protocol::Welcome>().resume_token;
  session->disconnect(ctl.conn());
  for (int t = 0; t < 20; ++t) {
    sup.send(protocol::Heartbeat{});
    tick({});
  }
  FakeClient back(*session, 99, "ctl");
  EXPECT_EQ(rejected(back.hello(Role::Controller, std::nullopt, token), 99), RejectReason::GraceExpired);
}

TEST_F(SessionTest, ResumeToATakenStationIsRejected) {
  make(4, 600, short_timers());
  auto sup = client("sup");
  auto ctl = client("ctl");
  sup.hello(Role::Supervisor);
  ctl.hello(Role::Controller, 1);
  const auto token = ctl.last<protocol::Welcome>()->as<protocol::Welcome>().resume_token;
  session->disconnect(ctl.conn());
  for (int t = 0; t < 6; ++t) {
    sup.send(protocol::Heartbeat{});
    tick({});
  }
  auto other = client("other");
  ASSERT_FALSE(rejected(other.hello(Role::Controller, 1), other.conn()));
  FakeClient back(*session, 99, "ctl");
  EXPECT_EQ(rejected(back.hello(Role::Controller, std::nullopt, token), 99), RejectReason::StationReassigned);
  EXPECT_EQ(session->client("c2"), nullptr);
}

TEST_F(SessionTest, ByeFreesTheSeatAtOnce) {
  make();
  auto ctl = client("ctl");
  ctl.hello(Role::Controller);
  ctl.send(protocol::Bye{"done"});
  EXPECT_EQ(session->occupancy().controller_count(), 0u);
  EXPECT_EQ(session->client_count(), 0u);
}

TEST_F(SessionTest, SupervisorInjectsAndReassigns) {
  make();
  auto sup = client("sup");
  auto ctl = client("ctl");
  sup.hello(Role::Supervisor);
  ctl.hello(Role::Controller);
  auto inject = test::supervisor_cmd(SupervisorVerb::InjectEvent);
  inject.event_kind = exercise::EventKind::GoAround;
  inject.callsign = "AC001";
  EXPECT_EQ(rejected(sup.send(inject), sup.conn()), RejectReason::BadPhase);
  start(sup);
  EXPECT_EQ(rejected(sup.send(inject), sup.conn()), RejectReason::UnknownCallsign);
  tick({&ctl});
  EXPECT_FALSE(rejected(sup.send(inject), sup.conn()));
  tick({&ctl});
  const auto& d = ctl.last<protocol::StateDelta>()->as<protocol::StateDelta>();
  ASSERT_EQ(d.alerts.size(), 1u);
  EXPECT_EQ(d.alerts[0].kind, protocol::AlertKind::GoAround);
  EXPECT_TRUE(session->runner().world().find("AC001")->status.go_around);

  auto re = test::supervisor_cmd(SupervisorVerb::ReassignStation);
  re.client_id = "c2";
  re.station_index = 7;
  auto out = sup.send(re);
  ctl.keep(out);
  EXPECT_EQ(ctl.last<protocol::Welcome>()->as<protocol::Welcome>().station->index, 7);
  re.station_index = 11;
  EXPECT_EQ(rejected(sup.send(re), sup.conn()), RejectReason::InvalidStation);
  EXPECT_EQ(session->client("c2")->station->index, 7);
}

TEST(SessionLoad, LoadScenarioResetsTheRun) {
  Recorder rec;
  const auto loader = [](const std::string& name) {
    if (name == "big") return test::make_scenario(8);
    if (name == "broken") {
      auto s = test::make_scenario(2);
      s.schedule[1].callsign = "AC001";
      return s;
    }
    throw Error(ErrorCode::InvalidScenario, "no scenario " + name);
  };
  Session s("B1", protocol::BlockConfig{"B1"}, test::make_scenario(2), {}, rec.factory(), loader);
  FakeClient sup(s, 1, "sup");
  sup.hello(Role::Supervisor);
  auto load = test::supervisor_cmd(SupervisorVerb::LoadScenario);
  load.scenario = "broken";
  EXPECT_EQ(rejected(sup.send(load), 1), RejectReason::InvalidScenario);
  load.scenario = "missing";
  EXPECT_EQ(rejected(sup.send(load), 1), RejectReason::InvalidScenario);
  load.scenario = "big";
  const auto first_log = rec.lines;
  EXPECT_FALSE(rejected(sup.send(load), 1));
  EXPECT_EQ(s.runner().scenario().schedule.size(), 8u);
  EXPECT_EQ(s.run_index(), 2u);
  EXPECT_NE(rec.lines, first_log);
  sup.send(test::supervisor_cmd(SupervisorVerb::Start));
  EXPECT_EQ(rejected(sup.send(load), 1), RejectReason::BadPhase);
}

// ------------------------------------------------------------------- replay

TEST(Replay, ReproducesEveryDigestOfALiveRun) {
  Recorder rec;
  Session s("B1", protocol::BlockConfig{"B1"}, test::make_scenario(12, 300), {}, rec.factory());
  FakeClient sup(s, 1, "sup"), pil(s, 2, "pil"), ctl(s, 3, "ctl"), tut(s, 4, "tut");
  sup.hello(Role::Supervisor);
  pil.hello(Role::PseudoPilot);
  ctl.hello(Role::Controller);
  tut.hello(Role::RemoteTutor, 1);
  sup.send(test::supervisor_cmd(SupervisorVerb::Start));
  const protocol::StationId c1{"B1", protocol::StationKind::Controller, 1};
  tut.send(protocol::ControlGrantMsg{{"", c1, 0, true}});
  std::mt19937_64 rng(12);
  std::vector<std::string> live;
  for (int t = 0; t < 120; ++t) {
    if (rng() % 3 == 0) pil.send(protocol::PilotCmd{cmd(test::callsign(1 + rng() % 12) + " FH " + std::to_string(rng() % 360))});
    if (rng() % 5 == 0) ctl.send(protocol::PilotCmd{cmd(test::callsign(1 + rng() % 12) + " C " + std::to_string(rng() % 30000))});
    if (rng() % 7 == 0) tut.send(protocol::ControlInput{"", c1, cmd(test::callsign(1 + rng() % 12) + " SPD 200")});
    if (t == 40) sup.send(test::supervisor_cmd(SupervisorVerb::Pause));
    if (t == 45) sup.send(test::supervisor_cmd(SupervisorVerb::Resume));
    if (t == 60) {
      auto inject = test::supervisor_cmd(SupervisorVerb::InjectEvent);
      inject.event_kind = exercise::EventKind::EmergencyDeclared;
      inject.callsign = "AC003";
      sup.send(inject);
    }
    s.run_tick();
    live.push_back(sim::world_digest(s.runner().world()));
  }
  sup.send(test::supervisor_cmd(SupervisorVerb::Stop));

  const auto log = rec.parsed();
  const auto r = replay(log, test::make_scenario(12, 300), true);
  EXPECT_FALSE(r.divergence);
  EXPECT_EQ(r.verified, s.runner().tick());
  EXPECT_EQ(r.final_digest, sim::world_digest(s.runner().world()));
  EXPECT_EQ(r.ticks, s.runner().tick());
  EXPECT_EQ(r.separation_events, s.stats().separation_events);
  ASSERT_EQ(r.digests.size(), r.ticks);
  for (std::size_t i = 0; i < r.digests.size(); ++i) EXPECT_EQ(r.digests[i].first, i + 1);
}

TEST(Replay, DetectsTamperingAndWrongScenario) {
  Recorder rec;
  const auto scenario = test::make_scenario(4, 60);
  std::istringstream script("1 AC001 FH 180\n5 AC002 C 20000\n");
  run_headless(scenario, parse_pilot_script(script, scenario), 60, rec.factory());
  auto log = rec.parsed();
  EXPECT_FALSE(replay(log, scenario, true).divergence);

  for (auto& e : log.entries) {
    if (e.digest && e.tick_index == 17) e.digest = std::string(64, '0');
  }
  const auto r = replay(log, scenario, true);
  ASSERT_TRUE(r.divergence);
  EXPECT_EQ(r.divergence->tick, 17u);

  try {
    replay(log, test::make_scenario(5, 60), true);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ScenarioMismatch);
  }
}

// ----------------------------------------------------------------- headless

TEST(Headless, ScriptParsing) {
  const auto scenario = test::make_scenario(3);
  std::istringstream ok("# warmup\n\n0 AC001 FH 90\n0 ac002 dct alpha\n12 AC003 SPD 220\r\n");
  const auto lines = parse_pilot_script(ok, scenario);
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[1].command.waypoint, "ALPHA");
  EXPECT_EQ(lines[2].at_tick, 12u);
  EXPECT_EQ(lines[2].line, 5u);

  const auto fails = [&](const std::string& text, ErrorCode code, const std::string& where) {
    std::istringstream in(text);
    try {
      parse_pilot_script(in, scenario);
      ADD_FAILURE() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), code) << text;
      EXPECT_NE(std::string(e.what()).find(where), std::string::npos) << e.what();
    }
  };
  fails("5 AC001 FH 90\n3 AC001 FH 80\n", ErrorCode::SyntaxError, "line 2");
  fails("x AC001 FH 90\n", ErrorCode::SyntaxError, "line 1");
  fails("1 AC001 FH 900\n", ErrorCode::DomainError, "line 1");
  fails("1\n", ErrorCode::SyntaxError, "line 1");
  fails("\n1 ZZ9 FH 90\n", ErrorCode::UnknownCallsign, "line 2");
  fails("1 AC001 DCT NOWHERE\n", ErrorCode::DomainError, "line 1");
}

TEST(Headless, RunsAreDeterministic) {
  const auto scenario = test::make_scenario(10, 120);
  std::istringstream script("1 AC001 FH 180\n4 AC004 C 3000\n30 AC007 DCT BRAVO\n");
  const auto lines = parse_pilot_script(script, scenario);
  Recorder a, b;
  const auto ra = run_headless(scenario, lines, 90, a.factory());
  const auto rb = run_headless(scenario, lines, 90, b.factory());
  EXPECT_EQ(ra.ticks, 90u);
  EXPECT_EQ(ra.final_digest, rb.final_digest);
  EXPECT_TRUE(ra.rejects.empty());
  const auto la = *a.lines, lb = *b.lines;
  ASSERT_EQ(la.size(), lb.size());
  for (std::size_t i = 1; i < la.size(); ++i) EXPECT_EQ(la[i], lb[i]);
  EXPECT_EQ(replay(a.parsed(), scenario, true).final_digest, ra.final_digest);
}

// --------------------------------------------------------------------- host

TEST(HostBlocks, OneLiveSessionPerBlock) {
  Host host;
  host.blocks().add(protocol::BlockConfig{"B1"});
  try {
    host.create_session("B2", test::make_scenario());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoSuchBlock);
  }
  auto& s = host.create_session("B1", test::make_scenario(2, 3));
  EXPECT_EQ(s.id(), "B1");
  EXPECT_EQ(host.find("B1"), &s);
  try {
    host.create_session("B1", test::make_scenario());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BlockBusy);
  }
  auto bad = test::make_scenario(2);
  bad.schedule[1].callsign = "AC001";
  host.blocks().clone_block(*host.blocks().find("B1"), "B2");
  try {
    host.create_session("B2", bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidScenario);
  }

  FakeClient sup(s, 1, "sup");
  sup.hello(Role::Supervisor);
  sup.send(test::supervisor_cmd(SupervisorVerb::Start));
  for (int i = 0; i < 3; ++i) s.run_tick();
  ASSERT_EQ(s.phase(), Phase::Ended);
  EXPECT_NO_THROW(host.create_session("B1", test::make_scenario()));
  EXPECT_EQ(host.session_count(), 1u);
}
