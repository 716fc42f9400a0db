#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>

#include "atcsim/error.hpp"
#include "atcsim/protocol/block.hpp"
#include "atcsim/protocol/mirror.hpp"
#include "atcsim/protocol/tutoring.hpp"

// Randomised scenarios shared by the unit suites and the acceptance gate.
namespace atcsim::test {

inline protocol::Track random_track(std::mt19937_64& rng, const std::string& cs) {
  std::uniform_real_distribution<double> xy(-100.0, 100.0), alt(0.0, 40000.0), hdg(0.0, 360.0), gs(100.0, 500.0);
  protocol::Track t;
  t.callsign = cs;
  t.position = {xy(rng), xy(rng), alt(rng)};
  t.heading_deg = hdg(rng);
  t.ground_speed_kt = gs(rng);
  t.sector = rng() % 2 ? "EAST" : "WEST";
  if (rng() % 3 == 0) t.cleared_alt_ft = alt(rng);
  return t;
}

// One step of picture evolution: some tracks move, some leave, some arrive.
inline protocol::Picture evolve(std::mt19937_64& rng, const protocol::Picture& p, int& next_callsign) {
  protocol::Picture out;
  std::uniform_real_distribution<double> jitter(-0.5, 0.5);
  for (const auto& [cs, t] : p) {
    const auto roll = rng() % 20;
    if (roll == 0) continue;
    protocol::Track moved = t;
    if (roll < 14) {
      moved.position.x_nm += jitter(rng);
      moved.position.y_nm += jitter(rng);
      moved.position.alt_ft += 100.0 * jitter(rng);
      moved.heading_deg = std::fmod(moved.heading_deg + 360.0 + jitter(rng), 360.0);
    }
    if (roll == 19) moved.status.emergency = !moved.status.emergency;
    out.emplace(cs, moved);
  }
  const auto arrivals = rng() % 3;
  for (unsigned i = 0; i < arrivals; ++i) {
    const std::string cs = "T" + std::to_string(next_callsign++);
    out.emplace(cs, random_track(rng, cs));
  }
  return out;
}

struct MirrorRun {
  std::size_t frames = 0;       // frames delivered to the receiver
  std::size_t dropped = 0;      // frames lost on purpose
  std::size_t resyncs = 0;      // snapshots sent because the receiver asked
  std::size_t mismatches = 0;   // receiver claims sync with a wrong picture, or never recovers
};

// Sender and receiver of one mirror stream. Frames are occasionally dropped
// or the receiver's state is clobbered; the receiver must notice and the
// next snapshot must restore an identical picture.
inline MirrorRun run_mirror_sequence(std::uint64_t seed, int steps = 80) {
  std::mt19937_64 rng(seed);
  MirrorRun run;
  protocol::PictureTracker rx;
  protocol::Picture truth;
  std::optional<protocol::Picture> known;  // what the sender believes the receiver holds
  int since_snapshot = 0;
  int next_cs = 0;
  for (int i = 0; i < 1 + static_cast<int>(rng() % 8); ++i) {
    const std::string cs = "T" + std::to_string(next_cs++);
    truth.emplace(cs, random_track(rng, cs));
  }

  const protocol::StationId station{"B1", protocol::StationKind::Controller, 1};
  for (int step = 0; step < steps; ++step) {
    if (step > 0) truth = evolve(rng, truth, next_cs);
    auto frame = protocol::make_mirror_frame(known, truth, since_snapshot, station);
    since_snapshot = frame.full_snapshot ? 0 : since_snapshot + 1;
    known = truth;
    const std::string digest = protocol::picture_digest(truth);

    protocol::MirrorFrameMsg msg{frame, static_cast<std::uint64_t>(step), digest, {}};
    const auto roll = rng() % 40;
    if (roll == 0) {
      ++run.dropped;
      continue;
    }
    bool ok = rx.apply(protocol::make_message("S", "host", step + 1, step, msg));
    ++run.frames;
    if (roll == 1 && ok) {
      // Receiver-side corruption: a bogus snapshot with a bogus digest.
      protocol::StateSnapshot junk{0, "RUNNING", {random_track(rng, "JUNK")}, "bad", {}};
      rx.apply(protocol::make_message("S", "host", 0, 0, junk));
      ok = false;
    }
    if (ok) {
      if (rx.digest() != digest || rx.picture() != truth) ++run.mismatches;
      continue;
    }
    // The receiver asks for a resync; the sender answers with a snapshot.
    ++run.resyncs;
    known.reset();
    frame = protocol::make_mirror_frame(known, truth, since_snapshot, station);
    since_snapshot = 0;
    known = truth;
    msg = {frame, static_cast<std::uint64_t>(step), digest, {}};
    ++run.frames;
    if (!rx.apply(protocol::make_message("S", "host", step + 1, step, msg)) || rx.digest() != digest) {
      ++run.mismatches;
    }
  }
  return run;
}

struct TutorRun {
  std::size_t operations = 0;
  std::size_t second_attaches = 0;  // attempts on an occupied station or by a busy tutor
  std::size_t violations = 0;
};

// Random joins, departures, attaches and detaches against a model of the
// one-to-one attachment relation.
inline TutorRun run_tutor_sequence(std::uint64_t seed, int steps = 200) {
  std::mt19937_64 rng(seed);
  TutorRun run;
  protocol::BlockOccupancy block(protocol::BlockConfig{"B1"});
  protocol::TutorRegistry reg;
  std::map<std::string, int> model;  // tutor -> controller station index
  std::set<int> occupied;
  constexpr int kStations = protocol::BlockConfig::kMaxControllerStations;
  constexpr int kTutors = 14;

  const auto station = [&](int idx) { return block.station(protocol::StationKind::Controller, idx); };
  const auto tutor_at = [&](int idx) -> std::optional<std::string> {
    for (const auto& [t, s] : model) {
      if (s == idx) return t;
    }
    return std::nullopt;
  };

  for (int step = 0; step < steps; ++step) {
    ++run.operations;
    const int idx = 1 + static_cast<int>(rng() % kStations);
    const std::string tutor = "tutor" + std::to_string(rng() % kTutors);
    switch (rng() % 5) {
      case 0: {
        const auto out = block.join({protocol::Role::Controller, idx, "ctl" + std::to_string(idx)});
        if (std::holds_alternative<protocol::Seat>(out) != !occupied.count(idx)) ++run.violations;
        occupied.insert(idx);
        break;
      }
      case 1: {
        if (!occupied.count(idx)) break;
        block.leave("ctl" + std::to_string(idx));
        occupied.erase(idx);
        if (auto t = tutor_at(idx)) {
          reg.detach(*t);
          model.erase(*t);
        }
        break;
      }
      case 2:
      case 3: {
        std::optional<ErrorCode> expected;
        if (!occupied.count(idx)) {
          expected = ErrorCode::NoOccupant;
        } else if (tutor_at(idx)) {
          expected = ErrorCode::AlreadyAttached;
        } else if (model.count(tutor)) {
          expected = ErrorCode::TutorBusy;
        }
        if (expected == ErrorCode::AlreadyAttached || expected == ErrorCode::TutorBusy) ++run.second_attaches;
        try {
          reg.attach(tutor, station(idx), block);
          if (expected) ++run.violations;
          model[tutor] = idx;
        } catch (const Error& e) {
          if (!expected || e.code() != *expected) ++run.violations;
        }
        break;
      }
      case 4: {
        if (reg.detach(tutor) != (model.erase(tutor) == 1)) ++run.violations;
        break;
      }
    }

    // Partial bijection: both directions agree and no station is shared.
    std::set<protocol::StationId> seen;
    if (reg.size() != model.size()) ++run.violations;
    for (const auto& [t, s] : reg.attachments()) {
      if (!seen.insert(s).second) ++run.violations;
      if (reg.tutor_at(s) != t) ++run.violations;
      const auto m = model.find(t);
      if (m == model.end() || station(m->second) != s) ++run.violations;
    }
  }
  return run;
}

}  // namespace atcsim::test
