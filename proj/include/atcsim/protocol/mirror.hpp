#pragma once

#include <optional>
#include <vector>

#include "atcsim/error.hpp"
#include "atcsim/protocol/message.hpp"
#include "atcsim/protocol/types.hpp"

namespace atcsim::protocol {

inline constexpr int kSnapshotInterval = 50;

inline std::vector<Track> snapshot_tracks(const Picture& p) {
  std::vector<Track> out;
  out.reserve(p.size());
  for (const auto& [_, t] : p) out.push_back(t);
  return out;
}

inline Picture picture_from_tracks(const std::vector<Track>& tracks) {
  Picture p;
  for (const auto& t : tracks) p.insert_or_assign(t.callsign, t);
  return p;
}

// Minimal ADD/REMOVE/MOVE set, keyed by callsign, in callsign order.
inline std::vector<MirrorOp> diff_pictures(const Picture& prev, const Picture& curr) {
  std::vector<MirrorOp> ops;
  auto p = prev.begin();
  auto c = curr.begin();
  while (p != prev.end() || c != curr.end()) {
    if (c == curr.end() || (p != prev.end() && p->first < c->first)) {
      Track gone;
      gone.callsign = p->first;
      ops.push_back({MirrorOpKind::Remove, std::move(gone)});
      ++p;
    } else if (p == prev.end() || c->first < p->first) {
      ops.push_back({MirrorOpKind::Add, c->second});
      ++c;
    } else {
      if (!(p->second == c->second)) ops.push_back({MirrorOpKind::Move, c->second});
      ++p;
      ++c;
    }
  }
  return ops;
}

// A full snapshot is sent when the receiver's picture is unknown or after
// `snapshot_interval` consecutive delta frames.
inline MirrorFrame make_mirror_frame(const std::optional<Picture>& prev, const Picture& curr,
                                     int frames_since_snapshot, StationId target = {},
                                     int snapshot_interval = kSnapshotInterval) {
  MirrorFrame frame;
  frame.target_station = std::move(target);
  if (!prev || frames_since_snapshot >= snapshot_interval) {
    frame.base_digest = prev ? picture_digest(*prev) : std::string();
    frame.full_snapshot = snapshot_tracks(curr);
    return frame;
  }
  frame.base_digest = picture_digest(*prev);
  frame.ops = diff_pictures(*prev, curr);
  return frame;
}

// Throws DigestMismatch when a delta does not apply to `picture`; the
// receiver must then ask for a snapshot.
inline Picture apply_ops(const Picture& picture, const std::vector<MirrorOp>& ops) {
  Picture out = picture;
  for (const auto& op : ops) {
    switch (op.kind) {
      case MirrorOpKind::Add:
        if (!out.emplace(op.track.callsign, op.track).second) {
          throw Error(ErrorCode::DigestMismatch, "ADD of existing " + op.track.callsign);
        }
        break;
      case MirrorOpKind::Remove:
        if (out.erase(op.track.callsign) == 0) throw Error(ErrorCode::DigestMismatch, "REMOVE of unknown " + op.track.callsign);
        break;
      case MirrorOpKind::Move: {
        const auto it = out.find(op.track.callsign);
        if (it == out.end()) throw Error(ErrorCode::DigestMismatch, "MOVE of unknown " + op.track.callsign);
        it->second = op.track;
        break;
      }
    }
  }
  return out;
}

inline Picture apply_mirror_frame(const Picture& picture, const MirrorFrame& frame) {
  if (frame.full_snapshot) return picture_from_tracks(*frame.full_snapshot);
  if (!frame.ops) throw Error(ErrorCode::DigestMismatch, "frame carries neither ops nor snapshot");
  if (picture_digest(picture) != frame.base_digest) {
    throw Error(ErrorCode::DigestMismatch, "base digest does not match local picture");
  }
  return apply_ops(picture, *frame.ops);
}

// Receiver side of state and mirror streams. A frame that cannot be applied
// leaves the tracker out of sync until the next full snapshot; the client
// asks for one by sending a HEARTBEAT that carries digest().
class PictureTracker {
 public:
  // Returns false if the message was a picture frame that did not apply.
  bool apply(const Message& m) {
    if (m.is<StateSnapshot>()) {
      const auto& s = m.as<StateSnapshot>();
      return accept(picture_from_tracks(s.tracks), s.digest, s.tick);
    }
    if (m.is<StateDelta>()) {
      const auto& d = m.as<StateDelta>();
      if (!in_sync_ || picture_digest(picture_) != d.base_digest) return fail();
      try {
        return accept(apply_ops(picture_, d.ops), d.digest, d.tick);
      } catch (const Error&) {
        return fail();
      }
    }
    if (m.is<MirrorFrameMsg>()) {
      const auto& f = m.as<MirrorFrameMsg>();
      if (!f.frame.full_snapshot && !in_sync_) return fail();
      try {
        return accept(apply_mirror_frame(picture_, f.frame), f.digest, f.tick);
      } catch (const Error&) {
        return fail();
      }
    }
    return true;
  }

  const Picture& picture() const { return picture_; }
  std::string digest() const { return picture_digest(picture_); }
  std::uint64_t tick() const { return tick_; }
  bool in_sync() const { return in_sync_; }
  std::size_t mismatches() const { return mismatches_; }
  std::size_t frames() const { return frames_; }

 private:
  bool accept(Picture p, const std::string& expected, std::uint64_t tick) {
    picture_ = std::move(p);
    tick_ = tick;
    ++frames_;
    if (picture_digest(picture_) != expected) return fail();
    in_sync_ = true;
    return true;
  }
  bool fail() {
    in_sync_ = false;
    ++mismatches_;
    return false;
  }

  Picture picture_;
  std::uint64_t tick_ = 0;
  bool in_sync_ = false;
  std::size_t mismatches_ = 0;
  std::size_t frames_ = 0;
};

}  // namespace atcsim::protocol
