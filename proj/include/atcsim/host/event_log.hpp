#pragma once

#include <unistd.h>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <istream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "atcsim/error.hpp"
#include "atcsim/protocol/message.hpp"

namespace atcsim::host {

using nlohmann::json;

inline constexpr int kLogSchemaVersion = 1;

struct LogHeader {
  int schema_version = kLogSchemaVersion;
  std::string scenario_digest;
  double tick_seconds = 1.0;
  std::string started_at;  // the only wall-clock value in a log
  std::string session_id;
  std::string block_id;

  bool operator==(const LogHeader&) const = default;
};

// A message line or a per-tick digest line.
struct LogEntry {
  std::uint64_t tick_index = 0;
  std::optional<protocol::Message> message;
  bool apply = false;  // message was accepted as a world input
  std::optional<std::string> digest;
  std::size_t line = 0;  // 1-based line in the file
};

struct EventLog {
  LogHeader header;
  std::vector<LogEntry> entries;

  std::size_t message_count() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.message.has_value();
    return n;
  }
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string header_line(const LogHeader& h) {
  return json{{"schema_version", h.schema_version}, {"scenario_digest", h.scenario_digest},
              {"tick_seconds", h.tick_seconds},     {"started_at", h.started_at},
              {"session_id", h.session_id},         {"block_id", h.block_id}}
      .dump();
}

inline std::string message_line(std::uint64_t tick, const protocol::Message& m, bool apply) {
  return json{{"tick_index", tick}, {"message", protocol::to_json(m)}, {"apply", apply}}.dump();
}

inline std::string digest_line(std::uint64_t tick, const std::string& digest) {
  return json{{"tick_index", tick}, {"digest", digest}}.dump();
}

// Append-only sink for one session run.
class EventLogSink {
 public:
  virtual ~EventLogSink() = default;
  virtual void write_line(const std::string& line) = 0;
  // Durability point; called on phase transitions.
  virtual void sync() {}

  void append_message(std::uint64_t tick, const protocol::Message& m, bool apply) {
    write_line(message_line(tick, m, apply));
    ++messages_;
  }
  void append_digest(std::uint64_t tick, const std::string& digest) { write_line(digest_line(tick, digest)); }

  std::size_t messages_written() const { return messages_; }

 private:
  std::size_t messages_ = 0;
};

class MemoryLogSink : public EventLogSink {
 public:
  explicit MemoryLogSink(const LogHeader& h) { lines_.push_back(header_line(h)); }
  void write_line(const std::string& line) override { lines_.push_back(line); }

  const std::vector<std::string>& lines() const { return lines_; }
  std::string text() const {
    std::string out;
    for (const auto& l : lines_) out += l + '\n';
    return out;
  }

 private:
  std::vector<std::string> lines_;
};

class FileLogSink : public EventLogSink {
 public:
  FileLogSink(const std::string& path, const LogHeader& h) : path_(path) {
    file_ = std::fopen(path.c_str(), "wx");
    if (!file_) file_ = std::fopen(path.c_str(), "w");
    if (!file_) throw std::runtime_error("cannot open log " + path);
    write_line(header_line(h));
    sync();
  }
  ~FileLogSink() override {
    if (file_) {
      sync();
      std::fclose(file_);
    }
  }
  FileLogSink(const FileLogSink&) = delete;
  FileLogSink& operator=(const FileLogSink&) = delete;

  void write_line(const std::string& line) override {
    std::fwrite(line.data(), 1, line.size(), file_);
    std::fputc('\n', file_);
  }
  void sync() override {
    std::fflush(file_);
    ::fsync(fileno(file_));
  }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::FILE* file_ = nullptr;
};

namespace detail {

[[noreturn]] inline void corrupt(std::size_t line, std::size_t entry, const std::string& what) {
  throw Error(ErrorCode::CorruptLog, "line " + std::to_string(line) +
                                         (entry ? " (entry " + std::to_string(entry - 1) + ")" : std::string()) + ": " +
                                         what);
}

}  // namespace detail

// Reads and checks a whole .atclog. Entries must be in non-decreasing tick
// order; the first violation is reported with its line and entry index.
inline EventLog read_event_log(std::istream& in) {
  EventLog log;
  std::string line;
  std::size_t lineno = 0;

  if (!std::getline(in, line)) detail::corrupt(1, 0, "missing header");
  ++lineno;
  try {
    const json h = json::parse(line);
    log.header.schema_version = h.at("schema_version").get<int>();
    log.header.scenario_digest = h.at("scenario_digest").get<std::string>();
    log.header.tick_seconds = h.at("tick_seconds").get<double>();
    log.header.started_at = h.at("started_at").get<std::string>();
    log.header.session_id = h.value("session_id", "");
    log.header.block_id = h.value("block_id", "");
  } catch (const json::exception& e) {
    detail::corrupt(lineno, 0, std::string("bad header: ") + e.what());
  }
  if (log.header.schema_version != kLogSchemaVersion) {
    detail::corrupt(lineno, 0, "unsupported log schema " + std::to_string(log.header.schema_version));
  }

  std::uint64_t last_tick = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::size_t entry_no = log.entries.size() + 1;
    LogEntry entry;
    entry.line = lineno;
    try {
      const json j = json::parse(line);
      entry.tick_index = j.at("tick_index").get<std::uint64_t>();
      if (const auto d = j.find("digest"); d != j.end()) {
        entry.digest = d->get<std::string>();
      } else {
        entry.message = protocol::from_json(j.at("message"));
        entry.apply = j.at("apply").get<bool>();
      }
    } catch (const json::exception& e) {
      detail::corrupt(lineno, entry_no, std::string("unparseable entry: ") + e.what());
    } catch (const Error& e) {
      detail::corrupt(lineno, entry_no, e.what());
    }
    if (entry.tick_index < last_tick) {
      detail::corrupt(lineno, entry_no, "tick_index " + std::to_string(entry.tick_index) + " after " +
                                            std::to_string(last_tick));
    }
    last_tick = entry.tick_index;
    log.entries.push_back(std::move(entry));
  }
  return log;
}

}  // namespace atcsim::host
