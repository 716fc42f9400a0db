#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace atcsim {

enum class ErrorCode {
  UnknownCallsign,
  WaypointNotInScenario,
  SyntaxError,
  DomainError,
  ParseError,
  SchemaError,
  DecodeError,
  VersionError,
  AlreadyAttached,
  TutorBusy,
  NoOccupant,
  NotAttached,
  GrantExists,
  DuplicateBlockId,
  NoSuchBlock,
  BlockBusy,
  InvalidScenario,
  BadPhase,
  NotSupervisor,
  ScenarioMismatch,
  CorruptLog,
  GraceExpired,
  StationReassigned,
  DigestMismatch,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownCallsign: return "UnknownCallsign";
    case ErrorCode::WaypointNotInScenario: return "WaypointNotInScenario";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::DecodeError: return "DecodeError";
    case ErrorCode::VersionError: return "VersionError";
    case ErrorCode::AlreadyAttached: return "AlreadyAttached";
    case ErrorCode::TutorBusy: return "TutorBusy";
    case ErrorCode::NoOccupant: return "NoOccupant";
    case ErrorCode::NotAttached: return "NotAttached";
    case ErrorCode::GrantExists: return "GrantExists";
    case ErrorCode::DuplicateBlockId: return "DuplicateBlockId";
    case ErrorCode::NoSuchBlock: return "NoSuchBlock";
    case ErrorCode::BlockBusy: return "BlockBusy";
    case ErrorCode::InvalidScenario: return "InvalidScenario";
    case ErrorCode::BadPhase: return "BadPhase";
    case ErrorCode::NotSupervisor: return "NotSupervisor";
    case ErrorCode::ScenarioMismatch: return "ScenarioMismatch";
    case ErrorCode::CorruptLog: return "CorruptLog";
    case ErrorCode::GraceExpired: return "GraceExpired";
    case ErrorCode::StationReassigned: return "StationReassigned";
    case ErrorCode::DigestMismatch: return "DigestMismatch";
  }
  return "Unknown";
}

// Every recoverable failure in the library is reported through this type;
// callers branch on code(), the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace atcsim
