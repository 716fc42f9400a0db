#pragma once

#include <map>
#include <memory>
#include <string>

#include "atcsim/error.hpp"
#include "atcsim/exercise/validate.hpp"
#include "atcsim/host/session.hpp"
#include "atcsim/protocol/block.hpp"

namespace atcsim::host {

// Blocks and the one live session each may carry. A session id is the id of
// its block.
class Host {
 public:
  explicit Host(SessionOptions defaults = {}) : defaults_(std::move(defaults)) {}

  protocol::BlockRegistry& blocks() { return blocks_; }
  const protocol::BlockRegistry& blocks() const { return blocks_; }
  const SessionOptions& session_defaults() const { return defaults_; }

  Session& create_session(const std::string& block_id, exercise::Scenario scenario, LogFactory logs = {},
                          ScenarioLoader loader = {}) {
    const auto* block = blocks_.find(block_id);
    if (!block) throw Error(ErrorCode::NoSuchBlock, block_id);
    if (const auto it = sessions_.find(block_id); it != sessions_.end() && it->second->phase() != Phase::Ended) {
      throw Error(ErrorCode::BlockBusy, block_id + " already runs a session");
    }
    for (const auto& issue : exercise::validate_scenario(scenario)) {
      if (issue.severity == exercise::Severity::Error) throw Error(ErrorCode::InvalidScenario, exercise::render_issue(issue));
    }
    auto session = std::make_unique<Session>(block_id, *block, std::move(scenario), defaults_, std::move(logs),
                                             std::move(loader));
    auto& slot = sessions_[block_id];
    slot = std::move(session);
    return *slot;
  }

  Session* find(const std::string& session_id) {
    const auto it = sessions_.find(session_id);
    return it == sessions_.end() ? nullptr : it->second.get();
  }

  std::size_t session_count() const { return sessions_.size(); }
  const std::map<std::string, std::unique_ptr<Session>>& sessions() const { return sessions_; }

 private:
  SessionOptions defaults_;
  protocol::BlockRegistry blocks_;
  std::map<std::string, std::unique_ptr<Session>> sessions_;
};

}  // namespace atcsim::host
