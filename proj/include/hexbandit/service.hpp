#pragma once

// Session service for human followers. A session is one game: the system
// plans and instructs, the human moves through the follower's partial view,
// declares the instruction done, and answers the two feedback questions.
//
// Protocol (JSON over HTTP, version "v1"):
//   POST /v1/sessions                    {}                      -> session payload
//   GET  /v1/sessions/{id}                                       -> session payload
//   POST /v1/sessions/{id}/move          {"action": "forward"}   -> {"legal", "view", ...}
//   POST /v1/sessions/{id}/complete      {"terminated": false}   -> session payload
//   POST /v1/sessions/{id}/feedback      {"perceived_correct", "grammatical",
//                                         "idempotency_key"?}    -> session payload
// A session payload holds "session_id", "phase" (executing, feedback, game_over),
// "instruction", "view", "score", "moves_left" and "instruction_index". Errors are
// {"error": {"code", "message"}} with a 4xx status. The system plan is never sent.

#include <chrono>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>

#include "hexbandit/orchestrator.hpp"

namespace hexbandit::service {

using nlohmann::json;

inline constexpr const char* kProtocolVersion = "v1";

class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(int status, std::string code, const std::string& message)
      : std::runtime_error(message), status(status), code(std::move(code)) {}
  int status;
  std::string code;
};

json view_payload(const hexworld::WorldState& s);

struct ServiceConfig {
  int max_instructions = 6;
  hexworld::WorldConfig world;
  std::uint64_t seed = 1;
  int round = 0;  // round id written into records
  std::chrono::seconds idle_timeout{1800};
};

/// Transport-independent session logic; every method is thread-safe.
class SessionManager {
 public:
  using Clock = std::chrono::steady_clock;
  using RecordSink = std::function<void(const records::InteractionRecord&)>;

  SessionManager(const orchestrator::InstructionSource& source, ServiceConfig cfg, RecordSink sink = {});

  json create();
  json status(const std::string& id);
  json move(const std::string& id, const json& body);
  json complete(const std::string& id, const json& body);
  json feedback(const std::string& id, const json& body);

  /// Drops sessions idle for longer than the timeout; returns how many.
  int expire(Clock::time_point now = Clock::now());
  std::size_t size() const;

  /// Requests accepted so far for a session, for replay.
  json log(const std::string& id) const;
  std::vector<records::InteractionRecord> records(const std::string& id) const;

 private:
  friend std::vector<records::InteractionRecord> replay_log(const orchestrator::InstructionSource& source,
                                                            const ServiceConfig& cfg, const json& log);

  enum class Phase { Executing, Feedback, GameOver };
  struct Session {
    std::string id;
    int game = 0;
    int index = 0;
    Phase phase = Phase::Executing;
    std::optional<orchestrator::PreparedTurn> turn;
    std::optional<hexworld::WorldState> current;  // follower's live state, or the final state
    std::vector<hexworld::Pose> execution;
    bool terminated = false;
    Clock::time_point started;
    Clock::time_point touched;
    std::vector<records::InteractionRecord> records;
    std::map<std::string, json> idempotent;
    json log = json::array();
  };

  Session& get(const std::string& id);
  const Session& get(const std::string& id) const;
  void start_turn(Session& s, const hexworld::WorldState& leader_state);
  json payload(const Session& s) const;

  const orchestrator::InstructionSource& source_;
  ServiceConfig cfg_;
  RecordSink sink_;
  orchestrator::Seeds seeds_;
  mutable std::mutex mu_;
  std::map<std::string, Session> sessions_;
  int next_game_ = 0;
};

/// Replays a session log against a fresh manager and returns the records it produced.
std::vector<records::InteractionRecord> replay_log(const orchestrator::InstructionSource& source,
                                                   const ServiceConfig& cfg, const json& log);

/// Blocks serving HTTP on host:port until stop() is called from another thread.
class HttpServer {
 public:
  explicit HttpServer(SessionManager& manager);
  ~HttpServer();
  bool listen(const std::string& host, int port);
  int bind_any_port(const std::string& host);
  void listen_after_bind();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace hexbandit::service
