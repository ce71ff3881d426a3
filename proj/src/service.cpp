#include "hexbandit/service.hpp"

#include <random>
#include <sstream>

#include "httplib.h"

namespace hexbandit::service {

using hexworld::Agent;

json view_payload(const hexworld::WorldState& s) {
  const auto obs = hexworld::follower_view(s);
  json cells = json::array();
  for (const auto& c : obs.cells) {
    json cell = {{"h", c.cell.h}, {"w", c.cell.w}};
    if (c.landmark)
      cell["landmark"] = {{"type", hexworld::landmark_type_name(c.landmark->type)},
                          {"color", hexworld::landmark_color_name(c.landmark->color)}};
    if (c.card)
      cell["card"] = {{"count", c.card->count},
                      {"color", hexworld::color_name(c.card->color)},
                      {"shape", hexworld::shape_name(c.card->shape)},
                      {"selected", c.card->selected}};
    if (c.leader) cell["leader"] = true;
    cells.push_back(std::move(cell));
  }
  const auto p = s.pose(Agent::Follower);
  return {{"board", {{"height", s.height()}, {"width", s.width()}}},
          {"pose", {{"h", p.h}, {"w", p.w}, {"orientation", p.alpha}}},
          {"cells", cells}};
}

SessionManager::SessionManager(const orchestrator::InstructionSource& source, ServiceConfig cfg, RecordSink sink)
    : source_(source), cfg_(cfg), sink_(std::move(sink)), seeds_{cfg.seed} {}

namespace {

std::string random_token() {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  std::ostringstream o;
  o << std::hex << rng();
  return o.str();
}

const char* phase_name(int p) {
  static const char* names[] = {"executing", "feedback", "game_over"};
  return names[p];
}

}  // namespace

SessionManager::Session& SessionManager::get(const std::string& id) {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ProtocolError(404, "unknown_session", "no session " + id);
  it->second.touched = Clock::now();
  return it->second;
}

const SessionManager::Session& SessionManager::get(const std::string& id) const {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ProtocolError(404, "unknown_session", "no session " + id);
  return it->second;
}

void SessionManager::start_turn(Session& s, const hexworld::WorldState& leader_state) {
  s.turn.reset();
  s.execution.clear();
  s.terminated = false;
  if (s.index < cfg_.max_instructions)
    s.turn = orchestrator::prepare_turn(leader_state, source_, seeds_.sample(cfg_.round, s.game, s.index));
  if (!s.turn) {
    s.phase = Phase::GameOver;
    s.current = leader_state;
    return;
  }
  s.phase = Phase::Executing;
  s.current = *s.turn->follower_start;
  s.execution = {s.current->pose(Agent::Follower)};
  s.started = Clock::now();
}

json SessionManager::payload(const Session& s) const {
  json p = {{"version", kProtocolVersion},
            {"session_id", s.id},
            {"phase", phase_name(static_cast<int>(s.phase))},
            {"score", s.current->score()},
            {"instruction_index", s.index},
            {"view", view_payload(*s.current)}};
  if (s.phase == Phase::GameOver) return p;
  p["instruction"] = synthlang::to_text(synthlang::Grammar::builtin().vocab(), s.turn->sample.tokens);
  p["moves_left"] = s.current->moves_left();
  return p;
}

json SessionManager::create() {
  std::lock_guard lock(mu_);
  Session s;
  s.game = next_game_++;
  s.id = "s" + std::to_string(s.game) + "-" + random_token();
  s.touched = Clock::now();
  s.log.push_back({{"op", "create"}, {"game", s.game}});
  start_turn(s, hexworld::new_world(seeds_.world(cfg_.round, s.game), cfg_.world));
  auto& stored = sessions_.emplace(s.id, std::move(s)).first->second;
  return payload(stored);
}

json SessionManager::status(const std::string& id) {
  std::lock_guard lock(mu_);
  return payload(get(id));
}

json SessionManager::move(const std::string& id, const json& body) {
  std::lock_guard lock(mu_);
  auto& s = get(id);
  if (s.phase != Phase::Executing) throw ProtocolError(409, "wrong_phase", "no instruction is being executed");
  if (!body.is_object() || !body.contains("action") || !body["action"].is_string())
    throw ProtocolError(400, "bad_request", "move needs a string 'action'");
  const auto action = hexworld::action_from_name(body["action"].get<std::string>());
  if (!action) throw ProtocolError(400, "bad_action", "unknown action " + body["action"].get<std::string>());
  const bool legal = s.current->step(Agent::Follower, *action);
  if (legal) {
    s.execution.push_back(s.current->pose(Agent::Follower));
    s.log.push_back({{"op", "move"}, {"action", body["action"]}});
  }
  return {{"version", kProtocolVersion},
          {"legal", legal},
          {"moves_left", s.current->moves_left()},
          {"score", s.current->score()},
          {"view", view_payload(*s.current)}};
}

json SessionManager::complete(const std::string& id, const json& body) {
  std::lock_guard lock(mu_);
  auto& s = get(id);
  if (s.phase != Phase::Executing) throw ProtocolError(409, "wrong_phase", "no instruction is being executed");
  if (!body.is_object()) throw ProtocolError(400, "bad_request", "complete needs a JSON object");
  const json t = body.value("terminated", json(false));
  if (!t.is_boolean()) throw ProtocolError(400, "bad_request", "'terminated' must be a boolean");
  s.terminated = t.get<bool>();
  s.phase = Phase::Feedback;
  s.log.push_back({{"op", "complete"}, {"terminated", s.terminated}});
  return payload(s);
}

json SessionManager::feedback(const std::string& id, const json& body) {
  std::lock_guard lock(mu_);
  auto& s = get(id);
  if (!body.is_object()) throw ProtocolError(400, "bad_request", "feedback needs a JSON object");
  std::string key;
  if (body.contains("idempotency_key")) {
    if (!body["idempotency_key"].is_string())
      throw ProtocolError(400, "bad_request", "'idempotency_key' must be a string");
    key = body["idempotency_key"].get<std::string>();
    if (auto it = s.idempotent.find(key); it != s.idempotent.end()) return it->second;
  }
  if (s.phase != Phase::Feedback) throw ProtocolError(409, "wrong_phase", "feedback is only accepted after complete");
  for (const char* k : {"perceived_correct", "grammatical"})
    if (!body.contains(k) || !body[k].is_boolean())
      throw ProtocolError(400, "bad_request", std::string("feedback needs boolean '") + k + "'");
  const follower::Feedback fb{body["perceived_correct"].get<bool>(), body["grammatical"].get<bool>()};
  const double secs = std::chrono::duration<double>(Clock::now() - s.started).count();
  std::optional<hexworld::WorldState> next;
  auto rec = orchestrator::complete_turn(*s.turn, cfg_.round, s.game, s.index, s.execution, *s.current, fb,
                                         s.terminated, secs, next);
  s.records.push_back(rec);
  if (sink_) sink_(rec);
  s.log.push_back({{"op", "feedback"}, {"perceived_correct", fb.perceived_correct}, {"grammatical", fb.grammatical}});
  ++s.index;
  start_turn(s, *next);
  json out = payload(s);
  if (!key.empty()) s.idempotent[key] = out;
  return out;
}

int SessionManager::expire(Clock::time_point now) {
  std::lock_guard lock(mu_);
  int n = 0;
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    if (now - it->second.touched > cfg_.idle_timeout) {
      it = sessions_.erase(it);
      ++n;
    } else {
      ++it;
    }
  }
  return n;
}

std::size_t SessionManager::size() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

json SessionManager::log(const std::string& id) const {
  std::lock_guard lock(mu_);
  return get(id).log;
}

std::vector<records::InteractionRecord> SessionManager::records(const std::string& id) const {
  std::lock_guard lock(mu_);
  return get(id).records;
}

std::vector<records::InteractionRecord> replay_log(const orchestrator::InstructionSource& source,
                                                   const ServiceConfig& cfg, const json& log) {
  if (!log.is_array() || log.empty() || log[0].value("op", "") != "create")
    throw std::invalid_argument("session log must start with a create entry");
  SessionManager m(source, cfg);
  m.next_game_ = log[0].at("game").get<int>();
  const std::string id = m.create()["session_id"];
  for (std::size_t i = 1; i < log.size(); ++i) {
    const auto& e = log[i];
    const std::string op = e.at("op");
    if (op == "move") {
      if (!m.move(id, e)["legal"].get<bool>()) throw std::runtime_error("replayed move was illegal");
    } else if (op == "complete") {
      m.complete(id, e);
    } else if (op == "feedback") {
      m.feedback(id, e);
    } else {
      throw std::invalid_argument("unknown log entry " + op);
    }
  }
  return m.records(id);
}

// ---- HTTP -------------------------------------------------------------------------

struct HttpServer::Impl {
  httplib::Server server;
};

namespace {

void send(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <class F>
void guarded(httplib::Response& res, F&& f) {
  try {
    send(res, 200, f());
  } catch (const ProtocolError& e) {
    send(res, e.status, {{"error", {{"code", e.code}, {"message", e.what()}}}});
  } catch (const json::exception& e) {
    send(res, 400, {{"error", {{"code", "bad_json"}, {"message", e.what()}}}});
  }
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  return json::parse(req.body);
}

}  // namespace

HttpServer::HttpServer(SessionManager& m) : impl_(std::make_unique<Impl>()) {
  auto& srv = impl_->server;
  srv.Post("/v1/sessions", [&m](const httplib::Request&, httplib::Response& res) {
    m.expire();
    guarded(res, [&] { return m.create(); });
  });
  srv.Get(R"(/v1/sessions/([^/]+))", [&m](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return m.status(req.matches[1]); });
  });
  srv.Post(R"(/v1/sessions/([^/]+)/move)", [&m](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return m.move(req.matches[1], parse_body(req)); });
  });
  srv.Post(R"(/v1/sessions/([^/]+)/complete)", [&m](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return m.complete(req.matches[1], parse_body(req)); });
  });
  srv.Post(R"(/v1/sessions/([^/]+)/feedback)", [&m](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return m.feedback(req.matches[1], parse_body(req)); });
  });
  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) send(res, res.status, {{"error", {{"code", "not_found"}, {"message", "no such route"}}}});
  });
}

HttpServer::~HttpServer() = default;

bool HttpServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }
int HttpServer::bind_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }
void HttpServer::listen_after_bind() { impl_->server.listen_after_bind(); }
void HttpServer::stop() { impl_->server.stop(); }

}  // namespace hexbandit::service
