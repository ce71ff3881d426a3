#include "hexbandit/records.hpp"

#include <fstream>
#include <stdexcept>

namespace hexbandit::records {

using hexworld::Cell;

std::string InteractionRecord::id() const {
  return "r" + std::to_string(round) + "-g" + std::to_string(game) + "-i" + std::to_string(index);
}

bandit::Interaction InteractionRecord::interaction() const {
  return bandit::Interaction{id(),           state,         *follower_start, plan, sample.tokens,
                             sample.logprob_behavior, execution, feedback};
}

json pose_to_json(const Pose& p) { return json::array({p.h, p.w, p.alpha}); }
Pose pose_from_json(const json& j) { return {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>()}; }

json poses_to_json(const std::vector<Pose>& ps) {
  json a = json::array();
  for (const auto& p : ps) a.push_back(pose_to_json(p));
  return a;
}

std::vector<Pose> poses_from_json(const json& j) {
  std::vector<Pose> out;
  for (const auto& p : j) out.push_back(pose_from_json(p));
  return out;
}

namespace {

json cell_to_json(Cell c) { return json::array({c.h, c.w}); }
Cell cell_from_json(const json& j) { return {j.at(0).get<int>(), j.at(1).get<int>()}; }

}  // namespace

json plan_to_json(const planner::Plan& p) {
  json cards = json::array();
  for (auto c : p.target_cards) cards.push_back(cell_to_json(c));
  return {{"start", pose_to_json(p.start)}, {"poses", poses_to_json(p.poses)}, {"targets", cards}};
}

planner::Plan plan_from_json(const json& j) {
  planner::Plan p;
  p.start = pose_from_json(j.at("start"));
  p.poses = poses_from_json(j.at("poses"));
  for (const auto& c : j.at("targets")) p.target_cards.push_back(cell_from_json(c));
  return p;
}

json world_config_to_json(const hexworld::WorldConfig& c) {
  return {{"height", c.height},
          {"width", c.width},
          {"num_cards", c.num_cards},
          {"num_landmarks", c.num_landmarks},
          {"num_colors", c.num_colors},
          {"num_shapes", c.num_shapes},
          {"leader_moves", c.leader_moves},
          {"follower_moves", c.follower_moves},
          {"view_depth", c.view_depth},
          {"view_half_angle_deg", c.view_half_angle_deg}};
}

hexworld::WorldConfig world_config_from_json(const json& j) {
  hexworld::WorldConfig c;
  c.height = j.value("height", c.height);
  c.width = j.value("width", c.width);
  c.num_cards = j.value("num_cards", c.num_cards);
  c.num_landmarks = j.value("num_landmarks", c.num_landmarks);
  c.num_colors = j.value("num_colors", c.num_colors);
  c.num_shapes = j.value("num_shapes", c.num_shapes);
  c.leader_moves = j.value("leader_moves", c.leader_moves);
  c.follower_moves = j.value("follower_moves", c.follower_moves);
  c.view_depth = j.value("view_depth", c.view_depth);
  c.view_half_angle_deg = j.value("view_half_angle_deg", c.view_half_angle_deg);
  for (const auto& [k, v] : j.items())
    if (!world_config_to_json(c).contains(k)) throw std::invalid_argument("unknown world setting: " + k);
  return c;
}

json state_to_json(const WorldState& s) {
  const auto l = hexworld::WorldAccess::layout(s);
  json landmarks = json::array(), cards = json::array();
  for (const auto& [c, lm] : l.landmarks)
    landmarks.push_back({c.h, c.w, static_cast<int>(lm.type), static_cast<int>(lm.color)});
  for (const auto& c : l.cards)
    cards.push_back({c.cell.h, c.cell.w, c.props.count, static_cast<int>(c.props.color),
                     static_cast<int>(c.props.shape), c.props.selected});
  return {{"config", world_config_to_json(l.config)},
          {"landmarks", landmarks},
          {"cards", cards},
          {"leader", pose_to_json(l.leader)},
          {"follower", pose_to_json(l.follower)},
          {"score", l.score},
          {"turn", static_cast<int>(l.turn)},
          {"moves_left", l.moves_left},
          {"turns_taken", l.turns_taken},
          {"rng", hexworld::WorldAccess::rng_state(s)}};
}

WorldState state_from_json(const json& j) {
  hexworld::WorldLayout l;
  l.config = world_config_from_json(j.at("config"));
  for (const auto& x : j.at("landmarks"))
    l.landmarks.push_back({{x.at(0).get<int>(), x.at(1).get<int>()},
                           {static_cast<hexworld::LandmarkType>(x.at(2).get<int>()),
                            static_cast<hexworld::LandmarkColor>(x.at(3).get<int>())}});
  for (const auto& x : j.at("cards"))
    l.cards.push_back({{x.at(0).get<int>(), x.at(1).get<int>()},
                       {x.at(2).get<int>(), static_cast<hexworld::CardColor>(x.at(3).get<int>()),
                        static_cast<hexworld::CardShape>(x.at(4).get<int>()), x.at(5).get<bool>()}});
  l.leader = pose_from_json(j.at("leader"));
  l.follower = pose_from_json(j.at("follower"));
  l.score = j.at("score");
  l.turn = static_cast<hexworld::Agent>(j.at("turn").get<int>());
  l.moves_left = j.at("moves_left");
  l.turns_taken = j.at("turns_taken");
  auto s = hexworld::WorldAccess::build(l);
  hexworld::WorldAccess::set_rng_state(s, j.at("rng").get<std::string>());
  return s;
}

int StateTable::intern(const std::shared_ptr<const WorldState>& s) {
  auto [it, fresh] = index_.try_emplace(s.get(), static_cast<int>(states_.size()));
  if (fresh) states_.push_back(s);
  return it->second;
}

namespace {

json actions_to_json(const std::vector<hexworld::Action>& as) {
  json a = json::array();
  for (auto x : as) a.push_back(std::string(hexworld::action_name(x)));
  return a;
}

std::vector<hexworld::Action> actions_from_json(const json& j) {
  std::vector<hexworld::Action> out;
  for (const auto& x : j) {
    auto a = hexworld::action_from_name(x.get<std::string>());
    if (!a) throw std::invalid_argument("unknown action in record: " + x.get<std::string>());
    out.push_back(*a);
  }
  return out;
}

}  // namespace

json record_to_json(const InteractionRecord& r, StateTable& table) {
  const auto& g = synthlang::Grammar::builtin();
  return {{"id", r.id()},
          {"round", r.round},
          {"game", r.game},
          {"index", r.index},
          {"state", table.intern(r.state)},
          {"follower_start", table.intern(r.follower_start)},
          {"leader_actions", actions_to_json(r.leader_actions)},
          {"plan", plan_to_json(r.plan)},
          {"tokens", r.sample.tokens.tokens},
          {"text", synthlang::to_text(g.vocab(), r.sample.tokens)},
          {"model_index", r.sample.model_index},
          {"logprob_model", r.sample.logprob_model},
          {"logprob_behavior", r.sample.logprob_behavior},
          {"truncated", r.sample.truncated},
          {"execution", poses_to_json(r.execution)},
          {"feedback", {{"perceived_correct", r.feedback.perceived_correct}, {"grammatical", r.feedback.grammatical}}},
          {"terminated", r.terminated},
          {"score_after", r.score_after},
          {"seconds", r.seconds}};
}

InteractionRecord record_from_json(const json& j, const StateTable& table) {
  InteractionRecord r;
  r.round = j.at("round");
  r.game = j.at("game");
  r.index = j.at("index");
  r.state = table.at(j.at("state"));
  r.follower_start = table.at(j.at("follower_start"));
  r.leader_actions = actions_from_json(j.at("leader_actions"));
  r.plan = plan_from_json(j.at("plan"));
  r.sample.tokens.tokens = j.at("tokens").get<std::vector<int>>();
  r.sample.model_index = j.at("model_index");
  r.sample.logprob_model = j.at("logprob_model");
  r.sample.logprob_behavior = j.at("logprob_behavior");
  r.sample.truncated = j.at("truncated");
  r.execution = poses_from_json(j.at("execution"));
  r.feedback.perceived_correct = j.at("feedback").at("perceived_correct");
  r.feedback.grammatical = j.at("feedback").at("grammatical");
  r.terminated = j.at("terminated");
  r.score_after = j.at("score_after");
  r.seconds = j.at("seconds");
  return r;
}

json example_to_json(const bandit::Example& e, StateTable& table) {
  return {{"state", table.intern(e.state)}, {"rho", plan_to_json(e.rho)}, {"tokens", e.x.tokens},
          {"y", e.y}, {"behavior_logprob", e.behavior_logprob}, {"from_execution", e.from_execution},
          {"provenance", e.provenance}};
}

bandit::Example example_from_json(const json& j, const StateTable& table) {
  bandit::Example e;
  e.state = table.at(j.at("state"));
  e.rho = plan_from_json(j.at("rho"));
  e.x.tokens = j.at("tokens").get<std::vector<int>>();
  e.y = j.at("y");
  if (e.y != 1 && e.y != -1) throw std::invalid_argument("example label must be +1 or -1");
  e.behavior_logprob = j.at("behavior_logprob");
  e.from_execution = j.at("from_execution");
  e.provenance = j.at("provenance");
  return e;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& lines) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& l : lines) out << l.dump() << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<json> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

void save_round_data(const std::filesystem::path& dir, const std::vector<InteractionRecord>& records,
                     const std::vector<bandit::Example>& dataset) {
  StateTable table;
  std::vector<json> rec_lines, ex_lines, state_lines;
  for (const auto& r : records) rec_lines.push_back(record_to_json(r, table));
  for (const auto& e : dataset) ex_lines.push_back(example_to_json(e, table));
  for (const auto& s : table.states()) state_lines.push_back(state_to_json(*s));
  write_jsonl(dir / "states.jsonl", state_lines);
  write_jsonl(dir / "records.jsonl", rec_lines);
  write_jsonl(dir / "dataset.jsonl", ex_lines);
}

RoundData load_round_data(const std::filesystem::path& dir) {
  StateTable table;
  for (const auto& j : read_jsonl(dir / "states.jsonl"))
    table.push(std::make_shared<const WorldState>(state_from_json(j)));
  RoundData d;
  for (const auto& j : read_jsonl(dir / "records.jsonl")) d.records.push_back(record_from_json(j, table));
  for (const auto& j : read_jsonl(dir / "dataset.jsonl")) d.dataset.push_back(example_from_json(j, table));
  return d;
}

}  // namespace hexbandit::records
