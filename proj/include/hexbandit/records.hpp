#pragma once

// Interaction records and their line-delimited JSON persistence.

#include <filesystem>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "hexbandit/bandit.hpp"
#include "json.hpp"

namespace hexbandit::records {

using hexworld::Pose;
using hexworld::WorldState;
using nlohmann::json;

/// One generated instruction and everything observed about it.
struct InteractionRecord {
  int round = 0;
  int game = 0;
  int index = 0;  // instruction index within the game
  std::shared_ptr<const WorldState> state;           // leader's turn, before the leader moves
  std::shared_ptr<const WorldState> follower_start;  // after the leader's scripted actions
  std::vector<hexworld::Action> leader_actions;
  planner::Plan plan;
  genmodel::SampledInstruction sample;
  std::vector<Pose> execution;
  follower::Feedback feedback;
  bool terminated = false;
  int score_after = 0;
  double seconds = 0.0;

  std::string id() const;
  bandit::Interaction interaction() const;
};

json pose_to_json(const Pose& p);
Pose pose_from_json(const json& j);
json poses_to_json(const std::vector<Pose>& ps);
std::vector<Pose> poses_from_json(const json& j);
json plan_to_json(const planner::Plan& p);
planner::Plan plan_from_json(const json& j);
json state_to_json(const WorldState& s);
WorldState state_from_json(const json& j);
json world_config_to_json(const hexworld::WorldConfig& c);
hexworld::WorldConfig world_config_from_json(const json& j);

/// States are stored once per round; records and examples refer to them by index.
class StateTable {
 public:
  int intern(const std::shared_ptr<const WorldState>& s);
  const std::vector<std::shared_ptr<const WorldState>>& states() const { return states_; }
  std::shared_ptr<const WorldState> at(int i) const { return states_.at(static_cast<std::size_t>(i)); }
  void push(std::shared_ptr<const WorldState> s) { intern(s); }

 private:
  std::vector<std::shared_ptr<const WorldState>> states_;
  std::unordered_map<const WorldState*, int> index_;
};

json record_to_json(const InteractionRecord& r, StateTable& table);
InteractionRecord record_from_json(const json& j, const StateTable& table);
json example_to_json(const bandit::Example& e, StateTable& table);
bandit::Example example_from_json(const json& j, const StateTable& table);

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& lines);
std::vector<json> read_jsonl(const std::filesystem::path& path);

/// Round directory content: states.jsonl plus records.jsonl and dataset.jsonl.
void save_round_data(const std::filesystem::path& dir, const std::vector<InteractionRecord>& records,
                     const std::vector<bandit::Example>& dataset);
struct RoundData {
  std::vector<InteractionRecord> records;
  std::vector<bandit::Example> dataset;
};
RoundData load_round_data(const std::filesystem::path& dir);

}  // namespace hexbandit::records
