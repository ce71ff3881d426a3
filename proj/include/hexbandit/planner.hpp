#pragma once

// Deterministic leader planner: picks the next set to complete, splits the
// required card toggles between leader and follower, and computes shortest
// action sequences. Every action (move or turn) costs 1.

#include <array>
#include <optional>
#include <stdexcept>
#include <vector>

#include "hexbandit/hexworld.hpp"

namespace hexbandit::planner {

using hexworld::Action;
using hexworld::Cell;
using hexworld::Pose;
using hexworld::WorldState;

struct Plan {
  Pose start;
  std::vector<Pose> poses;         // poses.front() == start
  std::vector<Cell> target_cards;  // visit order
  bool operator==(const Plan&) const = default;
};

struct SetAssignment {
  std::array<Cell, 3> chosen_triple{};  // sorted
  std::vector<Cell> follower_cards;     // toggles assigned to the follower
  std::vector<Cell> leader_cards;       // toggles assigned to the leader
  std::vector<Cell> deselections;       // toggles that switch a card off (either agent)
  int cost = 0;
  bool operator==(const SetAssignment&) const = default;
};

struct PlanResult {
  std::vector<Action> leader_actions;
  Plan plan;
  SetAssignment assignment;
};

class UnreachableTarget : public std::runtime_error {
 public:
  explicit UnreachableTarget(Cell cell);
  Cell cell;
};

struct PathOptions {
  /// Cells that may never be entered (e.g. cards that must not be toggled).
  std::vector<Cell> blocked;
  /// A target only counts once it is entered by a move; standing on it at the
  /// start does not. Needed whenever visiting means toggling a card.
  bool require_entry = false;
};

/// Minimal-action pose sequence from `from` visiting `targets` in order. Target
/// cells may only be entered at their turn. BFS over (cell, orientation, stage)
/// with actions expanded in Forward, Back, TurnLeft, TurnRight order.
std::vector<Pose> shortest_path(const WorldState& state, const Pose& from,
                                const std::vector<Cell>& targets, const PathOptions& options = {});

/// Actions replaying a pose sequence.
std::vector<Action> actions_of(const std::vector<Pose>& poses);

/// Toggles needed to complete a given triple: unselected triple cards and
/// selected non-triple cards, in cell order.
std::vector<Cell> required_toggles(const WorldState& state, const std::array<Cell, 3>& triple);

struct Split {
  std::vector<Cell> leader;
  std::vector<Cell> follower;
  int leader_cost = 0;
  int follower_cost = 0;
};

/// Greedy split: each toggle (cell order) goes to the agent with the smaller
/// marginal tour cost; the leader wins ties. Throws UnreachableTarget.
Split split_targets(const WorldState& state, const std::vector<Cell>& toggles);

/// Greedy nearest-remaining visiting order from a pose.
std::vector<Cell> greedy_order(const WorldState& state, const Pose& from,
                               const std::vector<Cell>& targets);

/// Nullopt when no reachable valid triple exists (the game cannot continue).
std::optional<SetAssignment> choose_assignment(const WorldState& state);

/// Throws UnreachableTarget, or std::runtime_error when no assignment exists.
PlanResult make_plan(const WorldState& state);

/// Pose-sequence plan for a given list of follower targets.
Plan plan_for_targets(const WorldState& state, const Pose& start, const std::vector<Cell>& targets);

}  // namespace hexbandit::planner
