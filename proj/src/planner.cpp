#include "hexbandit/planner.hpp"

#include <algorithm>
#include <limits>
#include <string>

namespace hexbandit::planner {

using hexworld::Agent;
using hexworld::kAllActions;
using hexworld::kDirections;

UnreachableTarget::UnreachableTarget(Cell c)
    : std::runtime_error("unreachable target cell (" + std::to_string(c.h) + ", " +
                         std::to_string(c.w) + ")"),
      cell(c) {}

std::vector<Pose> shortest_path(const WorldState& state, const Pose& from,
                                const std::vector<Cell>& targets, const PathOptions& options) {
  const int H = state.height(), W = state.width();
  const int n = static_cast<int>(targets.size());
  const int cells = H * W;
  auto cell_id = [W](Cell c) { return c.h * W + c.w; };

  std::vector<char> blocked(static_cast<std::size_t>(cells), 0);
  for (Cell c : options.blocked)
    if (state.in_bounds(c)) blocked[cell_id(c)] = 1;
  std::vector<int> target_of(static_cast<std::size_t>(cells), -1);
  for (int i = 0; i < n; ++i) {
    if (!state.in_bounds(targets[i]) || !state.passable(targets[i]))
      throw UnreachableTarget(targets[i]);
    target_of[cell_id(targets[i])] = i;
  }

  int stage0 = 0;
  if (!options.require_entry)
    while (stage0 < n && targets[stage0] == from.cell()) ++stage0;
  if (stage0 == n) return {from};

  auto state_id = [&](Pose p, int stage) {
    return ((stage * cells) + cell_id(p.cell())) * kDirections + p.alpha;
  };
  const int total = (n + 1) * cells * kDirections;
  std::vector<int> parent(static_cast<std::size_t>(total), -2);
  std::vector<Pose> pose_of(static_cast<std::size_t>(total));
  std::vector<int> queue;
  queue.reserve(static_cast<std::size_t>(total));

  const int start_id = state_id(from, stage0);
  parent[start_id] = -1;
  pose_of[start_id] = from;
  queue.push_back(start_id);
  int goal = -1;
  for (std::size_t head = 0; head < queue.size() && goal < 0; ++head) {
    const int cur = queue[head];
    const Pose p = pose_of[cur];
    const int stage = cur / (cells * kDirections);
    for (auto a : kAllActions) {
      Pose q = hexworld::next_pose(p, a);
      int next_stage = stage;
      if (q.cell() != p.cell()) {
        if (!state.passable(q.cell())) continue;
        const int id = cell_id(q.cell());
        if (blocked[id]) continue;
        const int t = target_of[id];
        if (t >= 0) {
          if (t != stage) continue;
          next_stage = stage + 1;
        }
      }
      const int nid = state_id(q, next_stage);
      if (parent[nid] != -2) continue;
      parent[nid] = cur;
      pose_of[nid] = q;
      if (next_stage == n) {
        goal = nid;
        break;
      }
      queue.push_back(nid);
    }
  }
  if (goal < 0) {
    // Name the first target that could not be reached in order.
    int reached = stage0;
    for (int id : queue) reached = std::max(reached, id / (cells * kDirections));
    throw UnreachableTarget(targets[std::min(reached, n - 1)]);
  }
  std::vector<Pose> path;
  for (int id = goal; id >= 0; id = parent[id]) path.push_back(pose_of[id]);
  std::reverse(path.begin(), path.end());
  return path;
}

std::vector<Action> actions_of(const std::vector<Pose>& poses) {
  std::vector<Action> out;
  for (std::size_t i = 1; i < poses.size(); ++i) {
    auto a = hexworld::action_between(poses[i - 1], poses[i]);
    if (!a) throw std::invalid_argument("pose sequence is not a chain of single actions");
    out.push_back(*a);
  }
  return out;
}

std::vector<Cell> required_toggles(const WorldState& state, const std::array<Cell, 3>& triple) {
  std::vector<Cell> out;
  for (const auto& card : state.cards()) {
    const bool in_triple = std::find(triple.begin(), triple.end(), card.cell) != triple.end();
    if (in_triple != card.props.selected) out.push_back(card.cell);
  }
  return out;
}

namespace {

std::vector<Cell> cards_except(const WorldState& state, const std::vector<Cell>& keep) {
  std::vector<Cell> out;
  for (const auto& card : state.cards())
    if (std::find(keep.begin(), keep.end(), card.cell) == keep.end()) out.push_back(card.cell);
  return out;
}

std::vector<Pose> tour(const WorldState& state, const Pose& from, const std::vector<Cell>& targets) {
  if (targets.empty()) return {from};
  auto order = greedy_order(state, from, targets);
  return shortest_path(state, from, order, {cards_except(state, order), true});
}

int tour_cost(const WorldState& state, const Pose& from, const std::vector<Cell>& targets) {
  return static_cast<int>(tour(state, from, targets).size()) - 1;
}

}  // namespace

std::vector<Cell> greedy_order(const WorldState& state, const Pose& from,
                               const std::vector<Cell>& targets) {
  std::vector<Cell> remaining = targets;
  std::sort(remaining.begin(), remaining.end());
  std::vector<Cell> order;
  Pose cur = from;
  while (!remaining.empty()) {
    int best = -1;
    std::size_t best_len = std::numeric_limits<std::size_t>::max();
    Pose best_end{};
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      try {
        auto path = shortest_path(state, cur, {remaining[i]},
                                  {cards_except(state, {remaining[i]}), true});
        if (path.size() < best_len) {
          best_len = path.size();
          best = static_cast<int>(i);
          best_end = path.back();
        }
      } catch (const UnreachableTarget&) {
      }
    }
    if (best < 0) throw UnreachableTarget(remaining.front());
    order.push_back(remaining[best]);
    remaining.erase(remaining.begin() + best);
    cur = best_end;
  }
  return order;
}

Split split_targets(const WorldState& state, const std::vector<Cell>& toggles) {
  std::vector<Cell> sorted = toggles;
  std::sort(sorted.begin(), sorted.end());
  Split split;
  const Pose leader = state.pose(Agent::Leader);
  const Pose follower = state.pose(Agent::Follower);
  for (Cell c : sorted) {
    auto with_leader = split.leader;
    with_leader.push_back(c);
    auto with_follower = split.follower;
    with_follower.push_back(c);
    constexpr int kInf = std::numeric_limits<int>::max() / 4;
    int lc = kInf, fc = kInf;
    try {
      lc = tour_cost(state, leader, with_leader);
    } catch (const UnreachableTarget&) {
    }
    try {
      fc = tour_cost(state, follower, with_follower);
    } catch (const UnreachableTarget&) {
    }
    if (lc >= kInf && fc >= kInf) throw UnreachableTarget(c);
    if (lc - split.leader_cost <= fc - split.follower_cost) {
      split.leader = std::move(with_leader);
      split.leader_cost = lc;
    } else {
      split.follower = std::move(with_follower);
      split.follower_cost = fc;
    }
  }
  return split;
}

std::optional<SetAssignment> choose_assignment(const WorldState& state) {
  const auto& cards = state.cards();  // sorted by cell, so enumeration is lexicographic
  std::optional<SetAssignment> best;
  for (std::size_t i = 0; i < cards.size(); ++i)
    for (std::size_t j = i + 1; j < cards.size(); ++j)
      for (std::size_t k = j + 1; k < cards.size(); ++k) {
        if (!hexworld::is_valid_set(cards[i].props, cards[j].props, cards[k].props)) continue;
        std::array<Cell, 3> triple = {cards[i].cell, cards[j].cell, cards[k].cell};
        auto toggles = required_toggles(state, triple);
        Split split;
        try {
          split = split_targets(state, toggles);
        } catch (const UnreachableTarget&) {
          continue;
        }
        const int cost = split.leader_cost + split.follower_cost;
        if (best && cost >= best->cost) continue;
        SetAssignment a;
        a.chosen_triple = triple;
        a.follower_cards = split.follower;
        a.leader_cards = split.leader;
        for (Cell c : toggles)
          if (std::find(triple.begin(), triple.end(), c) == triple.end())
            a.deselections.push_back(c);
        a.cost = cost;
        best = std::move(a);
      }
  return best;
}

Plan plan_for_targets(const WorldState& state, const Pose& start, const std::vector<Cell>& targets) {
  Plan plan;
  plan.start = start;
  if (targets.empty()) {
    plan.poses = {start};
    return plan;
  }
  plan.target_cards = greedy_order(state, start, targets);
  plan.poses = shortest_path(state, start, plan.target_cards,
                             {cards_except(state, plan.target_cards), true});
  return plan;
}

PlanResult make_plan(const WorldState& state) {
  auto assignment = choose_assignment(state);
  if (!assignment) throw std::runtime_error("no reachable valid set: replan impossible");
  PlanResult result;
  result.assignment = *assignment;
  result.plan = plan_for_targets(state, state.pose(Agent::Follower), assignment->follower_cards);
  result.leader_actions =
      actions_of(tour(state, state.pose(Agent::Leader), assignment->leader_cards));
  return result;
}

}  // namespace hexbandit::planner
