#include <map>
#include <queue>
#include <set>

#include "doctest.h"
#include "hexbandit/hexworld.hpp"

using namespace hexbandit;
using namespace hexbandit::hexworld;

namespace {

// Neighbors listed directly in offset coordinates (odd rows shifted right),
// independent of the axial conversion used by the engine.
std::vector<Cell> offset_neighbors(Cell c) {
  const bool odd = c.h & 1;
  const int dl = odd ? 0 : -1;
  return {{c.h, c.w - 1},          {c.h, c.w + 1},          {c.h - 1, c.w + dl},
          {c.h - 1, c.w + dl + 1}, {c.h + 1, c.w + dl},     {c.h + 1, c.w + dl + 1}};
}

std::map<Cell, int> bfs_distances(Cell from, int H, int W) {
  std::map<Cell, int> dist{{from, 0}};
  std::queue<Cell> q;
  q.push(from);
  while (!q.empty()) {
    Cell c = q.front();
    q.pop();
    for (Cell n : offset_neighbors(c)) {
      if (n.h < 0 || n.w < 0 || n.h >= H || n.w >= W || dist.count(n)) continue;
      dist[n] = dist[c] + 1;
      q.push(n);
    }
  }
  return dist;
}

WorldLayout empty_layout(int H = 8, int W = 8) {
  WorldLayout l;
  l.config.height = H;
  l.config.width = W;
  l.leader = {0, 0, 0};
  l.follower = {H - 1, W - 1, 3};
  return l;
}

Card card(Cell c, int count, CardColor color, CardShape shape) {
  return {c, {count, color, shape, false}};
}

}  // namespace

TEST_CASE("neighbors agree with an offset-coordinate listing") {
  for (int h = 0; h < 6; ++h)
    for (int w = 0; w < 6; ++w) {
      std::set<Cell> a, b;
      for (int d = 0; d < kDirections; ++d) a.insert(neighbor({h, w}, d));
      for (Cell n : offset_neighbors({h, w})) b.insert(n);
      CHECK(a == b);
    }
}

TEST_CASE("hex distance equals breadth-first distance on an open board") {
  const int H = 11, W = 9;
  for (Cell from : {Cell{0, 0}, Cell{5, 4}, Cell{3, 8}, Cell{10, 1}}) {
    auto dist = bfs_distances(from, H, W);
    for (const auto& [c, d] : dist) CHECK(hex_distance(from, c) == d);
  }
}

TEST_CASE("axial conversion round-trips and rotation is a six-cycle") {
  for (int h = -4; h < 9; ++h)
    for (int w = -4; w < 9; ++w) CHECK(from_axial(to_axial({h, w})) == Cell{h, w});
  for (int d = 0; d < kDirections; ++d) {
    CHECK(rotate(direction_offset(d), 1) == direction_offset(d + 1));
    Axial a{3 - d, d - 1};
    CHECK(rotate(a, 6) == a);
    CHECK(axial_length(rotate(a, d)) == axial_length(a));
  }
}

TEST_CASE("turning changes orientation by one step each way") {
  Pose p{2, 2, 0};
  CHECK(next_pose(p, Action::TurnLeft).alpha == 1);
  CHECK(next_pose(p, Action::TurnRight).alpha == 5);
  CHECK(next_pose(p, Action::Forward).cell() == neighbor({2, 2}, 0));
  CHECK(next_pose(p, Action::Back).cell() == neighbor({2, 2}, 3));
  for (auto a : kAllActions) CHECK(action_between(p, next_pose(p, a)) == a);
}

TEST_CASE("bearing is positive to the left and zero straight ahead") {
  Pose p{4, 4, 0};
  CHECK(bearing_deg(p, neighbor({4, 4}, 0)) == doctest::Approx(0.0));
  CHECK(bearing_deg(p, neighbor({4, 4}, 1)) == doctest::Approx(60.0));
  CHECK(bearing_deg(p, neighbor({4, 4}, 5)) == doctest::Approx(-60.0));
  CHECK(bearing_deg(p, neighbor({4, 4}, 3)) == doctest::Approx(180.0));
}

TEST_CASE("generated worlds respect the configuration") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    WorldConfig cfg;
    auto s = new_world(seed, cfg);
    CHECK(s.cards().size() == static_cast<std::size_t>(cfg.num_cards));
    CHECK(static_cast<int>(s.landmark_cells().size()) <= cfg.num_landmarks);
    // distinct kinds
    for (std::size_t i = 0; i < s.cards().size(); ++i)
      for (std::size_t j = i + 1; j < s.cards().size(); ++j)
        CHECK_FALSE(s.cards()[i].props.same_kind(s.cards()[j].props));
    // a valid set exists
    bool any = false;
    const auto& c = s.cards();
    for (std::size_t i = 0; i < c.size(); ++i)
      for (std::size_t j = i + 1; j < c.size(); ++j)
        for (std::size_t k = j + 1; k < c.size(); ++k)
          any = any || is_valid_set(c[i].props, c[j].props, c[k].props);
    CHECK(any);
    // passable region connected
    int passable = 0;
    Cell start{-1, -1};
    for (int h = 0; h < s.height(); ++h)
      for (int w = 0; w < s.width(); ++w)
        if (s.passable({h, w})) {
          ++passable;
          if (start.h < 0) start = {h, w};
        }
    std::set<Cell> seen{start};
    std::queue<Cell> q;
    q.push(start);
    while (!q.empty()) {
      Cell x = q.front();
      q.pop();
      for (Cell n : offset_neighbors(x))
        if (s.passable(n) && seen.insert(n).second) q.push(n);
    }
    CHECK(static_cast<int>(seen.size()) == passable);
    CHECK(s.passable(s.pose(Agent::Leader).cell()));
    CHECK(s.passable(s.pose(Agent::Follower).cell()));
  }
  CHECK(new_world(7) == new_world(7));
  CHECK_FALSE(new_world(7) == new_world(8));
}

TEST_CASE("invalid configurations are rejected") {
  WorldConfig cfg;
  cfg.num_cards = 3;
  CHECK_THROWS_AS(new_world(1, cfg), WorldConfigError);
  cfg = {};
  cfg.height = 3;
  CHECK_THROWS_AS(new_world(1, cfg), WorldConfigError);
  cfg = {};
  cfg.num_landmarks = 200;
  CHECK_THROWS_AS(new_world(1, cfg), WorldConfigError);
}

TEST_CASE("legality: turns, walls, budgets and turn order") {
  auto l = empty_layout();
  l.landmarks.push_back({neighbor({0, 0}, 0), {LandmarkType::Tree, LandmarkColor::Blue}});
  l.config.leader_moves = 2;
  auto s = WorldAccess::build(l);
  CHECK_FALSE(s.is_legal(Agent::Leader, Action::Forward));  // landmark ahead
  CHECK_FALSE(s.is_legal(Agent::Leader, Action::Back));     // off board
  CHECK_FALSE(s.is_legal(Agent::Follower, Action::TurnLeft));
  CHECK(s.step(Agent::Leader, Action::TurnLeft));
  CHECK(s.step(Agent::Leader, Action::TurnLeft));
  CHECK(s.moves_left() == 0);
  CHECK_FALSE(s.step(Agent::Leader, Action::TurnLeft));
  s.end_turn();
  CHECK(s.turn() == Agent::Follower);
  CHECK(s.moves_left() == l.config.follower_moves);
}

TEST_CASE("entering a card toggles it and a valid triple scores") {
  auto l = empty_layout();
  l.leader = {2, 0, 0};
  const Cell a = {2, 1}, b = {2, 2}, c = {2, 3};
  l.cards = {card(a, 1, CardColor::Red, CardShape::Plus), card(b, 2, CardColor::Green, CardShape::Heart),
             card(c, 3, CardColor::Orange, CardShape::Diamond),
             card({5, 5}, 1, CardColor::Red, CardShape::Heart)};
  for (int i = 0; i < 6; ++i) l.cards.push_back(card({6, i}, 2, CardColor::Black, static_cast<CardShape>(i)));
  l.config.num_cards = static_cast<int>(l.cards.size());
  l.seed = 99;
  auto s = WorldAccess::build(l);
  CHECK(s.step(Agent::Leader, Action::Forward));
  CHECK(s.cards()[*s.card_index_at(a)].props.selected);
  CHECK(s.step(Agent::Leader, Action::Back));  // leaving does not toggle
  CHECK(s.cards()[*s.card_index_at(a)].props.selected);
  CHECK(s.step(Agent::Leader, Action::Forward));  // re-entering deselects
  CHECK_FALSE(s.cards()[*s.card_index_at(a)].props.selected);
  CHECK(s.step(Agent::Leader, Action::Back));
  CHECK(s.step(Agent::Leader, Action::Forward));  // a
  CHECK(s.step(Agent::Leader, Action::Forward));  // b
  CHECK(s.selected_count() == 2);
  CHECK(s.score() == 0);
  CHECK(s.step(Agent::Leader, Action::Forward));  // c completes the set
  CHECK(s.score() == 1);
  CHECK(s.selected_count() == 0);
  CHECK(s.cards().size() == l.cards.size());
  for (const auto& cd : s.cards()) {
    CHECK(cd.cell != s.pose(Agent::Leader).cell());
    CHECK(cd.cell != s.pose(Agent::Follower).cell());
  }
}

TEST_CASE("three selected cards that are not a set stay selected") {
  auto l = empty_layout();
  l.leader = {2, 0, 0};
  l.cards = {card({2, 1}, 1, CardColor::Red, CardShape::Plus),
             card({2, 2}, 1, CardColor::Green, CardShape::Heart),
             card({2, 3}, 3, CardColor::Orange, CardShape::Diamond)};
  auto s = WorldAccess::build(l);
  for (int i = 0; i < 3; ++i) CHECK(s.step(Agent::Leader, Action::Forward));
  CHECK(s.score() == 0);
  CHECK(s.selected_count() == 3);
}

TEST_CASE("set validity needs all three attributes pairwise distinct") {
  CardProps a{1, CardColor::Red, CardShape::Plus}, b{2, CardColor::Green, CardShape::Heart},
      c{3, CardColor::Orange, CardShape::Diamond};
  CHECK(is_valid_set(a, b, c));
  c.count = 2;
  CHECK_FALSE(is_valid_set(a, b, c));
  c.count = 3;
  c.color = CardColor::Red;
  CHECK_FALSE(is_valid_set(a, b, c));
}

TEST_CASE("crop rotation permutation matches rotated crops on random worlds") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto s = new_world(seed);
    for (int np : {1, 3, 5, 7}) {
      for (int alpha = 0; alpha < kDirections; ++alpha) {
        Pose p = s.pose(Agent::Follower);
        p.alpha = alpha;
        auto base = rotate_crop(s, p, np);
        for (int steps = 0; steps < kDirections; ++steps) {
          Pose q = p;
          q.alpha = wrap_direction(alpha + steps);
          auto turned = rotate_crop(s, q, np);
          auto perm = crop_rotation_permutation(np, steps);
          for (int slot = 0; slot < np * np; ++slot) CHECK(turned.cells[slot] == base.cells[perm[slot]]);
        }
      }
    }
  }
}

TEST_CASE("crop corners and off-board slots are padding, the center is the pose cell") {
  auto s = new_world(3);
  Pose p{0, 0, 2};
  auto crop = rotate_crop(s, p, 5);
  CHECK(crop.at(2, 2) == cell_properties(s, {0, 0}));
  CHECK(crop.at(0, 0).has(prop::kPad));
  CHECK(crop.at(4, 4).has(prop::kPad));
  int pads = 0;
  for (const auto& c : crop.cells) pads += c.has(prop::kPad);
  CHECK(pads > 6);  // corners plus off-board slots
  CHECK_THROWS(rotate_crop(s, p, 4));
}

TEST_CASE("view cone includes own cell, excludes behind and beyond depth") {
  Pose p{5, 5, 0};
  CHECK(in_view_cone(p, {5, 5}, 3, 60));
  CHECK(in_view_cone(p, neighbor({5, 5}, 1), 3, 60));  // exactly 60 degrees
  CHECK_FALSE(in_view_cone(p, neighbor({5, 5}, 2), 3, 60));
  CHECK_FALSE(in_view_cone(p, neighbor({5, 5}, 3), 3, 60));
  Cell far = {5, 9};
  CHECK_FALSE(in_view_cone(p, far, 3, 60));
  CHECK(in_view_cone(p, far, 4, 60));
  auto s = new_world(4);
  auto obs = follower_view(s);
  for (const auto& oc : obs.cells) {
    CHECK(in_view_cone(s.pose(Agent::Follower), oc.cell, s.config().view_depth,
                       s.config().view_half_angle_deg));
    CHECK(oc.card.has_value() == s.has_card(oc.cell));
  }
}

TEST_CASE("state tensor marks exactly the cell properties") {
  auto s = new_world(11);
  auto t = state_tensor(s);
  REQUIRE(t.size() == static_cast<std::size_t>(s.height() * s.width() * prop::kNumProperties));
  const Cell f = s.pose(Agent::Follower).cell();
  CHECK(t[(f.h * s.width() + f.w) * prop::kNumProperties + prop::kFollower] == 1);
  int ones = 0;
  for (auto v : t) ones += v;
  int expected = 0;
  for (int h = 0; h < s.height(); ++h)
    for (int w = 0; w < s.width(); ++w) expected += cell_properties(s, {h, w}).size;
  CHECK(ones == expected);
}

TEST_CASE("layouts round-trip including the respawn stream") {
  auto s = new_world(21);
  s.step(Agent::Leader, Action::TurnLeft);
  auto l = WorldAccess::layout(s);
  auto t = WorldAccess::build(l);
  WorldAccess::set_rng_state(t, WorldAccess::rng_state(s));
  CHECK(t == s);
}

TEST_CASE("follower turn has the full follower budget") {
  auto s = new_world(5);
  auto f = as_follower_turn(s);
  CHECK(f.turn() == Agent::Follower);
  CHECK(f.moves_left() == s.config().follower_moves);
  CHECK(as_follower_turn(f) == f);
}
