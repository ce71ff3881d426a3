#include <algorithm>
#include <array>

#include "doctest.h"
#include "hexbandit/follower.hpp"

using namespace hexbandit;
using namespace hexbandit::hexworld;
using namespace hexbandit::follower;
namespace sl = hexbandit::synthlang;

namespace {

const sl::Grammar& G() { return sl::Grammar::builtin(); }

}  // namespace

TEST_CASE("shipped presets load and validate") {
  auto expert = builtin_profile("expert");
  CHECK(expert == CompetenceProfile{});
  auto typical = builtin_profile("typical");
  CHECK(typical.move_noise > 0.0);
  CHECK_THROWS_AS(builtin_profile("nobody"), std::invalid_argument);
  CompetenceProfile bad;
  bad.give_up = 1.5;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
}

TEST_CASE("noiseless follower completes every verbalized plan") {
  const auto expert = builtin_profile("expert");
  int completed = 0;
  for (std::uint64_t ep = 0; ep < 200; ++ep) {
    auto s = new_world(1000 + ep);
    auto plan = planner::make_plan(s).plan;
    auto x = sl::verbalize(G(), s, plan, ep);
    auto r = execute(G(), s, x, expert, ep);
    auto targets = plan.target_cards;
    std::sort(targets.begin(), targets.end());
    const bool ok = sl::toggled_cells(s, r.trace.poses) == targets;
    completed += ok;
    CHECK(r.feedback == Feedback{true, true});
    CHECK_FALSE(r.terminated);
  }
  CHECK(completed == 200);
}

TEST_CASE("ungrammatical input terminates with negative answers") {
  auto s = new_world(3);
  auto x = sl::tokenize(G().vocab(), "the the go");
  auto r = execute(G(), s, x, builtin_profile("expert"), 1);
  CHECK(r.terminated);
  CHECK(r.feedback == Feedback{false, false});
  CHECK(r.trace.poses.size() == 1);
}

TEST_CASE("executions are legal and reproducible under noise") {
  const auto noisy = builtin_profile("noisy");
  for (std::uint64_t ep = 0; ep < 40; ++ep) {
    auto s = new_world(ep);
    auto plan = planner::make_plan(s).plan;
    auto x = sl::verbalize(G(), s, plan, ep);
    auto a = execute(G(), s, x, noisy, 77 + ep);
    auto b = execute(G(), s, x, noisy, 77 + ep);
    CHECK(a.trace.poses == b.trace.poses);
    CHECK(a.feedback == b.feedback);
    CHECK(a.trace.poses.front() == s.pose(Agent::Follower));
    auto t = as_follower_turn(s);
    for (std::size_t i = 1; i < a.trace.poses.size(); ++i) {
      auto act = action_between(a.trace.poses[i - 1], a.trace.poses[i]);
      REQUIRE(act);
      REQUIRE(t.step(Agent::Follower, *act));
    }
  }
}

TEST_CASE("with move noise one, actions are uniform over the legal ones") {
  CompetenceProfile p;
  p.move_noise = 1.0;
  WorldLayout l;
  l.config.height = 12;
  l.config.width = 12;
  l.config.follower_moves = 2000;
  l.leader = {0, 0, 0};
  l.follower = {6, 6, 0};
  l.turn = Agent::Follower;
  l.landmarks = {{{3, 3}, {}}, {{8, 8}, {}}, {{2, 9}, {}}};
  auto s = WorldAccess::build(l);
  sl::Utterance u;
  for (int i = 0; i < 12; ++i) {
    u.clauses.push_back(sl::WalkClause{9});
    if (i) u.connectives.push_back(0);
  }
  const auto x = sl::render(G(), u);
  // Observed counts per action, split by how many actions were legal, against
  // the expected counts of a uniform random legal walk.
  std::array<std::array<double, 4>, 5> observed{}, expected{};
  int steps = 0;
  for (std::uint64_t seed = 0; steps < 1000; ++seed) {
    auto r = execute(G(), s, x, p, seed);
    auto t = s;
    for (std::size_t i = 1; i < r.trace.poses.size(); ++i) {
      std::vector<Action> legal;
      for (auto a : kAllActions)
        if (t.is_legal(Agent::Follower, a)) legal.push_back(a);
      auto act = *action_between(r.trace.poses[i - 1], r.trace.poses[i]);
      REQUIRE(std::find(legal.begin(), legal.end(), act) != legal.end());
      observed[legal.size()][static_cast<int>(act)] += 1;
      for (auto a : legal) expected[legal.size()][static_cast<int>(a)] += 1.0 / legal.size();
      t.step(Agent::Follower, act);
      ++steps;
    }
  }
  double chi2 = 0;
  int cells = 0;
  for (int n = 1; n <= 4; ++n)
    for (int a = 0; a < 4; ++a)
      if (expected[n][a] >= 5) {
        chi2 += (observed[n][a] - expected[n][a]) * (observed[n][a] - expected[n][a]) / expected[n][a];
        ++cells;
      }
  // Upper 0.1% quantile of chi-square with up to 12 degrees of freedom.
  CHECK(cells >= 4);
  CHECK(chi2 < 32.9);
}

TEST_CASE("feedback noise one flips both answers") {
  CompetenceProfile p;
  p.feedback_noise = 1.0;
  auto s = new_world(5);
  auto plan = planner::make_plan(s).plan;
  auto r = execute(G(), s, sl::verbalize(G(), s, plan, 0), p, 3);
  CHECK(r.feedback == Feedback{false, false});
}

TEST_CASE("giving up terminates, exploring can recover") {
  WorldLayout l;
  l.config.height = 10;
  l.config.width = 10;
  l.leader = {0, 0, 0};
  l.follower = {5, 5, 0};
  l.cards = {{{5, 2}, {2, CardColor::Blue, CardShape::Star, false}}};  // behind
  auto s = WorldAccess::build(l);
  auto x = sl::tokenize(G().vocab(), "get the two blue stars");
  CompetenceProfile quitter;
  quitter.give_up = 1.0;
  auto q = execute(G(), s, x, quitter, 1);
  CHECK(q.terminated);
  CHECK_FALSE(q.feedback.perceived_correct);
  auto e = execute(G(), s, x, CompetenceProfile{}, 1);
  CHECK_FALSE(e.terminated);
  CHECK(e.trace.explored);
  CHECK(e.trace.poses.back().cell() == Cell{5, 2});
}
