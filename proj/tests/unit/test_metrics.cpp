#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "doctest.h"
#include "hexbandit/bandit.hpp"
#include "hexbandit/metrics.hpp"
#include "oracles.hpp"

using namespace hexbandit;
using namespace hexbandit::hexworld;
using namespace hexbandit::metrics;

namespace {

PathDistribution random_distribution(Rng& rng, int k) {
  std::map<Cell, double> w;
  while (static_cast<int>(w.size()) < k) w[{uniform_int(rng, 0, 9), uniform_int(rng, 0, 9)}] = 0.1 + uniform01(rng);
  double s = 0;
  for (auto& [c, v] : w) s += v;
  PathDistribution d;
  for (auto& [c, v] : w) {
    d.support.push_back(c);
    d.weights.push_back(v / s);
  }
  return d;
}

std::vector<Pose> random_path(Rng& rng) {
  std::vector<Pose> p = {{uniform_int(rng, 2, 12), uniform_int(rng, 2, 12), uniform_int(rng, 0, 5)}};
  const int len = uniform_int(rng, 0, 12);
  for (int i = 0; i < len; ++i) p.push_back(next_pose(p.back(), static_cast<Action>(uniform_int(rng, 0, 3))));
  return p;
}

}  // namespace

TEST_CASE("path distributions") {
  std::vector<Pose> four = {{1, 1, 0}, {1, 2, 0}, {1, 3, 0}, {1, 4, 0}};
  auto d = path_to_distribution(four);
  CHECK(d.weights == std::vector<double>(4, 0.25));
  std::vector<Pose> revisit = {{1, 1, 0}, {1, 2, 0}, {1, 2, 1}, {1, 3, 1}};
  d = path_to_distribution(revisit);
  REQUIRE(d.support.size() == 3);
  CHECK(d.weights[1] == 0.5);
  CHECK(d.support[1] == Cell{1, 2});
  CHECK_THROWS_AS(path_to_distribution({}), std::invalid_argument);
}

TEST_CASE("emd basics") {
  PathDistribution a{{{3, 3}}, {1.0}}, b{{{3, 7}}, {1.0}};
  CHECK(emd(a, b) == doctest::Approx(4.0));
  CHECK(emd(a, a) == 0.0);
  PathDistribution half{{{3, 3}, {3, 7}}, {0.5, 0.5}};
  CHECK(emd(a, half) == doctest::Approx(2.0));
  PathDistribution bad{{{3, 3}}, {0.7}};
  CHECK_THROWS_AS(emd(a, bad), std::invalid_argument);
}

TEST_CASE("emd matches spanning-tree enumeration on small supports") {
  Rng rng(5);
  for (int n = 1; n <= 5; ++n)
    for (int m = 1; m <= 5; ++m)
      for (int trial = 0; trial < 4; ++trial) {
        auto a = random_distribution(rng, n), b = random_distribution(rng, m);
        CHECK(std::abs(emd(a, b) - oracle::emd_by_trees(a, b)) < 1e-6);
      }
}

TEST_CASE("emd is a metric on path distributions") {
  Rng rng(8);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto pa = random_path(rng), pb = random_path(rng), pc = random_path(rng);
    const auto a = path_to_distribution(pa), b = path_to_distribution(pb), c = path_to_distribution(pc);
    const double ab = emd(a, b), ba = emd(b, a), bc = emd(b, c), ac = emd(a, c);
    CHECK(ab >= 0);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-9));
    CHECK(ac <= ab + bc + 1e-9);
    CHECK(emd(a, a) < 1e-12);
    const bool same = a.support == b.support && a.weights == b.weights;
    if (!same) CHECK(ab > 1e-9);
  }
}

TEST_CASE("task completion") {
  auto s = new_world(21);
  auto plan = planner::make_plan(s).plan;
  REQUIRE_FALSE(plan.target_cards.empty());
  CHECK(task_completion(plan, plan.poses));
  CHECK(emd(path_to_distribution(plan.poses), path_to_distribution(plan.poses)) == 0.0);
  auto extra = plan.poses;
  extra.push_back(next_pose(extra.back(), Action::TurnLeft));
  extra.push_back(next_pose(extra.back(), Action::TurnLeft));
  CHECK(task_completion(plan, extra));
  auto cut = plan.poses;
  while (cut.size() > 1 && cut.back().cell() != plan.start.cell() && cut.back().cell() == plan.poses.back().cell())
    cut.pop_back();
  CHECK_FALSE(task_completion(plan, cut));
  CHECK_FALSE(task_completion(plan, {}));

  planner::Plan stay{plan.start, {plan.start}, {}};
  CHECK(task_completion(stay, {plan.start, next_pose(plan.start, Action::TurnRight)}));
  Pose moved = next_pose(plan.start, Action::TurnRight);
  moved = next_pose(moved, Action::Forward);
  CHECK_FALSE(task_completion(stay, {plan.start, next_pose(plan.start, Action::TurnRight), moved}));
}

TEST_CASE("plan match implies task completion for card plans") {
  const auto& g = synthlang::Grammar::builtin();
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    auto s = new_world(seed);
    auto plan = planner::make_plan(s).plan;
    if (plan.target_cards.empty()) continue;
    auto x = synthlang::verbalize(g, s, plan, seed);
    auto r = follower::execute(g, hexworld::as_follower_turn(s), x, follower::builtin_profile("noisy"), seed);
    if (bandit::plan_match(plan, r.trace.poses, hexworld::as_follower_turn(s))) {
      CHECK(task_completion(plan, r.trace.poses));
      ++checked;
    }
  }
  CHECK(checked > 5);
}

TEST_CASE("language statistics against a direct tally") {
  const auto& g = synthlang::Grammar::builtin();
  std::vector<synthlang::Instruction> xs;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto s = new_world(seed);
    xs.push_back(synthlang::verbalize(g, s, planner::make_plan(s).plan, seed));
  }
  // Recount from the rendered text.
  std::map<std::string, int> types;
  long words = 0;
  for (const auto& x : xs) {
    std::istringstream in(synthlang::to_text(g.vocab(), x));
    std::string w;
    while (in >> w) {
      while (!w.empty() && w.back() == ',') {
        w.pop_back();
        ++words;
        ++types[","];
      }
      if (w.empty()) continue;
      ++words;
      ++types[w];
    }
  }
  const auto st = language_stats(xs);
  CHECK(st.mean_length == doctest::Approx(static_cast<double>(words) / xs.size()));
  CHECK(st.vocabulary_size == static_cast<int>(types.size()));
  auto doubled = xs;
  doubled.insert(doubled.end(), xs.begin(), xs.end());
  CHECK(language_stats(doubled).vocabulary_size == st.vocabulary_size);
  synthlang::Instruction five;
  five.tokens = {g.vocab().id("turn"), g.vocab().id("left"), g.vocab().id("turn"), g.vocab().id("left"),
                 g.vocab().id("stop")};
  CHECK(language_stats({five}).mean_length == 5.0);
}

TEST_CASE("round reports aggregate outcomes and round-trip through json") {
  std::vector<Outcome> out = {{0, true, 0.0, {true, true}, false},
                              {1, false, 2.5, {false, true}, true},
                              {2, true, 1.0, {true, false}, false},
                              {1, true, 0.5, {true, true}, false}};
  auto r = summarize(3, out, {2, 4}, {});
  CHECK(r.instructions == 4);
  CHECK(r.games == 2);
  CHECK(r.completion == 0.75);
  CHECK(r.completion_by_cards[1] == 0.5);
  CHECK(r.instructions_by_cards == std::array<int, 4>{1, 2, 1, 0});
  CHECK(r.mean_emd == 1.0);
  CHECK(r.perceived_correct_rate == 0.75);
  CHECK(r.grammatical_rate == 0.75);
  CHECK(r.terminated_rate == 0.25);
  CHECK(r.mean_score == 3.0);
  const auto back = report_from_json(to_json(r));
  CHECK(csv_row(back) == csv_row(r));
  const std::string header = csv_header(), row = csv_row(r);
  CHECK(std::count(header.begin(), header.end(), ',') == std::count(row.begin(), row.end(), ','));
}
