#include <cmath>
#include <set>

#include "doctest.h"
#include "hexbandit/bandit.hpp"

using namespace hexbandit;
using namespace hexbandit::hexworld;
using namespace hexbandit::bandit;

namespace {

const synthlang::Grammar& G() { return synthlang::Grammar::builtin(); }

genmodel::ModelConfig small_config() {
  genmodel::ModelConfig c;
  c.vocab_size = G().vocab().size();
  c.d_model = 8;
  c.ffn = 8;
  c.ns = 6;
  c.ns_cell = 5;
  c.orient_dim = 3;
  return c;
}

// Follower at (8,8) facing north-west; cards at (7,8) (north-east neighbour)
// and (9,7).
WorldState fixture_world() {
  WorldLayout l;
  l.config.height = 17;
  l.config.width = 17;
  l.follower = {8, 8, 2};
  l.leader = {12, 12, 0};
  l.landmarks = {{{5, 5}, {LandmarkType::Tree, LandmarkColor::Blue}}};
  l.cards = {{{7, 8}, {1, CardColor::Red, CardShape::Plus, false}},
             {{9, 7}, {2, CardColor::Green, CardShape::Star, false}},
             {{3, 12}, {3, CardColor::Blue, CardShape::Heart, false}}};
  l.turn = Agent::Follower;
  return WorldAccess::build(l);
}

std::vector<Pose> extend(std::vector<Pose> poses, std::initializer_list<Action> actions) {
  for (auto a : actions) poses.push_back(next_pose(poses.back(), a));
  return poses;
}

// Independent toggle oracle: replay with the game engine and diff the
// selection flags of the cards.
std::set<Cell> toggles_by_replay(const WorldState& s0, const std::vector<Pose>& poses) {
  WorldState s = s0;
  s.set_moves_left(100);
  for (std::size_t i = 1; i < poses.size(); ++i) REQUIRE(s.step(Agent::Follower, *action_between(poses[i - 1], poses[i])));
  std::set<Cell> out;
  for (const auto& c : s0.cards()) {
    auto j = s.card_index_at(c.cell);
    REQUIRE(j);
    if (s.cards()[*j].props.selected != c.props.selected) out.insert(c.cell);
  }
  return out;
}

struct Fixture {
  WorldState world = fixture_world();
  std::shared_ptr<const WorldState> state = std::make_shared<const WorldState>(world);
  planner::Plan plan = planner::plan_for_targets(world, world.pose(Agent::Follower), {{7, 8}});
  std::vector<Pose> detour = extend(plan.poses, {Action::TurnLeft});              // matches, other poses
  std::vector<Pose> wrong = planner::shortest_path(world, world.pose(Agent::Follower), {{9, 7}},
                                                   {{}, true});                      // other card
  synthlang::Instruction x = synthlang::verbalize(G(), world, plan, 0);

  Interaction record(const std::vector<Pose>& exec, bool pc, bool gr) const {
    return Interaction{"r0-i0", state, world, plan, x, -3.5, exec, {pc, gr}};
  }
};

}  // namespace

TEST_CASE("plan matching agrees with an engine replay") {
  Fixture f;
  REQUIRE(f.plan.target_cards == std::vector<Cell>{{7, 8}});
  CHECK(plan_match(f.plan, f.plan.poses, f.world));
  CHECK(plan_match(f.plan, f.detour, f.world));
  CHECK_FALSE(plan_match(f.plan, f.wrong, f.world));
  CHECK_FALSE(plan_match(f.plan, {f.plan.start}, f.world));
  for (const auto& exec : {f.plan.poses, f.detour, f.wrong}) {
    const auto oracle = toggles_by_replay(f.world, exec);
    CHECK(plan_match(f.plan, exec, f.world) == (oracle == std::set<Cell>{{7, 8}}));
    const auto as_plan = execution_as_plan(exec, f.world);
    CHECK(std::set<Cell>(as_plan.target_cards.begin(), as_plan.target_cards.end()) == oracle);
  }
  // Entering the card twice deselects it again.
  auto twice = extend(f.plan.poses, {Action::Back, Action::Forward, Action::Back});
  CHECK(toggles_by_replay(f.world, twice).empty());
  CHECK_FALSE(plan_match(f.plan, twice, f.world));

  planner::Plan stay;
  stay.start = f.world.pose(Agent::Follower);
  stay.poses = {stay.start};
  CHECK(plan_match(stay, extend(stay.poses, {Action::TurnLeft, Action::TurnLeft}), f.world));
  CHECK_FALSE(plan_match(stay, extend(stay.poses, {Action::TurnLeft, Action::Forward}), f.world));
}

TEST_CASE("example construction follows the feedback truth table") {
  Fixture f;
  for (int row = 0; row < 8; ++row) {
    const bool pc = row & 1, gr = row & 2, pm = row & 4;
    const auto& exec = pm ? f.detour : f.wrong;
    REQUIRE(plan_match(f.plan, exec, f.world) == pm);
    const auto ex = construct_examples(f.record(exec, pc, gr));
    CAPTURE(row);
    for (const auto& e : ex) {
      CHECK(e.behavior_logprob == -3.5);
      CHECK(e.provenance == "r0-i0");
      CHECK(e.x == f.x);
      CHECK(e.state == f.state);
      CHECK_FALSE((e.from_execution && e.y < 0));
    }
    if (!(pc && gr)) {
      REQUIRE(ex.size() == 1);
      CHECK(ex[0].y == -1);
      CHECK(ex[0].rho == f.plan);
    } else if (!pm) {
      REQUIRE(ex.size() == 1);
      CHECK(ex[0].y == 1);
      CHECK(ex[0].from_execution);
      CHECK(ex[0].rho.poses == exec);
    } else {
      REQUIRE(ex.size() == 2);
      CHECK(ex[0].y == 1);
      CHECK(ex[0].rho.poses == exec);
      CHECK(ex[1].y == 1);
      CHECK(ex[1].rho == f.plan);
    }
  }
}

TEST_CASE("identical execution and plan give a single positive") {
  Fixture f;
  const auto ex = construct_examples(f.record(f.plan.poses, true, true));
  REQUIRE(ex.size() == 1);
  CHECK(ex[0].y == 1);
  CHECK(ex[0].rho.poses == f.plan.poses);
}

TEST_CASE("learning variants") {
  Fixture f;
  for (int row = 0; row < 8; ++row) {
    const bool pc = row & 1, gr = row & 2, pm = row & 4;
    const auto rec = f.record(pm ? f.detour : f.wrong, pc, gr);
    const auto full = construct_examples(rec, Variant::Full);
    const auto pos = construct_examples(rec, Variant::PosOnly);
    std::vector<Example> kept;
    for (const auto& e : full)
      if (e.y > 0) kept.push_back(e);
    REQUIRE(pos.size() == kept.size());
    for (std::size_t i = 0; i < pos.size(); ++i) CHECK(pos[i].rho == kept[i].rho);

    // Feedback is ignored; only task completion decides.
    const auto tc = construct_examples(rec, Variant::TcOnly);
    const auto tc_flipped = construct_examples(f.record(rec.execution, !pc, !gr), Variant::TcOnly);
    REQUIRE(tc.size() == tc_flipped.size());
    if (pm) {
      REQUIRE(tc.size() == 2);
      CHECK(tc[0].y == 1);
      CHECK(tc[0].rho == f.plan);
      CHECK(tc[1].from_execution);
    } else {
      REQUIRE(tc.size() == 1);
      CHECK(tc[0].y == -1);
      CHECK(tc[0].rho == f.plan);
    }
  }
  CHECK(variant_from_name(variant_name(Variant::TcOnly)) == Variant::TcOnly);
  CHECK_THROWS_AS(variant_from_name("fine-tune"), std::invalid_argument);
}

TEST_CASE("importance weights") {
  Fixture f;
  genmodel::GenModel m(small_config(), 3);
  const double lp = m.sequence_logprob(f.world, f.plan, f.x);
  Example e{f.state, f.plan, f.x, 1, lp - 5.0, false, "e"};
  CHECK(ips_weight(e, m) == 1.0);
  e.y = -1;
  e.behavior_logprob = lp;
  CHECK(ips_weight(e, m) == doctest::Approx(1.0).epsilon(1e-12));
  e.behavior_logprob = lp + std::log(2.0);
  CHECK(ips_weight(e, m) == doctest::Approx(0.5).epsilon(1e-12));
  e.behavior_logprob = lp - std::log(10.0);
  CHECK(ips_weight(e, m) == doctest::Approx(10.0).epsilon(1e-12));
  TrainConfig clipped;
  clipped.ips_max_weight = 3.0;
  CHECK(ips_weight(e, m, clipped) == 3.0);
  TrainConfig off;
  off.ips = false;
  CHECK(ips_weight(e, m, off) == 1.0);
}

TEST_CASE("supervised loss") {
  Fixture f;
  genmodel::GenModel m(small_config(), 4);
  std::vector<Example> d = {{f.state, f.plan, f.x, 1, 0.0, false, "a"}};
  CHECK(supervised_loss(m, d) == doctest::Approx(-m.sequence_logprob(f.world, f.plan, f.x)));
  CHECK(supervised_loss(m, d) > 0);
  d.push_back(d[0]);
  d[1].y = -1;
  CHECK_THROWS_AS(supervised_loss(m, d), std::invalid_argument);
}

TEST_CASE("weighted objective gradient matches finite differences with frozen weights") {
  Fixture f;
  genmodel::GenModel m(small_config(), 5);
  auto x_short = f.x;
  if (x_short.tokens.size() > 6) x_short.tokens.resize(6);
  const auto exec_plan = execution_as_plan(f.wrong, f.world);
  const double lp_neg = m.sequence_logprob(f.world, f.plan, x_short);
  std::vector<Example> data = {
      {f.state, f.plan, x_short, -1, lp_neg + 0.7, false, "neg"},
      {f.state, exec_plan, x_short, 1, 0.0, true, "pos"},
  };
  std::vector<const Example*> batch = {&data[0], &data[1]};
  const TrainConfig cfg;
  std::vector<double> w;
  for (const auto& e : data) w.push_back(ips_weight(e, m, cfg));
  CHECK(w[0] == doctest::Approx(std::exp(-0.7)));

  auto objective = [&] {
    double j = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
      j -= w[i] * data[i].y * m.sequence_logprob(*data[i].state, data[i].rho, data[i].x) / data.size();
    return j;
  };
  m.params().zero_grad();
  const auto st = accumulate_gradient(m, batch, cfg);
  CHECK(st.objective == doctest::Approx(objective()).epsilon(1e-10));
  CHECK(st.negative_term == doctest::Approx(std::abs(w[0] * lp_neg)).epsilon(1e-10));

  Rng rng(9);
  double worst = 0;
  for (auto& p : m.params().params()) {
    for (int trial = 0; trial < 3; ++trial) {
      const Eigen::Index i = uniform_int(rng, 0, static_cast<int>(p.value.size()) - 1);
      const double keep = p.value.data()[i], h = 1e-5;
      p.value.data()[i] = keep + h;
      const double up = objective();
      p.value.data()[i] = keep - h;
      const double down = objective();
      p.value.data()[i] = keep;
      const double numeric = (up - down) / (2 * h);
      const double analytic = p.grad.data()[i];
      worst = std::max(worst, std::abs(numeric - analytic) / std::max(1e-3, std::abs(numeric) + std::abs(analytic)));
    }
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("a negative example's gradient shrinks with its probability ratio") {
  Fixture f;
  genmodel::GenModel m(small_config(), 6);
  const double lp = m.sequence_logprob(f.world, f.plan, f.x);
  Example e{f.state, f.plan, f.x, -1, lp, false, "neg"};
  m.params().zero_grad();
  const double before = accumulate_gradient(m, {&e}, {}).grad_norm;
  // Equivalent to the current probability being ten times below the behavior one.
  e.behavior_logprob = lp + std::log(10.0);
  m.params().zero_grad();
  const double after = accumulate_gradient(m, {&e}, {}).grad_norm;
  CHECK(before / after == doctest::Approx(10.0).epsilon(1e-9));
}

TEST_CASE("negative loss stays bounded with importance weights and diverges without") {
  Fixture f;
  const double lp0 = genmodel::GenModel(small_config(), 7).sequence_logprob(f.world, f.plan, f.x);
  const Example neg{f.state, f.plan, f.x, -1, lp0, false, "neg"};
  const auto other = execution_as_plan(f.wrong, f.world);
  const Example pos{f.state, other, synthlang::verbalize(G(), f.world, other, 0), 1, 0.0, true, "pos"};
  REQUIRE(pos.x != f.x);
  auto run = [&](bool ips) {
    genmodel::GenModel m(small_config(), 7);
    TrainConfig cfg;
    cfg.ips = ips;
    cfg.lr = 0.01;
    diffkit::AdamW opt({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
    std::vector<double> trace;
    for (int step = 0; step < 200; ++step) trace.push_back(train_step(m, opt, {&neg, &pos}, cfg).negative_term);
    return trace;
  };
  const auto with = run(true), without = run(false);
  REQUIRE(with.front() == doctest::Approx(without.front()));
  double max_with = 0, max_without = 0;
  for (double v : with) max_with = std::max(max_with, v);
  for (double v : without) max_without = std::max(max_without, v);
  MESSAGE("initial " << with.front() << ", max with weights " << max_with << ", without " << max_without);
  CHECK(max_with <= 2.0 * with.front());
  CHECK(max_without > 10.0 * without.front());
}

TEST_CASE("rehearsal batches draw half their examples from history") {
  Rng rng(1);
  const auto batches = rehearsal_batches(16000, 700, 32, rng);
  CHECK(batches.size() == 1000);
  long hist = 0, total = 0;
  std::set<int> current_seen;
  for (const auto& b : batches) {
    CHECK(b.size() == 32);
    for (auto [h, i] : b) {
      hist += h;
      ++total;
      if (!h) CHECK(current_seen.insert(i).second);
      else CHECK((i >= 0 && i < 700));
    }
  }
  CHECK(static_cast<double>(hist) / total == doctest::Approx(0.5).epsilon(0.01));
  CHECK(current_seen.size() == 16000);
  const auto solo = rehearsal_batches(10, 0, 4, rng);
  CHECK(solo.size() == 3);
  CHECK(solo.back().size() == 2);
}

TEST_CASE("round training is deterministic and keeps members distinct") {
  Fixture f;
  std::vector<std::vector<Example>> data(2);
  data[0].push_back({f.state, f.plan, f.x, 1, 0.0, false, "a"});
  data[0].push_back({f.state, execution_as_plan(f.wrong, f.world), f.x, 1, 0.0, true, "b"});
  data[1].push_back({f.state, f.plan, f.x, -1, -30.0, false, "c"});
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 2;

  auto a = Ensemble::create(small_config(), 3, 11);
  auto b = Ensemble::create(small_config(), 3, 11);
  CHECK(std::set<std::uint64_t>(a.member_seeds.begin(), a.member_seeds.end()).size() == 3);
  train_round(TrainMode::Retrain, data, a, cfg, 1);
  train_round(TrainMode::Retrain, data, b, cfg, 1);
  REQUIRE(a.members.size() == 3);
  for (int k = 0; k < 3; ++k) CHECK(a.members[k].checkpoint(false) == b.members[k].checkpoint(false));
  CHECK(a.members[0].checkpoint(false) != a.members[1].checkpoint(false));

  // Retraining starts again from the member's initial parameters.
  auto c = Ensemble::create(small_config(), 3, 11);
  train_round(TrainMode::FinetuneRehearsal, data, c, cfg, 1);
  train_round(TrainMode::Retrain, data, c, cfg, 1);
  for (int k = 0; k < 3; ++k) CHECK(c.members[k].checkpoint(false) == a.members[k].checkpoint(false));

  auto d = Ensemble::create(small_config(), 3, 11);
  const auto before = d.members[0].checkpoint(false);
  train_round(TrainMode::FinetuneRehearsal, data, d, cfg, 1);
  CHECK(d.members[0].checkpoint(false) != before);
  CHECK_THROWS_AS(train_round(TrainMode::Retrain, {}, d, cfg, 1), std::invalid_argument);
}
