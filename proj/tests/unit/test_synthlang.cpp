#include <algorithm>
#include <map>
#include <set>

#include "doctest.h"
#include "hexbandit/synthlang.hpp"

using namespace hexbandit;
using namespace hexbandit::hexworld;
using namespace hexbandit::synthlang;

namespace {

const Grammar& G() { return Grammar::builtin(); }

// Span recognizer: derives(A, i, j) by memoized recursion over rule suffixes.
class SpanOracle {
 public:
  SpanOracle(const Grammar& g, const std::vector<int>& toks) : g_(g), t_(toks) {}
  bool accepts() { return derives(g_.start(), 0, static_cast<int>(t_.size())); }

 private:
  bool derives(int nt, int i, int j) {
    auto key = std::make_tuple(nt, i, j);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    memo_[key] = false;  // guards against nullable cycles
    bool ok = false;
    for (const auto& r : g_.rules())
      if (r.lhs == nt && seq(r.rhs, 0, i, j)) {
        ok = true;
        break;
      }
    memo_[key] = ok;
    return ok;
  }
  bool seq(const std::vector<Symbol>& rhs, std::size_t k, int i, int j) {
    if (k == rhs.size()) return i == j;
    if (rhs[k].terminal) return i < j && t_[i] == rhs[k].id && seq(rhs, k + 1, i + 1, j);
    for (int m = i; m <= j; ++m)
      if (derives(rhs[k].id, i, m) && seq(rhs, k + 1, m, j)) return true;
    return false;
  }
  const Grammar& g_;
  const std::vector<int>& t_;
  std::map<std::tuple<int, int, int>, bool> memo_;
};

Clause random_clause(Rng& rng, bool allow_wait) {
  const int kind = uniform_int(rng, allow_wait ? 0 : 1, 4);
  auto lm = [&] {
    return LandmarkDesc{static_cast<LandmarkColor>(uniform_int(rng, 0, 3)),
                        static_cast<LandmarkType>(uniform_int(rng, 0, 5))};
  };
  switch (kind) {
    case 0: return WaitClause{uniform_int(rng, 0, 3)};
    case 1: return TurnClause{static_cast<TurnDir>(uniform_int(rng, 0, 2))};
    case 2: return GotoClause{lm()};
    case 3: return WalkClause{uniform_int(rng, 1, 9)};
    default: {
      FetchClause f;
      f.verb = uniform_int(rng, 0, 4);
      f.card = {uniform_int(rng, 1, 3), static_cast<CardColor>(uniform_int(rng, 0, 5)),
                static_cast<CardShape>(uniform_int(rng, 0, 5))};
      f.locator = static_cast<Locator>(uniform_int(rng, 0, 6));
      if (f.locator == Locator::Near) f.near = lm();
      return f;
    }
  }
}

Utterance random_utterance(Rng& rng) {
  Utterance u;
  const int n = uniform_int(rng, 1, 4);
  for (int i = 0; i < n; ++i) {
    u.clauses.push_back(random_clause(rng, n == 1));
    if (i) u.connectives.push_back(uniform_int(rng, 0, kConnectiveCount - 1));
  }
  return u;
}

WorldLayout open_layout() {
  WorldLayout l;
  l.config.height = 10;
  l.config.width = 10;
  l.config.view_depth = 4;
  l.leader = {0, 0, 0};
  l.follower = {5, 3, 0};  // facing east
  return l;
}

Card card(Cell c, int count, CardColor color, CardShape shape) { return {c, {count, color, shape, false}}; }

Cell ahead(Cell c, int alpha, int n) {
  for (int i = 0; i < n; ++i) c = neighbor(c, alpha);
  return c;
}

class Explorer : public Perturbation {
 public:
  bool explore() override { return true; }
};

}  // namespace

TEST_CASE("vocabulary puts specials first and keeps terminal order") {
  const auto& v = G().vocab();
  CHECK(v.token(kBos) == "<bos>");
  CHECK(v.token(kEos) == "<eos>");
  CHECK(v.token(kUnk) == "<unk>");
  CHECK(v.token(3) == "and");
  CHECK(v.id("zebra") == kUnk);
  std::set<std::string> unique(v.tokens().begin(), v.tokens().end());
  CHECK(unique.size() == v.tokens().size());
  CHECK(G().version() == 1);
}

TEST_CASE("malformed grammar files are rejected") {
  CHECK_THROWS_AS(Grammar::from_text("a = b ;"), GrammarError);
  CHECK_THROWS_AS(Grammar::from_text("a = \"x ;"), GrammarError);
  CHECK_THROWS_AS(Grammar::from_text("a = \"x\""), GrammarError);
  CHECK_THROWS_AS(Grammar::from_text(""), GrammarError);
  auto g = Grammar::from_text("s = \"a\" [ \"b\" ] ( \"c\" | \"d\" ) ;");
  auto tok = [&](std::string t) { return tokenize(g.vocab(), t); };
  CHECK(g.accepts(tok("a c")));
  CHECK(g.accepts(tok("a b d")));
  CHECK_FALSE(g.accepts(tok("a b")));
  CHECK_FALSE(g.accepts(tok("")));
}

TEST_CASE("rendered utterances are members and read back identically") {
  Rng rng(5);
  for (int i = 0; i < 400; ++i) {
    auto u = random_utterance(rng);
    auto x = render(G(), u);
    REQUIRE(G().accepts(x));
    auto back = read_utterance(G(), x);
    REQUIRE(back);
    CHECK(back->clauses == u.clauses);
    CHECK(back->connectives == u.connectives);
  }
}

TEST_CASE("Earley recognizer agrees with a span recognizer") {
  Rng rng(17);
  const int V = G().vocab().size();
  int members = 0;
  for (int i = 0; i < 600; ++i) {
    std::vector<int> t = render(G(), random_utterance(rng)).tokens;
    const int edits = uniform_int(rng, 0, 2);
    for (int e = 0; e < edits && !t.empty(); ++e) {
      const int pos = uniform_int(rng, 0, static_cast<int>(t.size()) - 1);
      switch (uniform_int(rng, 0, 2)) {
        case 0: t[pos] = uniform_int(rng, 3, V - 1); break;
        case 1: t.erase(t.begin() + pos); break;
        default: t.insert(t.begin() + pos, uniform_int(rng, 3, V - 1)); break;
      }
    }
    SpanOracle oracle(G(), t);
    const bool expect = oracle.accepts();
    members += expect;
    CHECK(G().accepts(t) == expect);
    CHECK(G().parse_tree(t).has_value() == expect);
  }
  CHECK(members > 200);
  CHECK(members < 600);
}

TEST_CASE("tokenize splits commas and lowercases") {
  auto x = tokenize(G().vocab(), "Grab the one red plus, then HOLD still");
  CHECK(to_text(G().vocab(), x) == "grab the one red plus , then hold still");
}

TEST_CASE("literal follower fetches a visible card") {
  auto l = open_layout();
  const Cell target = ahead({5, 3}, 0, 3);
  l.cards = {card(target, 1, CardColor::Red, CardShape::Plus), card({0, 9}, 2, CardColor::Blue, CardShape::Star)};
  auto s = WorldAccess::build(l);
  auto x = tokenize(G().vocab(), "get the one red plus");
  Perturbation literal;
  auto tr = execute_instruction(G(), s, x, literal);
  CHECK(tr.completed);
  CHECK(tr.failure == Failure::None);
  CHECK(tr.poses.back().cell() == target);
  CHECK(tr.poses.size() == 4);
  CHECK(toggled_cells(s, tr.poses) == std::vector<Cell>{target});
  auto pr = parse(G(), s, x);
  REQUIRE(pr.ok());
  CHECK(pr.intent->clauses.front().referent == target);
}

TEST_CASE("locators rotate before resolving") {
  auto l = open_layout();
  const Cell behind = ahead({5, 3}, 3, 2);
  l.cards = {card(behind, 3, CardColor::Green, CardShape::Heart)};
  auto s = WorldAccess::build(l);
  Perturbation literal;
  auto plain = execute_instruction(G(), s, tokenize(G().vocab(), "take the three green hearts"), literal);
  CHECK(plain.failure == Failure::UnresolvableReferent);
  auto located =
      execute_instruction(G(), s, tokenize(G().vocab(), "take the three green hearts behind you"), literal);
  CHECK(located.completed);
  CHECK(located.poses.back().cell() == behind);
  auto turned = execute_instruction(
      G(), s, tokenize(G().vocab(), "turn around and take the three green hearts"), literal);
  CHECK(turned.completed);
  Explorer explorer;
  auto explored = execute_instruction(G(), s, tokenize(G().vocab(), "take the three green hearts"), explorer);
  CHECK(explored.completed);
  CHECK(explored.explored);
}

TEST_CASE("contradictions and grammar failures") {
  auto l = open_layout();
  const Cell target = ahead({5, 3}, 0, 2);
  l.cards = {card(target, 1, CardColor::Red, CardShape::Plus)};
  l.landmarks = {{ahead({5, 3}, 0, 4), {LandmarkType::Tree, LandmarkColor::Pink}}};
  auto s = WorldAccess::build(l);
  Perturbation literal;
  auto run = [&](const char* text) { return execute_instruction(G(), s, tokenize(G().vocab(), text), literal); };
  CHECK(run("hold still").completed);
  CHECK(run("hold still and get the one red plus").failure == Failure::Contradictory);
  CHECK(run("get the one red plus near the pink tree").failure == Failure::Contradictory);
  CHECK(run("get the one red plus and get the one red plus").failure == Failure::Contradictory);
  CHECK(run("get red plus").failure == Failure::Ungrammatical);
  CHECK(run("get the one blue plus").failure == Failure::UnresolvableReferent);
  auto go = run("go toward the pink tree");
  CHECK(go.completed);
  CHECK(hex_distance(go.poses.back().cell(), ahead({5, 3}, 0, 4)) == 1);
  CHECK(toggled_cells(s, go.poses).empty());  // routes around cards
  auto walk = run("go forward two steps");
  CHECK(walk.completed);
  CHECK(walk.poses.back().cell() == target);
}

TEST_CASE("walking into a wall is blocked and budgets run out") {
  auto l = open_layout();
  l.landmarks = {{neighbor({5, 3}, 0), {LandmarkType::House, LandmarkColor::White}}};
  l.config.follower_moves = 2;
  auto s = WorldAccess::build(l);
  Perturbation literal;
  CHECK(execute_instruction(G(), s, tokenize(G().vocab(), "go forward one step"), literal).failure ==
        Failure::Blocked);
  CHECK(execute_instruction(G(), s, tokenize(G().vocab(), "turn around and turn left"), literal).failure ==
        Failure::OutOfMoves);
}

TEST_CASE("verbalized plans are grammatical and execute to the plan's toggles") {
  int within_limit = 0, total = 0;
  std::set<std::vector<int>> surfaces;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    auto s = new_world(seed);
    auto result = planner::make_plan(s);
    const auto& plan = result.plan;
    auto targets = plan.target_cards;
    std::sort(targets.begin(), targets.end());
    CHECK(toggled_cells(s, plan.poses) == targets);
    for (std::uint64_t style = 0; style < 3; ++style) {
      auto x = verbalize(G(), s, plan, seed * 10 + style);
      ++total;
      within_limit += static_cast<int>(x.tokens.size()) <= kMaxInstructionTokens;
      surfaces.insert(x.tokens);
      REQUIRE(G().accepts(x));
      Perturbation literal;
      auto tr = execute_instruction(G(), s, x, literal);
      INFO(to_text(G().vocab(), x));
      CHECK(tr.completed);
      CHECK(toggled_cells(s, tr.poses) == targets);
    }
  }
  CHECK(within_limit >= total * 9 / 10);
  CHECK(surfaces.size() > static_cast<std::size_t>(total) * 2 / 3);
}

TEST_CASE("verbalizer is deterministic for a style seed") {
  auto s = new_world(9);
  auto plan = planner::make_plan(s).plan;
  CHECK(verbalize(G(), s, plan, 4) == verbalize(G(), s, plan, 4));
  planner::Plan wrong = plan;
  wrong.start.alpha = (wrong.start.alpha + 1) % 6;
  CHECK_THROWS_AS(verbalize(G(), s, wrong, 4), std::invalid_argument);
}
