#include "hexbandit/synthlang.hpp"

#include <algorithm>
#include <array>
#include <sstream>

namespace hexbandit::synthlang {

using hexworld::Agent;
using hexworld::CardColor;
using hexworld::CardShape;
using hexworld::LandmarkColor;
using hexworld::LandmarkType;

namespace {

constexpr std::array<std::string_view, 4> kWaitPhrases = {"hold still", "wait here",
                                                          "stay where you are", "do not move"};
constexpr std::array<std::string_view, 5> kVerbs = {"get", "grab", "collect", "take", "pick up"};
constexpr std::array<std::string_view, kConnectiveCount> kConnectives = {"and", "then", "and then",
                                                                         ", then", ","};
constexpr std::array<std::string_view, 10> kNumbers = {"zero", "one", "two",   "three", "four",
                                                       "five", "six", "seven", "eight", "nine"};
constexpr std::array<std::string_view, 6> kColors = {"red",   "green", "orange",
                                                     "black", "blue",  "yellow"};
constexpr std::array<std::string_view, 6> kShapesOne = {"plus",     "heart", "diamond",
                                                        "triangle", "star",  "square"};
constexpr std::array<std::string_view, 6> kShapesMany = {"pluses",    "hearts", "diamonds",
                                                         "triangles", "stars",  "squares"};
constexpr std::array<std::string_view, 4> kLmColors = {"pink", "blue", "yellow", "white"};
constexpr std::array<std::string_view, 6> kLmTypes = {"house",    "tree",     "pond",
                                                      "mountain", "windmill", "tower"};
constexpr std::array<std::string_view, 3> kTurnWords = {"left", "right", "around"};

template <std::size_t N>
std::optional<int> lookup(const std::array<std::string_view, N>& table, std::string_view s) {
  for (std::size_t i = 0; i < N; ++i)
    if (table[i] == s) return static_cast<int>(i);
  return std::nullopt;
}

void collect_words(const ParseNode& n, const Vocabulary& v, std::vector<std::string>& out) {
  if (n.symbol.terminal) {
    out.push_back(v.token(n.symbol.id));
    return;
  }
  for (const auto& c : n.children) collect_words(c, v, out);
}

std::string yield(const Grammar& g, const ParseNode& n) {
  std::vector<std::string> w;
  collect_words(n, g.vocab(), w);
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (i) s += ' ';
    s += w[i];
  }
  return s;
}

const ParseNode* find_named(const Grammar& g, const ParseNode& n, std::string_view name) {
  if (n.symbol.terminal) return nullptr;
  if (g.nonterminal_name(n.symbol.id) == name) return &n;
  for (const auto& c : n.children)
    if (auto* f = find_named(g, c, name)) return f;
  return nullptr;
}

struct BadSemantics {};

const ParseNode& need(const Grammar& g, const ParseNode& n, std::string_view name) {
  auto* f = find_named(g, n, name);
  if (!f) throw BadSemantics{};
  return *f;
}

template <std::size_t N>
int need_word(const std::array<std::string_view, N>& table, std::string_view s) {
  auto v = lookup(table, s);
  if (!v) throw BadSemantics{};
  return *v;
}

LandmarkDesc read_landmark_node(const Grammar& g, const ParseNode& n) {
  LandmarkDesc d;
  d.color = static_cast<LandmarkColor>(need_word(kLmColors, yield(g, need(g, n, "lmcolor"))));
  d.type = static_cast<LandmarkType>(need_word(kLmTypes, yield(g, need(g, n, "lmtype"))));
  return d;
}

Clause read_clause(const Grammar& g, const ParseNode& n) {
  const std::string& kind = g.nonterminal_name(n.symbol.id);
  if (kind == "wait") return WaitClause{need_word(kWaitPhrases, yield(g, n))};
  if (kind == "turn")
    return TurnClause{static_cast<TurnDir>(need_word(kTurnWords, yield(g, need(g, n, "direction"))))};
  if (kind == "goto") return GotoClause{read_landmark_node(g, need(g, n, "landmark"))};
  if (kind == "walk") {
    const auto& steps = need(g, n, "steps");
    if (auto* num = find_named(g, steps, "number")) return WalkClause{need_word(kNumbers, yield(g, *num))};
    return WalkClause{1};
  }
  if (kind == "fetch") {
    FetchClause f;
    f.verb = need_word(kVerbs, yield(g, need(g, n, "verb")));
    const auto& ref = need(g, n, "cardref");
    f.card.color = static_cast<CardColor>(need_word(kColors, yield(g, need(g, ref, "cardcolor"))));
    if (auto* many = find_named(g, ref, "count_many")) {
      f.card.count = need_word(kNumbers, yield(g, *many));
      f.card.shape = static_cast<CardShape>(need_word(kShapesMany, yield(g, need(g, ref, "shape_many"))));
    } else {
      f.card.count = 1;
      f.card.shape = static_cast<CardShape>(need_word(kShapesOne, yield(g, need(g, ref, "shape_one"))));
    }
    if (auto* loc = find_named(g, n, "locator")) {
      const std::string s = yield(g, *loc);
      if (s == "ahead") f.locator = Locator::Ahead;
      else if (s == "in front of you") f.locator = Locator::InFront;
      else if (s == "on your left") f.locator = Locator::Left;
      else if (s == "on your right") f.locator = Locator::Right;
      else if (s == "behind you") f.locator = Locator::Behind;
      else {
        f.locator = Locator::Near;
        f.near = read_landmark_node(g, need(g, *loc, "landmark"));
      }
    }
    return f;
  }
  throw BadSemantics{};
}

void read_clauses(const Grammar& g, const ParseNode& n, Utterance& u) {
  if (n.symbol.terminal) return;
  const std::string& name = g.nonterminal_name(n.symbol.id);
  if (name == "wait" || name == "turn" || name == "goto" || name == "walk" || name == "fetch") {
    u.clauses.push_back(read_clause(g, n));
    return;
  }
  if (name == "connective") {
    u.connectives.push_back(need_word(kConnectives, yield(g, n)));
    return;
  }
  for (const auto& c : n.children) read_clauses(g, c, u);
}

void emit(const Grammar& g, std::string_view phrase, Instruction& x) {
  std::istringstream in{std::string(phrase)};
  std::string w;
  while (in >> w) {
    if (!g.vocab().contains(w)) throw GrammarError("grammar lacks the word '" + w + "'");
    x.tokens.push_back(g.vocab().id(w));
  }
}

std::string landmark_phrase(const LandmarkDesc& d) {
  return "the " + std::string(kLmColors[static_cast<int>(d.color)]) + " " +
         std::string(kLmTypes[static_cast<int>(d.type)]);
}

}  // namespace

std::optional<Utterance> read_utterance(const Grammar& g, const Instruction& x) {
  auto tree = g.parse_tree(x.tokens);
  if (!tree) return std::nullopt;
  Utterance u;
  try {
    read_clauses(g, *tree, u);
  } catch (const BadSemantics&) {
    return std::nullopt;
  }
  if (u.clauses.empty() || u.connectives.size() + 1 != u.clauses.size()) return std::nullopt;
  return u;
}

std::string card_phrase(const CardDesc& d) {
  std::string s = "the " + std::string(kNumbers[d.count]) + " " +
                  std::string(kColors[static_cast<int>(d.color)]) + " ";
  s += d.count == 1 ? kShapesOne[static_cast<int>(d.shape)] : kShapesMany[static_cast<int>(d.shape)];
  return s;
}

Instruction render(const Grammar& g, const Utterance& u) {
  if (u.clauses.empty() || u.connectives.size() + 1 != u.clauses.size())
    throw std::invalid_argument("utterance needs one connective between each pair of clauses");
  Instruction x;
  for (std::size_t i = 0; i < u.clauses.size(); ++i) {
    if (i) emit(g, kConnectives.at(static_cast<std::size_t>(u.connectives[i - 1])), x);
    std::visit(
        [&](const auto& c) {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, WaitClause>) {
            emit(g, kWaitPhrases.at(static_cast<std::size_t>(c.phrase)), x);
          } else if constexpr (std::is_same_v<T, TurnClause>) {
            emit(g, "turn", x);
            emit(g, kTurnWords[static_cast<int>(c.dir)], x);
          } else if constexpr (std::is_same_v<T, GotoClause>) {
            emit(g, "go toward " + landmark_phrase(c.landmark), x);
          } else if constexpr (std::is_same_v<T, WalkClause>) {
            if (c.steps < 1 || c.steps > 9) throw std::invalid_argument("walk steps must be 1..9");
            emit(g, c.steps == 1 ? std::string("go forward one step")
                                 : "go forward " + std::string(kNumbers[c.steps]) + " steps",
                 x);
          } else {
            emit(g, kVerbs.at(static_cast<std::size_t>(c.verb)), x);
            emit(g, card_phrase(c.card), x);
            switch (c.locator) {
              case Locator::None: break;
              case Locator::Ahead: emit(g, "ahead", x); break;
              case Locator::InFront: emit(g, "in front of you", x); break;
              case Locator::Left: emit(g, "on your left", x); break;
              case Locator::Right: emit(g, "on your right", x); break;
              case Locator::Behind: emit(g, "behind you", x); break;
              case Locator::Near:
                if (!c.near) throw std::invalid_argument("near locator without a landmark");
                emit(g, "near " + landmark_phrase(*c.near), x);
                break;
            }
          }
        },
        u.clauses[i]);
  }
  return x;
}

std::string_view failure_name(Failure f) {
  switch (f) {
    case Failure::None: return "none";
    case Failure::Ungrammatical: return "ungrammatical";
    case Failure::UnresolvableReferent: return "unresolvable_referent";
    case Failure::Contradictory: return "contradictory";
    case Failure::Blocked: return "blocked";
    case Failure::OutOfMoves: return "out_of_moves";
  }
  return "unknown";
}

// ---- interpreter --------------------------------------------------------------------

Interpreter::Interpreter(const WorldState& state, Perturbation& noise)
    : state_(state.turn() == Agent::Follower ? state : hexworld::as_follower_turn(state)),
      noise_(&noise) {
  poses_.push_back(state_.pose(Agent::Follower));
}

Failure Interpreter::act(Action intended) {
  if (state_.moves_left() <= 0) return Failure::OutOfMoves;
  Action a = intended;
  if (noise_->replace_action()) {
    std::vector<Action> legal;
    for (auto b : hexworld::kAllActions)
      if (state_.is_legal(Agent::Follower, b)) legal.push_back(b);
    a = noise_->pick_random(legal);
  }
  if (!state_.step(Agent::Follower, a)) return Failure::Blocked;
  poses_.push_back(state_.pose(Agent::Follower));
  return Failure::None;
}

Failure Interpreter::rotate(TurnDir dir) {
  const int n = dir == TurnDir::Around ? 3 : 1;
  const Action a = dir == TurnDir::Right ? Action::TurnRight : Action::TurnLeft;
  for (int i = 0; i < n; ++i)
    if (auto f = act(a); f != Failure::None) return f;
  return Failure::None;
}

Failure Interpreter::walk_to(Cell target, bool enter) {
  for (;;) {
    const Pose here = state_.pose(Agent::Follower);
    if (!enter && here.cell() == target) return Failure::None;
    std::vector<Cell> blocked;
    for (const auto& c : state_.cards())
      if (!(enter && c.cell == target)) blocked.push_back(c.cell);
    std::vector<Pose> path;
    try {
      path = planner::shortest_path(state_, here, {target}, {blocked, enter});
    } catch (const planner::UnreachableTarget&) {
      return Failure::Blocked;
    }
    if (path.size() < 2) return Failure::None;
    const auto a = hexworld::action_between(path[0], path[1]);
    if (auto f = act(*a); f != Failure::None) return f;
    const Pose now = state_.pose(Agent::Follower);
    if (enter && now.cell() == target && here.cell() != target) return Failure::None;
  }
}

namespace {

template <typename Match>
std::optional<Cell> nearest_visible(const WorldState& s, Match&& match) {
  const Pose p = s.pose(Agent::Follower);
  const auto obs = hexworld::view_from(s, p);
  std::optional<Cell> best;
  int best_d = 0;
  for (const auto& oc : obs.cells) {  // cell order breaks distance ties
    if (!match(oc)) continue;
    const int d = hexworld::hex_distance(p.cell(), oc.cell);
    if (!best || d < best_d) {
      best = oc.cell;
      best_d = d;
    }
  }
  return best;
}

}  // namespace

std::optional<Cell> Interpreter::find_card(const CardDesc& d) const {
  return nearest_visible(state_, [&](const hexworld::ObservedCell& oc) {
    return oc.card && d.matches(*oc.card);
  });
}

std::optional<Cell> Interpreter::find_landmark(const LandmarkDesc& d) const {
  return nearest_visible(state_, [&](const hexworld::ObservedCell& oc) {
    return oc.landmark && d.matches(*oc.landmark);
  });
}

template <typename Finder>
std::optional<Cell> Interpreter::resolve(Finder&& finder, bool& explored, Failure& failure) {
  if (auto c = finder()) return c;
  failure = Failure::UnresolvableReferent;
  if (!noise_->explore()) return std::nullopt;
  for (int i = 0; i < kExploreTurns; ++i) {
    if (auto f = act(Action::TurnLeft); f != Failure::None) {
      failure = f;
      return std::nullopt;
    }
    if (auto c = finder()) {
      explored = true;
      explored_ = true;
      failure = Failure::None;
      return c;
    }
  }
  return std::nullopt;
}

Failure Interpreter::run(const Clause& clause) {
  ResolvedClause rc{clause, std::nullopt, false};
  Failure failure = Failure::None;
  if (std::holds_alternative<WaitClause>(clause)) {
    // nothing to do
  } else if (auto* t = std::get_if<TurnClause>(&clause)) {
    failure = rotate(t->dir);
  } else if (auto* w = std::get_if<WalkClause>(&clause)) {
    for (int i = 0; i < w->steps && failure == Failure::None; ++i) failure = act(Action::Forward);
  } else if (auto* g = std::get_if<GotoClause>(&clause)) {
    const LandmarkDesc d = noise_->read_landmark(g->landmark);
    auto cell = resolve([&] { return find_landmark(d); }, rc.explored, failure);
    if (cell) {
      rc.referent = cell;
      const Pose here = state_.pose(Agent::Follower);
      std::vector<Cell> blocked;
      for (const auto& c : state_.cards()) blocked.push_back(c.cell);
      std::optional<Cell> best;
      std::size_t best_len = 0;
      for (int dir = 0; dir < hexworld::kDirections; ++dir) {
        const Cell n = hexworld::neighbor(*cell, dir);
        if (!state_.passable(n) || state_.has_card(n)) continue;
        try {
          auto path = planner::shortest_path(state_, here, {n}, {blocked, false});
          if (!best || path.size() < best_len || (path.size() == best_len && n < *best)) {
            best = n;
            best_len = path.size();
          }
        } catch (const planner::UnreachableTarget&) {
        }
      }
      failure = best ? walk_to(*best, false) : Failure::Blocked;
    }
  } else {
    const auto& f = std::get<FetchClause>(clause);
    if (f.locator == Locator::Left) failure = rotate(TurnDir::Left);
    else if (f.locator == Locator::Right) failure = rotate(TurnDir::Right);
    else if (f.locator == Locator::Behind) failure = rotate(TurnDir::Around);
    if (failure == Failure::None) {
      const CardDesc d = noise_->read_card(f.card);
      auto cell = resolve([&] { return find_card(d); }, rc.explored, failure);
      if (cell) {
        rc.referent = cell;
        if (f.locator == Locator::Near) {
          const LandmarkDesc near = noise_->read_landmark(*f.near);
          bool ok = false;
          for (int dir = 0; dir < hexworld::kDirections && !ok; ++dir) {
            auto lm = state_.landmark_at(hexworld::neighbor(*cell, dir));
            ok = lm && near.matches(*lm);
          }
          if (!ok) failure = Failure::Contradictory;
        }
        if (failure == Failure::None &&
            std::find(fetched_.begin(), fetched_.end(), *cell) != fetched_.end())
          failure = Failure::Contradictory;
        if (failure == Failure::None) {
          failure = walk_to(*cell, true);
          fetched_.push_back(*cell);
        }
      }
    }
  }
  resolved_.push_back(std::move(rc));
  return failure;
}

// ---- whole instructions ---------------------------------------------------------------

namespace {

bool structurally_contradictory(const Utterance& u) {
  if (u.clauses.size() < 2) return false;
  return std::any_of(u.clauses.begin(), u.clauses.end(),
                     [](const Clause& c) { return std::holds_alternative<WaitClause>(c); });
}

}  // namespace

ExecutionTrace execute_instruction(const Grammar& g, const WorldState& state, const Instruction& x,
                                   Perturbation& noise) {
  Interpreter interp(state, noise);
  ExecutionTrace trace{interp.poses(), interp.state(), false, Failure::None, false, {}};
  auto u = read_utterance(g, x);
  if (!u) {
    trace.failure = Failure::Ungrammatical;
    return trace;
  }
  if (structurally_contradictory(*u)) {
    trace.failure = Failure::Contradictory;
    return trace;
  }
  for (const auto& c : u->clauses) {
    trace.failure = interp.run(c);
    if (trace.failure != Failure::None) break;
  }
  trace.poses = interp.poses();
  trace.final_state = interp.state();
  trace.completed = trace.failure == Failure::None;
  trace.explored = interp.explored();
  trace.intent.clauses = interp.resolved();
  return trace;
}

ParseResult parse(const Grammar& g, const WorldState& state, const Instruction& x) {
  Perturbation literal;
  auto trace = execute_instruction(g, state, x, literal);
  ParseResult r;
  r.failure = trace.failure;
  if (trace.completed) r.intent = std::move(trace.intent);
  return r;
}

std::vector<Cell> toggled_cells(const WorldState& state, const std::vector<Pose>& poses) {
  WorldState s = hexworld::as_follower_turn(state);
  s.set_moves_left(static_cast<int>(poses.size()) + 1);
  std::vector<Cell> odd;
  for (std::size_t i = 1; i < poses.size(); ++i) {
    const Cell c = poses[i].cell();
    // Test for a card before stepping, since completing a set respawns cards.
    const bool card_here = c != poses[i - 1].cell() && s.has_card(c);
    auto a = hexworld::action_between(poses[i - 1], poses[i]);
    if (!a || !s.step(Agent::Follower, *a))
      throw std::invalid_argument("pose sequence cannot be replayed from this state");
    if (!card_here) continue;
    auto it = std::find(odd.begin(), odd.end(), c);
    if (it == odd.end()) odd.push_back(c);
    else odd.erase(it);
  }
  std::sort(odd.begin(), odd.end());
  return odd;
}

// ---- verbalizer -----------------------------------------------------------------------

namespace {

struct Style {
  Rng rng;
  bool compact = false;

  int pick(int n) { return compact ? 0 : uniform_int(rng, 0, n - 1); }
  bool chance(double p) { return !compact && bernoulli(rng, p); }
};

LandmarkDesc describe(const hexworld::Landmark& l) { return {l.color, l.type}; }

CardDesc describe(const hexworld::CardProps& p) { return {p.count, p.color, p.shape}; }

const double kEps = 1e-9;

bool visible(const WorldState& s, const Pose& p, Cell c) {
  return hexworld::in_view_cone(p, c, s.config().view_depth, s.config().view_half_angle_deg + kEps);
}

Pose turned(Pose p, TurnDir d) {
  const int steps = d == TurnDir::Left ? 1 : d == TurnDir::Right ? -1 : 3;
  p.alpha = hexworld::wrap_direction(p.alpha + steps);
  return p;
}

std::vector<Cell> toggled_since(const WorldState& origin, const Interpreter& it) {
  return toggled_cells(origin, it.poses());
}

// Fetch phrasing for a card from the interpreter's current pose. Runs the
// clauses on `it` and reports whether the target was the one entered.
std::optional<std::vector<Clause>> try_direct(Interpreter& it, Cell target, Style& style) {
  const WorldState& s = it.state();
  const auto ci = s.card_index_at(target);
  if (!ci) return std::nullopt;
  const Pose p = s.pose(Agent::Follower);
  std::optional<TurnDir> rot;
  bool found = visible(s, p, target);
  for (TurnDir d : {TurnDir::Left, TurnDir::Right, TurnDir::Around}) {
    if (found) break;
    if (visible(s, turned(p, d), target)) {
      rot = d;
      found = true;
    }
  }
  if (!found) return std::nullopt;

  FetchClause f;
  f.verb = style.pick(static_cast<int>(kVerbs.size()));
  f.card = describe(s.cards()[*ci].props);
  std::vector<Clause> out;
  if (!rot) {
    f.locator = std::array{Locator::None, Locator::Ahead, Locator::InFront}[style.pick(3)];
  } else if (style.chance(0.5)) {
    out.push_back(TurnClause{*rot});
  } else {
    f.locator = *rot == TurnDir::Left ? Locator::Left
                : *rot == TurnDir::Right ? Locator::Right
                                         : Locator::Behind;
  }
  if ((f.locator == Locator::None || !out.empty()) && style.chance(0.3)) {
    for (int dir = 0; dir < hexworld::kDirections; ++dir)
      if (auto lm = s.landmark_at(hexworld::neighbor(target, dir))) {
        f.locator = Locator::Near;
        f.near = describe(*lm);
        break;
      }
  }
  out.push_back(f);
  for (const auto& c : out)
    if (it.run(c) != Failure::None) return std::nullopt;
  const auto& last = it.resolved().back();
  if (last.referent != target) return std::nullopt;
  return out;
}

int direction_to(Cell from, Cell to) {
  for (int d = 0; d < hexworld::kDirections; ++d)
    if (hexworld::neighbor(from, d) == to) return d;
  return -1;
}

// Turn/walk segments along the shortest path until the target comes into view.
std::optional<std::vector<Clause>> route_towards(Interpreter& it, Cell target) {
  std::vector<Clause> out;
  for (int guard = 0; guard < 64; ++guard) {
    const WorldState& s = it.state();
    const Pose p = s.pose(Agent::Follower);
    bool near_enough = visible(s, p, target);
    for (TurnDir d : {TurnDir::Left, TurnDir::Right, TurnDir::Around})
      near_enough = near_enough || visible(s, turned(p, d), target);
    if (near_enough) return out;
    std::vector<Cell> blocked;
    for (const auto& c : s.cards())
      if (c.cell != target) blocked.push_back(c.cell);
    std::vector<Pose> path;
    try {
      path = planner::shortest_path(s, p, {target}, {blocked, true});
    } catch (const planner::UnreachableTarget&) {
      return std::nullopt;
    }
    std::vector<Cell> cells;
    for (const auto& q : path)
      if (cells.empty() || cells.back() != q.cell()) cells.push_back(q.cell());
    if (cells.size() < 2) return std::nullopt;
    const int dir = direction_to(cells[0], cells[1]);
    const int delta = hexworld::wrap_direction(dir - p.alpha);
    std::vector<Clause> seg;
    if (delta == 0) {
      int n = 0;
      while (n + 1 < static_cast<int>(cells.size()) - 1 && n < 9 &&
             direction_to(cells[n], cells[n + 1]) == dir)
        ++n;
      if (n == 0) return std::nullopt;
      seg.push_back(WalkClause{n});
    } else if (delta == 1) {
      seg.push_back(TurnClause{TurnDir::Left});
    } else if (delta == 5) {
      seg.push_back(TurnClause{TurnDir::Right});
    } else if (delta == 3) {
      seg.push_back(TurnClause{TurnDir::Around});
    } else if (delta == 2) {
      seg = {TurnClause{TurnDir::Left}, TurnClause{TurnDir::Left}};
    } else {
      seg = {TurnClause{TurnDir::Right}, TurnClause{TurnDir::Right}};
    }
    for (const auto& c : seg) {
      if (it.run(c) != Failure::None) return std::nullopt;
      out.push_back(c);
    }
  }
  return std::nullopt;
}

std::optional<std::vector<Clause>> via_landmark(Interpreter& it, Cell target, Style& style) {
  const WorldState& s = it.state();
  const Pose p = s.pose(Agent::Follower);
  auto lms = s.landmark_cells();
  std::stable_sort(lms.begin(), lms.end(), [&](Cell a, Cell b) {
    return hexworld::hex_distance(a, target) < hexworld::hex_distance(b, target);
  });
  if (lms.size() > 6) lms.resize(6);
  for (Cell l : lms) {
    std::optional<TurnDir> rot;
    bool found = visible(s, p, l);
    for (TurnDir d : {TurnDir::Left, TurnDir::Right, TurnDir::Around}) {
      if (found) break;
      if (visible(s, turned(p, d), l)) {
        rot = d;
        found = true;
      }
    }
    if (!found) continue;
    Interpreter trial = it;
    std::vector<Clause> out;
    if (rot) out.push_back(TurnClause{*rot});
    out.push_back(GotoClause{describe(*s.landmark_at(l))});
    bool ok = true;
    for (const auto& c : out) ok = ok && trial.run(c) == Failure::None;
    if (!ok || trial.resolved().back().referent != l) continue;
    if (auto rest = try_direct(trial, target, style)) {
      out.insert(out.end(), rest->begin(), rest->end());
      it = trial;
      return out;
    }
  }
  return std::nullopt;
}

std::optional<Instruction> verbalize_with(const Grammar& g, const WorldState& start,
                                          const planner::Plan& plan, Style style) {
  Utterance u;
  if (plan.target_cards.empty()) {
    u.clauses.push_back(WaitClause{style.pick(static_cast<int>(kWaitPhrases.size()))});
    return render(g, u);
  }
  Perturbation literal;
  Interpreter it(start, literal);
  std::vector<Cell> done;
  for (Cell target : plan.target_cards) {
    done.push_back(target);
    std::sort(done.begin(), done.end());
    auto accept = [&](Interpreter& trial) { return toggled_since(start, trial) == done; };

    std::optional<std::vector<Clause>> chosen;
    {
      Interpreter trial = it;
      auto c = try_direct(trial, target, style);
      if (c && accept(trial)) {
        chosen = c;
        it = trial;
      }
    }
    if (!chosen) {
      Interpreter trial = it;
      auto c = via_landmark(trial, target, style);
      if (c && accept(trial)) {
        chosen = c;
        it = trial;
      }
    }
    if (!chosen) {
      Interpreter trial = it;
      auto c = route_towards(trial, target);
      if (c) {
        Style plain{Rng(0), true};
        auto rest = try_direct(trial, target, plain);
        if (rest && accept(trial)) {
          c->insert(c->end(), rest->begin(), rest->end());
          chosen = c;
          it = trial;
        }
      }
    }
    if (!chosen) return std::nullopt;
    for (auto& c : *chosen) {
      if (!u.clauses.empty()) {
        const bool after_turn = std::holds_alternative<TurnClause>(u.clauses.back());
        u.connectives.push_back(after_turn ? 0 : style.pick(4));
      }
      u.clauses.push_back(std::move(c));
    }
  }
  return render(g, u);
}

}  // namespace

Instruction verbalize(const Grammar& g, const WorldState& state, const planner::Plan& plan,
                      std::uint64_t style_seed) {
  const WorldState start = hexworld::as_follower_turn(state);
  if (start.pose(Agent::Follower) != plan.start)
    throw std::invalid_argument("plan does not start at the follower's pose");
  auto x = verbalize_with(g, start, plan, Style{Rng(style_seed), false});
  if (x && static_cast<int>(x->tokens.size()) <= kMaxInstructionTokens) return *x;
  auto compact = verbalize_with(g, start, plan, Style{Rng(style_seed), true});
  if (compact) return *compact;
  if (x) return *x;
  throw std::runtime_error("no instruction realizes this plan");
}

}  // namespace hexbandit::synthlang
