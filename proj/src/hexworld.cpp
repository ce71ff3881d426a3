#include "hexbandit/hexworld.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>
#include <sstream>

namespace hexbandit::hexworld {

namespace {

constexpr std::array<Axial, kDirections> kDirectionOffsets = {
    Axial{1, 0}, Axial{1, -1}, Axial{0, -1}, Axial{-1, 0}, Axial{-1, 1}, Axial{0, 1}};

constexpr std::array<std::string_view, 4> kActionNames = {"forward", "back", "left", "right"};
constexpr std::array<std::string_view, kCardColorCount> kColorNames = {
    "red", "green", "orange", "black", "blue", "yellow"};
constexpr std::array<std::string_view, kCardShapeCount> kShapeNames = {
    "plus", "heart", "diamond", "triangle", "star", "square"};
constexpr std::array<std::string_view, kLandmarkTypeCount> kLandmarkTypeNames = {
    "house", "tree", "pond", "mountain", "windmill", "tower"};
constexpr std::array<std::string_view, kLandmarkColorCount> kLandmarkColorNames = {
    "pink", "blue", "yellow", "white"};

std::int16_t landmark_code(const Landmark& l) {
  return static_cast<std::int16_t>(1 + static_cast<int>(l.type) * kLandmarkColorCount +
                                   static_cast<int>(l.color));
}

Landmark landmark_from_code(std::int16_t code) {
  const int v = code - 1;
  return {static_cast<LandmarkType>(v / kLandmarkColorCount),
          static_cast<LandmarkColor>(v % kLandmarkColorCount)};
}

// Number of passable cells reachable from the first passable cell.
bool passable_connected(const std::vector<std::int16_t>& terrain, int height, int width) {
  const auto total = static_cast<int>(std::count(terrain.begin(), terrain.end(), 0));
  if (total == 0) return true;
  std::vector<char> seen(terrain.size(), 0);
  auto idx = [&](Cell c) { return static_cast<std::size_t>(c.h) * width + c.w; };
  Cell start{};
  for (int i = 0; i < static_cast<int>(terrain.size()); ++i) {
    if (terrain[i] == 0) {
      start = {i / width, i % width};
      break;
    }
  }
  std::queue<Cell> q;
  q.push(start);
  seen[idx(start)] = 1;
  int reached = 1;
  while (!q.empty()) {
    Cell c = q.front();
    q.pop();
    for (int d = 0; d < kDirections; ++d) {
      Cell n = neighbor(c, d);
      if (n.h < 0 || n.w < 0 || n.h >= height || n.w >= width) continue;
      if (terrain[idx(n)] != 0 || seen[idx(n)]) continue;
      seen[idx(n)] = 1;
      ++reached;
      q.push(n);
    }
  }
  return reached == total;
}

}  // namespace

std::string_view action_name(Action a) { return kActionNames[static_cast<int>(a)]; }

std::optional<Action> action_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kActionNames.size(); ++i)
    if (kActionNames[i] == name) return static_cast<Action>(i);
  return std::nullopt;
}

std::string_view agent_name(Agent a) { return a == Agent::Leader ? "leader" : "follower"; }
std::string_view color_name(CardColor c) { return kColorNames[static_cast<int>(c)]; }
std::string_view shape_name(CardShape s) { return kShapeNames[static_cast<int>(s)]; }
std::string_view landmark_type_name(LandmarkType t) {
  return kLandmarkTypeNames[static_cast<int>(t)];
}
std::string_view landmark_color_name(LandmarkColor c) {
  return kLandmarkColorNames[static_cast<int>(c)];
}

bool is_valid_set(const CardProps& a, const CardProps& b, const CardProps& c) {
  auto distinct = [](auto x, auto y, auto z) { return x != y && y != z && x != z; };
  return distinct(a.count, b.count, c.count) && distinct(a.color, b.color, c.color) &&
         distinct(a.shape, b.shape, c.shape);
}

// ---- geometry ---------------------------------------------------------------

Axial to_axial(Cell c) { return {c.w - (c.h - (c.h & 1)) / 2, c.h}; }

Cell from_axial(Axial a) { return {a.r, a.q + (a.r - (a.r & 1)) / 2}; }

int wrap_direction(int alpha) { return ((alpha % kDirections) + kDirections) % kDirections; }

Axial direction_offset(int alpha) { return kDirectionOffsets[wrap_direction(alpha)]; }

Axial rotate(Axial a, int steps) {
  for (int i = 0; i < wrap_direction(steps); ++i) a = {a.q + a.r, -a.q};
  return a;
}

int axial_length(Axial a) { return (std::abs(a.q) + std::abs(a.r) + std::abs(a.q + a.r)) / 2; }

Cell neighbor(Cell c, int alpha) {
  Axial a = to_axial(c);
  Axial d = direction_offset(alpha);
  return from_axial({a.q + d.q, a.r + d.r});
}

int hex_distance(Cell a, Cell b) {
  Axial x = to_axial(a), y = to_axial(b);
  return axial_length({x.q - y.q, x.r - y.r});
}

namespace {
std::array<double, 2> axial_xy(Axial a) {
  return {a.q + 0.5 * a.r, -a.r * std::numbers::sqrt3 / 2.0};
}
}  // namespace

std::array<double, 2> cell_center(Cell c) { return axial_xy(to_axial(c)); }

double bearing_deg(const Pose& from, Cell to) {
  if (from.cell() == to) return 0.0;
  auto f = axial_xy(direction_offset(from.alpha));
  auto p = cell_center(from.cell());
  auto t = cell_center(to);
  const double tx = t[0] - p[0], ty = t[1] - p[1];
  const double cross = f[0] * ty - f[1] * tx;
  const double dot = f[0] * tx + f[1] * ty;
  double deg = std::atan2(cross, dot) * 180.0 / std::numbers::pi;
  if (deg <= -180.0 + 1e-9) deg = 180.0;
  return deg;
}

// ---- properties -------------------------------------------------------------

bool PropertySet::has(int p) const {
  for (std::uint8_t i = 0; i < size; ++i)
    if (idx[i] == p) return true;
  return false;
}

bool PropertySet::operator==(const PropertySet& o) const {
  return size == o.size && std::equal(idx.begin(), idx.begin() + size, o.idx.begin());
}

PropertySet cell_properties(const WorldState& s, Cell c) {
  PropertySet ps;
  if (!s.in_bounds(c)) {
    ps.add(prop::kPad);
    return ps;
  }
  if (auto lm = s.landmark_at(c)) {
    ps.add(prop::kLandmarkType + static_cast<int>(lm->type));
    ps.add(prop::kLandmarkColor + static_cast<int>(lm->color));
  } else {
    ps.add(prop::kGround);
  }
  if (auto ci = s.card_index_at(c)) {
    const CardProps& cp = s.cards()[*ci].props;
    ps.add(prop::kCard);
    ps.add(prop::kCount + cp.count - 1);
    ps.add(prop::kCardColor + static_cast<int>(cp.color));
    ps.add(prop::kShape + static_cast<int>(cp.shape));
    if (cp.selected) ps.add(prop::kSelected);
  }
  if (s.pose(Agent::Leader).cell() == c) ps.add(prop::kLeader);
  if (s.pose(Agent::Follower).cell() == c) ps.add(prop::kFollower);
  return ps;
}

std::vector<std::uint8_t> state_tensor(const WorldState& s) {
  std::vector<std::uint8_t> t(static_cast<std::size_t>(s.height()) * s.width() *
                                  prop::kNumProperties,
                              0);
  for (int h = 0; h < s.height(); ++h)
    for (int w = 0; w < s.width(); ++w) {
      auto ps = cell_properties(s, {h, w});
      for (std::uint8_t i = 0; i < ps.size; ++i)
        t[(static_cast<std::size_t>(h) * s.width() + w) * prop::kNumProperties + ps.idx[i]] = 1;
    }
  return t;
}

// ---- world ------------------------------------------------------------------

std::optional<Landmark> WorldState::landmark_at(Cell c) const {
  if (!in_bounds(c)) return std::nullopt;
  const auto code = terrain_[index(c)];
  if (code == 0) return std::nullopt;
  return landmark_from_code(code);
}

std::vector<Cell> WorldState::landmark_cells() const {
  std::vector<Cell> out;
  for (int h = 0; h < height(); ++h)
    for (int w = 0; w < width(); ++w)
      if (terrain_[index({h, w})] != 0) out.push_back({h, w});
  return out;
}

std::optional<std::size_t> WorldState::card_index_at(Cell c) const {
  auto it = std::lower_bound(cards_.begin(), cards_.end(), c,
                             [](const Card& card, Cell cell) { return card.cell < cell; });
  if (it != cards_.end() && it->cell == c) return static_cast<std::size_t>(it - cards_.begin());
  return std::nullopt;
}

int WorldState::selected_count() const {
  return static_cast<int>(
      std::count_if(cards_.begin(), cards_.end(), [](const Card& c) { return c.props.selected; }));
}

Pose next_pose(const Pose& p, Action a) {
  switch (a) {
    case Action::Forward: {
      Cell n = neighbor(p.cell(), p.alpha);
      return {n.h, n.w, p.alpha};
    }
    case Action::Back: {
      Cell n = neighbor(p.cell(), p.alpha + 3);
      return {n.h, n.w, p.alpha};
    }
    case Action::TurnLeft:
      return {p.h, p.w, wrap_direction(p.alpha + 1)};
    case Action::TurnRight:
      return {p.h, p.w, wrap_direction(p.alpha - 1)};
  }
  return p;
}

std::optional<Action> action_between(const Pose& from, const Pose& to) {
  for (Action a : kAllActions)
    if (next_pose(from, a) == to) return a;
  return std::nullopt;
}

bool WorldState::is_legal(Agent agent, Action action) const {
  if (agent != turn_ || moves_left_ <= 0) return false;
  if (action == Action::TurnLeft || action == Action::TurnRight) return true;
  return passable(next_pose(pose(agent), action).cell());
}

bool WorldState::step(Agent agent, Action action) {
  if (!is_legal(agent, action)) return false;
  const Pose before = pose(agent);
  const Pose after = next_pose(before, action);
  set_pose(agent, after);
  --moves_left_;
  if (after.cell() == before.cell()) return true;
  auto ci = card_index_at(after.cell());
  if (!ci) return true;
  cards_[*ci].props.selected = !cards_[*ci].props.selected;
  std::vector<const Card*> sel;
  for (const auto& c : cards_)
    if (c.props.selected) sel.push_back(&c);
  if (sel.size() == 3 && is_valid_set(sel[0]->props, sel[1]->props, sel[2]->props)) {
    ++score_;
    respawn_cards();
  }
  return true;
}

void WorldState::end_turn() {
  turn_ = turn_ == Agent::Leader ? Agent::Follower : Agent::Leader;
  moves_left_ = turn_ == Agent::Leader ? config_.leader_moves : config_.follower_moves;
  ++turns_taken_;
}

void WorldState::respawn_cards() {
  const int n_counts = 3;
  const int nc = config_.num_colors, ns = config_.num_shapes;
  auto combo = [&](int count, int color, int shape) {
    return CardProps{count, static_cast<CardColor>(color), static_cast<CardShape>(shape), false};
  };
  // Seed with one random valid triple so a set is always available.
  std::array<int, 3> counts = {1, 2, 3};
  std::vector<int> colors(nc), shapes(ns);
  for (int i = 0; i < nc; ++i) colors[i] = i;
  for (int i = 0; i < ns; ++i) shapes[i] = i;
  std::shuffle(counts.begin(), counts.end(), rng_);
  std::shuffle(colors.begin(), colors.end(), rng_);
  std::shuffle(shapes.begin(), shapes.end(), rng_);
  std::vector<CardProps> props;
  for (int i = 0; i < 3; ++i) props.push_back(combo(counts[i], colors[i], shapes[i]));
  std::vector<CardProps> rest;
  for (int k = 1; k <= n_counts; ++k)
    for (int c = 0; c < nc; ++c)
      for (int s = 0; s < ns; ++s) {
        CardProps p = combo(k, c, s);
        if (std::none_of(props.begin(), props.end(), [&](const CardProps& q) { return q.same_kind(p); }))
          rest.push_back(p);
      }
  std::shuffle(rest.begin(), rest.end(), rng_);
  for (int i = 0; props.size() < static_cast<std::size_t>(config_.num_cards); ++i)
    props.push_back(rest[i]);

  std::vector<Cell> free;
  for (int h = 0; h < height(); ++h)
    for (int w = 0; w < width(); ++w) {
      Cell c{h, w};
      if (passable(c) && c != leader_.cell() && c != follower_.cell()) free.push_back(c);
    }
  std::shuffle(free.begin(), free.end(), rng_);
  cards_.clear();
  for (std::size_t i = 0; i < props.size(); ++i) cards_.push_back({free[i], props[i]});
  std::sort(cards_.begin(), cards_.end(),
            [](const Card& a, const Card& b) { return a.cell < b.cell; });
}

bool WorldState::operator==(const WorldState& o) const {
  return config_ == o.config_ && terrain_ == o.terrain_ && cards_ == o.cards_ &&
         leader_ == o.leader_ && follower_ == o.follower_ && score_ == o.score_ &&
         turn_ == o.turn_ && moves_left_ == o.moves_left_ && turns_taken_ == o.turns_taken_ &&
         rng_ == o.rng_;
}

WorldState new_world(std::uint64_t seed, const WorldConfig& config) {
  if (config.height < 6 || config.width < 6)
    throw WorldConfigError("world dimensions must be at least 6x6");
  if (config.num_cards < 9) throw WorldConfigError("at least 9 cards are required");
  if (config.num_colors < 3 || config.num_colors > kCardColorCount || config.num_shapes < 3 ||
      config.num_shapes > kCardShapeCount)
    throw WorldConfigError("card colors and shapes must each number between 3 and 6");
  if (config.num_cards > 3 * config.num_colors * config.num_shapes)
    throw WorldConfigError("more cards than distinct card kinds");
  if (config.num_landmarks < 0) throw WorldConfigError("negative landmark count");
  const int cells = config.height * config.width;
  if (cells - config.num_landmarks < config.num_cards + 2)
    throw WorldConfigError("too few passable cells for cards and agents");
  if (config.leader_moves < 1 || config.follower_moves < 1)
    throw WorldConfigError("move budgets must be positive");

  WorldState s;
  s.config_ = config;
  s.rng_.seed(seed);
  s.terrain_.assign(static_cast<std::size_t>(cells), 0);

  std::vector<Cell> order;
  for (int h = 0; h < config.height; ++h)
    for (int w = 0; w < config.width; ++w) order.push_back({h, w});
  std::shuffle(order.begin(), order.end(), s.rng_);
  int placed = 0;
  for (Cell c : order) {
    if (placed == config.num_landmarks) break;
    Landmark lm{static_cast<LandmarkType>(uniform_int(s.rng_, 0, kLandmarkTypeCount - 1)),
                static_cast<LandmarkColor>(uniform_int(s.rng_, 0, kLandmarkColorCount - 1))};
    s.terrain_[s.index(c)] = landmark_code(lm);
    if (!passable_connected(s.terrain_, config.height, config.width)) {
      s.terrain_[s.index(c)] = 0;
      continue;
    }
    ++placed;
  }
  std::vector<Cell> free;
  for (int h = 0; h < config.height; ++h)
    for (int w = 0; w < config.width; ++w)
      if (s.passable({h, w})) free.push_back({h, w});
  if (static_cast<int>(free.size()) < config.num_cards + 2)
    throw WorldConfigError("too few passable cells for cards and agents");
  std::shuffle(free.begin(), free.end(), s.rng_);
  s.leader_ = {free[0].h, free[0].w, uniform_int(s.rng_, 0, kDirections - 1)};
  s.follower_ = {free[1].h, free[1].w, uniform_int(s.rng_, 0, kDirections - 1)};
  s.respawn_cards();
  s.turn_ = Agent::Leader;
  s.moves_left_ = config.leader_moves;
  return s;
}

WorldState WorldAccess::build(const WorldLayout& l) {
  const auto& cfg = l.config;
  if (cfg.height < 1 || cfg.width < 1) throw WorldConfigError("world dimensions must be positive");
  WorldState s;
  s.config_ = cfg;
  s.rng_.seed(l.seed);
  s.terrain_.assign(static_cast<std::size_t>(cfg.height) * cfg.width, 0);
  for (const auto& [c, lm] : l.landmarks) {
    if (!s.in_bounds(c)) throw WorldConfigError("landmark outside the board");
    if (s.terrain_[s.index(c)] != 0) throw WorldConfigError("two landmarks on one cell");
    s.terrain_[s.index(c)] = landmark_code(lm);
  }
  for (const auto& card : l.cards) {
    if (!s.passable(card.cell)) throw WorldConfigError("card on an impassable cell");
    if (card.props.count < 1 || card.props.count > 3) throw WorldConfigError("card count must be 1..3");
    s.cards_.push_back(card);
  }
  std::sort(s.cards_.begin(), s.cards_.end(),
            [](const Card& a, const Card& b) { return a.cell < b.cell; });
  for (std::size_t i = 1; i < s.cards_.size(); ++i)
    if (s.cards_[i].cell == s.cards_[i - 1].cell) throw WorldConfigError("two cards on one cell");
  for (const Pose& p : {l.leader, l.follower})
    if (!s.passable(p.cell()) || p.alpha < 0 || p.alpha >= kDirections)
      throw WorldConfigError("agent pose is not on a passable cell");
  s.leader_ = l.leader;
  s.follower_ = l.follower;
  s.score_ = l.score;
  s.turn_ = l.turn;
  s.moves_left_ = l.moves_left >= 0 ? l.moves_left
                                    : (l.turn == Agent::Leader ? cfg.leader_moves : cfg.follower_moves);
  s.turns_taken_ = l.turns_taken;
  return s;
}

WorldLayout WorldAccess::layout(const WorldState& s) {
  WorldLayout l;
  l.config = s.config_;
  for (Cell c : s.landmark_cells()) l.landmarks.emplace_back(c, *s.landmark_at(c));
  l.cards = s.cards_;
  l.leader = s.leader_;
  l.follower = s.follower_;
  l.score = s.score_;
  l.turn = s.turn_;
  l.moves_left = s.moves_left_;
  l.turns_taken = s.turns_taken_;
  return l;
}

std::string WorldAccess::rng_state(const WorldState& s) {
  std::ostringstream out;
  out << s.rng_;
  return out.str();
}

void WorldAccess::set_rng_state(WorldState& s, const std::string& text) {
  std::istringstream in(text);
  in >> s.rng_;
  if (!in) throw std::invalid_argument("malformed generator state");
}

std::optional<WorldState> apply_action(const WorldState& s, Agent agent, Action action) {
  if (!s.is_legal(agent, action)) return std::nullopt;
  WorldState next = s;
  next.step(agent, action);
  return next;
}

WorldState as_follower_turn(const WorldState& s) {
  WorldState t = s;
  if (t.turn() != Agent::Follower) t.end_turn();
  while (t.moves_left() < t.config().follower_moves) {
    t.end_turn();
    t.end_turn();
  }
  return t;
}

// ---- crops ------------------------------------------------------------------

Axial crop_slot_offset(int np, int slot) {
  const int k = (np - 1) / 2;
  return {slot % np - k, slot / np - k};
}

bool crop_slot_in_hex(int np, int slot) {
  return axial_length(crop_slot_offset(np, slot)) <= (np - 1) / 2;
}

Crop rotate_crop(const WorldState& s, const Pose& pose, int np) {
  if (np < 1 || np % 2 == 0) throw std::invalid_argument("crop side must be odd and positive");
  Crop crop;
  crop.np = np;
  crop.cells.resize(static_cast<std::size_t>(np) * np);
  const Axial center = to_axial(pose.cell());
  for (int slot = 0; slot < np * np; ++slot) {
    if (!crop_slot_in_hex(np, slot)) {
      crop.cells[slot].add(prop::kPad);
      continue;
    }
    Axial off = rotate(crop_slot_offset(np, slot), pose.alpha);
    crop.cells[slot] = cell_properties(s, from_axial({center.q + off.q, center.r + off.r}));
  }
  return crop;
}

std::vector<int> crop_rotation_permutation(int np, int steps) {
  const int k = (np - 1) / 2;
  std::vector<int> perm(static_cast<std::size_t>(np) * np);
  for (int slot = 0; slot < np * np; ++slot) {
    if (!crop_slot_in_hex(np, slot)) {
      perm[slot] = slot;
      continue;
    }
    Axial r = rotate(crop_slot_offset(np, slot), steps);
    perm[slot] = (r.r + k) * np + (r.q + k);
  }
  return perm;
}

// ---- observation ------------------------------------------------------------

const ObservedCell* Observation::find(Cell c) const {
  auto it = std::lower_bound(cells.begin(), cells.end(), c,
                             [](const ObservedCell& o, Cell x) { return o.cell < x; });
  return it != cells.end() && it->cell == c ? &*it : nullptr;
}

bool in_view_cone(const Pose& pose, Cell c, int depth, double half_angle_deg) {
  if (c == pose.cell()) return true;
  if (hex_distance(pose.cell(), c) > depth) return false;
  return std::abs(bearing_deg(pose, c)) <= half_angle_deg + 1e-9;
}

Observation view_from(const WorldState& s, const Pose& pose) {
  Observation obs;
  obs.pose = pose;
  const auto& cfg = s.config();
  for (int h = 0; h < s.height(); ++h)
    for (int w = 0; w < s.width(); ++w) {
      Cell c{h, w};
      if (!in_view_cone(pose, c, cfg.view_depth, cfg.view_half_angle_deg)) continue;
      ObservedCell oc;
      oc.cell = c;
      oc.landmark = s.landmark_at(c);
      if (auto ci = s.card_index_at(c)) oc.card = s.cards()[*ci].props;
      oc.leader = s.pose(Agent::Leader).cell() == c;
      obs.cells.push_back(oc);
    }
  return obs;
}

Observation follower_view(const WorldState& s) { return view_from(s, s.pose(Agent::Follower)); }

}  // namespace hexbandit::hexworld
