#pragma once

// Hex-grid card game engine.
//
// Layout: cells are stored in "odd-r" offset order (h = row, w = column, odd rows
// shifted half a cell right) so boards look rectangular. All geometry (neighbors,
// distances, rotations) is computed in axial coordinates (q, r) with
//   q = w - (h - (h & 1)) / 2,   r = h.
//
// Directions are indexed counter-clockwise starting east:
//   0: (+1, 0)  east        3: (-1, 0)  west
//   1: (+1,-1)  north-east  4: (-1,+1)  south-west
//   2: ( 0,-1)  north-west  5: ( 0,+1)  south-east
// A pose orientation alpha faces direction alpha. Turning left adds one
// (counter-clockwise), turning right subtracts one. Rotating an axial offset by
// one step maps direction i onto direction i + 1: (q, r) -> (q + r, -q).

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hexbandit/rng.hpp"

namespace hexbandit::hexworld {

inline constexpr int kDirections = 6;

struct Cell {
  int h = 0;
  int w = 0;
  auto operator<=>(const Cell&) const = default;
};

struct Pose {
  int h = 0;
  int w = 0;
  int alpha = 0;
  Cell cell() const { return {h, w}; }
  auto operator<=>(const Pose&) const = default;
};

struct Axial {
  int q = 0;
  int r = 0;
  auto operator<=>(const Axial&) const = default;
};

enum class Action : std::uint8_t { Forward, Back, TurnLeft, TurnRight };
inline constexpr std::array<Action, 4> kAllActions = {Action::Forward, Action::Back,
                                                      Action::TurnLeft, Action::TurnRight};
std::string_view action_name(Action a);
std::optional<Action> action_from_name(std::string_view name);

enum class Agent : std::uint8_t { Leader, Follower };
std::string_view agent_name(Agent a);

enum class CardColor : std::uint8_t { Red, Green, Orange, Black, Blue, Yellow };
enum class CardShape : std::uint8_t { Plus, Heart, Diamond, Triangle, Star, Square };
enum class LandmarkType : std::uint8_t { House, Tree, Pond, Mountain, Windmill, Tower };
enum class LandmarkColor : std::uint8_t { Pink, Blue, Yellow, White };

inline constexpr int kCardColorCount = 6;
inline constexpr int kCardShapeCount = 6;
inline constexpr int kLandmarkTypeCount = 6;
inline constexpr int kLandmarkColorCount = 4;

std::string_view color_name(CardColor c);
std::string_view shape_name(CardShape s);
std::string_view landmark_type_name(LandmarkType t);
std::string_view landmark_color_name(LandmarkColor c);

struct CardProps {
  int count = 1;  // 1..3
  CardColor color = CardColor::Red;
  CardShape shape = CardShape::Plus;
  bool selected = false;

  bool same_kind(const CardProps& o) const {
    return count == o.count && color == o.color && shape == o.shape;
  }
  bool operator==(const CardProps&) const = default;
};

struct Card {
  Cell cell;
  CardProps props;
  bool operator==(const Card&) const = default;
};

struct Landmark {
  LandmarkType type = LandmarkType::House;
  LandmarkColor color = LandmarkColor::Pink;
  bool operator==(const Landmark&) const = default;
};

bool is_valid_set(const CardProps& a, const CardProps& b, const CardProps& c);

/// Simulator constants. Defaults target desk-scale experiments.
struct WorldConfig {
  int height = 12;
  int width = 12;
  int num_cards = 12;
  int num_landmarks = 14;
  int num_colors = 4;  // card colors drawn from the first num_colors of CardColor
  int num_shapes = 4;
  int leader_moves = 40;
  int follower_moves = 40;
  int view_depth = 8;
  double view_half_angle_deg = 60.0;
  bool operator==(const WorldConfig&) const = default;
};

class WorldConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---- geometry -------------------------------------------------------------

Axial to_axial(Cell c);
Cell from_axial(Axial a);
Axial direction_offset(int alpha);
Axial rotate(Axial a, int steps);  // counter-clockwise by steps * 60 degrees
int axial_length(Axial a);
Cell neighbor(Cell c, int alpha);
int hex_distance(Cell a, Cell b);
int wrap_direction(int alpha);

/// Cartesian center with y pointing "up" (decreasing row).
std::array<double, 2> cell_center(Cell c);

/// Angle (degrees, in (-180, 180]) from the pose's facing direction to the
/// target cell's center; positive means to the left.
double bearing_deg(const Pose& from, Cell to);

// ---- properties -----------------------------------------------------------

/// Binary per-cell properties; a cell's property vector has these indices set.
namespace prop {
inline constexpr int kPad = 0;
inline constexpr int kGround = 1;
inline constexpr int kLandmarkType = 2;  // + LandmarkType
inline constexpr int kLandmarkColor = kLandmarkType + kLandmarkTypeCount;
inline constexpr int kCard = kLandmarkColor + kLandmarkColorCount;
inline constexpr int kCount = kCard + 1;  // + (count - 1)
inline constexpr int kCardColor = kCount + 3;
inline constexpr int kShape = kCardColor + kCardColorCount;
inline constexpr int kSelected = kShape + kCardShapeCount;
inline constexpr int kLeader = kSelected + 1;
inline constexpr int kFollower = kLeader + 1;
inline constexpr int kNumProperties = kFollower + 1;
}  // namespace prop

/// Active property indices of one cell (sparse form of a binary vector).
struct PropertySet {
  std::array<std::uint8_t, 8> idx{};
  std::uint8_t size = 0;

  void add(int p) { idx[size++] = static_cast<std::uint8_t>(p); }
  bool has(int p) const;
  bool operator==(const PropertySet& o) const;
};

class WorldState;

PropertySet cell_properties(const WorldState& s, Cell c);

/// Dense binary tensor in (h, w, p) order, size H * W * kNumProperties.
std::vector<std::uint8_t> state_tensor(const WorldState& s);

// ---- world ----------------------------------------------------------------

class WorldState {
 public:
  const WorldConfig& config() const { return config_; }
  int height() const { return config_.height; }
  int width() const { return config_.width; }

  bool in_bounds(Cell c) const {
    return c.h >= 0 && c.w >= 0 && c.h < config_.height && c.w < config_.width;
  }
  bool passable(Cell c) const { return in_bounds(c) && terrain_[index(c)] == 0; }
  std::optional<Landmark> landmark_at(Cell c) const;
  std::vector<Cell> landmark_cells() const;

  const std::vector<Card>& cards() const { return cards_; }
  std::optional<std::size_t> card_index_at(Cell c) const;
  bool has_card(Cell c) const { return card_index_at(c).has_value(); }
  int selected_count() const;

  Pose pose(Agent a) const { return a == Agent::Leader ? leader_ : follower_; }
  int score() const { return score_; }
  Agent turn() const { return turn_; }
  int moves_left() const { return moves_left_; }
  int turns_taken() const { return turns_taken_; }

  /// Applies one action in place. Returns false (and leaves the state
  /// untouched) when the action is illegal.
  bool step(Agent agent, Action action);

  /// Hands the turn to the other agent and refills its move budget.
  void end_turn();

  bool is_legal(Agent agent, Action action) const;

  /// Overrides the remaining budget; used when replaying recorded trajectories.
  void set_moves_left(int n) { moves_left_ = n; }

  bool operator==(const WorldState& o) const;

  // Construction and persistence helpers; not part of the game rules.
  friend WorldState new_world(std::uint64_t seed, const WorldConfig& config);
  friend class WorldAccess;

 private:
  WorldState() = default;
  std::size_t index(Cell c) const {
    return static_cast<std::size_t>(c.h) * config_.width + c.w;
  }
  void respawn_cards();
  void set_pose(Agent a, Pose p) { (a == Agent::Leader ? leader_ : follower_) = p; }

  WorldConfig config_;
  std::vector<std::int16_t> terrain_;  // 0 = ground, else 1 + landmark code
  std::vector<Card> cards_;            // sorted by cell
  Pose leader_;
  Pose follower_;
  int score_ = 0;
  Agent turn_ = Agent::Leader;
  int moves_left_ = 0;
  int turns_taken_ = 0;
  Rng rng_;
};

/// Explicit world description, used to restore saved games and to build fixtures.
struct WorldLayout {
  WorldConfig config;
  std::vector<std::pair<Cell, Landmark>> landmarks;
  std::vector<Card> cards;
  Pose leader;
  Pose follower;
  int score = 0;
  Agent turn = Agent::Leader;
  int moves_left = -1;  // -1: full budget of the agent to move
  int turns_taken = 0;
  std::uint64_t seed = 0;  // card respawn stream
};

class WorldAccess {
 public:
  /// Throws WorldConfigError on overlapping or out-of-range content.
  static WorldState build(const WorldLayout& layout);
  static WorldLayout layout(const WorldState& s);
  /// Textual engine state of the respawn generator (std::mt19937_64 stream format).
  static std::string rng_state(const WorldState& s);
  static void set_rng_state(WorldState& s, const std::string& text);
};

/// Deterministic world generation; guarantees at least one valid unselected set.
WorldState new_world(std::uint64_t seed, const WorldConfig& config = {});

/// Pure form of WorldState::step.
std::optional<WorldState> apply_action(const WorldState& s, Agent agent, Action action);

/// Pose reached by an action ignoring legality.
Pose next_pose(const Pose& p, Action a);

/// Action turning `from` into `to`, if they are one action apart.
std::optional<Action> action_between(const Pose& from, const Pose& to);

/// Copy of the state with the follower to move and a full follower budget.
WorldState as_follower_turn(const WorldState& s);

// ---- crops ----------------------------------------------------------------

/// Np x Np patch around a pose in the pose's own frame. Slot (i, j) holds the
/// local axial offset (q, r) = (j - k, i - k), k = (Np - 1) / 2, rotated by the
/// pose orientation. Slots outside the radius-k hexagon, and off-board cells,
/// carry only the padding property.
struct Crop {
  int np = 0;
  std::vector<PropertySet> cells;  // row-major, np * np
  const PropertySet& at(int i, int j) const { return cells[static_cast<std::size_t>(i) * np + j]; }
};

Crop rotate_crop(const WorldState& s, const Pose& pose, int np);

/// Local axial offset of crop slot `slot`.
Axial crop_slot_offset(int np, int slot);
bool crop_slot_in_hex(int np, int slot);

/// perm[slot] = slot holding the same world cell once the pose turns left by
/// `steps`: crop(alpha + steps)[slot] == crop(alpha)[perm[slot]]. Corner slots
/// map to themselves.
std::vector<int> crop_rotation_permutation(int np, int steps);

// ---- observation ----------------------------------------------------------

struct ObservedCell {
  Cell cell;
  std::optional<Landmark> landmark;
  std::optional<CardProps> card;
  bool leader = false;
  bool operator==(const ObservedCell&) const = default;
};

struct Observation {
  Pose pose;
  std::vector<ObservedCell> cells;  // sorted by cell
  const ObservedCell* find(Cell c) const;
  bool contains(Cell c) const { return find(c) != nullptr; }
};

bool in_view_cone(const Pose& pose, Cell c, int depth, double half_angle_deg);
Observation follower_view(const WorldState& s);
Observation view_from(const WorldState& s, const Pose& pose);

}  // namespace hexbandit::hexworld
