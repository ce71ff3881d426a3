#pragma once

// Synthetic instruction language: vocabulary, a grammar loaded from an
// EBNF-like file, an Earley recognizer, clause semantics, a sequential
// interpreter that grounds clauses against what the follower can see, and the
// canonical verbalizer used to build supervised data.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "hexbandit/hexworld.hpp"
#include "hexbandit/planner.hpp"

namespace hexbandit::synthlang {

using hexworld::Action;
using hexworld::Cell;
using hexworld::Pose;
using hexworld::WorldState;

inline constexpr int kBos = 0;
inline constexpr int kEos = 1;
inline constexpr int kUnk = 2;

class Vocabulary {
 public:
  Vocabulary() = default;
  /// Specials <bos>, <eos>, <unk> are prepended; duplicates are ignored.
  explicit Vocabulary(const std::vector<std::string>& words);

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(std::string_view token) const;  // kUnk when unknown
  bool contains(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Token ids without BOS/EOS.
struct Instruction {
  std::vector<int> tokens;
  bool operator==(const Instruction&) const = default;
};

std::string to_text(const Vocabulary& vocab, const Instruction& x);
Instruction tokenize(const Vocabulary& vocab, std::string_view text);

// ---- grammar ------------------------------------------------------------------

struct Symbol {
  bool terminal = false;
  int id = 0;  // vocabulary id for terminals, nonterminal index otherwise
  bool operator==(const Symbol&) const = default;
};

struct Rule {
  int lhs = 0;
  std::vector<Symbol> rhs;
};

struct ParseNode {
  Symbol symbol;
  int begin = 0;
  int end = 0;
  std::vector<ParseNode> children;
};

class GrammarError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Grammar {
 public:
  static Grammar from_text(std::string_view text);
  static Grammar load(const std::filesystem::path& path);
  /// The grammar shipped in the data directory (overridable with HEXBANDIT_GRAMMAR).
  static const Grammar& builtin();
  static std::filesystem::path default_path();

  int version() const { return version_; }
  const Vocabulary& vocab() const { return vocab_; }
  int start() const { return 0; }
  const std::vector<Rule>& rules() const { return rules_; }
  int nonterminal_count() const { return static_cast<int>(names_.size()); }
  const std::string& nonterminal_name(int nt) const { return names_.at(static_cast<std::size_t>(nt)); }
  std::optional<int> nonterminal_id(std::string_view name) const;
  bool nullable(int nt) const { return nullable_.at(static_cast<std::size_t>(nt)) != 0; }

  /// Membership test (Earley).
  bool accepts(std::span<const int> tokens) const;
  bool accepts(const Instruction& x) const { return accepts(std::span<const int>(x.tokens)); }

  /// Derivation tree, when the input is a member. Among alternatives the
  /// earliest rule wins, then the shortest leftmost span.
  std::optional<ParseNode> parse_tree(std::span<const int> tokens) const;

 private:
  void finalize();

  int version_ = 0;
  Vocabulary vocab_;
  std::vector<std::string> names_;
  std::vector<Rule> rules_;
  std::vector<std::vector<int>> rules_of_;
  std::vector<char> nullable_;
};

bool grammar_check(const Grammar& g, const Instruction& x);

// ---- semantics ----------------------------------------------------------------

enum class TurnDir : std::uint8_t { Left, Right, Around };
enum class Locator : std::uint8_t { None, Ahead, InFront, Left, Right, Behind, Near };

struct CardDesc {
  int count = 1;
  hexworld::CardColor color = hexworld::CardColor::Red;
  hexworld::CardShape shape = hexworld::CardShape::Plus;
  bool matches(const hexworld::CardProps& p) const {
    return p.count == count && p.color == color && p.shape == shape;
  }
  bool operator==(const CardDesc&) const = default;
};

struct LandmarkDesc {
  hexworld::LandmarkColor color = hexworld::LandmarkColor::Pink;
  hexworld::LandmarkType type = hexworld::LandmarkType::House;
  bool matches(const hexworld::Landmark& l) const { return l.color == color && l.type == type; }
  bool operator==(const LandmarkDesc&) const = default;
};

struct WaitClause {
  int phrase = 0;  // surface variant
  bool operator==(const WaitClause&) const = default;
};
struct TurnClause {
  TurnDir dir = TurnDir::Left;
  bool operator==(const TurnClause&) const = default;
};
struct GotoClause {
  LandmarkDesc landmark;
  bool operator==(const GotoClause&) const = default;
};
struct WalkClause {
  int steps = 1;
  bool operator==(const WalkClause&) const = default;
};
struct FetchClause {
  int verb = 0;  // surface variant
  CardDesc card;
  Locator locator = Locator::None;
  std::optional<LandmarkDesc> near;
  bool operator==(const FetchClause&) const = default;
};

using Clause = std::variant<WaitClause, TurnClause, GotoClause, WalkClause, FetchClause>;

/// Connective variants between clauses: "and", "then", "and then", ", then", ",".
inline constexpr int kConnectiveCount = 5;

struct Utterance {
  std::vector<Clause> clauses;
  std::vector<int> connectives;  // clauses.size() - 1 entries
};

/// Clause structure of a grammatical instruction.
std::optional<Utterance> read_utterance(const Grammar& g, const Instruction& x);

/// Surface tokens of an utterance; the result is always a grammar member.
Instruction render(const Grammar& g, const Utterance& u);

std::string card_phrase(const CardDesc& d);

// ---- grounding / execution --------------------------------------------------------

enum class Failure : std::uint8_t {
  None,
  Ungrammatical,
  UnresolvableReferent,
  Contradictory,
  Blocked,
  OutOfMoves,
};
std::string_view failure_name(Failure f);

/// Hooks through which a simulated follower injects noise. The default
/// implementation is a perfectly literal reader that never explores.
class Perturbation {
 public:
  virtual ~Perturbation() = default;
  /// Replace the next intended action with a random legal one?
  virtual bool replace_action() { return false; }
  virtual Action pick_random(std::span<const Action> legal) { return legal.front(); }
  virtual CardDesc read_card(const CardDesc& d) { return d; }
  virtual LandmarkDesc read_landmark(const LandmarkDesc& d) { return d; }
  /// On an unresolvable referent: explore (true) or give up (false).
  virtual bool explore() { return false; }
};

struct ResolvedClause {
  Clause clause;
  std::optional<Cell> referent;
  bool explored = false;
};

struct ParsedIntent {
  std::vector<ResolvedClause> clauses;
};

/// Maximum in-place rotations while searching for a referent.
inline constexpr int kExploreTurns = 5;

/// Sequential clause interpreter. Referents are resolved only against
/// view_from(state, current pose) at the moment each clause starts.
class Interpreter {
 public:
  Interpreter(const WorldState& follower_turn_state, Perturbation& noise);

  /// Runs one clause; returns Failure::None on success.
  Failure run(const Clause& clause);

  const WorldState& state() const { return state_; }
  const std::vector<Pose>& poses() const { return poses_; }
  const std::vector<ResolvedClause>& resolved() const { return resolved_; }
  bool explored() const { return explored_; }

 private:
  Failure act(Action intended);
  Failure rotate(TurnDir dir);
  Failure walk_to(Cell target, bool enter);
  std::optional<Cell> find_card(const CardDesc& d) const;
  std::optional<Cell> find_landmark(const LandmarkDesc& d) const;
  template <typename Finder>
  std::optional<Cell> resolve(Finder&& finder, bool& explored, Failure& failure);

  WorldState state_;
  Perturbation* noise_;
  std::vector<Pose> poses_;
  std::vector<ResolvedClause> resolved_;
  std::vector<Cell> fetched_;
  bool explored_ = false;
};

struct ExecutionTrace {
  std::vector<Pose> poses;
  WorldState final_state;
  bool completed = false;  // every clause executed
  Failure failure = Failure::None;
  bool explored = false;
  ParsedIntent intent;
};

/// Executes an instruction for the follower from `state` (made the follower's
/// turn first). Stops at the first failure.
ExecutionTrace execute_instruction(const Grammar& g, const WorldState& state, const Instruction& x,
                                   Perturbation& noise);

struct ParseResult {
  std::optional<ParsedIntent> intent;
  Failure failure = Failure::None;
  bool ok() const { return intent.has_value(); }
};

/// Literal comprehension: grammatical, and every referent resolvable in view
/// from the follower's pose as it would move. Deterministic.
ParseResult parse(const Grammar& g, const WorldState& state, const Instruction& x);

/// Cells whose card was toggled an odd number of times along a pose sequence
/// replayed from `state` (sorted).
std::vector<Cell> toggled_cells(const WorldState& state, const std::vector<Pose>& poses);

// ---- verbalizer ------------------------------------------------------------------

inline constexpr int kMaxInstructionTokens = 25;

/// Canonical instruction for a follower plan. The result executes, for a literal
/// follower, to exactly the plan's card toggles. `style_seed` only changes
/// surface choices (synonyms, connectives, turn-vs-locator phrasing, anchors).
Instruction verbalize(const Grammar& g, const WorldState& state, const planner::Plan& plan,
                      std::uint64_t style_seed);

}  // namespace hexbandit::synthlang
