#pragma once

// The continual-learning loop: deploy the ensemble, play games with a
// follower, turn observed behavior into a dataset, retrain, report.

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hexbandit/bandit.hpp"
#include "hexbandit/metrics.hpp"
#include "hexbandit/records.hpp"

namespace hexbandit::orchestrator {

using records::InteractionRecord;

struct ExperimentConfig {
  std::string name = "experiment";
  std::string variant = "full";  // full, pos-only, tc-only, no-ensemble, fine-tune
  int rounds = 6;
  int games_per_round = 100;
  int ensemble_size = 2;
  int d0_size = 500;
  int max_instructions = 6;  // per game
  std::string follower = "sim";
  std::string profile = "typical";
  std::string profiles_path;  // empty: bundled profiles
  std::uint64_t seed = 1;
  double temperature = 1.0;
  bool tempered_behavior = false;
  bool train_after_last_round = false;
  hexworld::WorldConfig world;
  genmodel::ModelConfig model;
  bandit::TrainConfig train;

  /// Throws std::invalid_argument describing the first problem found.
  void validate() const;
  bandit::Variant example_variant() const;
  bandit::TrainMode train_mode() const;
  int members() const;  // 1 for the no-ensemble variant
};

nlohmann::json to_json(const ExperimentConfig& c);
/// Unknown keys are rejected; missing keys keep their defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

// ---- turn cycle -------------------------------------------------------------------

class InstructionSource {
 public:
  virtual ~InstructionSource() = default;
  virtual genmodel::SampledInstruction generate(const hexworld::WorldState& state, const planner::Plan& plan,
                                                std::uint64_t seed) const = 0;
};

class EnsembleSource : public InstructionSource {
 public:
  EnsembleSource(const bandit::Ensemble& ensemble, double temperature, bool tempered_behavior)
      : members_(ensemble.pointers()), temperature_(temperature), tempered_(tempered_behavior) {}
  genmodel::SampledInstruction generate(const hexworld::WorldState& state, const planner::Plan& plan,
                                        std::uint64_t seed) const override;

 private:
  std::vector<const genmodel::GenModel*> members_;
  double temperature_;
  bool tempered_;
};

/// Canonical instructions from the verbalizer (log-probabilities are zero).
class OracleSource : public InstructionSource {
 public:
  genmodel::SampledInstruction generate(const hexworld::WorldState& state, const planner::Plan& plan,
                                        std::uint64_t seed) const override;
};

class FollowerAgent {
 public:
  virtual ~FollowerAgent() = default;
  virtual follower::FollowerResult follow(const hexworld::WorldState& follower_start,
                                          const synthlang::Instruction& x, std::uint64_t seed) = 0;
};

class SimulatedFollower : public FollowerAgent {
 public:
  explicit SimulatedFollower(follower::CompetenceProfile profile) : profile_(profile) {}
  follower::FollowerResult follow(const hexworld::WorldState& follower_start, const synthlang::Instruction& x,
                                  std::uint64_t seed) override;

 private:
  follower::CompetenceProfile profile_;
};

/// The system's half of a turn: plan at the leader's state, generate the
/// instruction, then play the leader's scripted actions.
struct PreparedTurn {
  std::shared_ptr<const hexworld::WorldState> state;
  std::shared_ptr<const hexworld::WorldState> follower_start;
  std::vector<hexworld::Action> leader_actions;
  planner::Plan plan;
  genmodel::SampledInstruction sample;
};

/// Nullopt when no plan exists (the game is over).
std::optional<PreparedTurn> prepare_turn(const hexworld::WorldState& state, const InstructionSource& source,
                                         std::uint64_t sample_seed);

/// Builds the record for a finished follower turn and returns the state for the
/// next leader turn through `next`.
InteractionRecord complete_turn(const PreparedTurn& turn, int round, int game, int index,
                                const std::vector<hexworld::Pose>& execution, const hexworld::WorldState& after,
                                follower::Feedback feedback, bool terminated, double seconds,
                                std::optional<hexworld::WorldState>& next);

struct GameResult {
  std::vector<InteractionRecord> records;
  int score = 0;
};

struct Seeds {
  std::uint64_t base = 1;
  std::uint64_t world(int round, int game) const;
  std::uint64_t sample(int round, int game, int index) const;
  std::uint64_t follow(int round, int game, int index) const;
};

GameResult play_game(const InstructionSource& source, FollowerAgent& follower, const hexworld::WorldConfig& world,
                     int max_instructions, const Seeds& seeds, int round, int game);

// ---- rounds -----------------------------------------------------------------------

/// Positive examples from verbalizer games with a literal follower; instructions
/// longer than the model's maximum length are skipped.
std::vector<bandit::Example> bootstrap_d0(int count, std::uint64_t seed, const hexworld::WorldConfig& world,
                                          int max_instructions, int max_len);

metrics::Outcome outcome_of(const InteractionRecord& r);
metrics::RoundReport report_for(int round, const std::vector<GameResult>& games,
                                const std::vector<bandit::Example>& dataset);
metrics::RoundReport report_for(int round, const std::vector<InteractionRecord>& records,
                                const std::vector<bandit::Example>& dataset);

void save_ensemble(const std::filesystem::path& dir, const bandit::Ensemble& e);
bandit::Ensemble load_ensemble(const std::filesystem::path& dir);

struct Evaluation {
  std::vector<GameResult> games;
  metrics::RoundReport report;
};

/// Plays `games` games of round `round` (its world and sampling seeds) with a frozen ensemble.
Evaluation evaluate(const bandit::Ensemble& ensemble, const ExperimentConfig& cfg, FollowerAgent& follower,
                    int round, int games);

using Logger = std::function<void(const std::string&)>;

/// Runs and persists an experiment under `dir`:
///   config.json, report.csv
///   round-0/{states,records,dataset}.jsonl   the initial dataset
///   round-<r>/checkpoints/member-<k>.json    ensemble deployed in round r
///   round-<r>/{states,records,dataset}.jsonl, report.csv, report.json
class Experiment {
 public:
  Experiment(ExperimentConfig cfg, std::filesystem::path dir, Logger log = {});

  const ExperimentConfig& config() const { return cfg_; }
  const std::filesystem::path& dir() const { return dir_; }

  void init_data();       // builds D0 unless already present
  void train_initial();   // trains the round-1 ensemble on D0
  metrics::RoundReport run_round(int r);
  std::vector<metrics::RoundReport> run();

  std::vector<std::vector<bandit::Example>> datasets_through(int r) const;
  FollowerAgent& follower();

 private:
  void log(const std::string& msg) const;
  std::filesystem::path round_dir(int r) const;

  ExperimentConfig cfg_;
  std::filesystem::path dir_;
  Logger log_;
  std::unique_ptr<FollowerAgent> follower_;
};

std::vector<metrics::RoundReport> read_reports(const std::filesystem::path& run_dir);
void write_report_csv(const std::filesystem::path& path, const std::vector<metrics::RoundReport>& reports);

}  // namespace hexbandit::orchestrator
