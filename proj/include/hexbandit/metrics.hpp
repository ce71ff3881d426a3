#pragma once

// Evaluation measures: task completion, earth mover's distance between plan
// and execution, language statistics, and the per-round report.

#include <array>
#include <string>
#include <vector>

#include "hexbandit/follower.hpp"
#include "hexbandit/planner.hpp"
#include "json.hpp"

namespace hexbandit::metrics {

using hexworld::Cell;
using hexworld::Pose;

struct PathDistribution {
  std::vector<Cell> support;
  std::vector<double> weights;
};

/// Uniform mass per pose, merged on repeated cells (support sorted by cell).
PathDistribution path_to_distribution(const std::vector<Pose>& poses);

/// Exact optimal transport cost under the hex-distance ground metric.
/// Throws std::invalid_argument on empty or unnormalized inputs.
double emd(const PathDistribution& a, const PathDistribution& b);

/// Visited cells cover the plan's targets; with no targets, the final cell is
/// the start cell.
bool task_completion(const planner::Plan& plan, const std::vector<Pose>& execution);

struct LanguageStats {
  double mean_length = 0.0;
  int vocabulary_size = 0;
};
LanguageStats language_stats(const std::vector<synthlang::Instruction>& xs);

/// One instruction's outcome, the unit the report aggregates.
struct Outcome {
  int target_cards = 0;
  bool completed = false;
  double emd = 0.0;
  follower::Feedback feedback;
  bool terminated = false;
};

struct RoundReport {
  int round = 0;
  int games = 0;
  int instructions = 0;
  double completion = 0.0;
  std::array<double, 4> completion_by_cards{};  // 0..3 target cards
  std::array<int, 4> instructions_by_cards{};
  double mean_emd = 0.0;
  double perceived_correct_rate = 0.0;
  double grammatical_rate = 0.0;
  double terminated_rate = 0.0;
  double mean_score = 0.0;
  double mean_length = 0.0;
  int vocabulary_size = 0;
  int positive_examples = 0;
  int negative_examples = 0;
};

RoundReport summarize(int round, const std::vector<Outcome>& outcomes, const std::vector<int>& game_scores,
                      const std::vector<synthlang::Instruction>& instructions);

std::string csv_header();
std::string csv_row(const RoundReport& r);
nlohmann::json to_json(const RoundReport& r);
RoundReport report_from_json(const nlohmann::json& j);

}  // namespace hexbandit::metrics
