#pragma once

// Simulated follower: executes instructions through the literal interpreter
// with configurable misreading, motor noise and give-up behavior, then answers
// the two post-execution questions.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "hexbandit/synthlang.hpp"

namespace hexbandit::follower {

struct CompetenceProfile {
  double parse_noise = 0.0;     // chance of misreading one descriptor attribute
  double move_noise = 0.0;      // chance per step of a uniformly random legal action
  double give_up = 0.0;         // on an unresolvable referent: stop (vs. look around)
  double feedback_noise = 0.0;  // chance of flipping each feedback answer
  bool operator==(const CompetenceProfile&) const = default;
};

/// Throws std::invalid_argument when a probability is outside [0, 1].
void validate(const CompetenceProfile& p);

/// Profiles from a JSON file of the form {"profiles": {name: {...}}}.
std::map<std::string, CompetenceProfile> load_profiles(const std::filesystem::path& path);
/// Named profile from the shipped data/profiles.json.
CompetenceProfile builtin_profile(const std::string& name);

struct Feedback {
  bool perceived_correct = false;
  bool grammatical = false;
  bool operator==(const Feedback&) const = default;
};

struct FollowerResult {
  synthlang::ExecutionTrace trace;
  Feedback feedback;
  bool terminated = false;
};

/// Noise source bound to a profile and a seed.
class NoisyReader : public synthlang::Perturbation {
 public:
  NoisyReader(const CompetenceProfile& profile, std::uint64_t seed);
  bool replace_action() override;
  hexworld::Action pick_random(std::span<const hexworld::Action> legal) override;
  synthlang::CardDesc read_card(const synthlang::CardDesc& d) override;
  synthlang::LandmarkDesc read_landmark(const synthlang::LandmarkDesc& d) override;
  bool explore() override;
  bool flip_feedback();
  bool gave_up() const { return gave_up_; }

 private:
  CompetenceProfile profile_;
  Rng rng_;
  bool gave_up_ = false;
};

/// Deterministic given the seed. Feedback uses only the instruction, what the
/// follower saw and its own execution.
FollowerResult execute(const synthlang::Grammar& g, const hexworld::WorldState& state,
                       const synthlang::Instruction& x, const CompetenceProfile& profile,
                       std::uint64_t seed);

}  // namespace hexbandit::follower
