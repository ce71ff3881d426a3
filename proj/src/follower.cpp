#include "hexbandit/follower.hpp"

#include <fstream>

#include "json.hpp"

#ifndef HEXBANDIT_DATA_DIR
#define HEXBANDIT_DATA_DIR "data"
#endif

namespace hexbandit::follower {

using synthlang::CardDesc;
using synthlang::Failure;
using synthlang::LandmarkDesc;

void validate(const CompetenceProfile& p) {
  for (double v : {p.parse_noise, p.move_noise, p.give_up, p.feedback_noise})
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("profile probabilities must lie in [0, 1]");
}

std::map<std::string, CompetenceProfile> load_profiles(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open profile file " + path.string());
  const auto doc = nlohmann::json::parse(in);
  std::map<std::string, CompetenceProfile> out;
  for (const auto& [name, j] : doc.at("profiles").items()) {
    CompetenceProfile p;
    p.parse_noise = j.value("parse_noise", 0.0);
    p.move_noise = j.value("move_noise", 0.0);
    p.give_up = j.value("give_up", 0.0);
    p.feedback_noise = j.value("feedback_noise", 0.0);
    validate(p);
    out[name] = p;
  }
  return out;
}

CompetenceProfile builtin_profile(const std::string& name) {
  static const auto profiles =
      load_profiles(std::filesystem::path(HEXBANDIT_DATA_DIR) / "profiles.json");
  auto it = profiles.find(name);
  if (it == profiles.end()) throw std::invalid_argument("unknown follower profile '" + name + "'");
  return it->second;
}

NoisyReader::NoisyReader(const CompetenceProfile& profile, std::uint64_t seed)
    : profile_(profile), rng_(seed) {
  validate(profile);
}

bool NoisyReader::replace_action() { return bernoulli(rng_, profile_.move_noise); }

hexworld::Action NoisyReader::pick_random(std::span<const hexworld::Action> legal) {
  return legal[static_cast<std::size_t>(uniform_int(rng_, 0, static_cast<int>(legal.size()) - 1))];
}

namespace {

// A value in [0, n) different from `v`.
int other_than(Rng& rng, int v, int n) {
  const int r = uniform_int(rng, 0, n - 2);
  return r >= v ? r + 1 : r;
}

}  // namespace

CardDesc NoisyReader::read_card(const CardDesc& d) {
  if (!bernoulli(rng_, profile_.parse_noise)) return d;
  CardDesc m = d;
  switch (uniform_int(rng_, 0, 2)) {
    case 0: m.count = 1 + other_than(rng_, d.count - 1, 3); break;
    case 1:
      m.color = static_cast<hexworld::CardColor>(
          other_than(rng_, static_cast<int>(d.color), hexworld::kCardColorCount));
      break;
    default:
      m.shape = static_cast<hexworld::CardShape>(
          other_than(rng_, static_cast<int>(d.shape), hexworld::kCardShapeCount));
      break;
  }
  return m;
}

LandmarkDesc NoisyReader::read_landmark(const LandmarkDesc& d) {
  if (!bernoulli(rng_, profile_.parse_noise)) return d;
  LandmarkDesc m = d;
  if (uniform_int(rng_, 0, 1) == 0)
    m.color = static_cast<hexworld::LandmarkColor>(
        other_than(rng_, static_cast<int>(d.color), hexworld::kLandmarkColorCount));
  else
    m.type = static_cast<hexworld::LandmarkType>(
        other_than(rng_, static_cast<int>(d.type), hexworld::kLandmarkTypeCount));
  return m;
}

bool NoisyReader::explore() {
  if (bernoulli(rng_, profile_.give_up)) {
    gave_up_ = true;
    return false;
  }
  return true;
}

bool NoisyReader::flip_feedback() { return bernoulli(rng_, profile_.feedback_noise); }

FollowerResult execute(const synthlang::Grammar& g, const hexworld::WorldState& state,
                       const synthlang::Instruction& x, const CompetenceProfile& profile,
                       std::uint64_t seed) {
  NoisyReader reader(profile, seed);
  FollowerResult r{synthlang::execute_instruction(g, state, x, reader), {}, false};
  const Failure f = r.trace.failure;
  r.terminated = f == Failure::Ungrammatical || f == Failure::UnresolvableReferent ||
                 f == Failure::Contradictory;
  r.feedback.perceived_correct = r.trace.completed != reader.flip_feedback();
  r.feedback.grammatical = synthlang::grammar_check(g, x) != reader.flip_feedback();
  return r;
}

}  // namespace hexbandit::follower
