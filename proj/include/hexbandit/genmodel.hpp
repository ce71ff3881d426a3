#pragma once

// Instruction generator P(x | s, plan): a plan encoder that builds an attention
// set from rotated crops around every plan pose, and an autoregressive
// transformer decoder with cross-attention onto that set.

#include <cstdint>
#include <span>
#include <vector>

#include "hexbandit/diffkit.hpp"
#include "hexbandit/hexworld.hpp"
#include "hexbandit/planner.hpp"
#include "hexbandit/synthlang.hpp"
#include "json.hpp"

namespace hexbandit::genmodel {

using diffkit::Mat;
using diffkit::Tape;
using diffkit::Var;

struct ModelConfig {
  int ns = 16;          // property-embedding width
  int ns_cell = 16;     // encoded-cell width
  int np = 3;           // crop side
  int orient_dim = 8;   // orientation-embedding width
  int d_model = 32;     // plan-encoder and decoder width
  int heads = 2;
  int ffn = 64;
  int decoder_layers = 1;
  int max_plan = 64;    // positional table size for plan steps (longer plans share the last slot)
  int max_len = synthlang::kMaxInstructionTokens;
  int vocab_size = 0;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Attention-set values computed without gradients, for decoding.
struct Encoded {
  Mat memory;  // (|plan| * np^2) x (d_model + ns_cell)
};

struct SampledInstruction {
  synthlang::Instruction tokens;
  double logprob_model = 0.0;     // untempered sequence log-probability
  double logprob_behavior = 0.0;  // probability recorded for importance weighting
  int model_index = 0;
  bool truncated = false;  // reached max_len without emitting EOS
};

class GenModel {
 public:
  GenModel(ModelConfig cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  diffkit::ParamStore& params() { return params_; }
  const diffkit::ParamStore& params() const { return params_; }

  /// Attention set: one row per (plan step, crop slot), each the concatenation
  /// of the step encoding and the slot's cell encoding. Throws
  /// std::invalid_argument when the plan does not start at the follower.
  Var encode(Tape& t, const hexworld::WorldState& state, const planner::Plan& plan) const;
  Encoded encode_values(const hexworld::WorldState& state, const planner::Plan& plan) const;

  /// Next-token log-probabilities for every prefix of `input` (which starts
  /// with BOS): a |input| x V matrix. BOS and UNK are never produced.
  Var decode(Tape& t, Var memory, std::span<const int> input) const;

  std::vector<double> next_token_dist(const Encoded& enc, std::span<const int> prefix) const;

  /// Sum of per-token log-probabilities, including the end token unless the
  /// instruction has the maximum length.
  double sequence_logprob(const Encoded& enc, const synthlang::Instruction& x) const;
  double sequence_logprob(const hexworld::WorldState& state, const planner::Plan& plan,
                          const synthlang::Instruction& x) const;
  /// Differentiable form of sequence_logprob.
  Var sequence_logprob(Tape& t, const hexworld::WorldState& state, const planner::Plan& plan,
                       const synthlang::Instruction& x) const;

  /// Temperature sampling (no beam search). The behavior log-probability is the
  /// untempered model probability unless `tempered_behavior` is set.
  SampledInstruction sample(const Encoded& enc, double temperature, Rng& rng,
                            bool tempered_behavior = false) const;

  nlohmann::json checkpoint(bool with_optimizer_state) const;
  void load_checkpoint(const nlohmann::json& j);

 private:
  Var p(Tape& t, const char* name) const;
  Var block_attention(Tape& t, Var x, Var kv, const std::string& prefix, bool causal) const;
  Var feed_forward(Tape& t, Var x, const std::string& prefix) const;
  Var norm(Tape& t, Var x, const std::string& prefix) const;

  ModelConfig cfg_;
  mutable diffkit::ParamStore params_;
  Mat output_mask_;
};

/// Picks a member uniformly and samples from it; the behavior probability is the
/// chosen member's.
SampledInstruction ensemble_sample(std::span<const GenModel* const> members,
                                   const hexworld::WorldState& state, const planner::Plan& plan,
                                   double temperature, std::uint64_t seed,
                                   bool tempered_behavior = false);

}  // namespace hexbandit::genmodel
