#pragma once

// Learning signal from follower behavior: example construction from feedback,
// the importance-weighted bandit objective, and per-round training schedules
// for ensembles of generators.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hexbandit/follower.hpp"
#include "hexbandit/genmodel.hpp"
#include "hexbandit/metrics.hpp"

namespace hexbandit::bandit {

using hexworld::Pose;
using hexworld::WorldState;

enum class Variant { Full, PosOnly, TcOnly };
std::string_view variant_name(Variant v);
Variant variant_from_name(std::string_view name);

struct Example {
  std::shared_ptr<const WorldState> state;  // state the instruction was generated in
  planner::Plan rho;                        // system plan, or the follower's execution
  synthlang::Instruction x;
  int y = 1;                      // +1 or -1
  double behavior_logprob = 0.0;  // log-probability under the generating parameters
  bool from_execution = false;
  std::string provenance;  // id of the interaction it came from
};

/// The observable outcome of one instruction, as needed to build examples.
struct Interaction {
  std::string id;
  std::shared_ptr<const WorldState> state;  // generation state
  WorldState follower_start;                // state when the follower began
  planner::Plan plan;
  synthlang::Instruction x;
  double behavior_logprob = 0.0;
  std::vector<Pose> execution;
  follower::Feedback feedback;
};

/// Toggled cards equal the plan's targets (position ignored); with no targets,
/// the follower must end where it started (orientation free).
bool plan_match(const planner::Plan& plan, const std::vector<Pose>& execution, const WorldState& follower_start);

/// Execution as a plan-shaped pose sequence; targets are the toggled cells, sorted.
planner::Plan execution_as_plan(const std::vector<Pose>& execution, const WorldState& follower_start);

std::vector<Example> construct_examples(const Interaction& rec, Variant variant = Variant::Full);

struct TrainConfig {
  int epochs = 40;
  int batch_size = 32;
  double lr = 1e-3;
  double weight_decay = 0.01;
  double clip_norm = 5.0;
  bool ips = true;
  double ips_max_weight = 0.0;  // 0 disables clipping of importance weights
};

/// Importance weight of an example under the current parameters: 1 for
/// positives, P_new / P_behavior for negatives (optionally clipped).
double ips_weight(const Example& e, const genmodel::GenModel& model, const TrainConfig& cfg = {});

/// Mean negative log-likelihood; all labels must be +1.
double supervised_loss(const genmodel::GenModel& model, const std::vector<Example>& data);

struct BatchStats {
  double objective = 0.0;       // value minimized: -(1/|B|) sum l y log P
  double negative_term = 0.0;   // sum over negatives of |l log P|
  double grad_norm = 0.0;       // before clipping
};

/// Accumulates the gradient of -(1/|batch|) sum l y log P into the model's
/// parameter gradients (l frozen). Throws diffkit::NonFiniteError naming the
/// offending example.
BatchStats accumulate_gradient(genmodel::GenModel& model, const std::vector<const Example*>& batch,
                               const TrainConfig& cfg);

/// One optimizer step on a batch.
BatchStats train_step(genmodel::GenModel& model, diffkit::AdamW& opt, const std::vector<const Example*>& batch,
                      const TrainConfig& cfg);

/// Epoch loop over a fixed dataset with member-specific shuffling.
void train_epochs(genmodel::GenModel& model, const std::vector<const Example*>& data, const TrainConfig& cfg,
                  std::uint64_t seed);

/// Rehearsal batches: each batch takes half its slots from the current round
/// (in shuffled order) and half sampled uniformly from history. Entries are
/// (from_history, index).
std::vector<std::vector<std::pair<bool, int>>> rehearsal_batches(int n_current, int n_history, int batch_size,
                                                                 Rng& rng);

enum class TrainMode { Retrain, FinetuneRehearsal };

struct Ensemble {
  genmodel::ModelConfig config;
  std::vector<std::uint64_t> member_seeds;
  std::vector<genmodel::GenModel> members;

  static Ensemble create(const genmodel::ModelConfig& config, int k, std::uint64_t base_seed);
  std::vector<const genmodel::GenModel*> pointers() const;
};

/// datasets[q] is D_q; the last one is the newest round.
void train_round(TrainMode mode, const std::vector<std::vector<Example>>& datasets, Ensemble& ensemble,
                 const TrainConfig& cfg, std::uint64_t round_seed);

}  // namespace hexbandit::bandit
