#pragma once

// Independent reference implementations used by the unit and acceptance tests.
// None of them call the code they check.

#include <functional>
#include <optional>
#include <vector>

#include "hexbandit/genmodel.hpp"
#include "hexbandit/metrics.hpp"
#include "hexbandit/rng.hpp"

namespace hexbandit::oracle {

/// Minimal action count visiting `targets` in order (uniform-cost search over
/// (pose, stage) with std::map). Cells in `blocked` may not be entered.
std::optional<int> path_cost(const hexworld::WorldState& s, hexworld::Pose from,
                             const std::vector<hexworld::Cell>& targets, const std::vector<hexworld::Cell>& blocked,
                             bool require_entry);

/// Exact transportation cost by enumerating every spanning tree of the complete
/// bipartite support graph and solving its flows by leaf elimination.
double emd_by_trees(const metrics::PathDistribution& a, const metrics::PathDistribution& b);

/// Sum of P(x) over every instruction of length <= max_len built from word ids.
double total_sequence_probability(const genmodel::GenModel& m, const hexworld::WorldState& s,
                                  const planner::Plan& plan);

/// Largest relative error between analytic gradients (already accumulated in
/// the model's parameters) and central differences of `f` at `samples` random
/// coordinates per parameter.
double max_fd_error(diffkit::ParamStore& params, const std::function<double()>& f, int samples, Rng& rng,
                    double h = 1e-5);

}  // namespace hexbandit::oracle
