#include "hexbandit/bandit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace hexbandit::bandit {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::PosOnly: return "pos-only";
    case Variant::TcOnly: return "tc-only";
  }
  return "?";
}

Variant variant_from_name(std::string_view name) {
  if (name == "full") return Variant::Full;
  if (name == "pos-only") return Variant::PosOnly;
  if (name == "tc-only") return Variant::TcOnly;
  throw std::invalid_argument("unknown learning variant: " + std::string(name));
}

namespace {

std::vector<Pose> or_start(const std::vector<Pose>& execution, const Pose& start) {
  return execution.empty() ? std::vector<Pose>{start} : execution;
}

}  // namespace

bool plan_match(const planner::Plan& plan, const std::vector<Pose>& execution, const WorldState& follower_start) {
  const auto exec = or_start(execution, plan.start);
  if (plan.target_cards.empty()) return exec.back().cell() == plan.start.cell();
  auto want = plan.target_cards;
  std::sort(want.begin(), want.end());
  return synthlang::toggled_cells(follower_start, exec) == want;
}

planner::Plan execution_as_plan(const std::vector<Pose>& execution, const WorldState& follower_start) {
  planner::Plan p;
  p.start = follower_start.pose(hexworld::Agent::Follower);
  p.poses = or_start(execution, p.start);
  p.target_cards = synthlang::toggled_cells(follower_start, p.poses);
  return p;
}

std::vector<Example> construct_examples(const Interaction& rec, Variant variant) {
  auto make = [&](const planner::Plan& rho, int y, bool from_execution) {
    return Example{rec.state, rho, rec.x, y, rec.behavior_logprob, from_execution, rec.id};
  };
  const auto exec_plan = execution_as_plan(rec.execution, rec.follower_start);
  const bool same = exec_plan.poses == rec.plan.poses;
  std::vector<Example> out;

  if (variant == Variant::TcOnly) {
    if (metrics::task_completion(rec.plan, rec.execution)) {
      out.push_back(make(rec.plan, +1, false));
      if (!same) out.push_back(make(exec_plan, +1, true));
    } else {
      out.push_back(make(rec.plan, -1, false));
    }
    return out;
  }

  const bool positive = rec.feedback.perceived_correct && rec.feedback.grammatical;
  if (!positive) {
    if (variant == Variant::Full) out.push_back(make(rec.plan, -1, false));
    return out;
  }
  out.push_back(make(exec_plan, +1, true));
  if (!same && plan_match(rec.plan, rec.execution, rec.follower_start)) out.push_back(make(rec.plan, +1, false));
  return out;
}

namespace {

double weight_from(double logp, const Example& e, const TrainConfig& cfg) {
  if (e.y > 0 || !cfg.ips) return 1.0;
  double w = std::exp(logp - e.behavior_logprob);
  if (cfg.ips_max_weight > 0) w = std::min(w, cfg.ips_max_weight);
  return w;
}

}  // namespace

double ips_weight(const Example& e, const genmodel::GenModel& model, const TrainConfig& cfg) {
  if (e.y > 0 || !cfg.ips) return 1.0;
  return weight_from(model.sequence_logprob(*e.state, e.rho, e.x), e, cfg);
}

double supervised_loss(const genmodel::GenModel& model, const std::vector<Example>& data) {
  if (data.empty()) return 0.0;
  double total = 0;
  for (const auto& e : data) {
    if (e.y != 1) throw std::invalid_argument("supervised loss requires positive examples only");
    total -= model.sequence_logprob(*e.state, e.rho, e.x);
  }
  return total / static_cast<double>(data.size());
}

BatchStats accumulate_gradient(genmodel::GenModel& model, const std::vector<const Example*>& batch,
                               const TrainConfig& cfg) {
  BatchStats st;
  if (batch.empty()) return st;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const Example* e : batch) {
    if (e->y != 1 && e->y != -1) throw std::invalid_argument("example label must be +1 or -1");
    diffkit::Tape t;
    diffkit::Var lp = model.sequence_logprob(t, *e->state, e->rho, e->x);
    const double logp = lp.scalar();
    if (!std::isfinite(logp))
      throw diffkit::NonFiniteError("non-finite log-probability for example from " + e->provenance);
    const double w = weight_from(logp, *e, cfg);
    const double coef = -w * e->y * inv;
    st.objective += coef * logp;
    if (e->y < 0) st.negative_term += std::abs(w * logp);
    try {
      t.backward(diffkit::scale(lp, coef));
    } catch (const diffkit::NonFiniteError& err) {
      throw diffkit::NonFiniteError(std::string(err.what()) + " (example from " + e->provenance + ")");
    }
  }
  st.grad_norm = model.params().grad_norm();
  return st;
}

BatchStats train_step(genmodel::GenModel& model, diffkit::AdamW& opt, const std::vector<const Example*>& batch,
                      const TrainConfig& cfg) {
  model.params().zero_grad();
  auto st = accumulate_gradient(model, batch, cfg);
  if (cfg.clip_norm > 0) model.params().clip_grad_norm(cfg.clip_norm);
  opt.step(model.params());
  return st;
}

namespace {

diffkit::AdamW make_optimizer(const TrainConfig& cfg) {
  diffkit::AdamWConfig a;
  a.lr = cfg.lr;
  a.weight_decay = cfg.weight_decay;
  return diffkit::AdamW(a);
}

}  // namespace

void train_epochs(genmodel::GenModel& model, const std::vector<const Example*>& data, const TrainConfig& cfg,
                  std::uint64_t seed) {
  if (data.empty()) return;
  if (cfg.batch_size < 1) throw std::invalid_argument("batch size must be positive");
  auto opt = make_optimizer(cfg);
  Rng rng(seed);
  std::vector<const Example*> order = data;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(cfg.batch_size)) {
      const auto end = std::min(order.size(), i + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const Example*> batch(order.begin() + static_cast<long>(i), order.begin() + static_cast<long>(end));
      train_step(model, opt, batch, cfg);
    }
  }
}

std::vector<std::vector<std::pair<bool, int>>> rehearsal_batches(int n_current, int n_history, int batch_size,
                                                                 Rng& rng) {
  if (batch_size < 2) throw std::invalid_argument("rehearsal needs a batch size of at least 2");
  std::vector<int> order(static_cast<std::size_t>(n_current));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const int half = n_history > 0 ? batch_size / 2 : batch_size;
  std::vector<std::vector<std::pair<bool, int>>> out;
  for (int i = 0; i < n_current; i += half) {
    std::vector<std::pair<bool, int>> b;
    const int take = std::min(half, n_current - i);
    for (int j = 0; j < take; ++j) b.emplace_back(false, order[static_cast<std::size_t>(i + j)]);
    // History fills the same number of slots as the current round, keeping a 1:1 mix.
    if (n_history > 0)
      for (int j = 0; j < take; ++j) b.emplace_back(true, uniform_int(rng, 0, n_history - 1));
    out.push_back(std::move(b));
  }
  return out;
}

Ensemble Ensemble::create(const genmodel::ModelConfig& config, int k, std::uint64_t base_seed) {
  if (k < 1) throw std::invalid_argument("ensemble size must be at least 1");
  Ensemble e;
  e.config = config;
  for (int i = 0; i < k; ++i) {
    e.member_seeds.push_back(derive_seed(base_seed, {static_cast<std::uint64_t>(i)}, "member"));
    e.members.emplace_back(config, e.member_seeds.back());
  }
  return e;
}

std::vector<const genmodel::GenModel*> Ensemble::pointers() const {
  std::vector<const genmodel::GenModel*> out;
  for (const auto& m : members) out.push_back(&m);
  return out;
}

void train_round(TrainMode mode, const std::vector<std::vector<Example>>& datasets, Ensemble& ensemble,
                 const TrainConfig& cfg, std::uint64_t round_seed) {
  if (datasets.empty()) throw std::invalid_argument("train_round needs at least one dataset");
  for (std::size_t k = 0; k < ensemble.members.size(); ++k) {
    const std::uint64_t seed = derive_seed(round_seed, {ensemble.member_seeds[k]}, "train");
    auto& model = ensemble.members[k];
    if (mode == TrainMode::Retrain) {
      std::vector<const Example*> all;
      for (const auto& d : datasets)
        for (const auto& e : d) all.push_back(&e);
      model = genmodel::GenModel(ensemble.config, ensemble.member_seeds[k]);
      train_epochs(model, all, cfg, seed);
      continue;
    }
    const auto& current = datasets.back();
    std::vector<const Example*> history;
    for (std::size_t q = 0; q + 1 < datasets.size(); ++q)
      for (const auto& e : datasets[q]) history.push_back(&e);
    auto opt = make_optimizer(cfg);
    Rng rng(seed);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      for (const auto& slots : rehearsal_batches(static_cast<int>(current.size()), static_cast<int>(history.size()),
                                                 cfg.batch_size, rng)) {
        std::vector<const Example*> batch;
        for (auto [from_history, i] : slots)
          batch.push_back(from_history ? history[static_cast<std::size_t>(i)] : &current[static_cast<std::size_t>(i)]);
        train_step(model, opt, batch, cfg);
      }
    }
  }
}

}  // namespace hexbandit::bandit
