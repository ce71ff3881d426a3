#include "hexbandit/orchestrator.hpp"

#include <chrono>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace hexbandit::orchestrator {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- configuration ------------------------------------------------------------------

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
  if (name.empty() || name.find('/') != std::string::npos) fail("name must be a plain, nonempty word");
  if (variant != "full" && variant != "pos-only" && variant != "tc-only" && variant != "no-ensemble" &&
      variant != "fine-tune")
    fail("unknown variant '" + variant + "'");
  if (rounds < 1) fail("rounds must be at least 1");
  if (games_per_round < 1) fail("games_per_round must be at least 1");
  if (ensemble_size < 1) fail("ensemble_size must be at least 1");
  if (d0_size < 1) fail("d0_size must be at least 1");
  if (max_instructions < 1) fail("max_instructions must be at least 1");
  if (follower != "sim" && follower != "human") fail("follower must be 'sim' or 'human'");
  if (!(temperature > 0.0 && temperature <= 1.0)) fail("temperature must be in (0, 1]");
  if (train.epochs < 0 || train.batch_size < 2 || !(train.lr > 0)) fail("invalid training schedule");
  model.validate();
}

bandit::Variant ExperimentConfig::example_variant() const {
  if (variant == "pos-only") return bandit::Variant::PosOnly;
  if (variant == "tc-only") return bandit::Variant::TcOnly;
  return bandit::Variant::Full;
}

bandit::TrainMode ExperimentConfig::train_mode() const {
  return variant == "fine-tune" ? bandit::TrainMode::FinetuneRehearsal : bandit::TrainMode::Retrain;
}

int ExperimentConfig::members() const { return variant == "no-ensemble" ? 1 : ensemble_size; }

namespace {

json train_to_json(const bandit::TrainConfig& t) {
  return {{"epochs", t.epochs},       {"batch_size", t.batch_size}, {"lr", t.lr},
          {"weight_decay", t.weight_decay}, {"clip_norm", t.clip_norm}, {"ips", t.ips},
          {"ips_max_weight", t.ips_max_weight}};
}

void reject_unknown(const json& j, const json& reference, const std::string& where) {
  for (const auto& [k, v] : j.items())
    if (!reference.contains(k)) throw std::invalid_argument("config: unknown key '" + k + "' in " + where);
}

bandit::TrainConfig train_from_json(const json& j) {
  bandit::TrainConfig t;
  reject_unknown(j, train_to_json(t), "train");
  t.epochs = j.value("epochs", t.epochs);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.lr = j.value("lr", t.lr);
  t.weight_decay = j.value("weight_decay", t.weight_decay);
  t.clip_norm = j.value("clip_norm", t.clip_norm);
  t.ips = j.value("ips", t.ips);
  t.ips_max_weight = j.value("ips_max_weight", t.ips_max_weight);
  return t;
}

genmodel::ModelConfig with_vocab(genmodel::ModelConfig m) {
  if (m.vocab_size == 0) m.vocab_size = synthlang::Grammar::builtin().vocab().size();
  return m;
}

}  // namespace

json to_json(const ExperimentConfig& c) {
  return {{"name", c.name},
          {"variant", c.variant},
          {"rounds", c.rounds},
          {"games_per_round", c.games_per_round},
          {"ensemble_size", c.ensemble_size},
          {"d0_size", c.d0_size},
          {"max_instructions", c.max_instructions},
          {"follower", c.follower},
          {"profile", c.profile},
          {"profiles_path", c.profiles_path},
          {"seed", c.seed},
          {"temperature", c.temperature},
          {"tempered_behavior", c.tempered_behavior},
          {"train_after_last_round", c.train_after_last_round},
          {"world", records::world_config_to_json(c.world)},
          {"model", genmodel::to_json(c.model)},
          {"train", train_to_json(c.train)}};
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  reject_unknown(j, to_json(c), "experiment");
  c.name = j.value("name", c.name);
  c.variant = j.value("variant", c.variant);
  c.rounds = j.value("rounds", c.rounds);
  c.games_per_round = j.value("games_per_round", c.games_per_round);
  c.ensemble_size = j.value("ensemble_size", c.ensemble_size);
  c.d0_size = j.value("d0_size", c.d0_size);
  c.max_instructions = j.value("max_instructions", c.max_instructions);
  c.follower = j.value("follower", c.follower);
  c.profile = j.value("profile", c.profile);
  c.profiles_path = j.value("profiles_path", c.profiles_path);
  c.seed = j.value("seed", c.seed);
  c.temperature = j.value("temperature", c.temperature);
  c.tempered_behavior = j.value("tempered_behavior", c.tempered_behavior);
  c.train_after_last_round = j.value("train_after_last_round", c.train_after_last_round);
  if (j.contains("world")) c.world = records::world_config_from_json(j.at("world"));
  if (j.contains("model")) {
    json m = genmodel::to_json(with_vocab(c.model));
    reject_unknown(j.at("model"), m, "model");
    m.update(j.at("model"));
    c.model = genmodel::model_config_from_json(m);
  }
  c.model = with_vocab(c.model);
  if (j.contains("train")) c.train = train_from_json(j.at("train"));
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

// ---- turn cycle ---------------------------------------------------------------------

genmodel::SampledInstruction EnsembleSource::generate(const hexworld::WorldState& state,
                                                      const planner::Plan& plan, std::uint64_t seed) const {
  return genmodel::ensemble_sample(members_, state, plan, temperature_, seed, tempered_);
}

genmodel::SampledInstruction OracleSource::generate(const hexworld::WorldState& state, const planner::Plan& plan,
                                                    std::uint64_t seed) const {
  genmodel::SampledInstruction s;
  s.tokens = synthlang::verbalize(synthlang::Grammar::builtin(), state, plan, seed);
  return s;
}

follower::FollowerResult SimulatedFollower::follow(const hexworld::WorldState& follower_start,
                                                   const synthlang::Instruction& x, std::uint64_t seed) {
  return follower::execute(synthlang::Grammar::builtin(), follower_start, x, profile_, seed);
}

std::optional<PreparedTurn> prepare_turn(const hexworld::WorldState& state, const InstructionSource& source,
                                         std::uint64_t sample_seed) {
  using hexworld::Agent;
  if (state.turn() != Agent::Leader) throw std::invalid_argument("turns start with the leader");
  planner::PlanResult pr;
  try {
    pr = planner::make_plan(state);
  } catch (const std::runtime_error&) {
    return std::nullopt;  // no reachable valid set remains
  }
  PreparedTurn t;
  t.state = std::make_shared<const hexworld::WorldState>(state);
  t.plan = pr.plan;
  t.sample = source.generate(state, pr.plan, sample_seed);
  hexworld::WorldState s = state;
  for (auto a : pr.leader_actions) {
    if (!s.step(Agent::Leader, a)) break;  // budget exhausted
    t.leader_actions.push_back(a);
  }
  s.end_turn();
  t.follower_start = std::make_shared<const hexworld::WorldState>(s);
  return t;
}

InteractionRecord complete_turn(const PreparedTurn& turn, int round, int game, int index,
                                const std::vector<hexworld::Pose>& execution, const hexworld::WorldState& after,
                                follower::Feedback feedback, bool terminated, double seconds,
                                std::optional<hexworld::WorldState>& next) {
  InteractionRecord r;
  r.round = round;
  r.game = game;
  r.index = index;
  r.state = turn.state;
  r.follower_start = turn.follower_start;
  r.leader_actions = turn.leader_actions;
  r.plan = turn.plan;
  r.sample = turn.sample;
  r.execution = execution;
  r.feedback = feedback;
  r.terminated = terminated;
  r.seconds = seconds;
  r.score_after = after.score();
  next = after;
  if (next->turn() == hexworld::Agent::Follower) next->end_turn();
  return r;
}

std::uint64_t Seeds::world(int round, int game) const {
  return derive_seed(base, {static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(game)}, "world");
}
std::uint64_t Seeds::sample(int round, int game, int index) const {
  return derive_seed(base, {static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(game),
                            static_cast<std::uint64_t>(index)}, "sample");
}
std::uint64_t Seeds::follow(int round, int game, int index) const {
  return derive_seed(base, {static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(game),
                            static_cast<std::uint64_t>(index)}, "follower");
}

GameResult play_game(const InstructionSource& source, FollowerAgent& follower, const hexworld::WorldConfig& world,
                     int max_instructions, const Seeds& seeds, int round, int game) {
  GameResult g;
  std::optional<hexworld::WorldState> state = hexworld::new_world(seeds.world(round, game), world);
  for (int i = 0; i < max_instructions; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    auto turn = prepare_turn(*state, source, seeds.sample(round, game, i));
    if (!turn) break;
    auto res = follower.follow(*turn->follower_start, turn->sample.tokens, seeds.follow(round, game, i));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    g.records.push_back(complete_turn(*turn, round, game, i, res.trace.poses, res.trace.final_state, res.feedback,
                                      res.terminated, secs, state));
  }
  g.score = state->score();
  return g;
}

// ---- rounds -------------------------------------------------------------------------

std::vector<bandit::Example> bootstrap_d0(int count, std::uint64_t seed, const hexworld::WorldConfig& world,
                                          int max_instructions, int max_len) {
  if (count < 1) throw std::invalid_argument("initial dataset size must be at least 1");
  OracleSource oracle;
  SimulatedFollower literal(follower::CompetenceProfile{});
  const Seeds seeds{derive_seed(seed, {}, "bootstrap")};
  std::vector<bandit::Example> out;
  for (int game = 0; static_cast<int>(out.size()) < count; ++game) {
    auto g = play_game(oracle, literal, world, max_instructions, seeds, 0, game);
    for (const auto& r : g.records) {
      if (static_cast<int>(r.sample.tokens.tokens.size()) > max_len) continue;
      out.push_back({r.state, r.plan, r.sample.tokens, 1, 0.0, false, r.id()});
      if (static_cast<int>(out.size()) == count) break;
    }
  }
  return out;
}

metrics::Outcome outcome_of(const InteractionRecord& r) {
  metrics::Outcome o;
  o.target_cards = static_cast<int>(r.plan.target_cards.size());
  o.completed = metrics::task_completion(r.plan, r.execution);
  const auto exec = r.execution.empty() ? std::vector<hexworld::Pose>{r.plan.start} : r.execution;
  o.emd = metrics::emd(metrics::path_to_distribution(r.plan.poses), metrics::path_to_distribution(exec));
  o.feedback = r.feedback;
  o.terminated = r.terminated;
  return o;
}

namespace {

metrics::RoundReport summarize_records(int round, const std::vector<InteractionRecord>& recs,
                                       const std::vector<int>& scores,
                                       const std::vector<bandit::Example>& dataset) {
  std::vector<metrics::Outcome> outcomes;
  std::vector<synthlang::Instruction> xs;
  for (const auto& r : recs) {
    outcomes.push_back(outcome_of(r));
    xs.push_back(r.sample.tokens);
  }
  auto rep = metrics::summarize(round, outcomes, scores, xs);
  for (const auto& e : dataset) (e.y > 0 ? rep.positive_examples : rep.negative_examples)++;
  return rep;
}

}  // namespace

metrics::RoundReport report_for(int round, const std::vector<GameResult>& games,
                                const std::vector<bandit::Example>& dataset) {
  std::vector<InteractionRecord> recs;
  std::vector<int> scores;
  for (const auto& g : games) {
    recs.insert(recs.end(), g.records.begin(), g.records.end());
    scores.push_back(g.score);
  }
  return summarize_records(round, recs, scores, dataset);
}

metrics::RoundReport report_for(int round, const std::vector<InteractionRecord>& recs,
                                const std::vector<bandit::Example>& dataset) {
  // Final game scores are the score after each game's last record.
  std::map<int, int> last;
  for (const auto& r : recs) last[r.game] = r.score_after;
  std::vector<int> scores;
  for (auto [g, s] : last) scores.push_back(s);
  return summarize_records(round, recs, scores, dataset);
}

void save_ensemble(const fs::path& dir, const bandit::Ensemble& e) {
  fs::create_directories(dir);
  json meta = {{"format", "hexbandit-ensemble"}, {"version", 1}, {"config", genmodel::to_json(e.config)},
               {"member_seeds", e.member_seeds}};
  std::ofstream(dir / "ensemble.json") << meta.dump(2) << '\n';
  for (std::size_t k = 0; k < e.members.size(); ++k) {
    std::ofstream out(dir / ("member-" + std::to_string(k) + ".json"));
    out << e.members[k].checkpoint(false).dump() << '\n';
    if (!out) throw std::runtime_error("failed writing checkpoint in " + dir.string());
  }
}

bandit::Ensemble load_ensemble(const fs::path& dir) {
  std::ifstream in(dir / "ensemble.json");
  if (!in) throw std::runtime_error("no ensemble in " + dir.string());
  const json meta = json::parse(in);
  if (meta.value("format", "") != "hexbandit-ensemble") throw std::runtime_error("not an ensemble: " + dir.string());
  bandit::Ensemble e;
  e.config = genmodel::model_config_from_json(meta.at("config"));
  e.member_seeds = meta.at("member_seeds").get<std::vector<std::uint64_t>>();
  for (std::size_t k = 0; k < e.member_seeds.size(); ++k) {
    std::ifstream m(dir / ("member-" + std::to_string(k) + ".json"));
    if (!m) throw std::runtime_error("missing member " + std::to_string(k) + " in " + dir.string());
    e.members.emplace_back(e.config, e.member_seeds[k]);
    e.members.back().load_checkpoint(json::parse(m));
  }
  return e;
}

namespace {

std::unique_ptr<FollowerAgent> make_follower(const ExperimentConfig& cfg) {
  if (cfg.follower != "sim")
    throw std::invalid_argument("human followers join through the session service, not batch runs");
  const auto profile = cfg.profiles_path.empty() ? follower::builtin_profile(cfg.profile)
                                                 : follower::load_profiles(cfg.profiles_path).at(cfg.profile);
  return std::make_unique<SimulatedFollower>(profile);
}

}  // namespace

Evaluation evaluate(const bandit::Ensemble& ensemble, const ExperimentConfig& cfg, FollowerAgent& follower,
                    int round, int games) {
  EnsembleSource source(ensemble, cfg.temperature, cfg.tempered_behavior);
  const Seeds seeds{cfg.seed};
  Evaluation ev;
  for (int g = 0; g < games; ++g)
    ev.games.push_back(play_game(source, follower, cfg.world, cfg.max_instructions, seeds, round, g));
  ev.report = report_for(round, ev.games, {});
  return ev;
}

Experiment::Experiment(ExperimentConfig cfg, fs::path dir, Logger log)
    : cfg_(std::move(cfg)), dir_(std::move(dir)), log_(std::move(log)) {
  cfg_.validate();
}

FollowerAgent& Experiment::follower() {
  if (!follower_) follower_ = make_follower(cfg_);
  return *follower_;
}

void Experiment::log(const std::string& msg) const {
  if (log_) log_(msg);
}

fs::path Experiment::round_dir(int r) const { return dir_ / ("round-" + std::to_string(r)); }

void Experiment::init_data() {
  fs::create_directories(dir_);
  std::ofstream(dir_ / "config.json") << to_json(cfg_).dump(2) << '\n';
  if (fs::exists(round_dir(0) / "dataset.jsonl")) return;
  log("building initial dataset of " + std::to_string(cfg_.d0_size) + " examples");
  auto d0 = bootstrap_d0(cfg_.d0_size, cfg_.seed, cfg_.world, cfg_.max_instructions, cfg_.model.max_len);
  records::save_round_data(round_dir(0), {}, d0);
}

std::vector<std::vector<bandit::Example>> Experiment::datasets_through(int r) const {
  std::vector<std::vector<bandit::Example>> out;
  for (int q = 0; q <= r; ++q) out.push_back(records::load_round_data(round_dir(q)).dataset);
  return out;
}

void Experiment::train_initial() {
  init_data();
  const auto t0 = std::chrono::steady_clock::now();
  auto ens = bandit::Ensemble::create(cfg_.model, cfg_.members(), derive_seed(cfg_.seed, {}, "ensemble"));
  bandit::train_round(bandit::TrainMode::Retrain, datasets_through(0), ens, cfg_.train,
                      derive_seed(cfg_.seed, {0}, "train"));
  save_ensemble(round_dir(1) / "checkpoints", ens);
  log("trained initial ensemble in " +
      std::to_string(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()) + " s");
}

metrics::RoundReport Experiment::run_round(int r) {
  if (r < 1 || r > cfg_.rounds) throw std::invalid_argument("round out of range");
  const auto t0 = std::chrono::steady_clock::now();
  auto ens = load_ensemble(round_dir(r) / "checkpoints");
  // The ensemble stays frozen while games are played.
  auto ev = evaluate(ens, cfg_, follower(), r, cfg_.games_per_round);
  std::vector<InteractionRecord> recs;
  std::vector<bandit::Example> dataset;
  for (const auto& g : ev.games)
    for (const auto& rec : g.records) {
      recs.push_back(rec);
      for (auto& e : bandit::construct_examples(rec.interaction(), cfg_.example_variant())) dataset.push_back(e);
    }
  auto report = report_for(r, ev.games, dataset);
  records::save_round_data(round_dir(r), recs, dataset);
  std::ofstream(round_dir(r) / "report.json") << metrics::to_json(report).dump(2) << '\n';
  write_report_csv(round_dir(r) / "report.csv", {report});
  const double collect_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::ostringstream msg;
  msg.precision(3);
  msg << "round " << r << ": completion " << report.completion << ", emd " << report.mean_emd
      << ", perceived correct " << report.perceived_correct_rate << ", vocabulary " << report.vocabulary_size
      << ", examples +" << report.positive_examples << "/-" << report.negative_examples << " (" << collect_s << " s)";
  log(msg.str());

  if (r < cfg_.rounds || cfg_.train_after_last_round) {
    const auto t1 = std::chrono::steady_clock::now();
    auto next = ens;
    try {
      bandit::train_round(cfg_.train_mode(), datasets_through(r), next, cfg_.train,
                          derive_seed(cfg_.seed, {static_cast<std::uint64_t>(r)}, "train"));
    } catch (const diffkit::NonFiniteError& e) {
      std::ofstream(round_dir(r) / "training_error.txt") << e.what() << '\n';
      log(std::string("training diverged, keeping the previous ensemble: ") + e.what());
      next = ens;
    }
    save_ensemble(round_dir(r + 1) / "checkpoints", next);
    log("trained round " + std::to_string(r + 1) + " ensemble in " +
        std::to_string(std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count()) + " s");
  }
  return report;
}

std::vector<metrics::RoundReport> Experiment::run() {
  init_data();
  if (!fs::exists(round_dir(1) / "checkpoints" / "ensemble.json")) train_initial();
  std::vector<metrics::RoundReport> reports;
  for (int r = 1; r <= cfg_.rounds; ++r) reports.push_back(run_round(r));
  write_report_csv(dir_ / "report.csv", reports);
  return reports;
}

std::vector<metrics::RoundReport> read_reports(const fs::path& run_dir) {
  std::vector<metrics::RoundReport> out;
  for (int r = 1;; ++r) {
    const auto p = run_dir / ("round-" + std::to_string(r)) / "report.json";
    if (!fs::exists(p)) break;
    std::ifstream in(p);
    out.push_back(metrics::report_from_json(json::parse(in)));
  }
  return out;
}

void write_report_csv(const fs::path& path, const std::vector<metrics::RoundReport>& reports) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << metrics::csv_header() << '\n';
  for (const auto& r : reports) out << metrics::csv_row(r) << '\n';
}

}  // namespace hexbandit::orchestrator
