#include <csignal>
#include <fstream>
#include <iostream>
#include <mutex>

#include "CLI11.hpp"
#include "hexbandit/orchestrator.hpp"
#include "hexbandit/service.hpp"

namespace fs = std::filesystem;
using namespace hexbandit;
using nlohmann::json;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> rounds;
  std::optional<int> interactions;
  std::optional<std::string> variant;
  std::optional<std::string> follower;
  std::optional<std::string> profile;
  std::string out = "runs";
  int port = 8080;
  std::string checkpoint;
  int round = 1;
  std::string run_dir;
};

orchestrator::ExperimentConfig resolve(const Options& o) {
  auto j = o.config.empty() ? orchestrator::to_json(orchestrator::ExperimentConfig{})
                            : orchestrator::to_json(orchestrator::load_config(o.config));
  if (o.seed) j["seed"] = *o.seed;
  if (o.rounds) j["rounds"] = *o.rounds;
  if (o.interactions) j["games_per_round"] = *o.interactions;
  if (o.variant) j["variant"] = *o.variant;
  if (o.follower) j["follower"] = *o.follower;
  if (o.profile) j["profile"] = *o.profile;
  return orchestrator::config_from_json(j);
}

void log_line(const std::string& m) { std::cerr << "[hexbandit] " << m << std::endl; }

void add_common(CLI::App* c, Options& o) {
  c->add_option("--config", o.config, "experiment config (JSON)")->check(CLI::ExistingFile);
  c->add_option("--seed", o.seed, "base seed");
  c->add_option("--rounds", o.rounds, "number of rounds");
  c->add_option("--interactions", o.interactions, "games per round");
  c->add_option("--variant", o.variant, "full, pos-only, tc-only, no-ensemble or fine-tune");
  c->add_option("--follower", o.follower, "sim or human");
  c->add_option("--profile", o.profile, "simulated follower profile");
  c->add_option("--out", o.out, "directory holding run directories");
}

int cmd_eval(const Options& o) {
  auto cfg = resolve(o);
  const fs::path ckpt = o.checkpoint.empty() ? fs::path(o.out) / cfg.name / ("round-" + std::to_string(o.round)) /
                                                   "checkpoints"
                                             : fs::path(o.checkpoint);
  auto ens = orchestrator::load_ensemble(ckpt);
  orchestrator::Experiment exp(cfg, fs::path(o.out) / cfg.name);
  auto ev = orchestrator::evaluate(ens, cfg, exp.follower(), o.round, cfg.games_per_round);
  std::cout << metrics::to_json(ev.report).dump(2) << std::endl;
  return 0;
}

int cmd_replay(const Options& o) {
  const fs::path dir = o.run_dir.empty() ? fs::path(o.out) / resolve(o).name : fs::path(o.run_dir);
  const auto stored = orchestrator::read_reports(dir);
  if (stored.empty()) throw std::runtime_error("no round reports under " + dir.string());
  int mismatches = 0;
  for (const auto& want : stored) {
    const auto data = records::load_round_data(dir / ("round-" + std::to_string(want.round)));
    const auto got = orchestrator::report_for(want.round, data.records, data.dataset);
    const bool same = metrics::csv_row(got) == metrics::csv_row(want);
    mismatches += !same;
    std::cout << "round " << want.round << ": " << (same ? "matches" : "DIFFERS") << "\n";
    if (!same) std::cout << "  stored   " << metrics::csv_row(want) << "\n  replayed " << metrics::csv_row(got) << "\n";
  }
  return mismatches ? 1 : 0;
}

int cmd_report(const Options& o) {
  const fs::path dir = o.run_dir.empty() ? fs::path(o.out) / resolve(o).name : fs::path(o.run_dir);
  const auto reports = orchestrator::read_reports(dir);
  if (reports.empty()) throw std::runtime_error("no round reports under " + dir.string());
  orchestrator::write_report_csv(dir / "report.csv", reports);
  json series = json::object();
  for (const auto& r : reports) {
    const json row = metrics::to_json(r);
    for (const auto& [k, v] : row.items()) series[k].push_back(v);
  }
  std::ofstream(dir / "series.json") << series.dump(2) << '\n';
  std::cout << metrics::csv_header() << "\n";
  for (const auto& r : reports) std::cout << metrics::csv_row(r) << "\n";
  return 0;
}

service::HttpServer* g_server = nullptr;

int cmd_serve(const Options& o) {
  auto cfg = resolve(o);
  const fs::path dir = fs::path(o.out) / cfg.name;
  const fs::path ckpt = o.checkpoint.empty() ? dir / ("round-" + std::to_string(o.round)) / "checkpoints"
                                             : fs::path(o.checkpoint);
  auto ens = orchestrator::load_ensemble(ckpt);
  orchestrator::EnsembleSource source(ens, cfg.temperature, cfg.tempered_behavior);
  service::ServiceConfig sc;
  sc.max_instructions = cfg.max_instructions;
  sc.world = cfg.world;
  sc.seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(o.round)}, "service");
  sc.round = o.round;
  std::mutex mu;
  std::vector<records::InteractionRecord> collected;
  const fs::path sink_dir = dir / ("human-round-" + std::to_string(o.round));
  service::SessionManager manager(source, sc, [&](const records::InteractionRecord& r) {
    std::lock_guard lock(mu);
    collected.push_back(r);
    records::save_round_data(sink_dir, collected, {});
  });
  service::HttpServer server(manager);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  log_line("serving round " + std::to_string(o.round) + " on port " + std::to_string(o.port));
  if (!server.listen("0.0.0.0", o.port)) throw std::runtime_error("cannot listen on port " + std::to_string(o.port));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual learning of instruction generation from follower behavior"};
  app.require_subcommand(1);
  Options o;

  auto* init = app.add_subcommand("init-data", "build the initial dataset");
  auto* train = app.add_subcommand("train-init", "train the initial ensemble on the initial dataset");
  auto* run = app.add_subcommand("run", "run all rounds of an experiment");
  auto* eval = app.add_subcommand("eval", "evaluate a frozen ensemble on one round's games");
  auto* replay = app.add_subcommand("replay", "recompute round reports from logs and compare");
  auto* serve = app.add_subcommand("serve", "serve games to human followers over HTTP");
  auto* report = app.add_subcommand("report", "aggregate round reports into CSV and plot series");
  for (auto* c : {init, train, run, eval, replay, serve, report}) add_common(c, o);
  for (auto* c : {eval, serve}) {
    c->add_option("--checkpoint", o.checkpoint, "ensemble directory (default: the run's round checkpoints)");
    c->add_option("--round", o.round, "round whose checkpoints and world seeds to use");
  }
  serve->add_option("--port", o.port, "TCP port");
  for (auto* c : {replay, report}) c->add_option("--run", o.run_dir, "run directory");

  CLI11_PARSE(app, argc, argv);
  try {
    if (init->parsed() || train->parsed() || run->parsed()) {
      auto cfg = resolve(o);
      orchestrator::Experiment exp(cfg, fs::path(o.out) / cfg.name, log_line);
      if (init->parsed()) exp.init_data();
      if (train->parsed()) exp.train_initial();
      if (run->parsed()) {
        const auto reports = exp.run();
        std::cout << metrics::csv_header() << "\n";
        for (const auto& r : reports) std::cout << metrics::csv_row(r) << "\n";
      }
      return 0;
    }
    if (eval->parsed()) return cmd_eval(o);
    if (replay->parsed()) return cmd_replay(o);
    if (report->parsed()) return cmd_report(o);
    if (serve->parsed()) return cmd_serve(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 0;
}
