#include "hexbandit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace hexbandit::metrics {

PathDistribution path_to_distribution(const std::vector<Pose>& poses) {
  if (poses.empty()) throw std::invalid_argument("path distribution of an empty pose sequence");
  std::map<Cell, int> counts;
  for (const auto& p : poses) ++counts[p.cell()];
  PathDistribution d;
  for (auto [c, n] : counts) {
    d.support.push_back(c);
    d.weights.push_back(static_cast<double>(n) / static_cast<double>(poses.size()));
  }
  return d;
}

namespace {

void check_distribution(const PathDistribution& d) {
  if (d.support.empty() || d.support.size() != d.weights.size())
    throw std::invalid_argument("distribution needs matching, nonempty support and weights");
  double s = 0;
  for (double w : d.weights) {
    if (!(w >= 0)) throw std::invalid_argument("distribution weights must be non-negative");
    s += w;
  }
  if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("distribution weights must sum to one");
}

// Min-cost flow by successive shortest paths (Bellman-Ford on the residual
// graph). Source -> supply nodes -> demand nodes -> sink.
class TransportSolver {
 public:
  TransportSolver(const std::vector<double>& supply, const std::vector<double>& demand,
                  const std::vector<std::vector<double>>& cost)
      : n_(static_cast<int>(supply.size())), m_(static_cast<int>(demand.size())), adj_(n_ + m_ + 2) {
    const int s = source(), t = sink();
    for (int i = 0; i < n_; ++i) add_edge(s, 1 + i, supply[i], 0.0);
    for (int j = 0; j < m_; ++j) add_edge(1 + n_ + j, t, demand[j], 0.0);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < m_; ++j) add_edge(1 + i, 1 + n_ + j, kInf, cost[i][j]);
  }

  double solve() {
    const double eps = 1e-13;
    double total = 0;
    const int nodes = static_cast<int>(adj_.size());
    for (;;) {
      std::vector<double> dist(nodes, kInf);
      std::vector<int> via(nodes, -1);
      dist[source()] = 0;
      for (int round = 0; round < nodes; ++round) {
        bool changed = false;
        for (int u = 0; u < nodes; ++u) {
          if (dist[u] == kInf) continue;
          for (int e : adj_[u]) {
            const Edge& ed = edges_[e];
            if (ed.cap > eps && dist[u] + ed.cost < dist[ed.to] - 1e-12) {
              dist[ed.to] = dist[u] + ed.cost;
              via[ed.to] = e;
              changed = true;
            }
          }
        }
        if (!changed) break;
      }
      if (via[sink()] < 0) break;
      double push = kInf;
      for (int v = sink(); v != source(); v = edges_[via[v] ^ 1].to) push = std::min(push, edges_[via[v]].cap);
      for (int v = sink(); v != source(); v = edges_[via[v] ^ 1].to) {
        edges_[via[v]].cap -= push;
        edges_[via[v] ^ 1].cap += push;
      }
      total += push * dist[sink()];
    }
    return total;
  }

 private:
  static constexpr double kInf = std::numeric_limits<double>::infinity();
  struct Edge {
    int to;
    double cap;
    double cost;
  };
  int source() const { return 0; }
  int sink() const { return n_ + m_ + 1; }
  void add_edge(int u, int v, double cap, double cost) {
    adj_[u].push_back(static_cast<int>(edges_.size()));
    edges_.push_back({v, cap, cost});
    adj_[v].push_back(static_cast<int>(edges_.size()));
    edges_.push_back({u, 0.0, -cost});
  }

  int n_, m_;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> adj_;
};

}  // namespace

double emd(const PathDistribution& a, const PathDistribution& b) {
  check_distribution(a);
  check_distribution(b);
  std::vector<std::vector<double>> cost(a.support.size(), std::vector<double>(b.support.size()));
  for (std::size_t i = 0; i < a.support.size(); ++i)
    for (std::size_t j = 0; j < b.support.size(); ++j)
      cost[i][j] = hexworld::hex_distance(a.support[i], b.support[j]);
  // Rescale so both sides carry exactly the same mass.
  const double sa = std::accumulate(a.weights.begin(), a.weights.end(), 0.0);
  const double sb = std::accumulate(b.weights.begin(), b.weights.end(), 0.0);
  std::vector<double> wa = a.weights, wb = b.weights;
  for (double& w : wa) w /= sa;
  for (double& w : wb) w /= sb;
  return std::max(0.0, TransportSolver(wa, wb, cost).solve());
}

bool task_completion(const planner::Plan& plan, const std::vector<Pose>& execution) {
  const std::vector<Pose> exec = execution.empty() ? std::vector<Pose>{plan.start} : execution;
  if (plan.target_cards.empty()) return exec.back().cell() == plan.start.cell();
  return std::all_of(plan.target_cards.begin(), plan.target_cards.end(), [&](Cell c) {
    return std::any_of(exec.begin() + 1, exec.end(), [&](const Pose& p) { return p.cell() == c; });
  });
}

LanguageStats language_stats(const std::vector<synthlang::Instruction>& xs) {
  LanguageStats st;
  if (xs.empty()) return st;
  std::set<int> types;
  long tokens = 0;
  for (const auto& x : xs)
    for (int t : x.tokens) {
      if (t == synthlang::kBos || t == synthlang::kEos) continue;
      ++tokens;
      types.insert(t);
    }
  st.mean_length = static_cast<double>(tokens) / static_cast<double>(xs.size());
  st.vocabulary_size = static_cast<int>(types.size());
  return st;
}

RoundReport summarize(int round, const std::vector<Outcome>& outcomes, const std::vector<int>& game_scores,
                      const std::vector<synthlang::Instruction>& instructions) {
  RoundReport r;
  r.round = round;
  r.games = static_cast<int>(game_scores.size());
  r.instructions = static_cast<int>(outcomes.size());
  std::array<int, 4> done{};
  double emd_sum = 0;
  int pc = 0, gr = 0, term = 0, completed = 0;
  for (const auto& o : outcomes) {
    const int k = std::clamp(o.target_cards, 0, 3);
    ++r.instructions_by_cards[k];
    done[k] += o.completed;
    completed += o.completed;
    emd_sum += o.emd;
    pc += o.feedback.perceived_correct;
    gr += o.feedback.grammatical;
    term += o.terminated;
  }
  if (!outcomes.empty()) {
    const double n = static_cast<double>(outcomes.size());
    r.completion = completed / n;
    r.mean_emd = emd_sum / n;
    r.perceived_correct_rate = pc / n;
    r.grammatical_rate = gr / n;
    r.terminated_rate = term / n;
  }
  for (int k = 0; k < 4; ++k)
    r.completion_by_cards[k] = r.instructions_by_cards[k] ? static_cast<double>(done[k]) / r.instructions_by_cards[k] : 0.0;
  if (!game_scores.empty())
    r.mean_score = std::accumulate(game_scores.begin(), game_scores.end(), 0.0) / static_cast<double>(game_scores.size());
  const auto ls = language_stats(instructions);
  r.mean_length = ls.mean_length;
  r.vocabulary_size = ls.vocabulary_size;
  return r;
}

std::string csv_header() {
  return "round,games,instructions,completion,completion_0,completion_1,completion_2,completion_3,"
         "instructions_0,instructions_1,instructions_2,instructions_3,mean_emd,perceived_correct_rate,"
         "grammatical_rate,terminated_rate,mean_score,mean_length,vocabulary_size,positive_examples,"
         "negative_examples";
}

std::string csv_row(const RoundReport& r) {
  std::ostringstream o;
  o.precision(10);
  o << r.round << ',' << r.games << ',' << r.instructions << ',' << r.completion;
  for (double c : r.completion_by_cards) o << ',' << c;
  for (int c : r.instructions_by_cards) o << ',' << c;
  o << ',' << r.mean_emd << ',' << r.perceived_correct_rate << ',' << r.grammatical_rate << ','
    << r.terminated_rate << ',' << r.mean_score << ',' << r.mean_length << ',' << r.vocabulary_size << ','
    << r.positive_examples << ',' << r.negative_examples;
  return o.str();
}

nlohmann::json to_json(const RoundReport& r) {
  return {{"round", r.round},
          {"games", r.games},
          {"instructions", r.instructions},
          {"completion", r.completion},
          {"completion_by_cards", r.completion_by_cards},
          {"instructions_by_cards", r.instructions_by_cards},
          {"mean_emd", r.mean_emd},
          {"perceived_correct_rate", r.perceived_correct_rate},
          {"grammatical_rate", r.grammatical_rate},
          {"terminated_rate", r.terminated_rate},
          {"mean_score", r.mean_score},
          {"mean_length", r.mean_length},
          {"vocabulary_size", r.vocabulary_size},
          {"positive_examples", r.positive_examples},
          {"negative_examples", r.negative_examples}};
}

RoundReport report_from_json(const nlohmann::json& j) {
  RoundReport r;
  r.round = j.at("round");
  r.games = j.at("games");
  r.instructions = j.at("instructions");
  r.completion = j.at("completion");
  r.completion_by_cards = j.at("completion_by_cards");
  r.instructions_by_cards = j.at("instructions_by_cards");
  r.mean_emd = j.at("mean_emd");
  r.perceived_correct_rate = j.at("perceived_correct_rate");
  r.grammatical_rate = j.at("grammatical_rate");
  r.terminated_rate = j.at("terminated_rate");
  r.mean_score = j.at("mean_score");
  r.mean_length = j.at("mean_length");
  r.vocabulary_size = j.at("vocabulary_size");
  r.positive_examples = j.at("positive_examples");
  r.negative_examples = j.at("negative_examples");
  return r;
}

}  // namespace hexbandit::metrics
