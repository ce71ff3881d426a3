#include "hexbandit/genmodel.hpp"

#include <cmath>
#include <limits>

namespace hexbandit::genmodel {

using hexworld::Agent;

void ModelConfig::validate() const {
  if (np < 1 || np % 2 == 0) throw std::invalid_argument("crop side must be odd and positive");
  for (int v : {ns, ns_cell, orient_dim, d_model, heads, ffn, decoder_layers, max_plan, max_len, vocab_size})
    if (v <= 0) throw std::invalid_argument("model widths and sizes must be positive");
  if (d_model % heads != 0) throw std::invalid_argument("decoder width must be divisible by heads");
  if (vocab_size <= synthlang::kUnk) throw std::invalid_argument("vocabulary too small");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"ns", c.ns},           {"ns_cell", c.ns_cell},       {"np", c.np},
          {"orient_dim", c.orient_dim}, {"d_model", c.d_model}, {"heads", c.heads},
          {"ffn", c.ffn},         {"decoder_layers", c.decoder_layers},
          {"max_plan", c.max_plan}, {"max_len", c.max_len},     {"vocab_size", c.vocab_size}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.ns = j.value("ns", c.ns);
  c.ns_cell = j.value("ns_cell", c.ns_cell);
  c.np = j.value("np", c.np);
  c.orient_dim = j.value("orient_dim", c.orient_dim);
  c.d_model = j.value("d_model", c.d_model);
  c.heads = j.value("heads", c.heads);
  c.ffn = j.value("ffn", c.ffn);
  c.decoder_layers = j.value("decoder_layers", c.decoder_layers);
  c.max_plan = j.value("max_plan", c.max_plan);
  c.max_len = j.value("max_len", c.max_len);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  return c;
}

namespace {

Mat xavier(Rng& rng, int rows, int cols, double gain = 1.0) {
  const double a = gain * std::sqrt(6.0 / (rows + cols));
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = (2.0 * uniform01(rng) - 1.0) * a;
  return m;
}

Mat normal(Rng& rng, int rows, int cols, double sd) {
  std::normal_distribution<double> n(0.0, sd);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

}  // namespace

GenModel::GenModel(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const int d = cfg_.d_model, V = cfg_.vocab_size, cells = cfg_.np * cfg_.np;
  auto& P = params_;
  auto ln = [&](const std::string& name) {
    P.add(name + ".g", Mat::Ones(1, d));
    P.add(name + ".b", Mat::Zero(1, d));
  };
  auto attn = [&](const std::string& name, int kv_width) {
    P.add(name + ".q", xavier(rng, d, d));
    P.add(name + ".k", xavier(rng, kv_width, d));
    P.add(name + ".v", xavier(rng, kv_width, d));
    P.add(name + ".o", xavier(rng, d, d));
  };
  auto ffn = [&](const std::string& name) {
    P.add(name + ".w1", xavier(rng, d, cfg_.ffn));
    P.add(name + ".b1", Mat::Zero(1, cfg_.ffn));
    P.add(name + ".w2", xavier(rng, cfg_.ffn, d));
    P.add(name + ".b2", Mat::Zero(1, d));
  };

  P.add("embed.property", normal(rng, hexworld::prop::kNumProperties, cfg_.ns, 0.5));
  P.add("cell.w", xavier(rng, cfg_.ns, cfg_.ns_cell));
  P.add("cell.b", Mat::Zero(1, cfg_.ns_cell));
  P.add("step.w", xavier(rng, cells * cfg_.ns_cell, d));
  P.add("step.b", Mat::Zero(1, d));
  P.add("step.orient", normal(rng, hexworld::kDirections, cfg_.orient_dim, 0.5));
  P.add("step.proj.w", xavier(rng, d + cfg_.orient_dim, d));
  P.add("step.proj.b", Mat::Zero(1, d));
  P.add("step.pos", normal(rng, cfg_.max_plan, d, 0.1));
  ln("enc.ln1");
  attn("enc.attn", d);
  ln("enc.ln2");
  ffn("enc.ffn");

  P.add("tok.embed", normal(rng, V, d, 0.3));
  P.add("tok.pos", normal(rng, cfg_.max_len + 1, d, 0.1));
  for (int l = 0; l < cfg_.decoder_layers; ++l) {
    const std::string pre = "dec" + std::to_string(l);
    ln(pre + ".ln1");
    attn(pre + ".self", d);
    ln(pre + ".ln2");
    attn(pre + ".cross", d + cfg_.ns_cell);
    ln(pre + ".ln3");
    ffn(pre + ".ffn");
  }
  ln("out.ln");
  P.add("out.w", normal(rng, d, V, 0.01));
  P.add("out.b", Mat::Zero(1, V));

  output_mask_ = Mat::Zero(1, V);
  output_mask_(0, synthlang::kBos) = -1e9;
  output_mask_(0, synthlang::kUnk) = -1e9;
}

Var GenModel::p(Tape& t, const char* name) const { return t.param(params_.get(name)); }

Var GenModel::norm(Tape& t, Var x, const std::string& prefix) const {
  return diffkit::layer_norm(x, t.param(params_.get(prefix + ".g")), t.param(params_.get(prefix + ".b")));
}

Var GenModel::feed_forward(Tape& t, Var x, const std::string& pre) const {
  auto h = diffkit::relu(diffkit::add_row(diffkit::matmul(x, t.param(params_.get(pre + ".w1"))),
                                          t.param(params_.get(pre + ".b1"))));
  return diffkit::add_row(diffkit::matmul(h, t.param(params_.get(pre + ".w2"))),
                          t.param(params_.get(pre + ".b2")));
}

Var GenModel::block_attention(Tape& t, Var x, Var kv, const std::string& pre, bool causal) const {
  auto q = diffkit::matmul(x, t.param(params_.get(pre + ".q")));
  auto k = diffkit::matmul(kv, t.param(params_.get(pre + ".k")));
  auto v = diffkit::matmul(kv, t.param(params_.get(pre + ".v")));
  const int dh = cfg_.d_model / cfg_.heads;
  std::vector<Var> heads;
  for (int h = 0; h < cfg_.heads; ++h)
    heads.push_back(diffkit::attention(diffkit::slice_cols(q, h * dh, dh), diffkit::slice_cols(k, h * dh, dh),
                                       diffkit::slice_cols(v, h * dh, dh), causal));
  auto joined = cfg_.heads == 1 ? heads[0] : diffkit::concat_cols(heads);
  return diffkit::matmul(joined, t.param(params_.get(pre + ".o")));
}

Var GenModel::encode(Tape& t, const hexworld::WorldState& state, const planner::Plan& plan) const {
  if (plan.poses.empty() || plan.poses.front() != plan.start)
    throw std::invalid_argument("plan poses must begin at the plan start");
  if (plan.start != state.pose(Agent::Follower))
    throw std::invalid_argument("plan does not start at the follower's pose");
  const int L = static_cast<int>(plan.poses.size());
  const int cells = cfg_.np * cfg_.np;

  // Property index lists for every (step, slot).
  std::vector<std::vector<int>> groups;
  groups.reserve(static_cast<std::size_t>(L * cells));
  for (const auto& pose : plan.poses) {
    auto crop = hexworld::rotate_crop(state, pose, cfg_.np);
    for (const auto& ps : crop.cells) groups.emplace_back(ps.idx.begin(), ps.idx.begin() + ps.size);
  }
  auto cell_in = diffkit::gather_sum(p(t, "embed.property"), groups);
  auto cell_enc = diffkit::relu(diffkit::add_row(diffkit::matmul(cell_in, p(t, "cell.w")), p(t, "cell.b")));

  auto mixed = diffkit::relu(
      diffkit::add_row(diffkit::matmul(diffkit::merge_rows(cell_enc, cells), p(t, "step.w")), p(t, "step.b")));
  std::vector<int> orient(static_cast<std::size_t>(L)), pos(static_cast<std::size_t>(L));
  for (int j = 0; j < L; ++j) {
    orient[j] = hexworld::wrap_direction(plan.poses[j].alpha - plan.start.alpha);
    pos[j] = std::min(j, cfg_.max_plan - 1);
  }
  std::vector<Var> parts = {mixed, diffkit::gather_rows(p(t, "step.orient"), orient)};
  auto x = diffkit::add_row(diffkit::matmul(diffkit::concat_cols(parts), p(t, "step.proj.w")), p(t, "step.proj.b"));
  x = diffkit::add(x, diffkit::gather_rows(p(t, "step.pos"), pos));

  // Bidirectional step encoder: one pre-norm self-attention block.
  auto h = diffkit::add(x, block_attention(t, norm(t, x, "enc.ln1"), norm(t, x, "enc.ln1"), "enc.attn", false));
  h = diffkit::add(h, feed_forward(t, norm(t, h, "enc.ln2"), "enc.ffn"));

  std::vector<int> step_of(static_cast<std::size_t>(L * cells));
  for (int i = 0; i < L * cells; ++i) step_of[i] = i / cells;
  std::vector<Var> set_parts = {diffkit::gather_rows(h, step_of), cell_enc};
  return diffkit::concat_cols(set_parts);
}

Encoded GenModel::encode_values(const hexworld::WorldState& state, const planner::Plan& plan) const {
  Tape t(false);
  return {encode(t, state, plan).value()};
}

Var GenModel::decode(Tape& t, Var memory, std::span<const int> input) const {
  if (input.empty() || input[0] != synthlang::kBos) throw std::invalid_argument("decoder input must start with BOS");
  if (static_cast<int>(input.size()) > cfg_.max_len + 1) throw std::invalid_argument("decoder input too long");
  std::vector<int> tok(input.begin(), input.end()), pos(input.size());
  for (std::size_t i = 0; i < tok.size(); ++i) {
    if (tok[i] < 0 || tok[i] >= cfg_.vocab_size) throw std::out_of_range("token id outside the vocabulary");
    pos[i] = static_cast<int>(i);
  }
  auto h = diffkit::add(diffkit::gather_rows(p(t, "tok.embed"), tok), diffkit::gather_rows(p(t, "tok.pos"), pos));
  for (int l = 0; l < cfg_.decoder_layers; ++l) {
    const std::string pre = "dec" + std::to_string(l);
    auto n1 = norm(t, h, pre + ".ln1");
    h = diffkit::add(h, block_attention(t, n1, n1, pre + ".self", true));
    h = diffkit::add(h, block_attention(t, norm(t, h, pre + ".ln2"), memory, pre + ".cross", false));
    h = diffkit::add(h, feed_forward(t, norm(t, h, pre + ".ln3"), pre + ".ffn"));
  }
  auto logits = diffkit::add_row(diffkit::matmul(norm(t, h, "out.ln"), p(t, "out.w")), p(t, "out.b"));
  logits = diffkit::add_row(logits, t.constant(output_mask_, "output mask"));
  return diffkit::log_softmax_rows(logits);
}

std::vector<double> GenModel::next_token_dist(const Encoded& enc, std::span<const int> prefix) const {
  Tape t(false);
  auto lp = decode(t, t.constant(enc.memory, "attention set"), prefix);
  const auto row = lp.value().row(lp.rows() - 1);
  std::vector<double> out(static_cast<std::size_t>(row.size()));
  for (Eigen::Index i = 0; i < row.size(); ++i) out[i] = std::exp(row(i));
  return out;
}

namespace {

// Decoder input and scored targets for an instruction.
void teacher_forcing(const synthlang::Instruction& x, int max_len, std::vector<int>& input,
                     std::vector<int>& target) {
  if (static_cast<int>(x.tokens.size()) > max_len) throw std::invalid_argument("instruction longer than max length");
  input = {synthlang::kBos};
  target.clear();
  for (std::size_t i = 0; i < x.tokens.size(); ++i) {
    target.push_back(x.tokens[i]);
    if (i + 1 < x.tokens.size() || static_cast<int>(x.tokens.size()) < max_len) input.push_back(x.tokens[i]);
  }
  if (static_cast<int>(x.tokens.size()) < max_len) target.push_back(synthlang::kEos);
}

}  // namespace

Var GenModel::sequence_logprob(Tape& t, const hexworld::WorldState& state, const planner::Plan& plan,
                               const synthlang::Instruction& x) const {
  std::vector<int> input, target;
  teacher_forcing(x, cfg_.max_len, input, target);
  auto lp = decode(t, encode(t, state, plan), input);
  std::vector<double> ones(target.size(), 1.0);
  return diffkit::pick_sum(lp, target, ones);
}

double GenModel::sequence_logprob(const Encoded& enc, const synthlang::Instruction& x) const {
  std::vector<int> input, target;
  teacher_forcing(x, cfg_.max_len, input, target);
  Tape t(false);
  auto lp = decode(t, t.constant(enc.memory, "attention set"), input);
  double s = 0;
  for (std::size_t i = 0; i < target.size(); ++i) s += lp.value()(static_cast<Eigen::Index>(i), target[i]);
  return s;
}

double GenModel::sequence_logprob(const hexworld::WorldState& state, const planner::Plan& plan,
                                  const synthlang::Instruction& x) const {
  return sequence_logprob(encode_values(state, plan), x);
}

SampledInstruction GenModel::sample(const Encoded& enc, double temperature, Rng& rng,
                                    bool tempered_behavior) const {
  if (!(temperature > 0.0 && temperature <= 1.0)) throw std::invalid_argument("temperature must be in (0, 1]");
  SampledInstruction out;
  std::vector<int> prefix = {synthlang::kBos};
  double tempered_lp = 0;
  for (int step = 0; step < cfg_.max_len; ++step) {
    auto dist = next_token_dist(enc, prefix);
    // Tempered distribution: proportional to p^(1/temperature).
    std::vector<double> logw(dist.size());
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < dist.size(); ++i) {
      logw[i] = dist[i] > 0 ? std::log(dist[i]) / temperature : -std::numeric_limits<double>::infinity();
      m = std::max(m, logw[i]);
    }
    double z = 0;
    for (double& w : logw) z += std::exp(w - m);
    const double u = uniform01(rng) * z;
    double acc = 0;
    std::size_t pick = dist.size() - 1;
    for (std::size_t i = 0; i < dist.size(); ++i) {
      acc += std::exp(logw[i] - m);
      if (u < acc) {
        pick = i;
        break;
      }
    }
    while (dist[pick] <= 0 && pick > 0) --pick;
    out.logprob_model += std::log(dist[pick]);
    tempered_lp += logw[pick] - m - std::log(z);
    if (static_cast<int>(pick) == synthlang::kEos) break;
    out.tokens.tokens.push_back(static_cast<int>(pick));
    prefix.push_back(static_cast<int>(pick));
  }
  out.truncated = static_cast<int>(out.tokens.tokens.size()) == cfg_.max_len;
  out.logprob_behavior = tempered_behavior ? tempered_lp : out.logprob_model;
  return out;
}

nlohmann::json GenModel::checkpoint(bool with_optimizer_state) const {
  return {{"format", "hexbandit-genmodel"},
          {"version", 1},
          {"config", to_json(cfg_)},
          {"params", params_.to_json(with_optimizer_state)}};
}

void GenModel::load_checkpoint(const nlohmann::json& j) {
  if (j.value("format", "") != "hexbandit-genmodel") throw std::invalid_argument("not a generator checkpoint");
  if (j.value("version", 0) != 1) throw std::invalid_argument("unsupported checkpoint version");
  if (model_config_from_json(j.at("config")) != cfg_)
    throw diffkit::ShapeError("checkpoint model configuration differs from this model");
  params_.load_json(j.at("params"));
}

SampledInstruction ensemble_sample(std::span<const GenModel* const> members, const hexworld::WorldState& state,
                                   const planner::Plan& plan, double temperature, std::uint64_t seed,
                                   bool tempered_behavior) {
  if (members.empty()) throw std::invalid_argument("empty ensemble");
  Rng rng(seed);
  const int k = uniform_int(rng, 0, static_cast<int>(members.size()) - 1);
  const GenModel& m = *members[static_cast<std::size_t>(k)];
  auto s = m.sample(m.encode_values(state, plan), temperature, rng, tempered_behavior);
  s.model_index = k;
  return s;
}

}  // namespace hexbandit::genmodel
