#include "hexbandit/diffkit.hpp"

#include <cmath>
#include <limits>

namespace hexbandit::diffkit {

// ---- parameters -----------------------------------------------------------------

Param& ParamStore::add(const std::string& name, Mat init) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  index_[name] = params_.size();
  Param p;
  p.name = name;
  p.grad = Mat::Zero(init.rows(), init.cols());
  p.m = Mat::Zero(init.rows(), init.cols());
  p.v = Mat::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  params_.push_back(std::move(p));
  return params_.back();
}

Param& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return params_[it->second];
}

const Param& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return params_[it->second];
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

double ParamStore::grad_norm() const {
  double s = 0;
  for (const auto& p : params_) s += p.grad.squaredNorm();
  return std::sqrt(s);
}

double ParamStore::clip_grad_norm(double max_norm) {
  const double n = grad_norm();
  if (n > max_norm && n > 0) {
    const double f = max_norm / n;
    for (auto& p : params_) p.grad *= f;
  }
  return n;
}

namespace {

nlohmann::json mat_json(const Mat& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()},
          {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

void read_mat(const nlohmann::json& j, Mat& into, const std::string& what) {
  const auto r = j.at("rows").get<Eigen::Index>(), c = j.at("cols").get<Eigen::Index>();
  if (r != into.rows() || c != into.cols())
    throw ShapeError("shape mismatch while loading " + what + ": stored " + std::to_string(r) + "x" +
                     std::to_string(c) + ", expected " + std::to_string(into.rows()) + "x" +
                     std::to_string(into.cols()));
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != r * c) throw ShapeError("truncated data for " + what);
  into = Eigen::Map<const Mat>(data.data(), r, c);
}

}  // namespace

nlohmann::json ParamStore::to_json(bool with_optimizer_state) const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : params_) {
    nlohmann::json e = {{"name", p.name}, {"value", mat_json(p.value)}};
    if (with_optimizer_state) {
      e["m"] = mat_json(p.m);
      e["v"] = mat_json(p.v);
    }
    out.push_back(std::move(e));
  }
  return out;
}

void ParamStore::load_json(const nlohmann::json& j) {
  if (j.size() != params_.size())
    throw ShapeError("checkpoint has " + std::to_string(j.size()) + " parameters, model has " +
                     std::to_string(params_.size()));
  for (const auto& e : j) {
    const std::string name = e.at("name").get<std::string>();
    Param& p = get(name);
    read_mat(e.at("value"), p.value, name);
    if (e.contains("m")) read_mat(e.at("m"), p.m, name + ".m");
    if (e.contains("v")) read_mat(e.at("v"), p.v, name + ".v");
  }
}

void AdamW::step(ParamStore& store) {
  ++t_;
  const double b1t = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double b2t = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& p : store.params()) {
    p.m = cfg_.beta1 * p.m + (1.0 - cfg_.beta1) * p.grad;
    p.v = cfg_.beta2 * p.v + (1.0 - cfg_.beta2) * p.grad.cwiseProduct(p.grad);
    p.value *= 1.0 - cfg_.lr * cfg_.weight_decay;
    p.value.array() -= cfg_.lr * (p.m.array() / b1t) / ((p.v.array() / b2t).sqrt() + cfg_.eps);
  }
}

// ---- tape ---------------------------------------------------------------------------

const Mat& Var::value() const { return tape->value(id); }

const Mat& Tape::value(int id) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(id));
  return n.external ? *n.external : n.own;
}

Var Tape::constant(Mat value, std::string name) {
  if (!value.allFinite()) throw NonFiniteError("non-finite value in " + name);
  Node n;
  n.own = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Param& p) {
  Node n;
  n.external = &p.value;
  n.param = &p;
  n.needs_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::push(Mat value, bool needs_grad, Backward back, const char* op) {
  if (!value.allFinite()) throw NonFiniteError(std::string("non-finite value produced by ") + op);
  Node n;
  n.own = std::move(value);
  n.needs_grad = needs_grad && grad_enabled_;
  if (n.needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Mat& Tape::grad_ref(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) {
    const Mat& v = n.external ? *n.external : n.own;
    n.grad = Mat::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

void Tape::backward(Var out) {
  if (!grad_enabled_) throw std::logic_error("backward on a tape recorded without gradients");
  if (out.tape != this) throw std::invalid_argument("variable belongs to another tape");
  if (value(out.id).size() != 1) throw ShapeError("backward needs a scalar output");
  grad_ref(out.id)(0, 0) += 1.0;
  for (int i = out.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.param) {
      n.param->grad += n.grad;
    } else if (n.back) {
      n.back(*this, i);
    }
  }
}

// ---- ops ------------------------------------------------------------------------------

namespace {

Tape& tape_of(Var a) {
  if (!a.tape) throw std::invalid_argument("uninitialized variable");
  return *a.tape;
}

void same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::invalid_argument("variables from different tapes");
}

bool ng(Var a) { return a.tape->needs_grad(a.id); }

std::string shape(const Mat& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void require(bool ok, const char* op, const Mat& a, const Mat& b) {
  if (!ok) throw ShapeError(std::string(op) + ": incompatible shapes " + shape(a) + " and " + shape(b));
}

}  // namespace

Var matmul(Var a, Var b) {
  same_tape(a, b);
  Tape& t = tape_of(a);
  require(a.cols() == b.rows(), "matmul", a.value(), b.value());
  Mat out = a.value() * b.value();
  const int ia = a.id, ib = b.id;
  return t.push(std::move(out), ng(a) || ng(b),
                [ia, ib](Tape& t, int self) {
                  const Mat& g = t.out_grad(self);
                  if (t.needs_grad(ia)) t.grad_ref(ia).noalias() += g * t.value(ib).transpose();
                  if (t.needs_grad(ib)) t.grad_ref(ib).noalias() += t.value(ia).transpose() * g;
                },
                "matmul");
}

Var matmul_nt(Var a, Var b) {
  same_tape(a, b);
  Tape& t = tape_of(a);
  require(a.cols() == b.cols(), "matmul_nt", a.value(), b.value());
  Mat out = a.value() * b.value().transpose();
  const int ia = a.id, ib = b.id;
  return t.push(std::move(out), ng(a) || ng(b),
                [ia, ib](Tape& t, int self) {
                  const Mat& g = t.out_grad(self);
                  if (t.needs_grad(ia)) t.grad_ref(ia).noalias() += g * t.value(ib);
                  if (t.needs_grad(ib)) t.grad_ref(ib).noalias() += g.transpose() * t.value(ia);
                },
                "matmul_nt");
}

Var add(Var a, Var b) {
  same_tape(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add", a.value(), b.value());
  const int ia = a.id, ib = b.id;
  return tape_of(a).push(a.value() + b.value(), ng(a) || ng(b),
                         [ia, ib](Tape& t, int self) {
                           const Mat& g = t.out_grad(self);
                           if (t.needs_grad(ia)) t.grad_ref(ia) += g;
                           if (t.needs_grad(ib)) t.grad_ref(ib) += g;
                         },
                         "add");
}

Var sub(Var a, Var b) {
  same_tape(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub", a.value(), b.value());
  const int ia = a.id, ib = b.id;
  return tape_of(a).push(a.value() - b.value(), ng(a) || ng(b),
                         [ia, ib](Tape& t, int self) {
                           const Mat& g = t.out_grad(self);
                           if (t.needs_grad(ia)) t.grad_ref(ia) += g;
                           if (t.needs_grad(ib)) t.grad_ref(ib) -= g;
                         },
                         "sub");
}

Var mul(Var a, Var b) {
  same_tape(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mul", a.value(), b.value());
  const int ia = a.id, ib = b.id;
  return tape_of(a).push(a.value().cwiseProduct(b.value()), ng(a) || ng(b),
                         [ia, ib](Tape& t, int self) {
                           const Mat& g = t.out_grad(self);
                           if (t.needs_grad(ia)) t.grad_ref(ia) += g.cwiseProduct(t.value(ib));
                           if (t.needs_grad(ib)) t.grad_ref(ib) += g.cwiseProduct(t.value(ia));
                         },
                         "mul");
}

Var scale(Var a, double s) {
  const int ia = a.id;
  return tape_of(a).push(a.value() * s, ng(a),
                         [ia, s](Tape& t, int self) { t.grad_ref(ia) += s * t.out_grad(self); },
                         "scale");
}

Var add_row(Var a, Var row) {
  same_tape(a, row);
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row", a.value(), row.value());
  Mat out = a.value().rowwise() + row.value().row(0);
  const int ia = a.id, ir = row.id;
  return tape_of(a).push(std::move(out), ng(a) || ng(row),
                         [ia, ir](Tape& t, int self) {
                           const Mat& g = t.out_grad(self);
                           if (t.needs_grad(ia)) t.grad_ref(ia) += g;
                           if (t.needs_grad(ir)) t.grad_ref(ir) += g.colwise().sum();
                         },
                         "add_row");
}

Var mul_row(Var a, Var row) {
  same_tape(a, row);
  require(row.rows() == 1 && row.cols() == a.cols(), "mul_row", a.value(), row.value());
  Mat out = a.value().array().rowwise() * row.value().row(0).array();
  const int ia = a.id, ir = row.id;
  return tape_of(a).push(std::move(out), ng(a) || ng(row),
                         [ia, ir](Tape& t, int self) {
                           const Mat& g = t.out_grad(self);
                           if (t.needs_grad(ia))
                             t.grad_ref(ia).array() += g.array().rowwise() * t.value(ir).row(0).array();
                           if (t.needs_grad(ir))
                             t.grad_ref(ir) += g.cwiseProduct(t.value(ia)).colwise().sum();
                         },
                         "mul_row");
}

Var relu(Var a) {
  const int ia = a.id;
  return tape_of(a).push(a.value().cwiseMax(0.0), ng(a),
                         [ia](Tape& t, int self) {
                           t.grad_ref(ia).array() +=
                               (t.value(ia).array() > 0.0).select(t.out_grad(self).array(), 0.0);
                         },
                         "relu");
}

Var tanh(Var a) {
  const int ia = a.id;
  return tape_of(a).push(a.value().array().tanh().matrix(), ng(a),
                         [ia](Tape& t, int self) {
                           const Mat& y = t.value(self);
                           t.grad_ref(ia).array() += t.out_grad(self).array() * (1.0 - y.array().square());
                         },
                         "tanh");
}

namespace {

Mat softmax_of(const Mat& x) {
  Mat out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    out.row(i) = (x.row(i).array() - m).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

// Backward of a row softmax: dx = y * (g - sum(g * y)).
void softmax_backward(const Mat& y, const Mat& g, Mat& dx) {
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const double dot = g.row(i).dot(y.row(i));
    dx.row(i).array() += y.row(i).array() * (g.row(i).array() - dot);
  }
}

}  // namespace

Var softmax_rows(Var a) {
  const int ia = a.id;
  return tape_of(a).push(softmax_of(a.value()), ng(a),
                         [ia](Tape& t, int self) {
                           softmax_backward(t.value(self), t.out_grad(self), t.grad_ref(ia));
                         },
                         "softmax_rows");
}

Var log_softmax_rows(Var a) {
  const Mat& x = a.value();
  Mat out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    const double lse = m + std::log((x.row(i).array() - m).exp().sum());
    out.row(i) = x.row(i).array() - lse;
  }
  const int ia = a.id;
  return tape_of(a).push(std::move(out), ng(a),
                         [ia](Tape& t, int self) {
                           const Mat& y = t.value(self);
                           const Mat& g = t.out_grad(self);
                           Mat& dx = t.grad_ref(ia);
                           for (Eigen::Index i = 0; i < y.rows(); ++i) {
                             const double gs = g.row(i).sum();
                             dx.row(i).array() += g.row(i).array() - y.row(i).array().exp() * gs;
                           }
                         },
                         "log_softmax_rows");
}

Var attention(Var q, Var k, Var v, bool causal) {
  same_tape(q, k);
  same_tape(q, v);
  require(q.cols() == k.cols(), "attention(q,k)", q.value(), k.value());
  require(k.rows() == v.rows(), "attention(k,v)", k.value(), v.value());
  if (causal && q.rows() > k.rows()) throw ShapeError("causal attention needs as many keys as queries");
  const double s = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Mat scores = (q.value() * k.value().transpose()) * s;
  if (causal)
    for (Eigen::Index i = 0; i < scores.rows(); ++i)
      for (Eigen::Index j = i + 1; j < scores.cols(); ++j)
        scores(i, j) = -std::numeric_limits<double>::infinity();
  auto weights = std::make_shared<Mat>(softmax_of(scores));
  Mat out = *weights * v.value();
  const int iq = q.id, ik = k.id, iv = v.id;
  return tape_of(q).push(std::move(out), ng(q) || ng(k) || ng(v),
                         [iq, ik, iv, s, weights](Tape& t, int self) {
                           const Mat& g = t.out_grad(self);
                           const Mat& w = *weights;
                           if (t.needs_grad(iv)) t.grad_ref(iv).noalias() += w.transpose() * g;
                           if (!t.needs_grad(iq) && !t.needs_grad(ik)) return;
                           Mat gw = g * t.value(iv).transpose();
                           Mat gs = Mat::Zero(w.rows(), w.cols());
                           softmax_backward(w, gw, gs);
                           gs *= s;
                           if (t.needs_grad(iq)) t.grad_ref(iq).noalias() += gs * t.value(ik);
                           if (t.needs_grad(ik)) t.grad_ref(ik).noalias() += gs.transpose() * t.value(iq);
                         },
                         "attention");
}

Var layer_norm(Var a, Var gain, Var bias, double eps) {
  same_tape(a, gain);
  same_tape(a, bias);
  require(gain.rows() == 1 && gain.cols() == a.cols(), "layer_norm(gain)", a.value(), gain.value());
  require(bias.rows() == 1 && bias.cols() == a.cols(), "layer_norm(bias)", a.value(), bias.value());
  const Mat& x = a.value();
  const double n = static_cast<double>(x.cols());
  auto xhat = std::make_shared<Mat>(x.rows(), x.cols());
  auto inv = std::make_shared<Eigen::VectorXd>(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().sum() / n;
    (*inv)(i) = 1.0 / std::sqrt(var + eps);
    xhat->row(i) = (x.row(i).array() - mu) * (*inv)(i);
  }
  Mat out = (xhat->array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
  const int ia = a.id, ig = gain.id, ib = bias.id;
  return tape_of(a).push(std::move(out), ng(a) || ng(gain) || ng(bias),
                         [ia, ig, ib, xhat, inv, n](Tape& t, int self) {
                           const Mat& g = t.out_grad(self);
                           if (t.needs_grad(ib)) t.grad_ref(ib) += g.colwise().sum();
                           if (t.needs_grad(ig)) t.grad_ref(ig) += g.cwiseProduct(*xhat).colwise().sum();
                           if (!t.needs_grad(ia)) return;
                           Mat gx = g.array().rowwise() * t.value(ig).row(0).array();
                           Mat& dx = t.grad_ref(ia);
                           for (Eigen::Index i = 0; i < gx.rows(); ++i) {
                             const double m1 = gx.row(i).mean();
                             const double m2 = gx.row(i).dot(xhat->row(i)) / n;
                             dx.row(i).array() +=
                                 (*inv)(i) * (gx.row(i).array() - m1 - xhat->row(i).array() * m2);
                           }
                         },
                         "layer_norm");
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  Tape& t = tape_of(parts[0]);
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  bool need = false;
  for (const auto& p : parts) {
    same_tape(parts[0], p);
    require(p.rows() == rows, "concat_cols", parts[0].value(), p.value());
    cols += p.cols();
    need = need || ng(p);
  }
  Mat out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> layout;
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    layout.emplace_back(p.id, c);
    c += p.cols();
  }
  return t.push(std::move(out), need,
                [layout](Tape& t, int self) {
                  const Mat& g = t.out_grad(self);
                  for (auto [id, c0] : layout)
                    if (t.needs_grad(id)) {
                      Mat& d = t.grad_ref(id);
                      d += g.middleCols(c0, d.cols());
                    }
                },
                "concat_cols");
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows of nothing");
  Tape& t = tape_of(parts[0]);
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  bool need = false;
  for (const auto& p : parts) {
    same_tape(parts[0], p);
    require(p.cols() == cols, "concat_rows", parts[0].value(), p.value());
    rows += p.rows();
    need = need || ng(p);
  }
  Mat out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> layout;
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    layout.emplace_back(p.id, r);
    r += p.rows();
  }
  return t.push(std::move(out), need,
                [layout](Tape& t, int self) {
                  const Mat& g = t.out_grad(self);
                  for (auto [id, r0] : layout)
                    if (t.needs_grad(id)) {
                      Mat& d = t.grad_ref(id);
                      d += g.middleRows(r0, d.rows());
                    }
                },
                "concat_rows");
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || n < 0 || start + n > a.cols()) throw ShapeError("slice_cols out of range");
  const int ia = a.id;
  return tape_of(a).push(a.value().middleCols(start, n), ng(a),
                         [ia, start, n](Tape& t, int self) {
                           t.grad_ref(ia).middleCols(start, n) += t.out_grad(self);
                         },
                         "slice_cols");
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || n < 0 || start + n > a.rows()) throw ShapeError("slice_rows out of range");
  const int ia = a.id;
  return tape_of(a).push(a.value().middleRows(start, n), ng(a),
                         [ia, start, n](Tape& t, int self) {
                           t.grad_ref(ia).middleRows(start, n) += t.out_grad(self);
                         },
                         "slice_rows");
}

Var transpose(Var a) {
  const int ia = a.id;
  return tape_of(a).push(a.value().transpose(), ng(a),
                         [ia](Tape& t, int self) { t.grad_ref(ia) += t.out_grad(self).transpose(); },
                         "transpose");
}

Var gather_rows(Var a, std::span<const int> idx) {
  const Mat& x = a.value();
  Mat out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= x.rows()) throw ShapeError("gather_rows index out of range");
    out.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
  }
  const int ia = a.id;
  std::vector<int> ids(idx.begin(), idx.end());
  return tape_of(a).push(std::move(out), ng(a),
                         [ia, ids = std::move(ids)](Tape& t, int self) {
                           const Mat& g = t.out_grad(self);
                           Mat& d = t.grad_ref(ia);
                           for (std::size_t i = 0; i < ids.size(); ++i)
                             d.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
                         },
                         "gather_rows");
}

Var gather_sum(Var a, const std::vector<std::vector<int>>& groups) {
  const Mat& x = a.value();
  Mat out = Mat::Zero(static_cast<Eigen::Index>(groups.size()), x.cols());
  for (std::size_t i = 0; i < groups.size(); ++i)
    for (int k : groups[i]) {
      if (k < 0 || k >= x.rows()) throw ShapeError("gather_sum index out of range");
      out.row(static_cast<Eigen::Index>(i)) += x.row(k);
    }
  const int ia = a.id;
  return tape_of(a).push(std::move(out), ng(a),
                         [ia, groups](Tape& t, int self) {
                           const Mat& g = t.out_grad(self);
                           Mat& d = t.grad_ref(ia);
                           for (std::size_t i = 0; i < groups.size(); ++i)
                             for (int k : groups[i]) d.row(k) += g.row(static_cast<Eigen::Index>(i));
                         },
                         "gather_sum");
}

Var merge_rows(Var a, Eigen::Index group) {
  if (group <= 0 || a.rows() % group != 0) throw ShapeError("merge_rows: rows not divisible by group");
  const Mat& x = a.value();
  // Row-major storage makes this a pure reshape.
  Mat out = Eigen::Map<const Mat>(x.data(), x.rows() / group, x.cols() * group);
  const int ia = a.id;
  return tape_of(a).push(std::move(out), ng(a),
                         [ia](Tape& t, int self) {
                           const Mat& g = t.out_grad(self);
                           Mat& d = t.grad_ref(ia);
                           d += Eigen::Map<const Mat>(g.data(), d.rows(), d.cols());
                         },
                         "merge_rows");
}

Var sum(Var a) {
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  const int ia = a.id;
  return tape_of(a).push(std::move(out), ng(a),
                         [ia](Tape& t, int self) { t.grad_ref(ia).array() += t.out_grad(self)(0, 0); },
                         "sum");
}

Var pick_sum(Var a, std::span<const int> cols, std::span<const double> weights) {
  if (static_cast<Eigen::Index>(cols.size()) != a.rows() || weights.size() != cols.size())
    throw ShapeError("pick_sum needs one column and weight per row");
  const Mat& x = a.value();
  Mat out(1, 1);
  out(0, 0) = 0;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (cols[i] < 0 || cols[i] >= x.cols()) throw ShapeError("pick_sum column out of range");
    out(0, 0) += weights[i] * x(static_cast<Eigen::Index>(i), cols[i]);
  }
  const int ia = a.id;
  std::vector<int> c(cols.begin(), cols.end());
  std::vector<double> w(weights.begin(), weights.end());
  return tape_of(a).push(std::move(out), ng(a),
                         [ia, c = std::move(c), w = std::move(w)](Tape& t, int self) {
                           const double g = t.out_grad(self)(0, 0);
                           Mat& d = t.grad_ref(ia);
                           for (std::size_t i = 0; i < c.size(); ++i)
                             d(static_cast<Eigen::Index>(i), c[i]) += g * w[i];
                         },
                         "pick_sum");
}

}  // namespace hexbandit::diffkit
