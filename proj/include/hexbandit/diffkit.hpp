#pragma once

// Small reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records one computation graph. Values live in the tape; parameters
// live in a ParamStore and are referenced (not copied) by the tape, and their
// gradients accumulate in the store. Every op checks its output for
// non-finite values and names itself in the error.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace hexbandit::diffkit {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---- parameters -----------------------------------------------------------------

struct Param {
  std::string name;
  Mat value;
  Mat grad;
  Mat m;  // optimizer moments
  Mat v;
};

class ParamStore {
 public:
  /// Registers a parameter; names are unique and shapes fixed thereafter.
  Param& add(const std::string& name, Mat init);
  Param& get(const std::string& name);
  const Param& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  double grad_norm() const;
  /// Rescales gradients so their global norm is at most max_norm; returns the norm before clipping.
  double clip_grad_norm(double max_norm);

  nlohmann::json to_json(bool with_optimizer_state) const;
  /// Loads values (and moments when present) into already-registered
  /// parameters; names and shapes must match exactly.
  void load_json(const nlohmann::json& j);

 private:
  std::vector<Param> params_;
  std::map<std::string, std::size_t> index_;
};

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}
  /// One update from the gradients currently stored in `store`.
  void step(ParamStore& store);
  long steps() const { return t_; }
  void set_steps(long t) { t_ = t; }
  const AdamWConfig& config() const { return cfg_; }
  AdamWConfig& config() { return cfg_; }

 private:
  AdamWConfig cfg_;
  long t_ = 0;
};

// ---- graph ------------------------------------------------------------------------

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;
  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
};

class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Mat value, std::string name = "constant");
  Var param(Param& p);

  const Mat& value(int id) const;
  /// Gradient of a node after backward(); zero-sized when it received none.
  const Mat& grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).grad; }

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and propagates backwards.
  void backward(Var out);

  std::size_t node_count() const { return nodes_.size(); }

  // Internal: used by the op implementations.
  using Backward = std::function<void(Tape&, int self)>;
  Var push(Mat value, bool needs_grad, Backward back, const char* op);
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  Mat& grad_ref(int id);  // allocates zeros on first use
  const Mat& out_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

 private:
  struct Node {
    Mat own;
    const Mat* external = nullptr;  // parameter value
    Param* param = nullptr;
    Mat grad;
    bool needs_grad = false;
    Backward back;
  };
  std::vector<Node> nodes_;
  bool grad_enabled_;
};

// ---- ops --------------------------------------------------------------------------

Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a * b^T
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double s);
Var add_row(Var a, Var row);  // broadcast a 1 x n row over every row of a
Var mul_row(Var a, Var row);
Var relu(Var a);
Var tanh(Var a);
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
/// Softmax(Q K^T * scale [+ causal mask]) V.
Var attention(Var q, Var k, Var v, bool causal);
/// Per-row standardization followed by gain and bias rows.
Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index n);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index n);
Var transpose(Var a);
/// out.row(i) = a.row(idx[i]).
Var gather_rows(Var a, std::span<const int> idx);
/// out.row(i) = sum over k in groups[i] of a.row(k).
Var gather_sum(Var a, const std::vector<std::vector<int>>& groups);
/// Joins each run of `group` consecutive rows into one row.
Var merge_rows(Var a, Eigen::Index group);
Var sum(Var a);
/// sum_i weights[i] * a(i, cols[i]) as a 1x1 value.
Var pick_sum(Var a, std::span<const int> cols, std::span<const double> weights);

}  // namespace hexbandit::diffkit
