#pragma once

// Reverse-mode differentiation over dense row-major matrices.
//
// A Tape records every operation of one forward pass. Parameters enter as
// leaves that alias a Parameter's storage, and their gradients accumulate
// straight into Parameter::grad during backward(). A tape built with
// grad_enabled=false records no closures and serves inference.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fskv {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor>;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

// Named parameter arrays in insertion order. Parameter addresses stay stable.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet& other);
  ParameterSet& operator=(const ParameterSet& other);
  ParameterSet(ParameterSet&&) noexcept = default;
  ParameterSet& operator=(ParameterSet&&) noexcept = default;

  Parameter& add(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grad();
  std::size_t scalar_count() const;
  bool all_finite() const;

  friend bool operator==(const ParameterSet& a, const ParameterSet& b);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t> index_;
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& out_grad)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Matrix value);
  // Leaf aliasing p.value; its gradient accumulates into p.grad.
  Var param(Parameter& p);
  // Read-only leaf; only valid on a tape without gradients.
  Var param(const Parameter& p);

  const Matrix& value(Var v) const;
  double scalar(Var v) const { return value(v)(0, 0); }
  bool needs_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Records an op. `back` is dropped when no input needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward back);
  Var record(Matrix value, std::span<const Var> inputs, Backward back);

  // Gradient accumulation used by backward closures.
  void accumulate(Var v, const Matrix& g);
  void accumulate_row(Var v, Eigen::Index row, const RowVector& g);

  // Seeds d(loss)/d(loss) = 1 and runs closures in reverse order.
  void backward(Var loss);

 private:
  struct Node {
    Matrix value;
    const Parameter* source = nullptr;
    Parameter* param = nullptr;
    Matrix grad;
    bool needs_grad = false;
    Backward back;
  };
  Matrix& grad_slot(Var v);

  bool grad_enabled_;
  std::vector<Node> nodes_;
};

// Enters each named parameter on a tape once. Bound to a mutable set the
// leaves collect gradients; bound to a const set the tape must be gradient-free.
class Bindings {
 public:
  Bindings(Tape& tape, ParameterSet& params) : tape_(tape), mutable_(&params), const_(&params) {}
  Bindings(Tape& tape, const ParameterSet& params) : tape_(tape), const_(&params) {}

  Tape& tape() { return tape_; }
  Var operator()(const std::string& name);

 private:
  Tape& tape_;
  ParameterSet* mutable_ = nullptr;
  const ParameterSet* const_ = nullptr;
  std::map<std::string, Var> cache_;
};

namespace op {

Var matmul(Tape& t, Var a, Var b);
// a * b^T
Var matmul_nt(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
// Adds a 1 x c row to every row of a.
Var add_row(Tape& t, Var a, Var row);
// x * w + b with b broadcast over rows.
Var linear(Tape& t, Var x, Var w, Var b);
Var sigmoid(Tape& t, Var a);
Var tanh(Tape& t, Var a);
// tanh approximation of GELU.
Var gelu(Tape& t, Var a);
Var exp(Tape& t, Var a);
Var softmax_rows(Tape& t, Var a);
Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps = 1e-5);
Var slice_rows(Tape& t, Var a, Eigen::Index start, Eigen::Index count);
Var slice_cols(Tape& t, Var a, Eigen::Index start, Eigen::Index count);
Var concat_rows(Tape& t, std::span<const Var> parts);
Var concat_cols(Tape& t, std::span<const Var> parts);
Var mean_rows(Tape& t, Var a);
// Rows of `table` selected by `ids`.
Var gather_rows(Tape& t, Var table, std::span<const std::size_t> ids);
// Row c = mean of rows of x whose class is c; classes without rows are an
// error for the caller to prevent.
Var class_means(Tape& t, Var x, std::span<const int> classes, int num_classes);
// out(i, c) = || x_i - p_c ||_2. The gradient at zero distance is taken as 0.
Var pairwise_distance(Tape& t, Var x, Var p);
// Mean over rows with target >= 0 of -log softmax(logits)[target].
Var cross_entropy(Tape& t, Var logits, std::span<const int> targets);
// Mean of squared differences over all entries.
Var mse(Tape& t, Var a, Var b);
// Per-row KL(N(mu, exp(log_var)) || N(0, I)) averaged over rows.
Var kl_std_normal(Tape& t, Var mu, Var log_var);
// Sum of coeff[i] * parts[i] for 1 x 1 parts, accumulated in order.
Var linear_combination(Tape& t, std::span<const Var> parts,
                       std::span<const double> coeffs);
// Four unit activations (x1, y1, sx, sy) -> ordered box
// (x1, y1, x1 + (1 - x1) sx, y1 + (1 - y1) sy).
Var ordered_box(Tape& t, Var units);
// Unit-square window (1 x 4) -> the 14 token-input columns an encoder uses:
// layout (x1, y1, x2, y2, w, h) followed by the eight box features.
Var window_inputs(Tape& t, Var window);

}  // namespace op

}  // namespace fskv
