#include "fskv/tape.hpp"

#include <cmath>
#include <cstring>

#include "fskv/error.hpp"

namespace fskv {

// ---------------------------------------------------------------------------
// ParameterSet

ParameterSet::ParameterSet(const ParameterSet& other) : index_(other.index_) {
  params_.reserve(other.params_.size());
  for (const auto& p : other.params_) params_.push_back(std::make_unique<Parameter>(*p));
}

ParameterSet& ParameterSet::operator=(const ParameterSet& other) {
  if (this != &other) {
    ParameterSet copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Parameter& ParameterSet::add(const std::string& name, Eigen::Index rows,
                             Eigen::Index cols) {
  if (index_.count(name)) {
    throw Error(ErrorKind::kConfig, "parameter '" + name + "' defined twice");
  }
  index_[name] = params_.size();
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = Matrix::Zero(rows, cols);
  p->grad = Matrix::Zero(rows, cols);
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParameterSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorKind::kConfig, "no parameter '" + name + "'");
  return *params_[it->second];
}

const Parameter& ParameterSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorKind::kConfig, "no parameter '" + name + "'");
  return *params_[it->second];
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) {
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols()) {
      p->grad = Matrix::Zero(p->value.rows(), p->value.cols());
    } else {
      p->grad.setZero();
    }
  }
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

bool ParameterSet::all_finite() const {
  for (const auto& p : params_) {
    if (!p->value.allFinite()) return false;
  }
  return true;
}

bool operator==(const ParameterSet& a, const ParameterSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& pa = a[i];
    const auto& pb = b[i];
    if (pa.name != pb.name || pa.value.rows() != pb.value.rows() ||
        pa.value.cols() != pb.value.cols()) {
      return false;
    }
    // Bitwise comparison, so NaN payloads and signed zeros count.
    if (std::memcmp(pa.value.data(), pb.value.data(),
                    sizeof(double) * static_cast<std::size_t>(pa.value.size())) != 0) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(Parameter& p) {
  Node n;
  n.source = &p;
  n.param = &p;
  n.needs_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(const Parameter& p) {
  if (grad_enabled_) {
    throw Error(ErrorKind::kConfig,
                "read-only parameter '" + p.name + "' on a gradient tape");
  }
  Node n;
  n.source = &p;
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size() - 1)};
}

const Matrix& Tape::value(Var v) const {
  const auto& n = nodes_[static_cast<std::size_t>(v.id)];
  return n.source ? n.source->value : n.value;
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward back) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(back));
}

Var Tape::record(Matrix value, std::span<const Var> inputs, Backward back) {
  Node n;
  n.value = std::move(value);
  if (grad_enabled_) {
    for (auto in : inputs) {
      if (needs_grad(in)) {
        n.needs_grad = true;
        break;
      }
    }
    if (n.needs_grad) n.back = std::move(back);
  }
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size() - 1)};
}

Matrix& Tape::grad_slot(Var v) {
  auto& n = nodes_[static_cast<std::size_t>(v.id)];
  Matrix& g = n.param ? n.param->grad : n.grad;
  const Matrix& val = n.param ? n.param->value : n.value;
  if (g.rows() != val.rows() || g.cols() != val.cols()) {
    g = Matrix::Zero(val.rows(), val.cols());
  }
  return g;
}

void Tape::accumulate(Var v, const Matrix& g) {
  if (!needs_grad(v)) return;
  grad_slot(v) += g;
}

void Tape::accumulate_row(Var v, Eigen::Index row, const RowVector& g) {
  if (!needs_grad(v)) return;
  grad_slot(v).row(row) += g;
}

void Tape::backward(Var loss) {
  if (!grad_enabled_) {
    throw Error(ErrorKind::kConfig, "backward() on a tape without gradients");
  }
  if (value(loss).size() != 1) {
    throw Error(ErrorKind::kConfig, "backward() needs a scalar loss");
  }
  nodes_[static_cast<std::size_t>(loss.id)].grad = Matrix::Ones(1, 1);
  for (int i = loss.id; i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.back || n.grad.size() == 0) continue;
    const Matrix g = std::move(n.grad);
    n.back(*this, g);
  }
}

Var Bindings::operator()(const std::string& name) {
  auto it = cache_.find(name);
  if (it != cache_.end()) return it->second;
  Var v = mutable_ ? tape_.param(mutable_->at(name)) : tape_.param(const_->at(name));
  cache_.emplace(name, v);
  return v;
}

// ---------------------------------------------------------------------------
// Ops

namespace op {

Var matmul(Tape& t, Var a, Var b) {
  return t.record(t.value(a) * t.value(b), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.needs_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

Var matmul_nt(Tape& t, Var a, Var b) {
  return t.record(t.value(a) * t.value(b).transpose(), {a, b},
                  [a, b](Tape& t, const Matrix& g) {
                    if (t.needs_grad(a)) t.accumulate(a, g * t.value(b));
                    if (t.needs_grad(b)) t.accumulate(b, g.transpose() * t.value(a));
                  });
}

Var add(Tape& t, Var a, Var b) {
  return t.record(t.value(a) + t.value(b), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Tape& t, Var a, Var b) {
  return t.record(t.value(a) - t.value(b), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.needs_grad(b)) t.accumulate(b, -g);
  });
}

Var mul(Tape& t, Var a, Var b) {
  return t.record(t.value(a).cwiseProduct(t.value(b)), {a, b},
                  [a, b](Tape& t, const Matrix& g) {
                    if (t.needs_grad(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
                    if (t.needs_grad(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
                  });
}

Var scale(Tape& t, Var a, double s) {
  return t.record(t.value(a) * s, {a},
                  [a, s](Tape& t, const Matrix& g) { t.accumulate(a, g * s); });
}

Var add_row(Tape& t, Var a, Var row) {
  Matrix out = t.value(a).rowwise() + t.value(row).row(0);
  return t.record(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.needs_grad(row)) t.accumulate(row, g.colwise().sum());
  });
}

Var linear(Tape& t, Var x, Var w, Var b) {
  Matrix out = t.value(x) * t.value(w);
  out.rowwise() += t.value(b).row(0);
  return t.record(std::move(out), {x, w, b}, [x, w, b](Tape& t, const Matrix& g) {
    if (t.needs_grad(x)) t.accumulate(x, g * t.value(w).transpose());
    if (t.needs_grad(w)) t.accumulate(w, t.value(x).transpose() * g);
    if (t.needs_grad(b)) t.accumulate(b, g.colwise().sum());
  });
}

Var sigmoid(Tape& t, Var a) {
  Matrix y = t.value(a).unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  Matrix dy = (y.array() * (1.0 - y.array())).matrix();
  return t.record(std::move(y), {a}, [a, dy = std::move(dy)](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(dy));
  });
}

Var tanh(Tape& t, Var a) {
  Matrix y = t.value(a).array().tanh().matrix();
  Matrix dy = (1.0 - y.array().square()).matrix();
  return t.record(std::move(y), {a}, [a, dy = std::move(dy)](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(dy));
  });
}

Var gelu(Tape& t, Var a) {
  constexpr double c = 0.7978845608028654;  // sqrt(2 / pi)
  constexpr double k = 0.044715;
  const Matrix& x = t.value(a);
  Matrix y(x.rows(), x.cols());
  Matrix dy(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    const double th = std::tanh(c * (v + k * v * v * v));
    y.data()[i] = 0.5 * v * (1.0 + th);
    dy.data()[i] = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * c * (1.0 + 3.0 * k * v * v);
  }
  return t.record(std::move(y), {a}, [a, dy = std::move(dy)](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(dy));
  });
}

Var exp(Tape& t, Var a) {
  Matrix y = t.value(a).array().exp().matrix();
  Matrix keep = y;
  return t.record(std::move(y), {a}, [a, keep = std::move(keep)](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(keep));
  });
}

Var softmax_rows(Tape& t, Var a) {
  const Matrix& x = t.value(a);
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  Matrix keep = y;
  return t.record(std::move(y), {a}, [a, y = std::move(keep)](Tape& t, const Matrix& g) {
    Matrix gy = g.cwiseProduct(y);
    Matrix dx = gy - (y.array().colwise() * gy.rowwise().sum().array()).matrix();
    t.accumulate(a, dx);
  });
}

Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps) {
  const Matrix& in = t.value(x);
  const Eigen::Index rows = in.rows();
  const Eigen::Index cols = in.cols();
  Matrix xhat(rows, cols);
  Eigen::VectorXd inv_std(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mean = in.row(r).mean();
    const double var = (in.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (in.row(r).array() - mean) * inv_std(r);
  }
  Matrix out = xhat.array().rowwise() * t.value(gain).row(0).array();
  out.rowwise() += t.value(bias).row(0);
  return t.record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& t, const Matrix& g) {
        if (t.needs_grad(gain)) t.accumulate(gain, g.cwiseProduct(xhat).colwise().sum());
        if (t.needs_grad(bias)) t.accumulate(bias, g.colwise().sum());
        if (!t.needs_grad(x)) return;
        Matrix dxhat = g.array().rowwise() * t.value(gain).row(0).array();
        Matrix dx(dxhat.rows(), dxhat.cols());
        for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
          const double m1 = dxhat.row(r).mean();
          const double m2 = dxhat.row(r).dot(xhat.row(r)) / static_cast<double>(dxhat.cols());
          dx.row(r) = inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
        }
        t.accumulate(x, dx);
      });
}

Var slice_rows(Tape& t, Var a, Eigen::Index start, Eigen::Index count) {
  Matrix out = t.value(a).middleRows(start, count);
  return t.record(std::move(out), {a}, [a, start, count](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(t.value(a).rows(), t.value(a).cols());
    full.middleRows(start, count) = g;
    t.accumulate(a, full);
  });
}

Var slice_cols(Tape& t, Var a, Eigen::Index start, Eigen::Index count) {
  Matrix out = t.value(a).middleCols(start, count);
  return t.record(std::move(out), {a}, [a, start, count](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(t.value(a).rows(), t.value(a).cols());
    full.middleCols(start, count) = g;
    t.accumulate(a, full);
  });
}

Var concat_rows(Tape& t, std::span<const Var> parts) {
  Eigen::Index rows = 0;
  const Eigen::Index cols = t.value(parts[0]).cols();
  for (auto p : parts) rows += t.value(p).rows();
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (auto p : parts) {
    out.middleRows(r, t.value(p).rows()) = t.value(p);
    r += t.value(p).rows();
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [ins](Tape& t, const Matrix& g) {
    Eigen::Index r = 0;
    for (auto p : ins) {
      const auto n = t.value(p).rows();
      if (t.needs_grad(p)) t.accumulate(p, g.middleRows(r, n));
      r += n;
    }
  });
}

Var concat_cols(Tape& t, std::span<const Var> parts) {
  Eigen::Index cols = 0;
  const Eigen::Index rows = t.value(parts[0]).rows();
  for (auto p : parts) cols += t.value(p).cols();
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (auto p : parts) {
    out.middleCols(c, t.value(p).cols()) = t.value(p);
    c += t.value(p).cols();
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [ins](Tape& t, const Matrix& g) {
    Eigen::Index c = 0;
    for (auto p : ins) {
      const auto n = t.value(p).cols();
      if (t.needs_grad(p)) t.accumulate(p, g.middleCols(c, n));
      c += n;
    }
  });
}

Var mean_rows(Tape& t, Var a) {
  const Matrix& x = t.value(a);
  Matrix out = x.colwise().mean();
  return t.record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    const auto rows = t.value(a).rows();
    Matrix full = g.replicate(rows, 1) / static_cast<double>(rows);
    t.accumulate(a, full);
  });
}

Var gather_rows(Tape& t, Var table, std::span<const std::size_t> ids) {
  const Matrix& tab = t.value(table);
  Matrix out(static_cast<Eigen::Index>(ids.size()), tab.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = tab.row(static_cast<Eigen::Index>(ids[i]));
  }
  std::vector<std::size_t> keep(ids.begin(), ids.end());
  return t.record(std::move(out), {table}, [table, keep = std::move(keep)](Tape& t, const Matrix& g) {
    for (std::size_t i = 0; i < keep.size(); ++i) {
      t.accumulate_row(table, static_cast<Eigen::Index>(keep[i]),
                       g.row(static_cast<Eigen::Index>(i)));
    }
  });
}

Var class_means(Tape& t, Var x, std::span<const int> classes, int num_classes) {
  const Matrix& in = t.value(x);
  Matrix out = Matrix::Zero(num_classes, in.cols());
  std::vector<double> counts(static_cast<std::size_t>(num_classes), 0.0);
  for (Eigen::Index i = 0; i < in.rows(); ++i) {
    const int c = classes[static_cast<std::size_t>(i)];
    if (c < 0) continue;
    out.row(c) += in.row(i);
    counts[static_cast<std::size_t>(c)] += 1.0;
  }
  for (int c = 0; c < num_classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0) out.row(c) /= counts[static_cast<std::size_t>(c)];
  }
  std::vector<int> keep(classes.begin(), classes.end());
  return t.record(std::move(out), {x},
                  [x, keep = std::move(keep), counts = std::move(counts)](Tape& t, const Matrix& g) {
                    const auto& in = t.value(x);
                    Matrix dx = Matrix::Zero(in.rows(), in.cols());
                    for (Eigen::Index i = 0; i < in.rows(); ++i) {
                      const int c = keep[static_cast<std::size_t>(i)];
                      if (c < 0) continue;
                      dx.row(i) = g.row(c) / counts[static_cast<std::size_t>(c)];
                    }
                    t.accumulate(x, dx);
                  });
}

Var pairwise_distance(Tape& t, Var x, Var p) {
  const Matrix& a = t.value(x);
  const Matrix& b = t.value(p);
  Matrix d(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index c = 0; c < b.rows(); ++c) {
      d(i, c) = (a.row(i) - b.row(c)).norm();
    }
  }
  Matrix keep = d;
  return t.record(std::move(d), {x, p}, [x, p, dist = std::move(keep)](Tape& t, const Matrix& g) {
    const Matrix& a = t.value(x);
    const Matrix& b = t.value(p);
    Matrix w(dist.rows(), dist.cols());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      w.data()[i] = dist.data()[i] > 0 ? g.data()[i] / dist.data()[i] : 0.0;
    }
    if (t.needs_grad(x)) {
      Matrix dx = (a.array().colwise() * w.rowwise().sum().array()).matrix() - w * b;
      t.accumulate(x, dx);
    }
    if (t.needs_grad(p)) {
      Matrix dp = (b.array().colwise() * w.colwise().sum().transpose().array()).matrix() -
                  w.transpose() * a;
      t.accumulate(p, dp);
    }
  });
}

Var cross_entropy(Tape& t, Var logits, std::span<const int> targets) {
  const Matrix& z = t.value(logits);
  Matrix prob(z.rows(), z.cols());
  double total = 0.0;
  int count = 0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double m = z.row(r).maxCoeff();
    prob.row(r) = (z.row(r).array() - m).exp().matrix();
    const double s = prob.row(r).sum();
    prob.row(r) /= s;
    const int target = targets[static_cast<std::size_t>(r)];
    if (target < 0) continue;
    total += -(z(r, target) - m - std::log(s));
    ++count;
  }
  Matrix out(1, 1);
  out(0, 0) = count > 0 ? total / count : 0.0;
  std::vector<int> keep(targets.begin(), targets.end());
  return t.record(std::move(out), {logits},
                  [logits, prob = std::move(prob), keep = std::move(keep), count](
                      Tape& t, const Matrix& g) {
                    if (count == 0) return;
                    Matrix d = prob;
                    for (Eigen::Index r = 0; r < d.rows(); ++r) {
                      const int target = keep[static_cast<std::size_t>(r)];
                      if (target < 0) {
                        d.row(r).setZero();
                      } else {
                        d(r, target) -= 1.0;
                      }
                    }
                    t.accumulate(logits, d * (g(0, 0) / count));
                  });
}

Var mse(Tape& t, Var a, Var b) {
  Matrix diff = t.value(a) - t.value(b);
  Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm() / static_cast<double>(diff.size());
  return t.record(std::move(out), {a, b}, [a, b, diff = std::move(diff)](Tape& t, const Matrix& g) {
    const double s = 2.0 * g(0, 0) / static_cast<double>(diff.size());
    if (t.needs_grad(a)) t.accumulate(a, diff * s);
    if (t.needs_grad(b)) t.accumulate(b, diff * -s);
  });
}

Var kl_std_normal(Tape& t, Var mu, Var log_var) {
  const Matrix& m = t.value(mu);
  const Matrix& lv = t.value(log_var);
  const double rows = static_cast<double>(m.rows());
  Matrix out(1, 1);
  out(0, 0) = 0.5 * (m.array().square() + lv.array().exp() - 1.0 - lv.array()).sum() / rows;
  return t.record(std::move(out), {mu, log_var}, [mu, log_var, rows](Tape& t, const Matrix& g) {
    const double s = g(0, 0) / rows;
    if (t.needs_grad(mu)) t.accumulate(mu, t.value(mu) * s);
    if (t.needs_grad(log_var)) {
      t.accumulate(log_var, ((t.value(log_var).array().exp() - 1.0) * (0.5 * s)).matrix());
    }
  });
}

Var linear_combination(Tape& t, std::span<const Var> parts, std::span<const double> coeffs) {
  double total = 0.0;
  for (std::size_t i = 0; i < parts.size(); ++i) total += coeffs[i] * t.scalar(parts[i]);
  Matrix out(1, 1);
  out(0, 0) = total;
  std::vector<Var> ins(parts.begin(), parts.end());
  std::vector<double> cs(coeffs.begin(), coeffs.end());
  return t.record(std::move(out), parts, [ins, cs](Tape& t, const Matrix& g) {
    for (std::size_t i = 0; i < ins.size(); ++i) {
      if (t.needs_grad(ins[i])) t.accumulate(ins[i], g * cs[i]);
    }
  });
}

Var ordered_box(Tape& t, Var units) {
  const Matrix& s = t.value(units);
  Matrix out(1, 4);
  out(0, 0) = s(0, 0);
  out(0, 1) = s(0, 1);
  out(0, 2) = s(0, 0) + (1.0 - s(0, 0)) * s(0, 2);
  out(0, 3) = s(0, 1) + (1.0 - s(0, 1)) * s(0, 3);
  return t.record(std::move(out), {units}, [units](Tape& t, const Matrix& g) {
    const Matrix& s = t.value(units);
    Matrix d(1, 4);
    d(0, 0) = g(0, 0) + g(0, 2) * (1.0 - s(0, 2));
    d(0, 1) = g(0, 1) + g(0, 3) * (1.0 - s(0, 3));
    d(0, 2) = g(0, 2) * (1.0 - s(0, 0));
    d(0, 3) = g(0, 3) * (1.0 - s(0, 1));
    t.accumulate(units, d);
  });
}

namespace {
constexpr double kAspectEps = 1e-6;
}

Var window_inputs(Tape& t, Var window) {
  const Matrix& b = t.value(window);
  const double x1 = b(0, 0), y1 = b(0, 1), x2 = b(0, 2), y2 = b(0, 3);
  const double w = x2 - x1;
  const double h = y2 - y1;
  Matrix out = Matrix::Zero(1, 14);
  out << x1, y1, x2, y2, w, h, w, h, w * h,
      (w + kAspectEps) / (w + h + 2 * kAspectEps), 0.5 * (x1 + x2), 0.5 * (y1 + y2), 0.0, 0.0;
  return t.record(std::move(out), {window}, [window](Tape& t, const Matrix& g) {
    const Matrix& b = t.value(window);
    const double w = b(0, 2) - b(0, 0);
    const double h = b(0, 3) - b(0, 1);
    const double s = w + h + 2 * kAspectEps;
    const double da_dw = (h + kAspectEps) / (s * s);
    const double da_dh = -(w + kAspectEps) / (s * s);
    const double dw = g(0, 4) + g(0, 6) + g(0, 8) * h + g(0, 9) * da_dw;
    const double dh = g(0, 5) + g(0, 7) + g(0, 8) * w + g(0, 9) * da_dh;
    Matrix d(1, 4);
    d(0, 0) = g(0, 0) - dw + 0.5 * g(0, 10);
    d(0, 1) = g(0, 1) - dh + 0.5 * g(0, 11);
    d(0, 2) = g(0, 2) + dw + 0.5 * g(0, 10);
    d(0, 3) = g(0, 3) + dh + 0.5 * g(0, 11);
    t.accumulate(window, d);
  });
}

}  // namespace op

}  // namespace fskv
