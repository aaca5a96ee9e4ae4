#include "covidmis/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "covidmis/error.hpp"
#include "covidmis/io.hpp"

namespace covidmis::tensor {

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
  }
}

// Splits a shape around `axis` into (outer, axis length, inner).
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i < axis) s.outer *= shape[i];
    else if (i == axis) s.len = shape[i];
    else s.inner *= shape[i];
  }
  return s;
}

bool same_tape(Var a, Var b) { return &a.tape() == &b.tape(); }

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("shape " + shape_string(shape_) + " needs " + std::to_string(shape_size(shape_)) +
                     " elements, got " + std::to_string(data_.size()));
  }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

Parameter::Parameter(std::string name, Tensor value)
    : name(std::move(name)), value(std::move(value)), grad(this->value.shape(), 0.0) {}

// ---- Var / Tape -------------------------------------------------------------

const Tensor& Var::value() const { return tape_->node(id_).value; }
bool Var::requires_grad() const { return tape_->node(id_).requires_grad; }

Var Tape::constant(Tensor value) { return leaf(std::move(value), false); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad && track_gradients_;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& param) {
  if (auto it = bound_.find(&param); it != bound_.end()) return Var(this, it->second);
  Node n;
  n.value = param.value;
  n.requires_grad = track_gradients_;
  n.param = track_gradients_ ? &param : nullptr;
  nodes_.push_back(std::move(n));
  bound_.emplace(&param, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (auto in : inputs) {
    if (in >= nodes_.size()) throw std::logic_error("tape input refers to a later node");
    n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  }
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

std::span<double> Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_.at(id);
  if (n.grad.size() == 0) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad.data();
}

void Tape::accumulate(std::size_t id, std::span<const double> delta) {
  auto g = grad_buffer(id);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

void Tape::backward(Var loss) {
  if (nodes_.empty()) throw std::logic_error("backward on an empty tape");
  if (&loss.tape() != this) throw std::logic_error("loss belongs to a different tape");
  if (loss.value().size() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  grad_buffer(loss.id())[0] = 1.0;

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, i);
    if (nodes_[i].param) {
      Parameter& p = *nodes_[i].param;
      const auto g = nodes_[i].grad.data();
      auto pg = p.grad.data();
      for (std::size_t j = 0; j < pg.size(); ++j) pg[j] += g[j];
    }
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id());
  if (n.grad.size() == 0) return Tensor(n.value.shape(), 0.0);
  return n.grad;
}

// ---- elementwise ----------------------------------------------------------

namespace {

enum class Binary { add, sub, mul };

Var binary(Binary op, Var a, Var b) {
  if (!same_tape(a, b)) throw std::logic_error("operands live on different tapes");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const bool same = sa == sb;
  const bool trailing = sb.size() == 1 && sb[0] == sa.back();
  if (!same && !trailing) {
    throw ShapeError("incompatible shapes " + shape_string(sa) + " and " + shape_string(sb));
  }
  const auto& av = a.value().data();
  const auto& bv = b.value().data();
  const std::size_t n = av.size();
  const std::size_t nb = bv.size();
  Tensor out(sa);
  auto o = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = av[i];
    const double y = bv[same ? i : i % nb];
    o[i] = op == Binary::add ? x + y : op == Binary::sub ? x - y : x * y;
  }
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [op, ia, ib, same, n, nb](Tape& t, std::size_t self) {
    const auto gd = t.node(self).grad.data();
    if (t.node(ia).requires_grad) {
      auto da = t.grad_buffer(ia);
      if (op == Binary::mul) {
        const auto bvals = t.node(ib).value.data();
        for (std::size_t i = 0; i < n; ++i) da[i] += gd[i] * bvals[same ? i : i % nb];
      } else {
        for (std::size_t i = 0; i < n; ++i) da[i] += gd[i];
      }
    }
    if (t.node(ib).requires_grad) {
      auto db = t.grad_buffer(ib);
      const double sign = op == Binary::sub ? -1.0 : 1.0;
      if (op == Binary::mul) {
        const auto avals = t.node(ia).value.data();
        for (std::size_t i = 0; i < n; ++i) db[same ? i : i % nb] += gd[i] * avals[i];
      } else {
        for (std::size_t i = 0; i < n; ++i) db[same ? i : i % nb] += sign * gd[i];
      }
    }
  });
}

}  // namespace

Var add(Var a, Var b) { return binary(Binary::add, a, b); }
Var sub(Var a, Var b) { return binary(Binary::sub, a, b); }
Var mul(Var a, Var b) { return binary(Binary::mul, a, b); }

Var matmul(Var a, Var b) {
  if (!same_tape(a, b)) throw std::logic_error("operands live on different tapes");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
    throw ShapeError("matmul: cannot multiply " + shape_string(sa) + " by " + shape_string(sb));
  }
  const std::size_t m = sa[0], k = sa[1], n = sb[1];
  Tensor out({m, n}, 0.0);
  {
    const auto A = a.value().data();
    const auto B = b.value().data();
    auto C = out.data();
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = &C[i * n];
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = A[i * k + p];
        if (aip == 0.0) continue;
        const double* brow = &B[p * n];
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      }
    }
  }
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib, m, k, n](Tape& t, std::size_t self) {
    const auto G = t.node(self).grad.data();
    if (t.node(ia).requires_grad) {
      // dA = dC * B^T
      const auto B = t.node(ib).value.data();
      auto dA = t.grad_buffer(ia);
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = &G[i * n];
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = &B[p * n];
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          dA[i * k + p] += acc;
        }
      }
    }
    if (t.node(ib).requires_grad) {
      // dB = A^T * dC
      const auto A = t.node(ia).value.data();
      auto dB = t.grad_buffer(ib);
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = &G[i * n];
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          if (aip == 0.0) continue;
          double* drow = &dB[p * n];
          for (std::size_t j = 0; j < n; ++j) drow[j] += aip * grow[j];
        }
      }
    }
  });
}

// ---- activations ----------------------------------------------------------

Var activation(Activation kind, Var x) {
  switch (kind) {
    case Activation::identity: return x;
    case Activation::sigmoid: return sigmoid(x);
    case Activation::tanh: return tanh(x);
    case Activation::relu: return relu(x);
  }
  throw std::invalid_argument("unknown activation");
}

Var sigmoid(Var x) {
  Tensor out(x.shape());
  const auto xv = x.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = xv[i] >= 0 ? 1.0 / (1.0 + std::exp(-xv[i])) : std::exp(xv[i]) / (1.0 + std::exp(xv[i]));
  }
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix](Tape& t, std::size_t self) {
    const auto g = t.node(self).grad.data();
    const auto y = t.node(self).value.data();
    auto dx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var tanh(Var x) {
  Tensor out(x.shape());
  const auto xv = x.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::tanh(xv[i]);
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix](Tape& t, std::size_t self) {
    const auto g = t.node(self).grad.data();
    const auto y = t.node(self).value.data();
    auto dx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var relu(Var x) {
  Tensor out(x.shape());
  const auto xv = x.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix](Tape& t, std::size_t self) {
    const auto g = t.node(self).grad.data();
    const auto xin = t.node(ix).value.data();
    auto dx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += xin[i] > 0.0 ? g[i] : 0.0;
  });
}

Var affine(Var x, double scale, double shift) {
  Tensor out(x.shape());
  const auto xv = x.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = scale * xv[i] + shift;
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, scale](Tape& t, std::size_t self) {
    const auto g = t.node(self).grad.data();
    auto dx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += scale * g[i];
  });
}

// ---- reductions -----------------------------------------------------------

Var sum(Var x) {
  const auto xv = x.value().data();
  double s = 0.0;
  for (double v : xv) s += v;
  const std::size_t ix = x.id();
  return x.tape().record(Tensor::scalar(s), {ix}, [ix](Tape& t, std::size_t self) {
    const double g = t.node(self).grad[0];
    for (double& d : t.grad_buffer(ix)) d += g;
  });
}

Var mean(Var x) { return affine(sum(x), 1.0 / static_cast<double>(x.value().size()), 0.0); }

Var reduce(Reduction kind, Var x, std::size_t axis) {
  const Shape& shape = x.shape();
  if (axis >= shape.size()) {
    throw std::out_of_range("reduce: axis " + std::to_string(axis) + " invalid for shape " + shape_string(shape));
  }
  const AxisSplit s = split_axis(shape, axis);
  Shape out_shape;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != axis) out_shape.push_back(shape[i]);
  }
  if (out_shape.empty()) out_shape = {1};

  Tensor out(out_shape, 0.0);
  std::vector<std::size_t> argmax;
  const auto xv = x.value().data();
  auto o = out.data();
  if (kind == Reduction::max) argmax.resize(o.size());
  for (std::size_t a = 0; a < s.outer; ++a) {
    for (std::size_t c = 0; c < s.inner; ++c) {
      const std::size_t oi = a * s.inner + c;
      const std::size_t base = a * s.len * s.inner + c;
      if (kind == Reduction::max) {
        std::size_t best = 0;
        for (std::size_t l = 1; l < s.len; ++l) {
          if (xv[base + l * s.inner] > xv[base + best * s.inner]) best = l;
        }
        o[oi] = xv[base + best * s.inner];
        argmax[oi] = best;
      } else {
        double acc = 0.0;
        for (std::size_t l = 0; l < s.len; ++l) acc += xv[base + l * s.inner];
        o[oi] = kind == Reduction::mean ? acc / static_cast<double>(s.len) : acc;
      }
    }
  }
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, kind, s, argmax = std::move(argmax)](Tape& t, std::size_t self) {
    const auto g = t.node(self).grad.data();
    auto dx = t.grad_buffer(ix);
    const double w = kind == Reduction::mean ? 1.0 / static_cast<double>(s.len) : 1.0;
    for (std::size_t a = 0; a < s.outer; ++a) {
      for (std::size_t c = 0; c < s.inner; ++c) {
        const std::size_t oi = a * s.inner + c;
        const std::size_t base = a * s.len * s.inner + c;
        if (kind == Reduction::max) {
          dx[base + argmax[oi] * s.inner] += g[oi];
        } else {
          for (std::size_t l = 0; l < s.len; ++l) dx[base + l * s.inner] += w * g[oi];
        }
      }
    }
  });
}

// ---- structural -----------------------------------------------------------

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + shape_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> lens;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    if (!same_tape(p, parts[0])) throw std::logic_error("concat operands live on different tapes");
    const Shape& sh = p.shape();
    bool ok = sh.size() == first.size();
    for (std::size_t i = 0; ok && i < sh.size(); ++i) ok = i == axis || sh[i] == first[i];
    if (!ok) throw ShapeError("concat: " + shape_string(sh) + " does not match " + shape_string(first));
    out_shape[axis] += sh[axis];
    lens.push_back(sh[axis]);
    ids.push_back(p.id());
  }
  const AxisSplit s = split_axis(out_shape, axis);
  Tensor out(out_shape);
  auto o = out.data();
  std::size_t offset = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto pv = parts[pi].value().data();
    const std::size_t chunk = lens[pi] * s.inner;
    for (std::size_t a = 0; a < s.outer; ++a) {
      std::copy_n(&pv[a * chunk], chunk, &o[a * s.len * s.inner + offset * s.inner]);
    }
    offset += lens[pi];
  }
  Tape& tape = parts[0].tape();
  return tape.record(std::move(out), ids, [ids, lens, s](Tape& t, std::size_t self) {
    const auto g = t.node(self).grad.data();
    std::size_t offset = 0;
    for (std::size_t pi = 0; pi < ids.size(); ++pi) {
      const std::size_t chunk = lens[pi] * s.inner;
      if (t.node(ids[pi]).requires_grad) {
        auto d = t.grad_buffer(ids[pi]);
        for (std::size_t a = 0; a < s.outer; ++a) {
          const double* src = &g[a * s.len * s.inner + offset * s.inner];
          for (std::size_t j = 0; j < chunk; ++j) d[a * chunk + j] += src[j];
        }
      }
      offset += lens[pi];
    }
  });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix](Tape& t, std::size_t self) {
    t.accumulate(ix, t.node(self).grad.data());
  });
}

Var slice(Var x, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& shape = x.shape();
  if (axis >= shape.size() || length == 0 || start + length > shape[axis]) {
    throw ShapeError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) + ") on axis " +
                     std::to_string(axis) + " of " + shape_string(shape));
  }
  const AxisSplit s = split_axis(shape, axis);
  Shape out_shape = shape;
  out_shape[axis] = length;
  Tensor out(out_shape);
  const auto xv = x.value().data();
  auto o = out.data();
  const std::size_t chunk = length * s.inner;
  for (std::size_t a = 0; a < s.outer; ++a) {
    std::copy_n(&xv[(a * s.len + start) * s.inner], chunk, &o[a * chunk]);
  }
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, s, start, chunk](Tape& t, std::size_t self) {
    const auto g = t.node(self).grad.data();
    auto dx = t.grad_buffer(ix);
    for (std::size_t a = 0; a < s.outer; ++a) {
      double* dst = &dx[(a * s.len + start) * s.inner];
      for (std::size_t j = 0; j < chunk; ++j) dst[j] += g[a * chunk + j];
    }
  });
}

Var gather_rows(Var table, std::span<const std::int32_t> indices) {
  const Shape& shape = table.shape();
  if (shape.size() != 2) throw ShapeError("gather_rows needs a rank-2 table, got " + shape_string(shape));
  if (indices.empty()) throw ShapeError("gather_rows with no indices");
  const std::size_t rows = shape[0], cols = shape[1];
  for (auto i : indices) {
    if (i < 0 || static_cast<std::size_t>(i) >= rows) {
      throw std::out_of_range("index " + std::to_string(i) + " outside table of " + std::to_string(rows) + " rows");
    }
  }
  Tensor out({indices.size(), cols});
  const auto tv = table.value().data();
  auto o = out.data();
  for (std::size_t r = 0; r < indices.size(); ++r) {
    std::copy_n(&tv[static_cast<std::size_t>(indices[r]) * cols], cols, &o[r * cols]);
  }
  const std::size_t it = table.id();
  std::vector<std::int32_t> idx(indices.begin(), indices.end());
  return table.tape().record(std::move(out), {it}, [it, cols, idx = std::move(idx)](Tape& t, std::size_t self) {
    const auto g = t.node(self).grad.data();
    auto d = t.grad_buffer(it);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      double* dst = &d[static_cast<std::size_t>(idx[r]) * cols];
      for (std::size_t c = 0; c < cols; ++c) dst[c] += g[r * cols + c];
    }
  });
}

Var unfold_time(Var x, std::size_t kernel) {
  const Shape& shape = x.shape();
  if (shape.size() != 3) throw ShapeError("unfold_time needs [B, T, C], got " + shape_string(shape));
  const std::size_t B = shape[0], T = shape[1], C = shape[2];
  if (kernel == 0 || T < kernel) {
    throw ShapeError("sequence length " + std::to_string(T) + " is shorter than kernel " + std::to_string(kernel));
  }
  const std::size_t L = T - kernel + 1;
  const std::size_t width = kernel * C;
  Tensor out({B * L, width});
  const auto xv = x.value().data();
  auto o = out.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < L; ++t) {
      std::copy_n(&xv[(b * T + t) * C], width, &o[(b * L + t) * width]);
    }
  }
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, B, T, C, L, width](Tape& tp, std::size_t self) {
    const auto g = tp.node(self).grad.data();
    auto dx = tp.grad_buffer(ix);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t t = 0; t < L; ++t) {
        double* dst = &dx[(b * T + t) * C];
        const double* src = &g[(b * L + t) * width];
        for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
      }
    }
  });
}

Var maxpool_time(Var x, std::size_t pool) {
  const Shape& shape = x.shape();
  if (shape.size() != 3) throw ShapeError("maxpool_time needs [B, T, C], got " + shape_string(shape));
  if (pool == 0) throw std::invalid_argument("pool size must be >= 1");
  const std::size_t B = shape[0], T = shape[1], C = shape[2];
  const std::size_t L = T / pool;
  if (L == 0) {
    throw ShapeError("pool " + std::to_string(pool) + " exceeds sequence length " + std::to_string(T));
  }
  Tensor out({B, L, C});
  std::vector<std::size_t> src_index(B * L * C);
  const auto xv = x.value().data();
  auto o = out.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t w = 0; w < L; ++w) {
      for (std::size_t c = 0; c < C; ++c) {
        std::size_t best = (b * T + w * pool) * C + c;
        for (std::size_t p = 1; p < pool; ++p) {
          const std::size_t cand = (b * T + w * pool + p) * C + c;
          if (xv[cand] > xv[best]) best = cand;
        }
        const std::size_t oi = (b * L + w) * C + c;
        o[oi] = xv[best];
        src_index[oi] = best;
      }
    }
  }
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, src_index = std::move(src_index)](Tape& t, std::size_t self) {
    const auto g = t.node(self).grad.data();
    auto dx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < src_index.size(); ++i) dx[src_index[i]] += g[i];
  });
}

// ---- Adam -----------------------------------------------------------------

void adam_step(std::span<Parameter* const> params, AdamState& state) {
  if (state.m.empty()) {
    for (const Parameter* p : params) {
      state.m.emplace_back(p->value.size(), 0.0);
      state.v.emplace_back(p->value.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: parameter count changed");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i]->value.size() || params[i]->grad.size() != params[i]->value.size()) {
      throw std::invalid_argument("adam_step: size mismatch for " + params[i]->name);
    }
  }

  const AdamConfig& c = state.config;
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i]->value.data();
    const auto g = params[i]->grad.data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bias1;
      const double v_hat = v[j] / bias2;
      theta[j] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

// ---- checkpoint -----------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'C', 'M', 'P', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}
  std::uint64_t uint(int width) {
    need(width);
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += width;
    return v;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError("parameter file is truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_parameters(std::span<const Parameter* const> params) {
  std::string out(kMagic, 4);
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    put_u32(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    put_u32(out, static_cast<std::uint32_t>(p->value.rank()));
    for (auto d : p->value.shape()) put_u64(out, d);
    for (double v : p->value.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

std::map<std::string, Tensor> deserialize_parameters(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(4) != std::string_view(kMagic, 4)) throw DataError("not a parameter file (bad magic)");
  const auto version = r.uint(4);
  if (version != kFormatVersion) throw DataError("unsupported parameter file version " + std::to_string(version));
  const auto count = r.uint(4);
  std::map<std::string, Tensor> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name(r.take(r.uint(4)));
    const auto rank = r.uint(4);
    if (rank == 0 || rank > 8) throw DataError("bad rank for parameter " + name);
    Shape shape;
    for (std::uint64_t d = 0; d < rank; ++d) shape.push_back(r.uint(8));
    const std::size_t n = shape_size(shape);
    if (n > bytes.size() / 8) throw DataError("parameter " + name + " larger than file");
    std::vector<double> data(n);
    for (auto& v : data) v = std::bit_cast<double>(r.uint(8));
    if (!out.emplace(name, Tensor(std::move(shape), std::move(data))).second) {
      throw DataError("duplicate parameter " + name);
    }
  }
  if (!r.done()) throw DataError("trailing bytes in parameter file");
  return out;
}

void save_parameters(const std::filesystem::path& path, std::span<const Parameter* const> params) {
  io::write_file_atomic(path, serialize_parameters(params));
}

std::map<std::string, Tensor> load_parameters(const std::filesystem::path& path) {
  return deserialize_parameters(io::read_file(path));
}

}  // namespace covidmis::tensor
