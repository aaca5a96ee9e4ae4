#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <initializer_list>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace covidmis::tensor {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major float64 array.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);
  static Tensor scalar(double value) { return Tensor({1}, {value}); }
  static Tensor vector(std::initializer_list<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  /// Value of a one-element tensor.
  double item() const;

  void fill(double value);
  Tensor reshaped(Shape shape) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Named trainable tensor with its accumulated gradient.
struct Parameter {
  Parameter(std::string name, Tensor value);

  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Ordered record of operations for reverse-mode differentiation.
///
/// Nodes are appended as operations run, so every node's inputs precede it
/// and reverse insertion order is a valid reverse-topological order.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  struct Node {
    Tensor value;
    Tensor grad;  // empty until something flows into it
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  /// With `track_gradients` false nothing on the tape requires a gradient;
  /// used for inference.
  explicit Tape(bool track_gradients = true) : track_gradients_(track_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf whose gradient stays on the tape (read it with grad()).
  Var leaf(Tensor value, bool requires_grad = true);
  /// Leaf bound to a Parameter; backward() adds into param.grad. Repeated
  /// calls with the same Parameter return the same node.
  Var parameter(Parameter& param);

  /// Appends an operation node. `backward` is only invoked when some input
  /// requires a gradient.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every node that requires a
  /// gradient. `loss` must hold exactly one element.
  void backward(Var loss);

  /// Gradient reaching `v` in the last backward pass (zeros if none).
  Tensor grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  bool tracks_gradients() const { return track_gradients_; }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  Node& node(std::size_t id) { return nodes_.at(id); }

  /// Adds `delta` into node `id`'s gradient, allocating it on first use.
  void accumulate(std::size_t id, std::span<const double> delta);
  /// Writable gradient buffer of node `id` (allocated, zero-filled on first use).
  std::span<double> grad_buffer(std::size_t id);

 private:
  bool track_gradients_ = true;
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> bound_;
};

// ---- operations ---------------------------------------------------------

enum class Activation { identity, sigmoid, tanh, relu };
enum class Reduction { sum, max, mean };

/// b may equal a's shape, or be a rank-1 vector matching a's trailing dim.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);

Var matmul(Var a, Var b);

Var activation(Activation kind, Var x);
Var sigmoid(Var x);
Var tanh(Var x);
Var relu(Var x);

/// scale * x + shift, elementwise.
Var affine(Var x, double scale, double shift);

/// Reduces all elements to shape {1}.
Var sum(Var x);
Var mean(Var x);
/// Reduces along `axis`, dropping it (rank-1 input reduces to shape {1}).
/// Max routes the gradient to the first maximal position.
Var reduce(Reduction kind, Var x, std::size_t axis);

Var concat(std::span<const Var> parts, std::size_t axis);
Var reshape(Var x, Shape shape);
/// Elements [start, start + length) along `axis`; the axis is kept.
Var slice(Var x, std::size_t axis, std::size_t start, std::size_t length);
/// Rows of a rank-2 table; output shape {indices.size(), cols}.
Var gather_rows(Var table, std::span<const std::int32_t> indices);
/// Sliding windows over time: x[B, T, C] -> [B * (T - k + 1), k * C].
Var unfold_time(Var x, std::size_t kernel);
/// Non-overlapping max over time windows: x[B, T, C] -> [B, T / pool, C].
Var maxpool_time(Var x, std::size_t pool);

// ---- optimizer ----------------------------------------------------------

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;
};

/// One Adam update of every parameter from its accumulated grad.
void adam_step(std::span<Parameter* const> params, AdamState& state);

// ---- checkpoint ---------------------------------------------------------

/// Binary container: "CMPT" magic, u32 version, u32 count, then per entry
/// u32 name length + name, u32 rank + u64 dims, little-endian float64 data.
void save_parameters(const std::filesystem::path& path, std::span<const Parameter* const> params);
std::map<std::string, Tensor> load_parameters(const std::filesystem::path& path);
std::string serialize_parameters(std::span<const Parameter* const> params);
std::map<std::string, Tensor> deserialize_parameters(std::string_view bytes);

}  // namespace covidmis::tensor
