#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "covidmis/rng.hpp"
#include "covidmis/tensor.hpp"

namespace covidmis::nn {

using tensor::Activation;
using tensor::Parameter;
using tensor::Tape;
using tensor::Tensor;
using tensor::Var;
using Sequence = std::vector<std::int32_t>;

enum class Architecture { bilstm, ensemble_cnn_bigru };
/// How the CNN branch pools before its dense head.
enum class CnnPool { window, global };

std::string_view to_string(Architecture arch);
Architecture parse_architecture(std::string_view name);

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 64;
  std::size_t rnn_hidden = 64;
  std::size_t conv_filters = 64;
  std::size_t conv_kernel = 5;
  std::size_t branch_dense_units = 16;
  double dropout_rate = 0.5;
  std::size_t max_sequence_length = 64;
  CnnPool cnn_pool = CnnPool::window;
  std::size_t pool_size = 2;

  void validate() const;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& doc);

// ---- initializers ---------------------------------------------------------

Tensor uniform_init(tensor::Shape shape, double limit, Rng& rng);
/// limit = sqrt(6 / (fan_in + fan_out))
Tensor glorot_uniform(tensor::Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);
/// Square matrix with orthonormal columns (Gram-Schmidt on a Gaussian draw).
Tensor orthogonal(std::size_t n, Rng& rng);

// ---- layers ---------------------------------------------------------------

class Embedding {
 public:
  Embedding(std::string name, std::size_t vocab_size, std::size_t dim, Rng& rng);

  /// One sequence -> [T, dim].
  Var forward(Tape& tape, std::span<const std::int32_t> indices);
  /// Batch of equal-length sequences -> [B, T, dim].
  Var forward(Tape& tape, std::span<const Sequence> batch);

  std::size_t vocab_size() const { return weight.value.dim(0); }
  std::size_t dim() const { return weight.value.dim(1); }
  /// Largest row L2 norm, ignoring the PAD row.
  double max_row_norm() const;

  Parameter weight;
};

Var embedding_forward(Tape& tape, Embedding& layer, std::span<const std::int32_t> indices);

class Dense {
 public:
  Dense(std::string name, std::size_t in, std::size_t out, Activation act, Rng& rng);
  Dense(Parameter w, Parameter b, Activation act);

  /// x[..., in] -> [..., out]
  Var forward(Tape& tape, Var x);

  Parameter W;
  Parameter b;
  Activation act;
};

Var dense_forward(Tape& tape, Parameter& W, Parameter& b, Var x, Activation act);

class Conv1d {
 public:
  Conv1d(std::string name, std::size_t kernel, std::size_t in_channels, std::size_t out_channels, Rng& rng);
  Conv1d(Parameter filters, Parameter bias);

  /// Valid cross-correlation plus bias, then ReLU.
  /// x[T, C] -> [T-k+1, F] or x[B, T, C] -> [B, T-k+1, F].
  Var forward(Tape& tape, Var x);

  std::size_t kernel() const { return filters.value.dim(0); }

  Parameter filters;  // [kernel, in_channels, out_channels]
  Parameter bias;     // [out_channels]
};

Var conv1d_forward(Tape& tape, Parameter& filters, Parameter& bias, Var x);

/// Non-overlapping windows over time; remainder steps dropped.
Var maxpool1d(Var x, std::size_t pool);
/// Per-channel max over time: [T, C] -> [C], [B, T, C] -> [B, C].
Var global_maxpool(Var x);
/// Inverted dropout; identity when !training or rate == 0.
Var dropout_forward(Var x, double rate, bool training, Rng& rng);

class GruCell {
 public:
  GruCell(std::string name, std::size_t input_dim, std::size_t hidden, Rng& rng);

  /// r = sig(x Wr + h Ur + br); z = sig(x Wz + h Uz + bz);
  /// h~ = tanh(x Wh + (r*h) Uh + bh); h' = (1 - z) * h + z * h~.
  /// x[B, in], h[B, H] (or rank-1 [in], [H]).
  Var step(Tape& tape, Var x, Var h_prev);

  std::size_t input_dim() const { return Wz.value.dim(0); }
  std::size_t hidden() const { return Uz.value.dim(0); }
  std::vector<Parameter*> parameters();

  Parameter Wz, Wr, Wh;
  Parameter Uz, Ur, Uh;
  Parameter bz, br, bh;
};

struct LstmState {
  Var h;
  Var c;
};

class LstmCell {
 public:
  LstmCell(std::string name, std::size_t input_dim, std::size_t hidden, Rng& rng);

  /// f, i, o = sig(.), g = tanh(.); c' = f*c + i*g; h' = o*tanh(c').
  LstmState step(Tape& tape, Var x, Var h_prev, Var c_prev);

  std::size_t input_dim() const { return Wf.value.dim(0); }
  std::size_t hidden() const { return Uf.value.dim(0); }
  std::vector<Parameter*> parameters();

  Parameter Wf, Wi, Wo, Wg;
  Parameter Uf, Ui, Uo, Ug;
  Parameter bf, bi, bo, bg;
};

Var gru_cell_step(Tape& tape, GruCell& cell, Var x, Var h_prev);
LstmState lstm_cell_step(Tape& tape, LstmCell& cell, Var x, Var h_prev, Var c_prev);

/// Runs `fwd` over t = 0..T-1 and `bwd` over t = T-1..0.
/// sequence [T, in] or [B, T, in]. With return_sequences the output is
/// [(B,) T, 2H] holding [h_fwd_t | h_bwd_t] at each step; otherwise
/// [(B,) 2H] holding the two final states, forward half first.
Var bidirectional_run(Tape& tape, GruCell& fwd, GruCell& bwd, Var sequence, bool return_sequences);
Var bidirectional_run(Tape& tape, LstmCell& fwd, LstmCell& bwd, Var sequence, bool return_sequences);

// ---- models ---------------------------------------------------------------

class Model {
 public:
  virtual ~Model() = default;

  virtual Architecture architecture() const = 0;
  const ModelConfig& config() const { return config_; }
  virtual std::vector<Parameter*> parameters() = 0;

  /// Probability of label fake for each sequence, shape [B].
  virtual Var forward(Tape& tape, std::span<const Sequence> batch, bool training, Rng& rng) = 0;

  std::size_t parameter_count();
  /// Copies matching tensors in; throws DataError on a missing name or a
  /// shape mismatch.
  void load_parameters(const std::map<std::string, Tensor>& values);

 protected:
  explicit Model(ModelConfig config) : config_(std::move(config)) {}
  void check_batch(std::span<const Sequence> batch) const;

  ModelConfig config_;
};

/// embedding -> Bi-LSTM (sequences) -> dropout -> global max pool -> dense(1, sigmoid)
std::unique_ptr<Model> build_bilstm_model(const ModelConfig& config, std::uint64_t init_seed);
/// CNN branch and Bi-GRU branch over the same tokens (separate embeddings),
/// each ending in a sigmoid dense layer, concatenated into a sigmoid unit.
std::unique_ptr<Model> build_ensemble_model(const ModelConfig& config, std::uint64_t init_seed);
std::unique_ptr<Model> build_model(Architecture arch, const ModelConfig& config, std::uint64_t init_seed);

/// Closed-form parameter counts.
std::size_t bilstm_parameter_count(const ModelConfig& config);
std::size_t ensemble_parameter_count(const ModelConfig& config);

/// Probabilities for a batch. With training false dropout is off and no
/// gradients are tracked.
std::vector<double> model_forward(Model& model, std::span<const Sequence> batch, bool training, Rng& rng);

}  // namespace covidmis::nn
