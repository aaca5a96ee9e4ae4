#include "covidmis/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "covidmis/error.hpp"

namespace covidmis::nn {

using tensor::Shape;

std::string_view to_string(Architecture arch) {
  return arch == Architecture::bilstm ? "bilstm" : "ensemble_cnn_bigru";
}

Architecture parse_architecture(std::string_view name) {
  if (name == "bilstm") return Architecture::bilstm;
  if (name == "ensemble" || name == "ensemble_cnn_bigru") return Architecture::ensemble_cnn_bigru;
  throw std::invalid_argument("unknown model '" + std::string(name) + "' (valid: bilstm, ensemble)");
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw std::invalid_argument(std::string("model.") + name + " must be positive");
  };
  if (vocab_size < 2) throw std::invalid_argument("model.vocab_size must be >= 2 (PAD and OOV are reserved)");
  positive(embed_dim, "embed_dim");
  positive(rnn_hidden, "rnn_hidden");
  positive(conv_filters, "conv_filters");
  positive(conv_kernel, "conv_kernel");
  positive(branch_dense_units, "branch_dense_units");
  positive(max_sequence_length, "max_sequence_length");
  positive(pool_size, "pool_size");
  if (conv_kernel > max_sequence_length) {
    throw std::invalid_argument("model.conv_kernel must not exceed max_sequence_length");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw std::invalid_argument("model.dropout_rate must lie in [0, 1)");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {
      {"vocab_size", c.vocab_size},
      {"embed_dim", c.embed_dim},
      {"rnn_hidden", c.rnn_hidden},
      {"conv_filters", c.conv_filters},
      {"conv_kernel", c.conv_kernel},
      {"branch_dense_units", c.branch_dense_units},
      {"dropout_rate", c.dropout_rate},
      {"max_sequence_length", c.max_sequence_length},
      {"cnn_pool", c.cnn_pool == CnnPool::window ? "window" : "global"},
      {"pool_size", c.pool_size},
  };
}

ModelConfig model_config_from_json(const nlohmann::json& doc) {
  try {
    ModelConfig c;
    c.vocab_size = doc.at("vocab_size").get<std::size_t>();
    c.embed_dim = doc.at("embed_dim").get<std::size_t>();
    c.rnn_hidden = doc.at("rnn_hidden").get<std::size_t>();
    c.conv_filters = doc.at("conv_filters").get<std::size_t>();
    c.conv_kernel = doc.at("conv_kernel").get<std::size_t>();
    c.branch_dense_units = doc.at("branch_dense_units").get<std::size_t>();
    c.dropout_rate = doc.at("dropout_rate").get<double>();
    c.max_sequence_length = doc.at("max_sequence_length").get<std::size_t>();
    const auto pool = doc.at("cnn_pool").get<std::string>();
    if (pool != "window" && pool != "global") throw DataError("cnn_pool must be window or global");
    c.cnn_pool = pool == "window" ? CnnPool::window : CnnPool::global;
    c.pool_size = doc.at("pool_size").get<std::size_t>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("model config: ") + e.what());
  }
}

// ---- initializers ---------------------------------------------------------

Tensor uniform_init(Shape shape, double limit, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-limit, limit);
  return t;
}

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  return uniform_init(std::move(shape), std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
}

Tensor orthogonal(std::size_t n, Rng& rng) {
  std::vector<double> a(n * n);
  for (double& v : a) v = rng.normal();
  // Modified Gram-Schmidt over columns.
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += a[i * n + j] * a[i * n + k];
      for (std::size_t i = 0; i < n; ++i) a[i * n + j] -= dot * a[i * n + k];
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) norm += a[i * n + j] * a[i * n + j];
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw std::runtime_error("orthogonal init: degenerate draw");
    for (std::size_t i = 0; i < n; ++i) a[i * n + j] /= norm;
  }
  return Tensor({n, n}, std::move(a));
}

// ---- layers ---------------------------------------------------------------

Embedding::Embedding(std::string name, std::size_t vocab_size, std::size_t dim, Rng& rng)
    : weight(std::move(name), uniform_init({vocab_size, dim}, 0.05, rng)) {}

Var Embedding::forward(Tape& tape, std::span<const std::int32_t> indices) {
  return tensor::gather_rows(tape.parameter(weight), indices);
}

Var Embedding::forward(Tape& tape, std::span<const Sequence> batch) {
  if (batch.empty()) throw std::invalid_argument("embedding: empty batch");
  const std::size_t T = batch[0].size();
  std::vector<std::int32_t> flat;
  flat.reserve(batch.size() * T);
  for (const auto& seq : batch) {
    if (seq.size() != T) throw std::invalid_argument("embedding: sequences in a batch must share one length");
    flat.insert(flat.end(), seq.begin(), seq.end());
  }
  Var rows = tensor::gather_rows(tape.parameter(weight), flat);
  return tensor::reshape(rows, {batch.size(), T, dim()});
}

double Embedding::max_row_norm() const {
  const std::size_t cols = dim();
  double best = 0.0;
  for (std::size_t r = 1; r < vocab_size(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += weight.value[r * cols + c] * weight.value[r * cols + c];
    best = std::max(best, std::sqrt(s));
  }
  return best;
}

Var embedding_forward(Tape& tape, Embedding& layer, std::span<const std::int32_t> indices) {
  return layer.forward(tape, indices);
}

Dense::Dense(std::string name, std::size_t in, std::size_t out, Activation act, Rng& rng)
    : W(name + "/W", glorot_uniform({in, out}, in, out, rng)), b(name + "/b", Tensor({out}, 0.0)), act(act) {}

Dense::Dense(Parameter w, Parameter b, Activation act) : W(std::move(w)), b(std::move(b)), act(act) {}

Var Dense::forward(Tape& tape, Var x) { return dense_forward(tape, W, b, x, act); }

Var dense_forward(Tape& tape, Parameter& W, Parameter& b, Var x, Activation act) {
  const Shape shape = x.shape();
  const std::size_t in = W.value.dim(0);
  const std::size_t out = W.value.dim(1);
  if (shape.back() != in) {
    throw tensor::ShapeError("dense: input " + tensor::shape_string(shape) + " does not end in " + std::to_string(in));
  }
  const std::size_t rows = x.value().size() / in;
  Var flat = shape.size() == 2 ? x : tensor::reshape(x, {rows, in});
  Var y = tensor::activation(act, tensor::add(tensor::matmul(flat, tape.parameter(W)), tape.parameter(b)));
  if (shape.size() == 2) return y;
  Shape out_shape(shape.begin(), shape.end() - 1);
  out_shape.push_back(out);
  return tensor::reshape(y, out_shape);
}

Conv1d::Conv1d(std::string name, std::size_t kernel, std::size_t in_channels, std::size_t out_channels, Rng& rng)
    : filters(name + "/filters",
              glorot_uniform({kernel, in_channels, out_channels}, kernel * in_channels, kernel * out_channels, rng)),
      bias(name + "/bias", Tensor({out_channels}, 0.0)) {}

Conv1d::Conv1d(Parameter f, Parameter b) : filters(std::move(f)), bias(std::move(b)) {}

Var Conv1d::forward(Tape& tape, Var x) { return conv1d_forward(tape, filters, bias, x); }

Var conv1d_forward(Tape& tape, Parameter& filters, Parameter& bias, Var x) {
  const Shape& fs = filters.value.shape();
  if (fs.size() != 3) throw tensor::ShapeError("conv1d filters must be [kernel, in, out]");
  const std::size_t k = fs[0], C = fs[1], F = fs[2];
  const bool batched = x.shape().size() == 3;
  if (!batched && x.shape().size() != 2) throw tensor::ShapeError("conv1d input must be [T, C] or [B, T, C]");
  Var xb = batched ? x : tensor::reshape(x, {1, x.shape()[0], x.shape()[1]});
  const std::size_t B = xb.shape()[0], T = xb.shape()[1];
  if (xb.shape()[2] != C) {
    throw tensor::ShapeError("conv1d: input has " + std::to_string(xb.shape()[2]) + " channels, filters expect " +
                             std::to_string(C));
  }
  if (T < k) {
    throw tensor::ShapeError("conv1d: sequence length " + std::to_string(T) + " < kernel " + std::to_string(k));
  }
  const std::size_t L = T - k + 1;
  Var windows = tensor::unfold_time(xb, k);
  Var w = tensor::reshape(tape.parameter(filters), {k * C, F});
  Var y = tensor::relu(tensor::add(tensor::matmul(windows, w), tape.parameter(bias)));
  return batched ? tensor::reshape(y, {B, L, F}) : tensor::reshape(y, {L, F});
}

Var maxpool1d(Var x, std::size_t pool) {
  if (pool < 1) throw std::invalid_argument("maxpool1d: pool must be >= 1");
  if (x.shape().size() == 3) return tensor::maxpool_time(x, pool);
  if (x.shape().size() != 2) throw tensor::ShapeError("maxpool1d input must be [T, C] or [B, T, C]");
  const std::size_t T = x.shape()[0], C = x.shape()[1];
  Var y = tensor::maxpool_time(tensor::reshape(x, {1, T, C}), pool);
  return tensor::reshape(y, {T / pool, C});
}

Var global_maxpool(Var x) {
  const auto rank = x.shape().size();
  if (rank != 2 && rank != 3) throw tensor::ShapeError("global_maxpool input must be [T, C] or [B, T, C]");
  return tensor::reduce(tensor::Reduction::max, x, rank == 2 ? 0 : 1);
}

Var dropout_forward(Var x, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must lie in [0, 1)");
  if (!training || rate == 0.0) return x;
  Tensor mask(x.shape());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask.data()) m = rng.bernoulli(rate) ? 0.0 : keep_scale;
  return tensor::mul(x, x.tape().constant(std::move(mask)));
}

// ---- recurrent cells ------------------------------------------------------

namespace {

Parameter input_weight(const std::string& name, std::size_t in, std::size_t hidden, Rng& rng) {
  return Parameter(name, glorot_uniform({in, hidden}, in, hidden, rng));
}

Parameter recurrent_weight(const std::string& name, std::size_t hidden, Rng& rng) {
  return Parameter(name, orthogonal(hidden, rng));
}

Parameter zero_bias(const std::string& name, std::size_t hidden) { return Parameter(name, Tensor({hidden}, 0.0)); }

// x W + h U + b
Var gate_input(Tape& tape, Var x, Var h, Parameter& W, Parameter& U, Parameter& b) {
  return tensor::add(tensor::add(tensor::matmul(x, tape.parameter(W)), tensor::matmul(h, tape.parameter(U))),
                     tape.parameter(b));
}

void check_step_shapes(Var x, Var h, std::size_t in, std::size_t hidden, const char* cell) {
  const Shape& xs = x.shape();
  const Shape& hs = h.shape();
  const bool ok = xs.size() == hs.size() && xs.back() == in && hs.back() == hidden &&
                  (xs.size() == 1 || (xs.size() == 2 && xs[0] == hs[0]));
  if (!ok) {
    throw tensor::ShapeError(std::string(cell) + ": x " + tensor::shape_string(xs) + " / state " +
                             tensor::shape_string(hs) + " do not match input " + std::to_string(in) + ", hidden " +
                             std::to_string(hidden));
  }
}

Var as_row(Var v) { return v.shape().size() == 1 ? tensor::reshape(v, {1, v.shape()[0]}) : v; }

}  // namespace

GruCell::GruCell(std::string name, std::size_t in, std::size_t hidden, Rng& rng)
    : Wz(input_weight(name + "/Wz", in, hidden, rng)),
      Wr(input_weight(name + "/Wr", in, hidden, rng)),
      Wh(input_weight(name + "/Wh", in, hidden, rng)),
      Uz(recurrent_weight(name + "/Uz", hidden, rng)),
      Ur(recurrent_weight(name + "/Ur", hidden, rng)),
      Uh(recurrent_weight(name + "/Uh", hidden, rng)),
      bz(zero_bias(name + "/bz", hidden)),
      br(zero_bias(name + "/br", hidden)),
      bh(zero_bias(name + "/bh", hidden)) {}

std::vector<Parameter*> GruCell::parameters() { return {&Wz, &Wr, &Wh, &Uz, &Ur, &Uh, &bz, &br, &bh}; }

Var GruCell::step(Tape& tape, Var x, Var h_prev) {
  check_step_shapes(x, h_prev, input_dim(), hidden(), "gru step");
  const bool vec = x.shape().size() == 1;
  Var xr = as_row(x);
  Var h = as_row(h_prev);
  Var r = tensor::sigmoid(gate_input(tape, xr, h, Wr, Ur, br));
  Var z = tensor::sigmoid(gate_input(tape, xr, h, Wz, Uz, bz));
  Var candidate = tensor::tanh(gate_input(tape, xr, tensor::mul(r, h), Wh, Uh, bh));
  // (1 - z) * h + z * candidate
  Var next = tensor::add(h, tensor::mul(z, tensor::sub(candidate, h)));
  return vec ? tensor::reshape(next, {hidden()}) : next;
}

LstmCell::LstmCell(std::string name, std::size_t in, std::size_t hidden, Rng& rng)
    : Wf(input_weight(name + "/Wf", in, hidden, rng)),
      Wi(input_weight(name + "/Wi", in, hidden, rng)),
      Wo(input_weight(name + "/Wo", in, hidden, rng)),
      Wg(input_weight(name + "/Wg", in, hidden, rng)),
      Uf(recurrent_weight(name + "/Uf", hidden, rng)),
      Ui(recurrent_weight(name + "/Ui", hidden, rng)),
      Uo(recurrent_weight(name + "/Uo", hidden, rng)),
      Ug(recurrent_weight(name + "/Ug", hidden, rng)),
      bf(zero_bias(name + "/bf", hidden)),
      bi(zero_bias(name + "/bi", hidden)),
      bo(zero_bias(name + "/bo", hidden)),
      bg(zero_bias(name + "/bg", hidden)) {}

std::vector<Parameter*> LstmCell::parameters() {
  return {&Wf, &Wi, &Wo, &Wg, &Uf, &Ui, &Uo, &Ug, &bf, &bi, &bo, &bg};
}

LstmState LstmCell::step(Tape& tape, Var x, Var h_prev, Var c_prev) {
  check_step_shapes(x, h_prev, input_dim(), hidden(), "lstm step");
  if (c_prev.shape() != h_prev.shape()) throw tensor::ShapeError("lstm step: cell and hidden state shapes differ");
  const bool vec = x.shape().size() == 1;
  Var xr = as_row(x);
  Var h = as_row(h_prev);
  Var c = as_row(c_prev);
  Var f = tensor::sigmoid(gate_input(tape, xr, h, Wf, Uf, bf));
  Var i = tensor::sigmoid(gate_input(tape, xr, h, Wi, Ui, bi));
  Var o = tensor::sigmoid(gate_input(tape, xr, h, Wo, Uo, bo));
  Var g = tensor::tanh(gate_input(tape, xr, h, Wg, Ug, bg));
  Var c_next = tensor::add(tensor::mul(f, c), tensor::mul(i, g));
  Var h_next = tensor::mul(o, tensor::tanh(c_next));
  if (vec) return {tensor::reshape(h_next, {hidden()}), tensor::reshape(c_next, {hidden()})};
  return {h_next, c_next};
}

Var gru_cell_step(Tape& tape, GruCell& cell, Var x, Var h_prev) { return cell.step(tape, x, h_prev); }

LstmState lstm_cell_step(Tape& tape, LstmCell& cell, Var x, Var h_prev, Var c_prev) {
  return cell.step(tape, x, h_prev, c_prev);
}

// ---- bidirectional runner -------------------------------------------------

namespace {

struct GruRunner {
  GruCell& cell;
  Var h;
  Var step(Tape& tape, Var x) {
    h = cell.step(tape, x, h);
    return h;
  }
};

struct LstmRunner {
  LstmCell& cell;
  LstmState s;
  Var step(Tape& tape, Var x) {
    s = cell.step(tape, x, s.h, s.c);
    return s.h;
  }
};

// Stacks per-step [B, H] states into [B, T, H].
Var stack_time(std::span<const Var> states) {
  std::vector<Var> parts;
  parts.reserve(states.size());
  for (Var s : states) parts.push_back(tensor::reshape(s, {s.shape()[0], 1, s.shape()[1]}));
  return tensor::concat(parts, 1);
}

template <typename MakeRunner>
Var run_both(Tape& tape, Var sequence, std::size_t in, std::size_t hidden, bool return_sequences,
             MakeRunner make_runner) {
  const bool batched = sequence.shape().size() == 3;
  if (!batched && sequence.shape().size() != 2) {
    throw tensor::ShapeError("bidirectional input must be [T, in] or [B, T, in]");
  }
  Var seq = batched ? sequence : tensor::reshape(sequence, {1, sequence.shape()[0], sequence.shape()[1]});
  const std::size_t B = seq.shape()[0], T = seq.shape()[1];
  if (seq.shape()[2] != in) {
    throw tensor::ShapeError("bidirectional: input width " + std::to_string(seq.shape()[2]) + " != cell input " +
                             std::to_string(in));
  }

  std::vector<Var> steps;
  steps.reserve(T);
  for (std::size_t t = 0; t < T; ++t) steps.push_back(tensor::reshape(tensor::slice(seq, 1, t, 1), {B, in}));

  Var zeros = tape.constant(Tensor({B, hidden}, 0.0));
  auto [fwd, bwd] = make_runner(zeros);
  std::vector<Var> hf(T), hb(T);
  for (std::size_t t = 0; t < T; ++t) hf[t] = fwd.step(tape, steps[t]);
  for (std::size_t t = T; t-- > 0;) hb[t] = bwd.step(tape, steps[t]);

  if (return_sequences) {
    const Var halves[] = {stack_time(hf), stack_time(hb)};
    Var out = tensor::concat(halves, 2);
    return batched ? out : tensor::reshape(out, {T, 2 * hidden});
  }
  const Var finals[] = {hf[T - 1], hb[0]};
  Var out = tensor::concat(finals, 1);
  return batched ? out : tensor::reshape(out, {2 * hidden});
}

}  // namespace

Var bidirectional_run(Tape& tape, GruCell& fwd, GruCell& bwd, Var sequence, bool return_sequences) {
  if (fwd.hidden() != bwd.hidden() || fwd.input_dim() != bwd.input_dim()) {
    throw tensor::ShapeError("bidirectional: forward and backward cells differ in size");
  }
  return run_both(tape, sequence, fwd.input_dim(), fwd.hidden(), return_sequences, [&](Var zeros) {
    return std::pair{GruRunner{fwd, zeros}, GruRunner{bwd, zeros}};
  });
}

Var bidirectional_run(Tape& tape, LstmCell& fwd, LstmCell& bwd, Var sequence, bool return_sequences) {
  if (fwd.hidden() != bwd.hidden() || fwd.input_dim() != bwd.input_dim()) {
    throw tensor::ShapeError("bidirectional: forward and backward cells differ in size");
  }
  return run_both(tape, sequence, fwd.input_dim(), fwd.hidden(), return_sequences, [&](Var zeros) {
    return std::pair{LstmRunner{fwd, {zeros, zeros}}, LstmRunner{bwd, {zeros, zeros}}};
  });
}

// ---- models ---------------------------------------------------------------

std::size_t Model::parameter_count() {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) n += p->value.size();
  return n;
}

void Model::load_parameters(const std::map<std::string, Tensor>& values) {
  auto params = parameters();
  if (values.size() != params.size()) {
    throw DataError("checkpoint holds " + std::to_string(values.size()) + " tensors, model expects " +
                    std::to_string(params.size()));
  }
  for (Parameter* p : params) {
    auto it = values.find(p->name);
    if (it == values.end()) throw DataError("checkpoint is missing parameter " + p->name);
    if (it->second.shape() != p->value.shape()) {
      throw DataError("checkpoint shape " + tensor::shape_string(it->second.shape()) + " for " + p->name +
                      ", model expects " + tensor::shape_string(p->value.shape()));
    }
    p->value = it->second;
    p->zero_grad();
  }
}

void Model::check_batch(std::span<const Sequence> batch) const {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  for (const auto& seq : batch) {
    if (seq.size() != config_.max_sequence_length) {
      throw std::invalid_argument("sequence length " + std::to_string(seq.size()) + " != max_sequence_length " +
                                  std::to_string(config_.max_sequence_length));
    }
    for (auto idx : seq) {
      if (idx < 0 || static_cast<std::size_t>(idx) >= config_.vocab_size) {
        throw std::out_of_range("token index " + std::to_string(idx) + " outside vocabulary of " +
                                std::to_string(config_.vocab_size));
      }
    }
  }
}

namespace {

class BiLstmModel final : public Model {
 public:
  BiLstmModel(const ModelConfig& c, Rng& rng)
      : Model(c),
        embedding_("embedding/weight", c.vocab_size, c.embed_dim, rng),
        fwd_("bilstm/fwd", c.embed_dim, c.rnn_hidden, rng),
        bwd_("bilstm/bwd", c.embed_dim, c.rnn_hidden, rng),
        out_("output", 2 * c.rnn_hidden, 1, Activation::sigmoid, rng) {}

  Architecture architecture() const override { return Architecture::bilstm; }

  std::vector<Parameter*> parameters() override {
    std::vector<Parameter*> ps{&embedding_.weight};
    for (auto* p : fwd_.parameters()) ps.push_back(p);
    for (auto* p : bwd_.parameters()) ps.push_back(p);
    ps.push_back(&out_.W);
    ps.push_back(&out_.b);
    return ps;
  }

  Var forward(Tape& tape, std::span<const Sequence> batch, bool training, Rng& rng) override {
    check_batch(batch);
    Var x = embedding_.forward(tape, batch);
    Var seq = bidirectional_run(tape, fwd_, bwd_, x, /*return_sequences=*/true);
    seq = dropout_forward(seq, config_.dropout_rate, training, rng);
    Var pooled = global_maxpool(seq);
    Var p = out_.forward(tape, pooled);
    return tensor::reshape(p, {batch.size()});
  }

 private:
  Embedding embedding_;
  LstmCell fwd_;
  LstmCell bwd_;
  Dense out_;
};

std::size_t cnn_flat_width(const ModelConfig& c) {
  if (c.cnn_pool == CnnPool::global) return c.conv_filters;
  return (c.max_sequence_length - c.conv_kernel + 1) / c.pool_size * c.conv_filters;
}

class EnsembleModel final : public Model {
 public:
  EnsembleModel(const ModelConfig& c, Rng& rng)
      : Model(c),
        cnn_embedding_("cnn/embedding", c.vocab_size, c.embed_dim, rng),
        conv_("cnn/conv", c.conv_kernel, c.embed_dim, c.conv_filters, rng),
        cnn_dense_("cnn/dense", cnn_flat_width(c), c.branch_dense_units, Activation::sigmoid, rng),
        gru_embedding_("gru/embedding", c.vocab_size, c.embed_dim, rng),
        fwd_("gru/fwd", c.embed_dim, c.rnn_hidden, rng),
        bwd_("gru/bwd", c.embed_dim, c.rnn_hidden, rng),
        gru_dense_("gru/dense", 2 * c.rnn_hidden, c.branch_dense_units, Activation::sigmoid, rng),
        merge_("merge", 2 * c.branch_dense_units, 1, Activation::sigmoid, rng) {}

  Architecture architecture() const override { return Architecture::ensemble_cnn_bigru; }

  std::vector<Parameter*> parameters() override {
    std::vector<Parameter*> ps{&cnn_embedding_.weight, &conv_.filters, &conv_.bias, &cnn_dense_.W, &cnn_dense_.b,
                               &gru_embedding_.weight};
    for (auto* p : fwd_.parameters()) ps.push_back(p);
    for (auto* p : bwd_.parameters()) ps.push_back(p);
    for (auto* p : {&gru_dense_.W, &gru_dense_.b, &merge_.W, &merge_.b}) ps.push_back(p);
    return ps;
  }

  Var forward(Tape& tape, std::span<const Sequence> batch, bool training, Rng& rng) override {
    check_batch(batch);
    const std::size_t B = batch.size();

    Var conv = conv_.forward(tape, cnn_embedding_.forward(tape, batch));
    Var pooled = config_.cnn_pool == CnnPool::window ? maxpool1d(conv, config_.pool_size) : global_maxpool(conv);
    pooled = dropout_forward(pooled, config_.dropout_rate, training, rng);
    Var flat = tensor::reshape(pooled, {B, pooled.value().size() / B});
    Var cnn_out = cnn_dense_.forward(tape, flat);

    Var states = bidirectional_run(tape, fwd_, bwd_, gru_embedding_.forward(tape, batch), /*return_sequences=*/false);
    states = dropout_forward(states, config_.dropout_rate, training, rng);
    Var gru_out = gru_dense_.forward(tape, states);

    const Var branches[] = {cnn_out, gru_out};
    Var p = merge_.forward(tape, tensor::concat(branches, 1));
    return tensor::reshape(p, {B});
  }

 private:
  Embedding cnn_embedding_;
  Conv1d conv_;
  Dense cnn_dense_;
  Embedding gru_embedding_;
  GruCell fwd_;
  GruCell bwd_;
  Dense gru_dense_;
  Dense merge_;
};

}  // namespace

std::unique_ptr<Model> build_bilstm_model(const ModelConfig& config, std::uint64_t init_seed) {
  config.validate();
  Rng rng(init_seed);
  return std::make_unique<BiLstmModel>(config, rng);
}

std::unique_ptr<Model> build_ensemble_model(const ModelConfig& config, std::uint64_t init_seed) {
  config.validate();
  if (config.max_sequence_length < config.conv_kernel) {
    throw std::invalid_argument("max_sequence_length " + std::to_string(config.max_sequence_length) +
                                " is shorter than conv_kernel " + std::to_string(config.conv_kernel));
  }
  if (cnn_flat_width(config) == 0) throw std::invalid_argument("pool_size leaves no timesteps after convolution");
  Rng rng(init_seed);
  return std::make_unique<EnsembleModel>(config, rng);
}

std::unique_ptr<Model> build_model(Architecture arch, const ModelConfig& config, std::uint64_t init_seed) {
  return arch == Architecture::bilstm ? build_bilstm_model(config, init_seed) : build_ensemble_model(config, init_seed);
}

std::size_t bilstm_parameter_count(const ModelConfig& c) {
  const std::size_t E = c.embed_dim, H = c.rnn_hidden;
  return c.vocab_size * E + 2 * 4 * (E * H + H * H + H) + (2 * H + 1);
}

std::size_t ensemble_parameter_count(const ModelConfig& c) {
  const std::size_t E = c.embed_dim, H = c.rnn_hidden, F = c.conv_filters, D = c.branch_dense_units;
  const std::size_t cnn = c.vocab_size * E + c.conv_kernel * E * F + F + cnn_flat_width(c) * D + D;
  const std::size_t gru = c.vocab_size * E + 2 * 3 * (E * H + H * H + H) + 2 * H * D + D;
  return cnn + gru + 2 * D + 1;
}

std::vector<double> model_forward(Model& model, std::span<const Sequence> batch, bool training, Rng& rng) {
  Tape tape(/*track_gradients=*/training);
  Var p = model.forward(tape, batch, training, rng);
  const auto values = p.value().data();
  return {values.begin(), values.end()};
}

}  // namespace covidmis::nn
