#include <doctest.h>

#include <cmath>

#include "covidmis/error.hpp"
#include "covidmis/nn.hpp"
#include "support/conv_oracle.hpp"
#include "support/layer_checks.hpp"

using namespace covidmis;
using namespace covidmis::nn;
using tensor::Shape;
using testing::random_tensor;

namespace {

Sequence seq(std::initializer_list<std::int32_t> ids) { return Sequence(ids); }

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("every layer passes finite-difference checks") {
  for (const auto& check : testing::layer_checks::all()) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      CAPTURE(check.name);
      CAPTURE(seed);
      CHECK(check.run(seed) < 1e-4);
    }
  }
}

TEST_CASE("conv1d equals the loop oracle") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) CHECK(testing::conv1d_oracle_diff(seed) <= 1e-12);
}

TEST_CASE("conv1d rejects a sequence shorter than the kernel") {
  Rng rng(1);
  Conv1d layer("c", 5, 2, 3, rng);
  Tape tape(false);
  CHECK_THROWS_AS(layer.forward(tape, tape.constant(Tensor({4, 2}))), tensor::ShapeError);
  CHECK(layer.forward(tape, tape.constant(Tensor({5, 2}))).shape() == Shape{1, 3});
}

TEST_CASE("embedding lookup equals one-hot product") {
  Rng rng(2);
  Embedding emb("e", 6, 3, rng);
  Tape tape(false);
  const std::int32_t idx[] = {4, 0, 4};
  const Tensor rows = emb.forward(tape, idx).value();
  Tensor onehot({3, 6});
  for (int r = 0; r < 3; ++r) onehot[r * 6 + idx[r]] = 1.0;
  const Tensor product = tensor::matmul(tape.constant(onehot), tape.constant(emb.weight.value)).value();
  CHECK(rows == product);
  const std::int32_t bad[] = {6};
  CHECK_THROWS(emb.forward(tape, bad));
}

TEST_CASE("pooling arithmetic") {
  Tape tape(false);
  const Var x = tape.constant(Tensor({4, 1}, std::vector<double>{1, 4, 2, 3}));
  CHECK(maxpool1d(x, 2).value() == Tensor({2, 1}, std::vector<double>{4, 3}));
  CHECK(maxpool1d(x, 1).value() == x.value());
  const Var five = tape.constant(Tensor({5, 1}, std::vector<double>{1, 2, 3, 4, 9}));
  CHECK(maxpool1d(five, 2).shape() == Shape{2, 1});
  const Var m = tape.constant(Tensor::matrix({{1, 9}, {7, 2}}));
  CHECK(global_maxpool(m).value() == Tensor::vector({7, 9}));
}

TEST_CASE("dropout statistics and identities") {
  Rng rng(11);
  Tape tape(false);
  const Var x = tape.constant(Tensor({100000}, 1.0));
  const Tensor y = dropout_forward(x, 0.5, true, rng).value();
  std::size_t zeros = 0;
  for (double v : y.data()) {
    if (v == 0.0) {
      ++zeros;
    } else {
      CHECK(v == 2.0);
    }
  }
  const double frac = static_cast<double>(zeros) / 100000.0;
  CHECK(frac > 0.49);
  CHECK(frac < 0.51);
  CHECK(dropout_forward(x, 0.5, false, rng).value() == x.value());
  CHECK(dropout_forward(x, 0.0, true, rng).value() == x.value());
  CHECK_THROWS_AS(dropout_forward(x, 1.0, true, rng), std::invalid_argument);
}

TEST_CASE("gru zero fixed point and gate saturation") {
  Rng rng(3);
  GruCell cell("g", 2, 3, rng);
  for (Parameter* p : cell.parameters()) p->value.fill(0.0);
  Tape tape(false);
  const Var x = tape.constant(Tensor::vector({0.7, -0.2}));
  const Var h0 = tape.constant(Tensor({3}));
  CHECK(cell.step(tape, x, h0).value() == Tensor({3}));

  GruCell sat("s", 2, 3, rng);
  sat.bz.value.fill(50.0);
  const Var h = tape.constant(Tensor::vector({0.3, -0.6, 0.9}));
  const Tensor out = sat.step(tape, x, h).value();
  // h~ recomputed by hand with r = sig(x Wr + h Ur + br)
  const Var xr = tensor::reshape(x, {1, 2});
  const Var hr = tensor::reshape(h, {1, 3});
  const Tensor r = tensor::sigmoid(tensor::add(tensor::matmul(xr, tape.constant(sat.Wr.value)),
                                               tensor::matmul(hr, tape.constant(sat.Ur.value))))
                       .value();
  const Var rh = tensor::mul(tape.constant(r), hr);
  const Tensor htilde = tensor::tanh(tensor::add(tensor::matmul(xr, tape.constant(sat.Wh.value)),
                                                 tensor::matmul(rh, tape.constant(sat.Uh.value))))
                            .value();
  for (int i = 0; i < 3; ++i) CHECK(out[i] == doctest::Approx(htilde[i]).epsilon(1e-12));
}

TEST_CASE("lstm zero state and forget saturation") {
  Rng rng(4);
  LstmCell cell("l", 2, 3, rng);
  for (Parameter* p : cell.parameters()) p->value.fill(0.0);
  Tape tape(false);
  const Var x = tape.constant(Tensor::vector({0.5, 0.5}));
  const Var zero = tape.constant(Tensor({3}));
  const auto s = cell.step(tape, x, zero, zero);
  CHECK(s.h.value() == Tensor({3}));
  CHECK(s.c.value() == Tensor({3}));

  LstmCell sat("s", 2, 3, rng);
  sat.bf.value.fill(50.0);
  sat.bi.value.fill(-50.0);
  const Var c = tape.constant(Tensor::vector({1.5, -0.25, 0.75}));
  const auto s2 = sat.step(tape, x, tape.constant(Tensor::vector({0.1, 0.2, 0.3})), c);
  for (int i = 0; i < 3; ++i) CHECK(s2.c.value()[i] == doctest::Approx(c.value()[i]).epsilon(1e-9));
}

TEST_CASE("bidirectional output order and palindrome symmetry") {
  Rng rng(5);
  GruCell fwd("f", 2, 3, rng);
  GruCell bwd("b", 2, 3, rng);
  Tape tape(false);
  const Var x = tape.constant(random_tensor({4, 2}, rng));

  // The forward half of the final-state output equals a manual forward run.
  Var h = tape.constant(Tensor({3}));
  for (std::size_t t = 0; t < 4; ++t) h = fwd.step(tape, tensor::reshape(tensor::slice(x, 0, t, 1), {2}), h);
  const Tensor final_states = bidirectional_run(tape, fwd, bwd, x, false).value();
  REQUIRE(final_states.shape() == Shape{6});
  for (int i = 0; i < 3; ++i) CHECK(final_states[i] == h.value()[i]);

  // Identical cells on a palindrome: the sequence output reversed in time,
  // with halves swapped, is itself.
  GruCell twin = fwd;
  twin.Wz.name = "twin";
  const Tensor p = random_tensor({2, 2}, rng);
  Tensor pal({5, 2});
  const std::size_t src[] = {0, 1, 2, 1, 0};
  for (int t = 0; t < 5; ++t) {
    for (int c = 0; c < 2; ++c) pal[t * 2 + c] = (src[t] < 2 ? p[src[t] * 2 + c] : 0.4 * c - 0.1);
  }
  const Tensor out = bidirectional_run(tape, fwd, twin, tape.constant(pal), true).value();
  for (std::size_t t = 0; t < 5; ++t) {
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(out[t * 6 + i] == doctest::Approx(out[(4 - t) * 6 + 3 + i]).epsilon(1e-12));
    }
  }

  // T = 1: the output is the two one-step states.
  const Var one = tensor::slice(x, 0, 0, 1);
  const Tensor single = bidirectional_run(tape, fwd, bwd, one, false).value();
  const Tensor a = fwd.step(tape, tensor::reshape(one, {2}), tape.constant(Tensor({3}))).value();
  const Tensor b = bwd.step(tape, tensor::reshape(one, {2}), tape.constant(Tensor({3}))).value();
  for (int i = 0; i < 3; ++i) {
    CHECK(single[i] == a[i]);
    CHECK(single[3 + i] == b[i]);
  }
}

TEST_CASE("closed-form parameter counts") {
  ModelConfig c;
  c.vocab_size = 100;
  CHECK(bilstm_parameter_count(c) == 72577);
  CHECK(build_bilstm_model(c, 1)->parameter_count() == 72577);
  for (auto pool : {CnnPool::window, CnnPool::global}) {
    c.cnn_pool = pool;
    CHECK(build_ensemble_model(c, 1)->parameter_count() == ensemble_parameter_count(c));
  }
  const auto toy = testing::layer_checks::toy_config();
  CHECK(build_bilstm_model(toy, 3)->parameter_count() == bilstm_parameter_count(toy));
  CHECK(build_ensemble_model(toy, 3)->parameter_count() == ensemble_parameter_count(toy));
}

TEST_CASE("initializers") {
  Rng rng(8);
  const Tensor q = orthogonal(6, rng);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      double dot = 0.0;
      for (std::size_t r = 0; r < 6; ++r) dot += q[r * 6 + i] * q[r * 6 + j];
      CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
    }
  }
  const Tensor g = glorot_uniform({10, 20}, 10, 20, rng);
  const double limit = std::sqrt(6.0 / 30.0);
  for (double v : g.data()) CHECK(std::abs(v) <= limit);
  Embedding emb("e", 50, 8, rng);
  for (double v : emb.weight.value.data()) CHECK(std::abs(v) <= 0.05);
}

TEST_CASE("models: range, determinism, validation") {
  ModelConfig c = testing::layer_checks::toy_config();
  for (auto arch : {Architecture::bilstm, Architecture::ensemble_cnn_bigru}) {
    CAPTURE(to_string(arch));
    auto model = build_model(arch, c, 9);
    const std::vector<Sequence> batch{seq({0, 0, 0, 0, 0, 0}), seq({1, 2, 3, 4, 5, 11}), seq({7, 7, 7, 1, 0, 3})};
    Rng r1(1), r2(1);
    const auto p1 = model_forward(*model, batch, false, r1);
    const auto p2 = model_forward(*model, batch, false, r2);
    CHECK(p1 == p2);
    REQUIRE(p1.size() == 3);
    for (double p : p1) CHECK((p > 0.0 && p < 1.0));
    Rng t1(3), t2(3);
    CHECK(model_forward(*model, batch, true, t1) == model_forward(*model, batch, true, t2));

    const std::vector<Sequence> short_batch{seq({1, 2})};
    CHECK_THROWS_AS(model_forward(*model, short_batch, false, r1), std::invalid_argument);
    const std::vector<Sequence> oob{seq({1, 2, 3, 4, 5, 12})};
    CHECK_THROWS_AS(model_forward(*model, oob, false, r1), std::out_of_range);

    auto other = build_model(arch, c, 10);
    std::map<std::string, Tensor> values;
    for (const Parameter* p : model->parameters()) values.emplace(p->name, p->value);
    other->load_parameters(values);
    CHECK(model_forward(*other, batch, false, r1) == p1);
    values.erase(values.begin());
    CHECK_THROWS_AS(other->load_parameters(values), DataError);
  }
}

TEST_CASE("ensemble with zeroed cnn merge weights ignores the cnn branch") {
  ModelConfig c = testing::layer_checks::toy_config();
  auto model = build_ensemble_model(c, 4);
  Parameter* merge = nullptr;
  Parameter* cnn_emb = nullptr;
  for (Parameter* p : model->parameters()) {
    if (p->name == "merge/W") merge = p;
    if (p->name == "cnn/embedding") cnn_emb = p;
  }
  REQUIRE(merge);
  REQUIRE(cnn_emb);
  for (std::size_t i = 0; i < c.branch_dense_units; ++i) merge->value[i] = 0.0;  // rows fed by the cnn branch
  const std::vector<Sequence> batch{seq({1, 2, 3, 4, 5, 6})};
  Rng rng(0);
  const auto before = model_forward(*model, batch, false, rng);
  Rng perturb(1);
  cnn_emb->value = random_tensor(cnn_emb->value.shape(), perturb);
  CHECK(model_forward(*model, batch, false, rng) == before);
}

TEST_CASE("config parsing and validation") {
  CHECK(parse_architecture("bilstm") == Architecture::bilstm);
  CHECK(parse_architecture("ensemble") == Architecture::ensemble_cnn_bigru);
  CHECK_THROWS_AS(parse_architecture("transformer"), std::invalid_argument);
  ModelConfig c = testing::layer_checks::toy_config();
  CHECK_NOTHROW(c.validate());
  const auto back = model_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  c.conv_kernel = 7;
  CHECK_THROWS(c.validate());
}

}  // TEST_SUITE
