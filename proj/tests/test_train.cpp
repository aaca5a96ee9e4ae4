#include <doctest.h>

#include <cmath>

#include "covidmis/error.hpp"
#include "covidmis/train.hpp"

using namespace covidmis;
using namespace covidmis::train;
using nn::Architecture;
using nn::ModelConfig;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.vocab_size = 10;
  c.max_sequence_length = 8;
  c.embed_dim = 6;
  c.rnn_hidden = 6;
  c.conv_filters = 6;
  c.conv_kernel = 3;
  c.branch_dense_units = 4;
  c.dropout_rate = 0.2;
  return c;
}

// Token 2 only in fake texts, token 3 only in real texts; the rest is noise.
EncodedData separable(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  EncodedData d;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % 2);
    nn::Sequence s(8);
    for (auto& t : s) t = static_cast<std::int32_t>(4 + rng.below(6));
    s[rng.below(8)] = y == 1 ? 2 : 3;
    s[rng.below(8)] = y == 1 ? 2 : 3;
    d.x.push_back(s);
    d.y.push_back(y);
  }
  return d;
}

ModelBuilder builder(Architecture arch) {
  return [arch](std::uint64_t seed) { return nn::build_model(arch, small_config(), seed); };
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("bce loss values") {
  const double p[] = {0.5, 0.5};
  const int y[] = {1, 0};
  CHECK(bce_loss(p, y) == doctest::Approx(std::log(2.0)));
  const double sure[] = {1.0, 0.0};
  const int right[] = {1, 0};
  const int wrong[] = {0, 1};
  CHECK(bce_loss(sure, right) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(bce_loss(sure, wrong) == doctest::Approx(-std::log(1e-12)));
  const int bad[] = {2, 0};
  CHECK_THROWS_AS(bce_loss(p, bad), std::invalid_argument);
  const int one[] = {1};
  CHECK_THROWS_AS(bce_loss(p, one), std::invalid_argument);
}

TEST_CASE("decision rule") {
  CHECK(decide(0.5) == ClassLabel::fake);
  CHECK(decide(0.4999999) == ClassLabel::real);
}

TEST_CASE("confusion matrix conventions") {
  const ClassLabel pred[] = {ClassLabel::fake, ClassLabel::real, ClassLabel::fake, ClassLabel::real, ClassLabel::real};
  const ClassLabel gold[] = {ClassLabel::fake, ClassLabel::real, ClassLabel::real, ClassLabel::fake, ClassLabel::real};
  const auto cm = confusion_matrix(pred, gold);
  CHECK(cm.tp == 1);
  CHECK(cm.tn == 2);
  CHECK(cm.fn == 1);  // real predicted fake
  CHECK(cm.fp == 1);  // fake predicted real
  CHECK(cm.total() == 5);
  CHECK(cm.fake_total() == 2);
  CHECK(cm.real_total() == 3);
}

TEST_CASE("metrics from per-class rates") {
  const auto cm = ConfusionMatrix::from_rates(0.898, 0.945, 1000);
  CHECK(cm.tp == 898);
  CHECK(cm.fp == 102);
  CHECK(cm.tn == 945);
  CHECK(cm.fn == 55);
  const auto m = compute_metrics(cm, ClassLabel::real);
  CHECK(m.accuracy == doctest::Approx(0.9215).epsilon(1e-12));
  CHECK(m.precision == doctest::Approx(945.0 / 1047.0));
  CHECK(m.recall == doctest::Approx(0.945));
  CHECK(std::abs(m.f1 - 0.9233) < 0.001);
  CHECK(m.fake_correct_rate == doctest::Approx(0.898));
  CHECK(m.real_as_fake_rate == doctest::Approx(0.055));

  const auto f = compute_metrics(cm, ClassLabel::fake);
  CHECK(f.precision == doctest::Approx(898.0 / 953.0));
  CHECK(f.recall == doctest::Approx(0.898));
  CHECK(f.accuracy == m.accuracy);
}

TEST_CASE("undefined metrics are flagged") {
  ConfusionMatrix cm;
  cm.tn = 5;  // every real predicted real, no fake examples at all
  const auto fake_pos = compute_metrics(cm, ClassLabel::fake);
  CHECK(fake_pos.precision_undefined);
  CHECK(fake_pos.recall_undefined);
  CHECK(fake_pos.f1_undefined);
  CHECK(fake_pos.precision == 0.0);
  CHECK(fake_pos.accuracy == 1.0);
  CHECK_THROWS_AS(compute_metrics(ConfusionMatrix{}), std::invalid_argument);
}

TEST_CASE("metric invariants over random matrices") {
  Rng rng(21);
  for (int i = 0; i < 500; ++i) {
    ConfusionMatrix cm{rng.below(50), rng.below(50), rng.below(50), rng.below(50)};
    if (cm.total() == 0) continue;
    for (auto pos : {ClassLabel::real, ClassLabel::fake}) {
      const auto m = compute_metrics(cm, pos);
      CHECK(m.accuracy >= 0.0);
      CHECK(m.accuracy <= 1.0);
      if (!m.f1_undefined) {
        CHECK(m.f1 <= std::max(m.precision, m.recall) + 1e-12);
        CHECK(m.f1 >= std::min(m.precision, m.recall) - 1e-12);
      }
    }
    CHECK(compute_metrics(cm, ClassLabel::real).accuracy == compute_metrics(cm, ClassLabel::fake).accuracy);
  }
}

TEST_CASE("report documents") {
  const auto cm = ConfusionMatrix::from_rates(0.9, 0.8, 10);
  const auto doc = metrics_document(cm, ClassLabel::real);
  CHECK(doc.contains("accuracy"));
  CHECK(doc.contains("confusion"));
  CHECK(confusion_csv(cm).rfind("true_label,pred_fake,pred_real,rate_fake,rate_real\n", 0) == 0);
  std::vector<EpochLog> logs{{1, 0.5, 0.75, 0.7}, {2, 0.25, 0.875, std::nullopt}};
  CHECK(epoch_log_csv(logs) == "epoch,loss,train_acc,val_acc\n1,0.500000,0.750000,0.700000\n2,0.250000,0.875000,\n");
}

TEST_CASE("training lowers the loss and is deterministic") {
  const auto data = separable(120, 1);
  const auto val = separable(40, 2);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.learning_rate = 0.01;
  cfg.seed = 5;
  for (auto arch : {Architecture::bilstm, Architecture::ensemble_cnn_bigru}) {
    CAPTURE(nn::to_string(arch));
    const auto a = train::train(builder(arch), data, cfg, &val);
    REQUIRE(a.logs.size() == 4);
    CHECK(a.logs.back().loss < a.logs.front().loss);
    CHECK(a.logs[0].epoch == 1);
    CHECK(a.logs[0].val_acc.has_value());
    CHECK(a.optimizer_steps == 4 * 12);
    const auto b = train::train(builder(arch), data, cfg, &val);
    for (std::size_t e = 0; e < 4; ++e) {
      CHECK(a.logs[e].loss == b.logs[e].loss);
      CHECK(a.logs[e].val_acc == b.logs[e].val_acc);
    }
    const auto pa = predict(*a.model, val.x);
    const auto pb = predict(*b.model, val.x);
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].probability == pb[i].probability);
  }
}

TEST_CASE("a short final batch is still trained") {
  const auto data = separable(25, 3);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 10;
  const auto r = train::train(builder(Architecture::bilstm), data, cfg);
  CHECK(r.optimizer_steps == 3);
}

TEST_CASE("early stopping on validation accuracy") {
  const auto data = separable(60, 4);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.learning_rate = 0.05;
  cfg.early_stop_patience = 1;
  const auto r = train::train(builder(Architecture::bilstm), data, cfg, &data);
  CHECK(r.logs.size() < 30);
}

TEST_CASE("training rejects unusable data and config") {
  EncodedData one_class = separable(10, 5);
  for (auto& y : one_class.y) y = 1;
  CHECK_THROWS_AS(train::train(builder(Architecture::bilstm), one_class, TrainConfig{}), DataError);
  CHECK_THROWS_AS(train::train(builder(Architecture::bilstm), EncodedData{}, TrainConfig{}), DataError);
  TrainConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("cross-validation is independent of parallelism") {
  const auto data = separable(40, 6);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.seed = 9;
  const auto serial = cross_validate(builder(Architecture::ensemble_cnn_bigru), data, 4, cfg, ClassLabel::real, 1);
  const auto parallel = cross_validate(builder(Architecture::ensemble_cnn_bigru), data, 4, cfg, ClassLabel::real, 3);
  REQUIRE(serial.folds.size() == 4);
  CHECK(to_json(serial) == to_json(parallel));
  std::size_t tested = 0;
  double mean = 0.0;
  for (const auto& f : serial.folds) {
    CHECK(f.train_size + f.test_size == 40);
    tested += f.test_size;
    mean += f.metrics.accuracy / 4.0;
  }
  CHECK(tested == 40);
  CHECK(serial.mean_accuracy == doctest::Approx(mean));
  double var = 0.0;
  for (const auto& f : serial.folds) var += std::pow(f.metrics.accuracy - mean, 2) / 4.0;
  CHECK(serial.std_accuracy == doctest::Approx(std::sqrt(var)));
  CHECK_THROWS_AS(cross_validate(builder(Architecture::bilstm), data, 41, cfg), DataError);
}

}  // TEST_SUITE
