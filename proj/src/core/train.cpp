#include "covidmis/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "covidmis/error.hpp"
#include "covidmis/rng.hpp"

namespace covidmis::train {

namespace {

constexpr double kClampLo = 1e-12;
constexpr double kClampHi = 1.0 - 1e-12;

void check_labels(std::span<const int> y) {
  for (int v : y) {
    if (v != 0 && v != 1) throw std::invalid_argument("labels must be 0 or 1, got " + std::to_string(v));
  }
}

double safe_div(double num, double den, bool& undefined) {
  undefined = den == 0.0;
  return undefined ? 0.0 : num / den;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

double bce_loss(std::span<const double> p, std::span<const int> y) {
  if (p.size() != y.size()) {
    throw std::invalid_argument("bce_loss: " + std::to_string(p.size()) + " probabilities vs " +
                                std::to_string(y.size()) + " labels");
  }
  if (p.empty()) throw std::invalid_argument("bce_loss: empty batch");
  check_labels(y);
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p[i], kClampLo, kClampHi);
    total -= y[i] == 1 ? std::log(q) : std::log(1.0 - q);
  }
  return total / static_cast<double>(p.size());
}

tensor::Var bce_loss(tensor::Var p, std::span<const int> y) {
  const auto pv = p.value().data();
  const double value = bce_loss(pv, y);
  const std::vector<int> labels(y.begin(), y.end());
  const std::size_t ip = p.id();
  return p.tape().record(tensor::Tensor::scalar(value), {ip}, [ip, labels](tensor::Tape& t, std::size_t self) {
    const double g = t.node(self).grad[0];
    const auto pv = t.node(ip).value.data();
    auto dp = t.grad_buffer(ip);
    const double n = static_cast<double>(labels.size());
    for (std::size_t i = 0; i < dp.size(); ++i) {
      if (pv[i] < kClampLo || pv[i] > kClampHi) continue;  // clamped: flat
      const double d = labels[i] == 1 ? -1.0 / pv[i] : 1.0 / (1.0 - pv[i]);
      dp[i] += g * d / n;
    }
  });
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("train.batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("train.epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train.learning_rate must be positive");
}

EncodedData EncodedData::subset(std::span<const std::size_t> indices) const {
  EncodedData out;
  out.x.reserve(indices.size());
  out.y.reserve(indices.size());
  for (std::size_t i : indices) {
    out.x.push_back(x.at(i));
    out.y.push_back(y.at(i));
  }
  return out;
}

ClassLabel decide(double probability) { return probability >= 0.5 ? ClassLabel::fake : ClassLabel::real; }

std::vector<Prediction> predict(Model& model, std::span<const Sequence> data, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("predict: batch_size must be positive");
  std::vector<Prediction> out;
  out.reserve(data.size());
  Rng unused(0);
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const auto batch = data.subspan(start, std::min(batch_size, data.size() - start));
    for (double p : nn::model_forward(model, batch, /*training=*/false, unused)) out.push_back({p, decide(p)});
  }
  return out;
}

namespace {

double accuracy_of(Model& model, const EncodedData& data) {
  if (data.size() == 0) return 0.0;
  const auto preds = predict(model, data.x);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += static_cast<int>(preds[i].label) == data.y[i];
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

}  // namespace

TrainResult train(const ModelBuilder& build, const EncodedData& data, const TrainConfig& config,
                  const EncodedData* validation) {
  config.validate();
  if (data.x.size() != data.y.size()) throw std::invalid_argument("train: sequences and labels differ in count");
  if (data.size() == 0) throw DataError("training data is empty");
  check_labels(data.y);
  const auto fakes = std::count(data.y.begin(), data.y.end(), 1);
  if (fakes == 0 || fakes == static_cast<std::ptrdiff_t>(data.size())) {
    throw DataError("training data holds a single class");
  }

  TrainResult result;
  result.model = build(derive_seed(config.seed, seed_offset::kInit));
  Model& model = *result.model;
  auto params = model.parameters();
  tensor::AdamState adam;
  adam.config.learning_rate = config.learning_rate;

  Rng shuffle_rng(derive_seed(config.seed, seed_offset::kShuffle));
  Rng dropout_rng(derive_seed(config.seed, seed_offset::kDropout));

  std::vector<std::size_t> order(data.size());
  std::vector<Sequence> batch_x;
  std::vector<int> batch_y;
  double best_val = -1.0;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (config.shuffle_each_epoch) shuffle_rng.shuffle(std::span<std::size_t>(order));

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch_x.clear();
      batch_y.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch_x.push_back(data.x[order[i]]);
        batch_y.push_back(data.y[order[i]]);
      }

      for (auto* p : params) p->zero_grad();
      tensor::Tape tape;
      tensor::Var probs = model.forward(tape, batch_x, /*training=*/true, dropout_rng);
      tensor::Var loss = bce_loss(probs, batch_y);
      tape.backward(loss);
      tensor::adam_step(params, adam);
      ++result.optimizer_steps;

      loss_sum += loss.value()[0] * static_cast<double>(batch_x.size());
      const auto pv = probs.value().data();
      for (std::size_t i = 0; i < batch_y.size(); ++i) correct += static_cast<int>(decide(pv[i])) == batch_y[i];
    }

    EpochLog log;
    log.epoch = epoch;
    log.loss = loss_sum / static_cast<double>(data.size());
    log.train_acc = static_cast<double>(correct) / static_cast<double>(data.size());
    if (validation && validation->size() > 0) log.val_acc = accuracy_of(model, *validation);
    result.logs.push_back(log);

    if (config.early_stop_patience > 0 && log.val_acc) {
      if (*log.val_acc > best_val) {
        best_val = *log.val_acc;
        since_best = 0;
      } else if (++since_best >= config.early_stop_patience) {
        break;
      }
    }
  }
  return result;
}

ConfusionMatrix ConfusionMatrix::from_rates(double fake_correct, double real_correct, std::uint64_t per_class) {
  if (fake_correct < 0 || fake_correct > 1 || real_correct < 0 || real_correct > 1) {
    throw std::invalid_argument("rates must lie in [0, 1]");
  }
  ConfusionMatrix cm;
  const double n = static_cast<double>(per_class);
  cm.tp = static_cast<std::uint64_t>(std::llround(fake_correct * n));
  cm.fp = per_class - cm.tp;
  cm.tn = static_cast<std::uint64_t>(std::llround(real_correct * n));
  cm.fn = per_class - cm.tn;
  return cm;
}

ConfusionMatrix confusion_matrix(std::span<const ClassLabel> predicted, std::span<const ClassLabel> labels) {
  if (predicted.size() != labels.size()) {
    throw std::invalid_argument("confusion_matrix: " + std::to_string(predicted.size()) + " predictions vs " +
                                std::to_string(labels.size()) + " labels");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool label_fake = labels[i] == ClassLabel::fake;
    const bool pred_fake = predicted[i] == ClassLabel::fake;
    if (label_fake && pred_fake) {
      ++cm.tp;
    } else if (!label_fake && !pred_fake) {
      ++cm.tn;
    } else if (!label_fake) {
      ++cm.fn;
    } else {
      ++cm.fp;
    }
  }
  return cm;
}

ConfusionMatrix confusion_matrix(std::span<const Prediction> predicted, std::span<const int> labels) {
  check_labels(labels);
  std::vector<ClassLabel> p, l;
  for (const auto& pr : predicted) p.push_back(pr.label);
  for (int v : labels) l.push_back(static_cast<ClassLabel>(v));
  return confusion_matrix(p, l);
}

MetricsReport compute_metrics(const ConfusionMatrix& cm, ClassLabel positive_class) {
  if (cm.total() == 0) throw std::invalid_argument("compute_metrics: empty confusion matrix");
  MetricsReport r;
  r.positive_class = positive_class;
  r.confusion = cm;
  const auto d = [](std::uint64_t v) { return static_cast<double>(v); };
  r.accuracy = d(cm.tp + cm.tn) / d(cm.total());

  double hit, predicted_pos, actual_pos;
  if (positive_class == ClassLabel::real) {
    hit = d(cm.tn);
    predicted_pos = d(cm.tn + cm.fp);
    actual_pos = d(cm.tn + cm.fn);
  } else {
    hit = d(cm.tp);
    predicted_pos = d(cm.tp + cm.fn);
    actual_pos = d(cm.tp + cm.fp);
  }
  r.precision = safe_div(hit, predicted_pos, r.precision_undefined);
  r.recall = safe_div(hit, actual_pos, r.recall_undefined);
  r.f1 = safe_div(2.0 * r.precision * r.recall, r.precision + r.recall, r.f1_undefined);

  bool unused;
  r.fake_correct_rate = safe_div(d(cm.tp), d(cm.fake_total()), unused);
  r.fake_as_real_rate = safe_div(d(cm.fp), d(cm.fake_total()), unused);
  r.real_correct_rate = safe_div(d(cm.tn), d(cm.real_total()), unused);
  r.real_as_fake_rate = safe_div(d(cm.fn), d(cm.real_total()), unused);
  return r;
}

nlohmann::json to_json(const ConfusionMatrix& cm) {
  return {{"tp", cm.tp}, {"tn", cm.tn}, {"fp", cm.fp}, {"fn", cm.fn}, {"total", cm.total()}};
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json undefined = nlohmann::json::array();
  if (r.precision_undefined) undefined.push_back("precision");
  if (r.recall_undefined) undefined.push_back("recall");
  if (r.f1_undefined) undefined.push_back("f1");
  return {
      {"positive_class", corpus::to_string(r.positive_class)},
      {"accuracy", r.accuracy},
      {"precision", r.precision},
      {"recall", r.recall},
      {"f1", r.f1},
      {"undefined", undefined},
  };
}

nlohmann::json metrics_document(const ConfusionMatrix& cm, ClassLabel primary) {
  const MetricsReport real = compute_metrics(cm, ClassLabel::real);
  const MetricsReport fake = compute_metrics(cm, ClassLabel::fake);
  const MetricsReport& main = primary == ClassLabel::real ? real : fake;
  return {
      {"accuracy", main.accuracy},
      {"primary", to_json(main)},
      {"conventions", {{"real", to_json(real)}, {"fake", to_json(fake)}}},
      {"confusion", to_json(cm)},
      {"rates",
       {{"fake", {{"fake", main.fake_correct_rate}, {"real", main.fake_as_real_rate}}},
        {"real", {{"real", main.real_correct_rate}, {"fake", main.real_as_fake_rate}}}}},
  };
}

std::string epoch_log_csv(std::span<const EpochLog> logs) {
  std::string out = "epoch,loss,train_acc,val_acc\n";
  for (const auto& l : logs) {
    out += std::to_string(l.epoch) + "," + fmt(l.loss) + "," + fmt(l.train_acc) + "," +
           (l.val_acc ? fmt(*l.val_acc) : std::string()) + "\n";
  }
  return out;
}

std::string confusion_csv(const ConfusionMatrix& cm) {
  const MetricsReport r = compute_metrics(cm);
  std::string out = "true_label,pred_fake,pred_real,rate_fake,rate_real\n";
  out += "fake," + std::to_string(cm.tp) + "," + std::to_string(cm.fp) + "," + fmt(r.fake_correct_rate) + "," +
         fmt(r.fake_as_real_rate) + "\n";
  out += "real," + std::to_string(cm.fn) + "," + std::to_string(cm.tn) + "," + fmt(r.real_as_fake_rate) + "," +
         fmt(r.real_correct_rate) + "\n";
  return out;
}

CrossValidationResult cross_validate(const ModelBuilder& build, const EncodedData& data, std::size_t k,
                                     const TrainConfig& config, ClassLabel positive_class, std::size_t parallel) {
  config.validate();
  if (data.x.size() != data.y.size()) throw std::invalid_argument("cross_validate: sequences and labels differ");
  check_labels(data.y);
  std::vector<ClassLabel> labels;
  labels.reserve(data.size());
  for (int v : data.y) labels.push_back(static_cast<ClassLabel>(v));
  const corpus::FoldAssignment folds = corpus::stratified_kfold(labels, k, config.seed);

  CrossValidationResult result;
  result.folds.resize(k);

  auto run_fold = [&](std::size_t fold) {
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < data.size(); ++i) (folds.fold_of[i] == fold ? test_idx : train_idx).push_back(i);
    const EncodedData train_set = data.subset(train_idx);
    const EncodedData test_set = data.subset(test_idx);
    TrainConfig fold_config = config;
    fold_config.seed = config.seed + fold;
    TrainResult trained = train(build, train_set, fold_config, &test_set);
    const auto preds = predict(*trained.model, test_set.x);
    FoldReport& rep = result.folds[fold];
    rep.fold = fold;
    rep.train_size = train_set.size();
    rep.test_size = test_set.size();
    rep.metrics = compute_metrics(confusion_matrix(preds, test_set.y), positive_class);
    rep.logs = std::move(trained.logs);
  };

  const std::size_t workers = std::clamp<std::size_t>(parallel, 1, k);
  if (workers == 1) {
    for (std::size_t f = 0; f < k; ++f) run_fold(f);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t f; (f = next.fetch_add(1)) < k;) {
          try {
            run_fold(f);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  double sum = 0.0;
  for (const auto& f : result.folds) sum += f.metrics.accuracy;
  result.mean_accuracy = sum / static_cast<double>(k);
  double sq = 0.0;
  for (const auto& f : result.folds) sq += (f.metrics.accuracy - result.mean_accuracy) * (f.metrics.accuracy - result.mean_accuracy);
  result.std_accuracy = std::sqrt(sq / static_cast<double>(k));
  return result;
}

nlohmann::json to_json(const CrossValidationResult& result) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : result.folds) {
    nlohmann::json logs = nlohmann::json::array();
    for (const auto& l : f.logs) {
      logs.push_back({{"epoch", l.epoch},
                      {"loss", l.loss},
                      {"train_acc", l.train_acc},
                      {"val_acc", l.val_acc ? nlohmann::json(*l.val_acc) : nlohmann::json(nullptr)}});
    }
    folds.push_back({{"fold", f.fold},
                     {"train_size", f.train_size},
                     {"test_size", f.test_size},
                     {"metrics", to_json(f.metrics)},
                     {"confusion", to_json(f.metrics.confusion)},
                     {"epochs", logs}});
  }
  return {{"k", result.folds.size()},
          {"mean_accuracy", result.mean_accuracy},
          {"std_accuracy", result.std_accuracy},
          {"folds", folds}};
}

}  // namespace covidmis::train
