#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "covidmis/corpus.hpp"
#include "covidmis/nn.hpp"

namespace covidmis::train {

using corpus::ClassLabel;
using nn::Model;
using nn::Sequence;

/// Mean binary cross-entropy; probabilities are clamped to [1e-12, 1 - 1e-12].
double bce_loss(std::span<const double> p, std::span<const int> y);
/// Same loss recorded on the tape of `p` (shape [B]), returning a {1} node.
tensor::Var bce_loss(tensor::Var p, std::span<const int> y);

struct TrainConfig {
  std::size_t batch_size = 10;
  std::size_t epochs = 5;
  double learning_rate = 0.001;
  std::uint64_t seed = 0;
  bool shuffle_each_epoch = true;
  /// Stop after this many epochs without a validation-accuracy gain; 0 disables.
  std::size_t early_stop_patience = 0;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  double train_acc = 0.0;
  std::optional<double> val_acc;
};

/// Encoded sequences with integer labels (1 = fake, 0 = real).
struct EncodedData {
  std::vector<Sequence> x;
  std::vector<int> y;

  std::size_t size() const { return x.size(); }
  EncodedData subset(std::span<const std::size_t> indices) const;
};

/// Builds a freshly initialised model from an init seed.
using ModelBuilder = std::function<std::unique_ptr<Model>(std::uint64_t init_seed)>;

struct TrainResult {
  std::unique_ptr<Model> model;
  std::vector<EpochLog> logs;
  std::size_t optimizer_steps = 0;
};

/// Mini-batch training with BCE and Adam. Model initialisation, epoch
/// shuffling and dropout masks draw from sub-seeds of config.seed.
/// `validation`, when given, is scored after every epoch.
TrainResult train(const ModelBuilder& build, const EncodedData& data, const TrainConfig& config,
                  const EncodedData* validation = nullptr);

struct Prediction {
  double probability = 0.0;
  ClassLabel label = ClassLabel::real;
};

/// fake iff p >= 0.5.
ClassLabel decide(double probability);
std::vector<Prediction> predict(Model& model, std::span<const Sequence> data, std::size_t batch_size = 64);

/// tp = fake predicted fake, tn = real predicted real,
/// fn = real predicted fake, fp = fake predicted real.
struct ConfusionMatrix {
  std::uint64_t tp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + tn + fp + fn; }
  std::uint64_t fake_total() const { return tp + fp; }
  std::uint64_t real_total() const { return tn + fn; }

  /// Balanced matrix with `per_class` examples of each label and the given
  /// per-class correct rates (counts rounded to nearest).
  static ConfusionMatrix from_rates(double fake_correct, double real_correct, std::uint64_t per_class);

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

ConfusionMatrix confusion_matrix(std::span<const ClassLabel> predicted, std::span<const ClassLabel> labels);
ConfusionMatrix confusion_matrix(std::span<const Prediction> predicted, std::span<const int> labels);

struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  ClassLabel positive_class = ClassLabel::real;
  ConfusionMatrix confusion;
  // Flags set when the matching denominator is zero (metric reported as 0).
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
  // Row-normalised rates; a row with no examples reports 0.
  double fake_correct_rate = 0.0;
  double fake_as_real_rate = 0.0;
  double real_correct_rate = 0.0;
  double real_as_fake_rate = 0.0;
};

/// Throws std::invalid_argument on an empty matrix.
MetricsReport compute_metrics(const ConfusionMatrix& cm, ClassLabel positive_class = ClassLabel::real);

nlohmann::json to_json(const ConfusionMatrix& cm);
nlohmann::json to_json(const MetricsReport& report);
/// Report body with both positive-class conventions.
nlohmann::json metrics_document(const ConfusionMatrix& cm, ClassLabel primary);

std::string epoch_log_csv(std::span<const EpochLog> logs);
/// Counts and row-normalised rates, one row per true label.
std::string confusion_csv(const ConfusionMatrix& cm);

struct FoldReport {
  std::size_t fold = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  MetricsReport metrics;
  std::vector<EpochLog> logs;
};

struct CrossValidationResult {
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population standard deviation
  std::vector<FoldReport> folds;
};

/// Stratified k-fold: fold i trains on the other folds with seed
/// config.seed + i and is scored on fold i. `parallel` > 1 runs folds on
/// that many threads; results do not depend on it.
CrossValidationResult cross_validate(const ModelBuilder& build, const EncodedData& data, std::size_t k,
                                     const TrainConfig& config, ClassLabel positive_class = ClassLabel::real,
                                     std::size_t parallel = 1);

nlohmann::json to_json(const CrossValidationResult& result);

}  // namespace covidmis::train
