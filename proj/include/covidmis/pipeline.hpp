#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "covidmis/corpus.hpp"
#include "covidmis/crawler.hpp"
#include "covidmis/nn.hpp"
#include "covidmis/textprep.hpp"
#include "covidmis/train.hpp"

namespace covidmis::pipeline {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kOutputDirEnv = "COVIDMIS_OUTPUT_DIR";

struct PipelineConfig {
  std::uint64_t seed = 42;

  // [paths]
  std::string tweets;
  std::string trust_list;
  std::string corpus;  // empty: <output_dir>/corpus.jsonl
  std::string output_dir = "out";

  // [corpus]
  std::vector<std::string> search_keywords = corpus::default_search_keywords();
  bool filter_keywords = true;
  std::string date_from;
  std::string date_to;
  bool dedup = true;
  double split_ratio = 0.7;

  // [preprocess]
  textprep::PreprocessConfig preprocess;
  bool remove_stopwords = true;
  std::string stopwords_file;  // empty: shipped list

  // [model]; vocab_size and max_sequence_length are filled in at run time.
  nn::ModelConfig model;

  // [train]; train.seed is derived from `seed`.
  train::TrainConfig train;
  corpus::ClassLabel positive_class = corpus::ClassLabel::real;

  // [cv]
  std::size_t cv_k = 10;
  std::size_t cv_parallel = 1;

  // [crawl]
  crawler::CrawlPolicy crawl;
  std::string seed_url_template = "https://{domain}/";

  std::filesystem::path output_path() const { return output_dir; }
  std::filesystem::path corpus_path() const;
  /// Throws std::invalid_argument on an out-of-range field.
  void validate() const;
};

/// A typed config value as it appears in TOML or on the command line.
using Value = std::variant<std::int64_t, double, bool, std::string, std::vector<std::string>>;

struct KeyInfo {
  std::string name;  // "section.key", or "seed"
  std::string type;  // integer, float, boolean, string, list
  std::string help;
};

const std::vector<KeyInfo>& config_keys();

/// Parses `text` according to the key's type and assigns it. Throws
/// UsageError for an unknown key or a malformed value.
void set_value(PipelineConfig& config, std::string_view key, std::string_view text);
/// Merges a TOML document into `config`; unknown keys are UsageErrors.
void apply_toml(PipelineConfig& config, std::string_view toml_text, std::string_view source_name = "config");
void load_toml_file(PipelineConfig& config, const std::filesystem::path& path);
/// Applies the output-directory environment override, if set.
void apply_environment(PipelineConfig& config);
/// Effective configuration as TOML, including the derived sub-seeds.
std::string dump_toml(const PipelineConfig& config);

// ---- commands -------------------------------------------------------------

struct CrawlSummary {
  std::size_t domains = 0;
  std::size_t pages_visited = 0;
  std::size_t articles = 0;
};

/// `transport` defaults to real HTTP.
CrawlSummary cmd_crawl(const PipelineConfig& config, crawler::Transport* transport = nullptr);

struct LabelSummary {
  std::size_t loaded = 0;
  std::size_t skipped_lines = 0;
  std::size_t after_keyword_filter = 0;
  std::size_t after_date_filter = 0;
  corpus::LabelStats stats;
  std::size_t examples = 0;
};

LabelSummary cmd_label(const PipelineConfig& config);

struct TrainSummary {
  std::filesystem::path checkpoint;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::size_t vocab_size = 0;
  std::vector<train::EpochLog> logs;
};

TrainSummary cmd_train(const PipelineConfig& config, nn::Architecture arch);

train::MetricsReport cmd_evaluate(const PipelineConfig& config, const std::filesystem::path& checkpoint);

train::CrossValidationResult cmd_cv(const PipelineConfig& config, nn::Architecture arch, std::size_t k);

/// A checkpoint with everything needed to score raw text.
struct LoadedModel {
  std::unique_ptr<nn::Model> model;
  textprep::Vocabulary vocab;
  textprep::PreprocessConfig preprocess;
  nlohmann::json sidecar;

  train::Prediction predict(std::string_view text);
  std::vector<train::Prediction> predict(std::span<const std::string> texts);
};

/// Reads <checkpoint>, <checkpoint>.json and the vocabulary it names.
LoadedModel load_model(const std::filesystem::path& checkpoint);

/// Default artifact stem for an architecture ("bilstm" or "ensemble").
std::string model_stem(nn::Architecture arch);

}  // namespace covidmis::pipeline
