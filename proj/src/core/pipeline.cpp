#include "covidmis/pipeline.hpp"

#include <algorithm>
#include <iostream>

#include "covidmis/error.hpp"
#include "covidmis/io.hpp"
#include "covidmis/rng.hpp"

namespace covidmis::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require_file(const std::string& path, std::string_view what) {
  if (path.empty()) throw UsageError(std::string(what) + " path is not set");
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw UsageError(std::string(what) + " not found: " + path);
}

void check_config(const PipelineConfig& config) {
  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

void write_json(const fs::path& path, json doc) {
  doc["schema_version"] = kSchemaVersion;
  io::write_file_atomic(path, doc.dump(2) + "\n");
}

textprep::PreprocessConfig effective_preprocess(const PipelineConfig& config) {
  textprep::PreprocessConfig p = config.preprocess;
  if (!config.remove_stopwords) {
    p.stopwords.clear();
  } else if (!config.stopwords_file.empty()) {
    require_file(config.stopwords_file, "stopwords file");
    p.stopwords = textprep::load_stopwords(config.stopwords_file);
  } else {
    p.stopwords = textprep::default_stopwords();
  }
  return p;
}

json preprocess_to_json(const textprep::PreprocessConfig& p) {
  return {
      {"max_sequence_length", p.max_sequence_length},
      {"pad_mode", textprep::to_string(p.pad_mode)},
      {"stem", p.stem},
      {"stopwords", std::vector<std::string>(p.stopwords.begin(), p.stopwords.end())},
      {"min_token_frequency", p.min_token_frequency},
      {"max_vocab_size", p.max_vocab_size},
  };
}

textprep::PreprocessConfig preprocess_from_json(const json& doc) {
  textprep::PreprocessConfig p;
  p.max_sequence_length = doc.at("max_sequence_length").get<std::size_t>();
  p.pad_mode = textprep::parse_pad_mode(doc.at("pad_mode").get<std::string>());
  p.stem = doc.at("stem").get<bool>();
  for (const auto& w : doc.at("stopwords")) p.stopwords.insert(w.get<std::string>());
  p.min_token_frequency = doc.at("min_token_frequency").get<std::size_t>();
  p.max_vocab_size = doc.at("max_vocab_size").get<std::size_t>();
  p.validate();
  return p;
}

std::vector<corpus::LabeledExample> load_balanced(const PipelineConfig& config, std::uint64_t seed) {
  const fs::path path = config.corpus_path();
  require_file(path.string(), "labeled corpus");
  const auto examples = corpus::load_labeled(path);
  if (examples.empty()) throw DataError("labeled corpus is empty: " + path.string());
  return corpus::balance_downsample(examples, derive_seed(seed, seed_offset::kBalance));
}

std::vector<std::vector<std::string>> tokenize_all(std::span<const corpus::LabeledExample> examples,
                                                   const textprep::PreprocessConfig& prep) {
  std::vector<std::vector<std::string>> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(textprep::preprocess_tokens(e.text, prep));
  return out;
}

train::EncodedData encode_all(std::span<const corpus::LabeledExample> examples,
                              std::span<const std::vector<std::string>> tokens, const textprep::Vocabulary& vocab,
                              const textprep::PreprocessConfig& prep) {
  train::EncodedData data;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    data.x.push_back(textprep::pad(textprep::encode(tokens[i], vocab), prep.max_sequence_length, prep.pad_mode));
    data.y.push_back(static_cast<int>(examples[i].label));
  }
  return data;
}

nn::ModelConfig runtime_model_config(const PipelineConfig& config, const textprep::Vocabulary& vocab) {
  nn::ModelConfig m = config.model;
  m.vocab_size = vocab.size();
  m.max_sequence_length = config.preprocess.max_sequence_length;
  return m;
}

train::ModelBuilder builder_for(nn::Architecture arch, const nn::ModelConfig& model) {
  return [arch, model](std::uint64_t init_seed) { return nn::build_model(arch, model, init_seed); };
}

json logs_to_json(std::span<const train::EpochLog> logs) {
  json arr = json::array();
  for (const auto& l : logs) {
    arr.push_back({{"epoch", l.epoch},
                   {"loss", l.loss},
                   {"train_acc", l.train_acc},
                   {"val_acc", l.val_acc ? json(*l.val_acc) : json(nullptr)}});
  }
  return arr;
}

std::string replace_all(std::string text, std::string_view from, std::string_view to) {
  for (std::size_t pos = 0; (pos = text.find(from, pos)) != std::string::npos; pos += to.size()) {
    text.replace(pos, from.size(), to);
  }
  return text;
}

}  // namespace

std::string model_stem(nn::Architecture arch) { return arch == nn::Architecture::bilstm ? "bilstm" : "ensemble"; }

// ---- crawl ----------------------------------------------------------------

CrawlSummary cmd_crawl(const PipelineConfig& config, crawler::Transport* transport) {
  check_config(config);
  require_file(config.trust_list, "trust list");
  const auto trust = corpus::load_trust_list(config.trust_list);

  std::vector<crawler::CrawlSeed> seeds;
  for (const auto& [domain, label] : trust.entries()) {
    seeds.push_back({replace_all(config.seed_url_template, "{domain}", domain), label});
  }
  std::unique_ptr<crawler::Transport> owned;
  if (!transport) {
    owned = crawler::make_http_transport();
    transport = owned.get();
  }
  const auto reports = crawler::crawl_domains(*transport, seeds, config.crawl);

  const std::string lines = crawler::articles_jsonl(reports);
  CrawlSummary summary;
  summary.domains = reports.size();
  json report_docs = json::array();
  for (const auto& r : reports) {
    summary.pages_visited += r.pages_visited;
    summary.articles += r.articles.size();
    report_docs.push_back(crawler::report_summary(r));
  }
  io::write_file_atomic(config.output_path() / "crawl_articles.jsonl", lines);
  write_json(config.output_path() / "crawl_reports.json",
             {{"keywords", config.crawl.keywords},
              {"threshold", config.crawl.threshold},
              {"domains", summary.domains},
              {"pages_visited", summary.pages_visited},
              {"articles", summary.articles},
              {"reports", report_docs}});
  return summary;
}

// ---- label ----------------------------------------------------------------

LabelSummary cmd_label(const PipelineConfig& config) {
  check_config(config);
  require_file(config.tweets, "tweet archive");
  require_file(config.trust_list, "trust list");
  corpus::DateBounds bounds;
  if (!config.date_from.empty()) {
    bounds.from = corpus::parse_timestamp(config.date_from);
    if (!bounds.from) throw UsageError("corpus.date_from is not a timestamp: " + config.date_from);
  }
  if (!config.date_to.empty()) {
    bounds.to = corpus::parse_timestamp(config.date_to);
    if (!bounds.to) throw UsageError("corpus.date_to is not a timestamp: " + config.date_to);
  }

  const auto trust = corpus::load_trust_list(config.trust_list);
  const auto loaded = corpus::load_tweets(config.tweets);
  LabelSummary summary;
  summary.loaded = loaded.records.size();
  summary.skipped_lines = loaded.skipped;

  std::vector<corpus::TweetRecord> tweets = loaded.records;
  if (config.filter_keywords) tweets = corpus::filter_by_keywords(tweets, config.search_keywords);
  summary.after_keyword_filter = tweets.size();
  tweets = corpus::filter_by_date(tweets, bounds);
  summary.after_date_filter = tweets.size();

  auto examples = corpus::label_tweets(tweets, trust, &summary.stats);
  if (config.dedup) examples = corpus::dedup_examples(examples);
  summary.examples = examples.size();
  if (examples.empty()) std::cerr << "warning: no tweet links to a domain on the trust list\n";

  std::size_t fake = 0;
  for (const auto& e : examples) fake += e.label == corpus::ClassLabel::fake;
  corpus::write_labeled(config.corpus_path(), examples);
  write_json(config.output_path() / "label_summary.json",
             {{"tweets_loaded", summary.loaded},
              {"lines_skipped", summary.skipped_lines},
              {"after_keyword_filter", summary.after_keyword_filter},
              {"after_date_filter", summary.after_date_filter},
              {"tweets_labeled", summary.stats.tweets},
              {"fake", fake},
              {"real", examples.size() - fake},
              {"conflicts", summary.stats.conflicts},
              {"unmatched", summary.stats.unmatched},
              {"examples", summary.examples}});
  return summary;
}

// ---- train ----------------------------------------------------------------

TrainSummary cmd_train(const PipelineConfig& config, nn::Architecture arch) {
  check_config(config);
  const auto prep = effective_preprocess(config);
  const auto balanced = load_balanced(config, config.seed);
  const auto split = corpus::split_train_test(balanced, config.split_ratio,
                                              derive_seed(config.seed, seed_offset::kSplit));

  const auto train_tokens = tokenize_all(split.train, prep);
  const auto test_tokens = tokenize_all(split.test, prep);
  const auto vocab = textprep::build_vocab(train_tokens, prep);
  const auto train_data = encode_all(split.train, train_tokens, vocab, prep);
  const auto test_data = encode_all(split.test, test_tokens, vocab, prep);

  const nn::ModelConfig model_config = runtime_model_config(config, vocab);
  train::TrainConfig tc = config.train;
  tc.seed = config.seed;
  auto result = train::train(builder_for(arch, model_config), train_data, tc, &test_data);

  const std::string stem = model_stem(arch);
  const fs::path out = config.output_path();
  TrainSummary summary;
  summary.checkpoint = out / (stem + ".ckpt");
  summary.train_size = train_data.size();
  summary.test_size = test_data.size();
  summary.vocab_size = vocab.size();
  summary.logs = result.logs;

  std::vector<const tensor::Parameter*> params;
  for (const auto* p : result.model->parameters()) params.push_back(p);

  io::write_file_atomic(out / (stem + ".vocab.json"), vocab.to_json());
  write_json(out / (stem + ".ckpt.json"),
             {{"architecture", nn::to_string(arch)},
              {"model", nn::to_json(model_config)},
              {"preprocess", preprocess_to_json(prep)},
              {"seed", config.seed},
              {"split_ratio", config.split_ratio},
              {"vocab_file", stem + ".vocab.json"},
              {"vocab_fingerprint", io::hex64(vocab.fingerprint())},
              {"parameter_count", result.model->parameter_count()},
              {"train_size", summary.train_size},
              {"test_size", summary.test_size},
              {"optimizer_steps", result.optimizer_steps},
              {"epochs", logs_to_json(result.logs)}});
  io::write_file_atomic(out / (stem + "_epochs.csv"), train::epoch_log_csv(result.logs));
  io::write_file_atomic(summary.checkpoint, tensor::serialize_parameters(params));
  return summary;
}

// ---- model loading --------------------------------------------------------

LoadedModel load_model(const fs::path& checkpoint) {
  require_file(checkpoint.string(), "checkpoint");
  fs::path sidecar_path = checkpoint;
  sidecar_path += ".json";
  require_file(sidecar_path.string(), "checkpoint metadata");

  LoadedModel lm;
  try {
    lm.sidecar = json::parse(io::read_file(sidecar_path));
    if (lm.sidecar.at("schema_version").get<int>() != kSchemaVersion) {
      throw DataError("unsupported checkpoint schema_version in " + sidecar_path.string());
    }
    const auto arch = nn::parse_architecture(lm.sidecar.at("architecture").get<std::string>());
    const auto model_config = nn::model_config_from_json(lm.sidecar.at("model"));
    lm.preprocess = preprocess_from_json(lm.sidecar.at("preprocess"));

    const fs::path vocab_path = checkpoint.parent_path() / lm.sidecar.at("vocab_file").get<std::string>();
    require_file(vocab_path.string(), "vocabulary");
    lm.vocab = textprep::Vocabulary::from_json(io::read_file(vocab_path));
    if (io::hex64(lm.vocab.fingerprint()) != lm.sidecar.at("vocab_fingerprint").get<std::string>()) {
      throw DataError("vocabulary " + vocab_path.string() + " does not match the checkpoint");
    }
    if (lm.vocab.size() != model_config.vocab_size) {
      throw DataError("vocabulary size " + std::to_string(lm.vocab.size()) + " != model vocab_size " +
                      std::to_string(model_config.vocab_size));
    }
    if (lm.preprocess.max_sequence_length != model_config.max_sequence_length) {
      throw DataError("checkpoint sequence lengths disagree");
    }
    lm.model = nn::build_model(arch, model_config, 0);
    lm.model->load_parameters(tensor::load_parameters(checkpoint));
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint metadata " + sidecar_path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError("malformed checkpoint metadata " + sidecar_path.string() + ": " + e.what());
  }
  return lm;
}

train::Prediction LoadedModel::predict(std::string_view text) {
  const std::string t(text);
  return predict(std::span<const std::string>(&t, 1)).front();
}

std::vector<train::Prediction> LoadedModel::predict(std::span<const std::string> texts) {
  std::vector<nn::Sequence> seqs;
  seqs.reserve(texts.size());
  for (const auto& t : texts) seqs.push_back(textprep::encode_text(t, vocab, preprocess));
  return train::predict(*model, seqs);
}

// ---- evaluate -------------------------------------------------------------

train::MetricsReport cmd_evaluate(const PipelineConfig& config, const fs::path& checkpoint) {
  check_config(config);
  LoadedModel lm = load_model(checkpoint);
  const auto seed = lm.sidecar.at("seed").get<std::uint64_t>();
  const auto ratio = lm.sidecar.at("split_ratio").get<double>();

  const auto balanced = load_balanced(config, seed);
  const auto split = corpus::split_train_test(balanced, ratio, derive_seed(seed, seed_offset::kSplit));
  const auto vocab = textprep::build_vocab(tokenize_all(split.train, lm.preprocess), lm.preprocess);
  if (vocab.fingerprint() != lm.vocab.fingerprint()) {
    throw DataError("vocabulary mismatch: the corpus no longer yields the checkpoint's vocabulary (expected " +
                    io::hex64(lm.vocab.fingerprint()) + ", got " + io::hex64(vocab.fingerprint()) + ")");
  }
  if (split.test.empty()) throw DataError("test split is empty");

  const auto test_tokens = tokenize_all(split.test, lm.preprocess);
  const auto test_data = encode_all(split.test, test_tokens, lm.vocab, lm.preprocess);
  const auto predictions = train::predict(*lm.model, test_data.x);
  const auto cm = train::confusion_matrix(predictions, test_data.y);

  std::string stem = checkpoint.filename().string();
  if (stem.ends_with(".ckpt")) stem.resize(stem.size() - 5);
  json doc = train::metrics_document(cm, config.positive_class);
  doc["architecture"] = lm.sidecar.at("architecture");
  doc["checkpoint"] = checkpoint.filename().string();
  doc["test_size"] = test_data.size();
  write_json(config.output_path() / (stem + "_metrics.json"), std::move(doc));
  io::write_file_atomic(config.output_path() / (stem + "_confusion.csv"), train::confusion_csv(cm));
  return train::compute_metrics(cm, config.positive_class);
}

// ---- cross-validation -----------------------------------------------------

train::CrossValidationResult cmd_cv(const PipelineConfig& config, nn::Architecture arch, std::size_t k) {
  check_config(config);
  if (k < 2) throw UsageError("cv needs k >= 2");
  const auto prep = effective_preprocess(config);
  const auto balanced = load_balanced(config, config.seed);
  const auto tokens = tokenize_all(balanced, prep);
  const auto vocab = textprep::build_vocab(tokens, prep);
  const auto data = encode_all(balanced, tokens, vocab, prep);

  train::TrainConfig tc = config.train;
  tc.seed = config.seed;
  const auto result = train::cross_validate(builder_for(arch, runtime_model_config(config, vocab)), data, k, tc,
                                            config.positive_class, config.cv_parallel);

  json doc = train::to_json(result);
  doc["architecture"] = nn::to_string(arch);
  doc["seed"] = config.seed;
  doc["examples"] = data.size();
  doc["vocab_size"] = vocab.size();
  doc["vocab_fingerprint"] = io::hex64(vocab.fingerprint());
  write_json(config.output_path() / (model_stem(arch) + "_cv.json"), std::move(doc));
  return result;
}

}  // namespace covidmis::pipeline
