#include <charconv>
#include <cstdlib>
#include <functional>
#include <sstream>

#include <toml.hpp>

#include "covidmis/error.hpp"
#include "covidmis/io.hpp"
#include "covidmis/pipeline.hpp"
#include "covidmis/rng.hpp"

namespace covidmis::pipeline {

namespace {

struct KeyDef {
  KeyInfo info;
  std::function<void(PipelineConfig&, const Value&)> set;
  std::function<Value(const PipelineConfig&)> get;
};

[[noreturn]] void bad_type(std::string_view key, std::string_view expected) {
  throw UsageError("config key '" + std::string(key) + "' expects " + std::string(expected));
}

std::int64_t as_int(const std::string& key, const Value& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
  bad_type(key, "an integer");
}

std::size_t as_count(const std::string& key, const Value& v) {
  const auto i = as_int(key, v);
  if (i < 0) throw UsageError("config key '" + key + "' must be >= 0");
  return static_cast<std::size_t>(i);
}

double as_float(const std::string& key, const Value& v) {
  if (const auto* d = std::get_if<double>(&v)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  bad_type(key, "a number");
}

bool as_bool(const std::string& key, const Value& v) {
  if (const auto* b = std::get_if<bool>(&v)) return *b;
  bad_type(key, "a boolean");
}

std::string as_string(const std::string& key, const Value& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  bad_type(key, "a string");
}

std::vector<std::string> as_list(const std::string& key, const Value& v) {
  if (const auto* l = std::get_if<std::vector<std::string>>(&v)) return *l;
  bad_type(key, "a list of strings");
}

template <typename Field>
KeyDef count_key(std::string name, std::string help, Field field) {
  KeyDef d{{name, "integer", std::move(help)}, nullptr, nullptr};
  d.set = [name, field](PipelineConfig& c, const Value& v) { field(c) = as_count(name, v); };
  d.get = [field](const PipelineConfig& c) -> Value {
    return static_cast<std::int64_t>(field(const_cast<PipelineConfig&>(c)));
  };
  return d;
}

template <typename Field>
KeyDef float_key(std::string name, std::string help, Field field) {
  KeyDef d{{name, "float", std::move(help)}, nullptr, nullptr};
  d.set = [name, field](PipelineConfig& c, const Value& v) { field(c) = as_float(name, v); };
  d.get = [field](const PipelineConfig& c) -> Value { return field(const_cast<PipelineConfig&>(c)); };
  return d;
}

template <typename Field>
KeyDef bool_key(std::string name, std::string help, Field field) {
  KeyDef d{{name, "boolean", std::move(help)}, nullptr, nullptr};
  d.set = [name, field](PipelineConfig& c, const Value& v) { field(c) = as_bool(name, v); };
  d.get = [field](const PipelineConfig& c) -> Value { return field(const_cast<PipelineConfig&>(c)); };
  return d;
}

template <typename Field>
KeyDef string_key(std::string name, std::string help, Field field) {
  KeyDef d{{name, "string", std::move(help)}, nullptr, nullptr};
  d.set = [name, field](PipelineConfig& c, const Value& v) { field(c) = as_string(name, v); };
  d.get = [field](const PipelineConfig& c) -> Value { return field(const_cast<PipelineConfig&>(c)); };
  return d;
}

template <typename Field>
KeyDef list_key(std::string name, std::string help, Field field) {
  KeyDef d{{name, "list", std::move(help)}, nullptr, nullptr};
  d.set = [name, field](PipelineConfig& c, const Value& v) { field(c) = as_list(name, v); };
  d.get = [field](const PipelineConfig& c) -> Value { return field(const_cast<PipelineConfig&>(c)); };
  return d;
}

KeyDef custom_key(std::string name, std::string type, std::string help,
                  std::function<void(PipelineConfig&, const Value&)> set,
                  std::function<Value(const PipelineConfig&)> get) {
  return {{std::move(name), std::move(type), std::move(help)}, std::move(set), std::move(get)};
}

#define FIELD(expr) [](PipelineConfig& c) -> auto& { return c.expr; }

const std::vector<KeyDef>& registry() {
  static const std::vector<KeyDef> keys = [] {
    std::vector<KeyDef> k;
    k.push_back(custom_key(
        "seed", "integer", "global seed; sub-seeds are seed + fixed offsets",
        [](PipelineConfig& c, const Value& v) {
          const auto s = as_int("seed", v);
          if (s < 0) throw UsageError("config key 'seed' must be >= 0");
          c.seed = static_cast<std::uint64_t>(s);
        },
        [](const PipelineConfig& c) -> Value { return static_cast<std::int64_t>(c.seed); }));

    k.push_back(string_key("paths.tweets", "tweet archive (JSON Lines)", FIELD(tweets)));
    k.push_back(string_key("paths.trust_list", "domain trust list (CSV: domain,label)", FIELD(trust_list)));
    k.push_back(string_key("paths.corpus", "labeled corpus (JSON Lines); empty means <output_dir>/corpus.jsonl",
                           FIELD(corpus)));
    k.push_back(string_key("paths.output_dir", "artifact directory", FIELD(output_dir)));

    k.push_back(list_key("corpus.keywords", "tweet search keywords", FIELD(search_keywords)));
    k.push_back(bool_key("corpus.filter_keywords", "keep only tweets mentioning a search keyword",
                         FIELD(filter_keywords)));
    k.push_back(string_key("corpus.date_from", "earliest tweet timestamp (inclusive); empty for none",
                           FIELD(date_from)));
    k.push_back(string_key("corpus.date_to", "latest tweet timestamp (inclusive); empty for none", FIELD(date_to)));
    k.push_back(bool_key("corpus.dedup", "drop repeated (text, label) pairs", FIELD(dedup)));
    k.push_back(float_key("corpus.split_ratio", "training share of the balanced corpus", FIELD(split_ratio)));

    k.push_back(count_key("preprocess.max_sequence_length", "padded sequence length",
                          FIELD(preprocess.max_sequence_length)));
    k.push_back(custom_key(
        "preprocess.pad_mode", "string", "pre or post",
        [](PipelineConfig& c, const Value& v) {
          try {
            c.preprocess.pad_mode = textprep::parse_pad_mode(as_string("preprocess.pad_mode", v));
          } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
          }
        },
        [](const PipelineConfig& c) -> Value { return std::string(textprep::to_string(c.preprocess.pad_mode)); }));
    k.push_back(bool_key("preprocess.stem", "apply Porter stemming", FIELD(preprocess.stem)));
    k.push_back(bool_key("preprocess.remove_stopwords", "drop stopwords", FIELD(remove_stopwords)));
    k.push_back(string_key("preprocess.stopwords_file", "stopword list, one per line; empty for the shipped list",
                           FIELD(stopwords_file)));
    k.push_back(count_key("preprocess.min_token_frequency", "minimum training-corpus count for a vocabulary token",
                          FIELD(preprocess.min_token_frequency)));
    k.push_back(count_key("preprocess.max_vocab_size", "vocabulary cap including PAD and OOV; 0 for none",
                          FIELD(preprocess.max_vocab_size)));

    k.push_back(count_key("model.embed_dim", "embedding width", FIELD(model.embed_dim)));
    k.push_back(count_key("model.rnn_hidden", "recurrent units per direction", FIELD(model.rnn_hidden)));
    k.push_back(count_key("model.conv_filters", "CNN filters", FIELD(model.conv_filters)));
    k.push_back(count_key("model.conv_kernel", "CNN kernel width", FIELD(model.conv_kernel)));
    k.push_back(count_key("model.branch_dense_units", "units in each ensemble branch head",
                          FIELD(model.branch_dense_units)));
    k.push_back(float_key("model.dropout_rate", "dropout rate", FIELD(model.dropout_rate)));
    k.push_back(custom_key(
        "model.cnn_pool", "string", "window or global",
        [](PipelineConfig& c, const Value& v) {
          const auto s = as_string("model.cnn_pool", v);
          if (s != "window" && s != "global") throw UsageError("model.cnn_pool must be window or global");
          c.model.cnn_pool = s == "window" ? nn::CnnPool::window : nn::CnnPool::global;
        },
        [](const PipelineConfig& c) -> Value {
          return std::string(c.model.cnn_pool == nn::CnnPool::window ? "window" : "global");
        }));
    k.push_back(count_key("model.pool_size", "CNN max-pool window", FIELD(model.pool_size)));

    k.push_back(count_key("train.batch_size", "mini-batch size", FIELD(train.batch_size)));
    k.push_back(count_key("train.epochs", "training epochs", FIELD(train.epochs)));
    k.push_back(float_key("train.learning_rate", "Adam learning rate", FIELD(train.learning_rate)));
    k.push_back(bool_key("train.shuffle_each_epoch", "reshuffle training order every epoch",
                         FIELD(train.shuffle_each_epoch)));
    k.push_back(count_key("train.early_stop_patience", "epochs without validation gain before stopping; 0 off",
                          FIELD(train.early_stop_patience)));
    k.push_back(custom_key(
        "train.positive_class", "string", "class treated as positive for precision/recall: real or fake",
        [](PipelineConfig& c, const Value& v) {
          const auto s = as_string("train.positive_class", v);
          if (s != "real" && s != "fake") throw UsageError("train.positive_class must be real or fake");
          c.positive_class = s == "real" ? corpus::ClassLabel::real : corpus::ClassLabel::fake;
        },
        [](const PipelineConfig& c) -> Value { return std::string(corpus::to_string(c.positive_class)); }));

    k.push_back(count_key("cv.k", "cross-validation folds", FIELD(cv_k)));
    k.push_back(count_key("cv.parallel", "folds trained concurrently", FIELD(cv_parallel)));

    k.push_back(list_key("crawl.keywords", "lowercase article keywords", FIELD(crawl.keywords)));
    k.push_back(count_key("crawl.threshold", "keyword occurrences that make a page an article",
                          FIELD(crawl.threshold)));
    k.push_back(count_key("crawl.max_pages", "page budget per domain", FIELD(crawl.max_pages_per_domain)));
    k.push_back(count_key("crawl.max_depth", "link depth from the seed page", FIELD(crawl.max_depth)));
    k.push_back(custom_key(
        "crawl.request_delay_ms", "integer", "pause between requests to one domain",
        [](PipelineConfig& c, const Value& v) {
          c.crawl.request_delay = std::chrono::milliseconds(as_count("crawl.request_delay_ms", v));
        },
        [](const PipelineConfig& c) -> Value { return static_cast<std::int64_t>(c.crawl.request_delay.count()); }));
    k.push_back(custom_key(
        "crawl.timeout_ms", "integer", "per-request timeout",
        [](PipelineConfig& c, const Value& v) {
          c.crawl.timeout = std::chrono::milliseconds(as_count("crawl.timeout_ms", v));
        },
        [](const PipelineConfig& c) -> Value { return static_cast<std::int64_t>(c.crawl.timeout.count()); }));
    k.push_back(bool_key("crawl.same_domain_only", "follow links within the seed domain only",
                         FIELD(crawl.same_domain_only)));
    k.push_back(count_key("crawl.workers", "domains crawled concurrently", FIELD(crawl.workers)));
    k.push_back(bool_key("crawl.respect_robots", "honour robots.txt disallow rules", FIELD(crawl.respect_robots)));
    k.push_back(string_key("crawl.user_agent", "User-Agent header", FIELD(crawl.user_agent)));
    k.push_back(string_key("crawl.seed_url_template", "seed URL per trust-list domain; {domain} is substituted",
                           FIELD(seed_url_template)));
    return k;
  }();
  return keys;
}

#undef FIELD

const KeyDef& find_key(std::string_view name) {
  for (const auto& d : registry()) {
    if (d.info.name == name) return d;
  }
  throw UsageError("unknown config key '" + std::string(name) + "'");
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

Value parse_text(const KeyInfo& info, std::string_view text) {
  const std::string t(trim(text));
  const auto fail = [&]() -> UsageError {
    return UsageError("config key '" + info.name + "' expects " + info.type + ", got '" + t + "'");
  };
  if (info.type == "integer") {
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) throw fail();
    return v;
  }
  if (info.type == "float") {
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size()) throw fail();
    return v;
  }
  if (info.type == "boolean") {
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw fail();
  }
  if (info.type == "list") {
    std::vector<std::string> items;
    std::size_t pos = 0;
    while (pos <= t.size()) {
      auto comma = t.find(',', pos);
      if (comma == std::string::npos) comma = t.size();
      const auto item = trim(std::string_view(t).substr(pos, comma - pos));
      if (!item.empty()) items.emplace_back(item);
      pos = comma + 1;
    }
    return items;
  }
  return std::string(text);
}

Value from_toml(const KeyInfo& info, const toml::node& node) {
  if (auto v = node.as_integer()) return v->get();
  if (auto v = node.as_floating_point()) return v->get();
  if (auto v = node.as_boolean()) return v->get();
  if (auto v = node.as_string()) return v->get();
  if (auto arr = node.as_array()) {
    std::vector<std::string> items;
    for (const auto& el : *arr) {
      auto s = el.as_string();
      if (!s) throw UsageError("config key '" + info.name + "' expects a list of strings");
      items.push_back(s->get());
    }
    return items;
  }
  throw UsageError("config key '" + info.name + "' has an unsupported value type");
}

}  // namespace

std::filesystem::path PipelineConfig::corpus_path() const {
  return corpus.empty() ? output_path() / "corpus.jsonl" : std::filesystem::path(corpus);
}

void PipelineConfig::validate() const {
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw std::invalid_argument("corpus.split_ratio must lie in (0, 1)");
  if (output_dir.empty()) throw std::invalid_argument("paths.output_dir must not be empty");
  preprocess.validate();
  nn::ModelConfig m = model;
  m.vocab_size = 2;
  m.max_sequence_length = preprocess.max_sequence_length;
  m.validate();
  train.validate();
  if (cv_k < 2) throw std::invalid_argument("cv.k must be >= 2");
  if (cv_parallel < 1) throw std::invalid_argument("cv.parallel must be >= 1");
  crawl.validate();
  if (seed_url_template.find("{domain}") == std::string::npos) {
    throw std::invalid_argument("crawl.seed_url_template must contain {domain}");
  }
}

const std::vector<KeyInfo>& config_keys() {
  static const std::vector<KeyInfo> infos = [] {
    std::vector<KeyInfo> out;
    for (const auto& d : registry()) out.push_back(d.info);
    return out;
  }();
  return infos;
}

void set_value(PipelineConfig& config, std::string_view key, std::string_view text) {
  const KeyDef& def = find_key(key);
  def.set(config, parse_text(def.info, text));
}

void apply_toml(PipelineConfig& config, std::string_view toml_text, std::string_view source_name) {
  toml::table doc;
  try {
    doc = toml::parse(toml_text, source_name);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << source_name << ":" << e.source().begin.line << ": " << e.description();
    throw UsageError(msg.str());
  }
  for (auto&& [section, node] : doc) {
    // Written by dump_toml for reference only; values follow from `seed`.
    if (section.str() == "derived_seeds") continue;
    if (auto table = node.as_table()) {
      for (auto&& [key, value] : *table) {
        const std::string name = std::string(section.str()) + "." + std::string(key.str());
        const KeyDef& def = find_key(name);
        def.set(config, from_toml(def.info, value));
      }
    } else {
      const KeyDef& def = find_key(section.str());
      def.set(config, from_toml(def.info, node));
    }
  }
}

void load_toml_file(PipelineConfig& config, const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const IoError& e) {
    throw UsageError(std::string("cannot read config: ") + e.what());
  }
  apply_toml(config, text, path.string());
}

void apply_environment(PipelineConfig& config) {
  if (const char* dir = std::getenv(kOutputDirEnv); dir && *dir) config.output_dir = dir;
}

std::string dump_toml(const PipelineConfig& config) {
  toml::table root;
  for (const auto& d : registry()) {
    const Value v = d.get(config);
    toml::table* target = &root;
    std::string key = d.info.name;
    if (const auto dot = key.find('.'); dot != std::string::npos) {
      const std::string section = key.substr(0, dot);
      key = key.substr(dot + 1);
      if (!root.contains(section)) root.insert(section, toml::table{});
      target = root[section].as_table();
    }
    std::visit(
        [&](const auto& x) {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, std::vector<std::string>>) {
            toml::array arr;
            for (const auto& s : x) arr.push_back(s);
            target->insert(key, std::move(arr));
          } else {
            target->insert(key, x);
          }
        },
        v);
  }
  toml::table seeds;
  seeds.insert("balance", static_cast<std::int64_t>(derive_seed(config.seed, seed_offset::kBalance)));
  seeds.insert("split", static_cast<std::int64_t>(derive_seed(config.seed, seed_offset::kSplit)));
  seeds.insert("shuffle", static_cast<std::int64_t>(derive_seed(config.seed, seed_offset::kShuffle)));
  seeds.insert("init", static_cast<std::int64_t>(derive_seed(config.seed, seed_offset::kInit)));
  seeds.insert("dropout", static_cast<std::int64_t>(derive_seed(config.seed, seed_offset::kDropout)));
  seeds.insert("cv_fold", "seed + fold_id, then the offsets above");
  root.insert("derived_seeds", std::move(seeds));

  std::ostringstream out;
  out << "# effective configuration\n" << root << "\n";
  return out.str();
}

}  // namespace covidmis::pipeline
