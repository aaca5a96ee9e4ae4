#include "covidmis/covidmis.h"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

#include <nlohmann/json.hpp>

#include "covidmis/error.hpp"
#include "covidmis/pipeline.hpp"

struct cm_config {
  covidmis::pipeline::PipelineConfig config;
};

struct cm_model {
  covidmis::pipeline::LoadedModel loaded;
};

namespace {

thread_local std::string g_last_error;
thread_local std::string g_last_summary;

cm_status fail(cm_status status, const char* what) {
  g_last_error = what;
  return status;
}

template <typename F>
cm_status guarded(F&& body) {
  using namespace covidmis;
  try {
    body();
    g_last_error.clear();
    return CM_OK;
  } catch (const UsageError& e) {
    return fail(CM_ERR_USAGE, e.what());
  } catch (const IoError& e) {
    return fail(CM_ERR_USAGE, e.what());
  } catch (const DataError& e) {
    return fail(CM_ERR_DATA, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(CM_ERR_DATA, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(CM_ERR_USAGE, e.what());
  } catch (const std::exception& e) {
    return fail(CM_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(CM_ERR_INTERNAL, "unknown error");
  }
}

char* duplicate(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

cm_status null_argument(const char* name) {
  g_last_error = std::string("null argument: ") + name;
  return CM_ERR_USAGE;
}

covidmis::nn::Architecture architecture(const char* model) {
  try {
    return covidmis::nn::parse_architecture(model);
  } catch (const std::invalid_argument& e) {
    throw covidmis::UsageError(e.what());
  }
}

std::string fixed(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

extern "C" {

const char* cm_version(void) { return "0.1.0"; }

const char* cm_last_error(void) { return g_last_error.c_str(); }

const char* cm_last_summary(void) { return g_last_summary.c_str(); }

void cm_string_free(char* s) { std::free(s); }

cm_status cm_config_new(cm_config** out) {
  if (!out) return null_argument("out");
  return guarded([&] { *out = new cm_config(); });
}

void cm_config_free(cm_config* cfg) { delete cfg; }

cm_status cm_config_load_toml(cm_config* cfg, const char* path) {
  if (!cfg) return null_argument("cfg");
  if (!path) return null_argument("path");
  return guarded([&] { covidmis::pipeline::load_toml_file(cfg->config, path); });
}

cm_status cm_config_apply_env(cm_config* cfg) {
  if (!cfg) return null_argument("cfg");
  return guarded([&] { covidmis::pipeline::apply_environment(cfg->config); });
}

cm_status cm_config_set(cm_config* cfg, const char* key, const char* value) {
  if (!cfg) return null_argument("cfg");
  if (!key) return null_argument("key");
  if (!value) return null_argument("value");
  return guarded([&] { covidmis::pipeline::set_value(cfg->config, key, value); });
}

cm_status cm_config_dump(const cm_config* cfg, char** out_toml) {
  if (!cfg) return null_argument("cfg");
  if (!out_toml) return null_argument("out_toml");
  return guarded([&] { *out_toml = duplicate(covidmis::pipeline::dump_toml(cfg->config)); });
}

size_t cm_config_key_count(void) { return covidmis::pipeline::config_keys().size(); }

const char* cm_config_key_name(size_t index) {
  const auto& keys = covidmis::pipeline::config_keys();
  return index < keys.size() ? keys[index].name.c_str() : nullptr;
}

const char* cm_config_key_type(size_t index) {
  const auto& keys = covidmis::pipeline::config_keys();
  return index < keys.size() ? keys[index].type.c_str() : nullptr;
}

const char* cm_config_key_help(size_t index) {
  const auto& keys = covidmis::pipeline::config_keys();
  return index < keys.size() ? keys[index].help.c_str() : nullptr;
}

cm_status cm_run_crawl(const cm_config* cfg) {
  if (!cfg) return null_argument("cfg");
  return guarded([&] {
    const auto s = covidmis::pipeline::cmd_crawl(cfg->config);
    g_last_summary = "crawled " + std::to_string(s.domains) + " domains, " + std::to_string(s.pages_visited) +
                     " pages, " + std::to_string(s.articles) + " articles";
  });
}

cm_status cm_run_label(const cm_config* cfg) {
  if (!cfg) return null_argument("cfg");
  return guarded([&] {
    const auto s = covidmis::pipeline::cmd_label(cfg->config);
    g_last_summary = "labeled " + std::to_string(s.examples) + " examples from " + std::to_string(s.loaded) +
                     " tweets (" + std::to_string(s.skipped_lines) + " lines skipped, " +
                     std::to_string(s.stats.conflicts) + " conflicts, " + std::to_string(s.stats.unmatched) +
                     " unmatched)";
  });
}

cm_status cm_run_train(const cm_config* cfg, const char* model) {
  if (!cfg) return null_argument("cfg");
  if (!model) return null_argument("model");
  return guarded([&] {
    const auto s = covidmis::pipeline::cmd_train(cfg->config, architecture(model));
    std::string line = "trained on " + std::to_string(s.train_size) + " examples (test " +
                       std::to_string(s.test_size) + ", vocab " + std::to_string(s.vocab_size) + ")";
    if (!s.logs.empty()) {
      const auto& last = s.logs.back();
      line += "; final loss " + fixed(last.loss) + ", train acc " + fixed(last.train_acc);
      if (last.val_acc) line += ", val acc " + fixed(*last.val_acc);
    }
    g_last_summary = line + "; checkpoint " + s.checkpoint.string();
  });
}

cm_status cm_run_evaluate(const cm_config* cfg, const char* checkpoint) {
  if (!cfg) return null_argument("cfg");
  if (!checkpoint) return null_argument("checkpoint");
  return guarded([&] {
    const auto r = covidmis::pipeline::cmd_evaluate(cfg->config, checkpoint);
    g_last_summary = "accuracy " + fixed(r.accuracy) + ", precision " + fixed(r.precision) + ", recall " +
                     fixed(r.recall) + ", f1 " + fixed(r.f1) + " (positive class " +
                     std::string(covidmis::corpus::to_string(r.positive_class)) + ")";
  });
}

cm_status cm_run_cv(const cm_config* cfg, const char* model, size_t k) {
  if (!cfg) return null_argument("cfg");
  if (!model) return null_argument("model");
  return guarded([&] {
    const auto r = covidmis::pipeline::cmd_cv(cfg->config, architecture(model), k == 0 ? cfg->config.cv_k : k);
    g_last_summary = std::to_string(r.folds.size()) + "-fold accuracy " + fixed(r.mean_accuracy) + " +/- " +
                     fixed(r.std_accuracy);
  });
}

cm_status cm_model_load(const char* checkpoint, cm_model** out) {
  if (!checkpoint) return null_argument("checkpoint");
  if (!out) return null_argument("out");
  return guarded([&] { *out = new cm_model{covidmis::pipeline::load_model(checkpoint)}; });
}

void cm_model_free(cm_model* model) { delete model; }

cm_status cm_model_predict(cm_model* model, const char* text, double* probability, cm_label* label) {
  if (!model) return null_argument("model");
  if (!text) return null_argument("text");
  return guarded([&] {
    const auto p = model->loaded.predict(text);
    if (probability) *probability = p.probability;
    if (label) *label = p.label == covidmis::corpus::ClassLabel::fake ? CM_LABEL_FAKE : CM_LABEL_REAL;
  });
}

cm_status cm_clean_text(const char* text, char** out) {
  if (!text) return null_argument("text");
  if (!out) return null_argument("out");
  return guarded([&] { *out = duplicate(covidmis::textprep::clean_text(text)); });
}

cm_status cm_stem(const char* word, char** out) {
  if (!word) return null_argument("word");
  if (!out) return null_argument("out");
  return guarded([&] { *out = duplicate(covidmis::textprep::stem(word)); });
}

}  // extern "C"
