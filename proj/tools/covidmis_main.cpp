// covidmis command-line entry point. Talks to the library only through the C API.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "covidmis/covidmis.h"

namespace {

struct ConfigHandle {
  cm_config* ptr = nullptr;
  ~ConfigHandle() { cm_config_free(ptr); }
};

struct ModelHandle {
  cm_model* ptr = nullptr;
  ~ModelHandle() { cm_model_free(ptr); }
};

int report(cm_status status) {
  if (status != CM_OK) std::cerr << "covidmis: " << cm_last_error() << "\n";
  return static_cast<int>(status);
}

int run_predict(const std::string& checkpoint, const std::vector<std::string>& texts, const std::string& input) {
  std::vector<std::string> inputs;
  for (const auto& t : texts) {
    if (!t.empty()) inputs.push_back(t);
  }
  if (!input.empty()) {
    std::ifstream file;
    std::istream* in = &std::cin;
    if (input != "-") {
      file.open(input);
      if (!file) {
        std::cerr << "covidmis: cannot open input file: " << input << "\n";
        return CM_ERR_USAGE;
      }
      in = &file;
    }
    for (std::string line; std::getline(*in, line);) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) inputs.push_back(line);
    }
  }

  ModelHandle model;
  if (const auto st = cm_model_load(checkpoint.c_str(), &model.ptr); st != CM_OK) return report(st);
  for (const auto& text : inputs) {
    double p = 0.0;
    cm_label label = CM_LABEL_REAL;
    if (const auto st = cm_model_predict(model.ptr, text.c_str(), &p, &label); st != CM_OK) return report(st);
    std::printf("%.6f\t%s\n", p, label == CM_LABEL_FAKE ? "fake" : "real");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Misinformation corpus builder and text classifiers"};
  app.set_version_flag("--version", cm_version());
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  bool print_config = false;
  std::vector<std::string> sets;
  app.add_option("-c,--config", config_path, "TOML configuration file");
  app.add_flag("--print-config", print_config, "print the effective configuration and exit");
  app.add_option("--set", sets, "override a config key: section.key=value")->take_all();

  std::map<std::string, std::string> overrides;
  const std::size_t key_count = cm_config_key_count();
  for (std::size_t i = 0; i < key_count; ++i) {
    const std::string name = cm_config_key_name(i);
    const std::string help = std::string(cm_config_key_help(i)) + " (" + cm_config_key_type(i) + ")";
    app.add_option("--" + name, overrides[name], help)->group("Config overrides");
  }

  std::string model;
  std::string checkpoint;
  std::size_t k = 0;
  std::vector<std::string> texts;
  std::string input;

  auto* crawl = app.add_subcommand("crawl", "crawl trust-list domains and collect article URLs");
  auto* label = app.add_subcommand("label", "label tweets through the domain trust list");
  auto* train = app.add_subcommand("train", "train a classifier on the labeled corpus");
  train->add_option("-m,--model", model, "bilstm or ensemble")->required();
  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on its test split");
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint file written by train")->required();
  auto* cv = app.add_subcommand("cv", "stratified k-fold cross-validation");
  cv->add_option("-m,--model", model, "bilstm or ensemble")->required();
  cv->add_option("-k,--k", k, "number of folds (default: cv.k)");
  auto* predict = app.add_subcommand("predict", "classify raw text with a checkpoint");
  predict->add_option("--checkpoint", checkpoint, "checkpoint file written by train")->required();
  predict->add_option("-t,--text", texts, "text to classify (repeatable)");
  predict->add_option("-i,--input", input, "file with one text per line, or - for stdin");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return CM_ERR_USAGE;
  }

  ConfigHandle cfg;
  if (const auto st = cm_config_new(&cfg.ptr); st != CM_OK) return report(st);
  if (!config_path.empty()) {
    if (const auto st = cm_config_load_toml(cfg.ptr, config_path.c_str()); st != CM_OK) return report(st);
  }
  if (const auto st = cm_config_apply_env(cfg.ptr); st != CM_OK) return report(st);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::cerr << "covidmis: --set expects key=value, got '" << kv << "'\n";
      return CM_ERR_USAGE;
    }
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    if (const auto st = cm_config_set(cfg.ptr, key.c_str(), value.c_str()); st != CM_OK) return report(st);
  }
  for (std::size_t i = 0; i < key_count; ++i) {
    const std::string name = cm_config_key_name(i);
    if (app.count("--" + name) == 0) continue;
    if (const auto st = cm_config_set(cfg.ptr, name.c_str(), overrides[name].c_str()); st != CM_OK) {
      return report(st);
    }
  }

  if (print_config) {
    char* dump = nullptr;
    if (const auto st = cm_config_dump(cfg.ptr, &dump); st != CM_OK) return report(st);
    std::fputs(dump, stdout);
    cm_string_free(dump);
    return 0;
  }

  cm_status st = CM_OK;
  if (crawl->parsed()) {
    st = cm_run_crawl(cfg.ptr);
  } else if (label->parsed()) {
    st = cm_run_label(cfg.ptr);
  } else if (train->parsed()) {
    st = cm_run_train(cfg.ptr, model.c_str());
  } else if (evaluate->parsed()) {
    st = cm_run_evaluate(cfg.ptr, checkpoint.c_str());
  } else if (cv->parsed()) {
    st = cm_run_cv(cfg.ptr, model.c_str(), k);
  } else if (predict->parsed()) {
    return run_predict(checkpoint, texts, input);
  }
  if (st == CM_OK) std::cout << cm_last_summary() << "\n";
  return report(st);
}
