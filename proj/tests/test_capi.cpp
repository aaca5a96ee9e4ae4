#include <doctest.h>

#include <string>
#include <thread>

#include "covidmis/corpus.hpp"
#include "covidmis/covidmis.h"
#include "support/synthetic.hpp"
#include "support/tempdir.hpp"

using namespace covidmis;

namespace {

std::string take(char* s) {
  std::string out = s ? s : "";
  cm_string_free(s);
  return out;
}

struct Config {
  cm_config* ptr = nullptr;
  Config() { REQUIRE(cm_config_new(&ptr) == CM_OK); }
  ~Config() { cm_config_free(ptr); }
};

}  // namespace

TEST_SUITE("capi") {

TEST_CASE("version and key registry") {
  CHECK(std::string(cm_version()).size() > 0);
  const size_t n = cm_config_key_count();
  CHECK(n > 30);
  for (size_t i = 0; i < n; ++i) {
    CHECK(cm_config_key_name(i) != nullptr);
    CHECK(cm_config_key_type(i) != nullptr);
    CHECK(cm_config_key_help(i) != nullptr);
  }
  CHECK(cm_config_key_name(n) == nullptr);
}

TEST_CASE("status codes by failure kind") {
  Config cfg;
  CHECK(cm_config_set(cfg.ptr, "seed", "11") == CM_OK);
  CHECK(cm_config_set(cfg.ptr, "bogus.key", "1") == CM_ERR_USAGE);
  CHECK(std::string(cm_last_error()).find("bogus.key") != std::string::npos);
  CHECK(cm_config_set(cfg.ptr, nullptr, "1") == CM_ERR_USAGE);
  CHECK(cm_config_load_toml(cfg.ptr, "/nonexistent/config.toml") == CM_ERR_USAGE);
  CHECK(cm_run_train(cfg.ptr, "transformer") == CM_ERR_USAGE);
  CHECK(cm_run_evaluate(cfg.ptr, "/nonexistent.ckpt") == CM_ERR_USAGE);
  CHECK(cm_config_new(nullptr) == CM_ERR_USAGE);

  char* dumped = nullptr;
  REQUIRE(cm_config_dump(cfg.ptr, &dumped) == CM_OK);
  CHECK(take(dumped).find("seed = 11") != std::string::npos);
}

TEST_CASE("data errors map to their own code") {
  testing::TempDir dir;
  auto examples = testing::synthetic_corpus({.texts = 20});
  for (auto& e : examples) e.label = corpus::ClassLabel::real;
  corpus::write_labeled(dir / "corpus.jsonl", examples);
  Config cfg;
  REQUIRE(cm_config_set(cfg.ptr, "paths.corpus", (dir / "corpus.jsonl").c_str()) == CM_OK);
  REQUIRE(cm_config_set(cfg.ptr, "paths.output_dir", (dir / "out").c_str()) == CM_OK);
  CHECK(cm_run_train(cfg.ptr, "bilstm") == CM_ERR_DATA);
}

TEST_CASE("train, load and predict through the C API") {
  testing::TempDir dir;
  corpus::write_labeled(dir / "corpus.jsonl", testing::synthetic_corpus({.texts = 60, .filler_words = 30}));
  Config cfg;
  const std::pair<const char*, std::string> settings[] = {
      {"paths.corpus", (dir / "corpus.jsonl").string()},
      {"paths.output_dir", (dir / "out").string()},
      {"preprocess.max_sequence_length", "10"},
      {"model.embed_dim", "4"},
      {"model.rnn_hidden", "4"},
      {"model.conv_filters", "4"},
      {"model.conv_kernel", "3"},
      {"train.epochs", "1"},
  };
  for (const auto& [k, v] : settings) REQUIRE(cm_config_set(cfg.ptr, k, v.c_str()) == CM_OK);
  REQUIRE(cm_run_train(cfg.ptr, "ensemble") == CM_OK);
  CHECK(std::string(cm_last_summary()).size() > 0);
  const std::string ckpt = (dir / "out" / "ensemble.ckpt").string();
  CHECK(cm_run_evaluate(cfg.ptr, ckpt.c_str()) == CM_OK);

  cm_model* model = nullptr;
  REQUIRE(cm_model_load(ckpt.c_str(), &model) == CM_OK);
  double p = -1.0;
  cm_label label = CM_LABEL_REAL;
  REQUIRE(cm_model_predict(model, "some words here", &p, &label) == CM_OK);
  CHECK(p > 0.0);
  CHECK(p < 1.0);
  CHECK(label == (p >= 0.5 ? CM_LABEL_FAKE : CM_LABEL_REAL));
  CHECK(cm_model_predict(model, nullptr, &p, &label) == CM_ERR_USAGE);
  cm_model_free(model);
  cm_model_free(nullptr);
}

TEST_CASE("text utilities") {
  char* out = nullptr;
  REQUIRE(cm_clean_text("Hello, World! https://t.co/x", &out) == CM_OK);
  CHECK(take(out) == "hello world");
  REQUIRE(cm_stem("generalizations", &out) == CM_OK);
  CHECK(take(out) == "gener");
  CHECK(cm_stem(nullptr, &out) == CM_ERR_USAGE);
}

TEST_CASE("last error is per thread") {
  Config cfg;
  CHECK(cm_config_set(cfg.ptr, "bogus.main", "1") == CM_ERR_USAGE);
  std::string other;
  std::thread t([&] {
    cm_config* c = nullptr;
    cm_config_new(&c);
    cm_config_set(c, "bogus.thread", "1");
    other = cm_last_error();
    cm_config_free(c);
  });
  t.join();
  CHECK(other.find("bogus.thread") != std::string::npos);
  CHECK(std::string(cm_last_error()).find("bogus.main") != std::string::npos);
}

}  // TEST_SUITE
