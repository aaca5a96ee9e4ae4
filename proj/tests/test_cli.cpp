#include <doctest.h>

#include <stdio.h>
#include <sys/wait.h>

#include <string>

#include "covidmis/corpus.hpp"
#include "covidmis/io.hpp"
#include "support/synthetic.hpp"
#include "support/tempdir.hpp"

using namespace covidmis;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
};

// Runs the CLI with `args` through the shell; stderr is discarded.
RunResult run(const std::string& args, const std::string& stdin_text = "") {
  std::string cmd = std::string("'") + COVIDMIS_CLI_PATH + "' " + args + " 2>/dev/null";
  if (!stdin_text.empty()) cmd = "printf '" + stdin_text + "' | " + cmd;
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  for (std::size_t n; (n = fread(buf, 1, sizeof buf, pipe)) > 0;) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 2") {
  CHECK(run("").code == 2);
  CHECK(run("--no-such-flag label").code == 2);
  CHECK(run("train").code == 2);
  CHECK(run("train --model transformer").code == 2);
  CHECK(run("--set nokey label").code == 2);
  CHECK(run("--set bogus.key=1 label").code == 2);
  CHECK(run("--config /nonexistent.toml label").code == 2);
  CHECK(run("--paths.tweets /nonexistent.jsonl --paths.trust_list /nonexistent.csv label").code == 2);
  CHECK(run("evaluate --checkpoint /nonexistent.ckpt").code == 2);
}

TEST_CASE("help and version exit 0") {
  const auto help = run("--help");
  CHECK(help.code == 0);
  CHECK(help.out.find("train") != std::string::npos);
  CHECK(help.out.find("--train.epochs") != std::string::npos);
  CHECK(run("--version").code == 0);
}

TEST_CASE("print-config reflects every override layer") {
  testing::TempDir dir;
  io::write_file_atomic(dir / "c.toml", "seed = 5\n[train]\nepochs = 9\n");
  const auto r = run("--config '" + (dir / "c.toml").string() +
                     "' --set train.batch_size=32 --model.embed_dim 16 --print-config label");
  CHECK(r.code == 0);
  CHECK(r.out.find("seed = 5") != std::string::npos);
  CHECK(r.out.find("epochs = 9") != std::string::npos);
  CHECK(r.out.find("batch_size = 32") != std::string::npos);
  CHECK(r.out.find("embed_dim = 16") != std::string::npos);
}

TEST_CASE("data errors exit 3") {
  testing::TempDir dir;
  auto examples = testing::synthetic_corpus({.texts = 20});
  for (auto& e : examples) e.label = corpus::ClassLabel::fake;
  corpus::write_labeled(dir / "corpus.jsonl", examples);
  const auto r = run("--paths.corpus '" + (dir / "corpus.jsonl").string() + "' --paths.output_dir '" +
                     (dir / "out").string() + "' train --model bilstm");
  CHECK(r.code == 3);
}

TEST_CASE("train then predict from arguments and stdin") {
  testing::TempDir dir;
  corpus::write_labeled(dir / "corpus.jsonl", testing::synthetic_corpus({.texts = 60, .filler_words = 30}));
  const std::string common = "--paths.corpus '" + (dir / "corpus.jsonl").string() + "' --paths.output_dir '" +
                             (dir / "out").string() +
                             "' --preprocess.max_sequence_length 10 --model.embed_dim 4 --model.rnn_hidden 4"
                             " --train.epochs 1";
  const auto trained = run(common + " train --model bilstm");
  REQUIRE(trained.code == 0);
  CHECK_FALSE(trained.out.empty());
  const std::string ckpt = "'" + (dir / "out" / "bilstm.ckpt").string() + "'";

  const auto eval = run(common + " evaluate --checkpoint " + ckpt);
  CHECK(eval.code == 0);

  const auto p = run("predict --checkpoint " + ckpt + " --text 'first text' --text 'second text'");
  CHECK(p.code == 0);
  const auto lines = std::count(p.out.begin(), p.out.end(), '\n');
  CHECK(lines == 2);
  CHECK((p.out.find("\tfake") != std::string::npos || p.out.find("\treal") != std::string::npos));

  const auto piped = run("predict --checkpoint " + ckpt + " --input -", "one\\n\\ntwo\\nthree\\n");
  CHECK(piped.code == 0);
  CHECK(std::count(piped.out.begin(), piped.out.end(), '\n') == 3);
}

}  // TEST_SUITE
