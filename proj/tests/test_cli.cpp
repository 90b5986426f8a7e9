#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <sys/wait.h>

#include "ecnet/corpus.hpp"
#include "ecnet/decoder.hpp"

using namespace ecnet;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status = -1;
  std::string out;
};

// stdout is captured; stderr goes to the ctest log.
Run run(const std::string& args) {
  Run r;
  const std::string cmd = std::string(ECNET_CLI_PATH) + " " + args;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// A trained two-epoch checkpoint shared by the cases below.
const fs::path& workdir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "ecnet_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    REQUIRE(run("synth --out-dir " + q(d)).status == 0);
    std::ofstream(d / "tiny.cfg") << "preset=desk\npretrained=vectors.txt\nclasses=PER,ORG\n"
                                     "d_model=16\nheads=2\nn_mha_layers=1\nn_accn_layers=1\n"
                                     "d_p=8\nmax_epochs=2\neval_every=1\n";
    const auto r = run("train --quiet --config " + q(d / "tiny.cfg") + " --train " +
                       q(d / "train.conll") + " --dev " + q(d / "dev.conll") + " --out " +
                       q(d / "m.ckpt"));
    REQUIRE(r.status == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("synth writes the corpus and a ready config") {
  const auto& d = workdir();
  for (const char* f : {"train.conll", "dev.conll", "vectors.txt", "desk.cfg", "m.ckpt"}) {
    CHECK(fs::exists(d / f));
  }
}

TEST_CASE("eval is repeatable and predictions re-score to the same counts") {
  const auto& d = workdir();
  const std::string args = "eval --ckpt " + q(d / "m.ckpt") + " --data " + q(d / "dev.conll");
  const auto a = run(args);
  const auto b = run(args);
  REQUIRE(a.status == 0);
  CHECK(a.out == b.out);

  std::smatch m;
  const std::regex counts(R"(\(tp (\d+), predicted (\d+), gold (\d+)\))");
  REQUIRE(std::regex_search(a.out, m, counts));

  REQUIRE(run("predict --ckpt " + q(d / "m.ckpt") + " --data " + q(d / "dev.conll") + " --out " +
              q(d / "pred.jsonl"))
              .status == 0);
  LabelSet labels({"PER", "ORG"});
  labels.freeze();
  const auto gold = parse_conll(d / "dev.conll", labels);
  std::ifstream in(d / "pred.jsonl");
  const auto preds = read_predictions_jsonl(in, labels);
  REQUIRE(preds.size() == gold.size());
  PrfCounts c;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    CHECK(preds[i].tokens == gold[i].tokens);
    c += count_matches(preds[i].spans, gold[i].gold_spans);
  }
  CHECK(std::to_string(c.true_positives) == m[1].str());
  CHECK(std::to_string(c.predicted) == m[2].str());
  CHECK(std::to_string(c.gold) == m[3].str());
}

TEST_CASE("sweep writes one CSV row per threshold") {
  const auto& d = workdir();
  const auto r = run("sweep --ckpt " + q(d / "m.ckpt") + " --data " + q(d / "dev.conll") +
                     " --out " + q(d / "sweep.csv"));
  REQUIRE(r.status == 0);
  std::ifstream in(d / "sweep.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "threshold,precision,recall,f1");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 9);
}

TEST_CASE("bad invocations exit nonzero") {
  const auto& d = workdir();
  CHECK(run("").status != 0);
  CHECK(run("eval --ckpt " + q(d / "m.ckpt") + " --bogus 1 2>/dev/null").status == 2);
  CHECK(run("eval --ckpt " + q(d / "missing.ckpt") + " --data " + q(d / "dev.conll") +
            " 2>/dev/null")
            .status != 0);
  CHECK(run("eval --ckpt " + q(d / "m.ckpt") + " --data " + q(d / "dev.conll") +
            " --threshold 1.5 2>/dev/null")
            .status == 2);
  CHECK(run("train --config " + q(d / "nope.cfg") + " --train " + q(d / "train.conll") +
            " --out " + q(d / "x.ckpt") + " 2>/dev/null")
            .status != 0);
}
