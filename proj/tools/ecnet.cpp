// ecnet: train, evaluate and apply whole-entity detectors from the command line.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "ecnet/checkpoint.hpp"
#include "ecnet/synthetic.hpp"
#include "ecnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace ecnet;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " not found: " + path);
}

std::vector<Sentence> read_corpus(const std::string& path, LabelSet& labels, int tag_column) {
  require_file(path, "data file");
  return parse_conll(fs::path(path), labels, tag_column);
}

struct Loaded {
  std::unique_ptr<EcNet> model;
  std::vector<Sentence> data;
};

Loaded load_for_inference(const std::string& ckpt_path, const std::string& data_path) {
  require_file(ckpt_path, "checkpoint");
  const Checkpoint ckpt = load_checkpoint(fs::path(ckpt_path));
  Loaded out;
  out.model = load_model(ckpt);
  LabelSet labels = out.model->labels();
  labels.freeze();
  out.data = read_corpus(data_path, labels, ckpt.config.tag_column);
  return out;
}

void print_prf(const Prf& prf, const PrfCounts& counts) {
  std::printf("precision %.2f recall %.2f f1 %.2f (tp %zu, predicted %zu, gold %zu)\n",
              100 * prf.precision, 100 * prf.recall, 100 * prf.f1, counts.true_positives,
              counts.predicted, counts.gold);
}

int cmd_train(const std::string& config_path, const std::string& train_path,
              const std::string& dev_path, const std::string& out_path, bool quiet) {
  require_file(config_path, "config");
  ModelConfig cfg = ModelConfig::load(config_path);
  if (cfg.pretrained.empty()) throw UsageError("config does not name a pretrained vector file");
  require_file(cfg.pretrained, "pretrained vector file");
  cfg.pretrained = fs::absolute(cfg.pretrained).lexically_normal().string();

  LabelSet labels(cfg.classes);
  if (!cfg.classes.empty()) labels.freeze();
  auto train_set = read_corpus(train_path, labels, cfg.tag_column);
  labels.freeze();
  auto dev_set = dev_path.empty() ? std::vector<Sentence>{} : read_corpus(dev_path, labels, cfg.tag_column);
  cfg.classes = labels.names();
  train_set = filter_single_class(train_set, cfg.filter_full_cover);
  if (train_set.empty()) throw std::invalid_argument("no training sentences left after filtering");

  auto words = std::make_shared<const WordTable>(load_pretrained(cfg.pretrained));
  EcNet model(cfg, words);
  TrainOptions options;
  options.on_epoch = [quiet](const EpochLog& log) {
    if (quiet) return;
    std::fprintf(stderr, "epoch %zu lr %.3g loss %.6f", log.epoch + 1, log.lr, log.mean_loss);
    if (log.dev) std::fprintf(stderr, " dev_f1 %.2f", 100 * log.dev->f1);
    std::fputc('\n', stderr);
  };
  const TrainResult result = train(model, train_set, dev_set, options);
  save_checkpoint(out_path, result.best);
  std::printf("saved %s (epoch %zu", out_path.c_str(), result.best_epoch + 1);
  if (result.best_dev_f1 >= 0) std::printf(", dev f1 %.2f", 100 * result.best_dev_f1);
  std::printf(")\n");
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, std::optional<double> threshold) {
  auto loaded = load_for_inference(ckpt, data);
  PrfCounts counts;
  const Prf prf = evaluate(*loaded.model, loaded.data,
                           threshold.value_or(loaded.model->config().threshold), &counts);
  print_prf(prf, counts);
  return 0;
}

int cmd_predict(const std::string& ckpt, const std::string& data, std::optional<double> threshold,
                const std::string& out_path) {
  auto loaded = load_for_inference(ckpt, data);
  const auto outputs = loaded.model->run(loaded.data);
  const auto spans = decode_all(outputs, threshold.value_or(loaded.model->config().threshold));
  std::vector<PredictedSentence> preds;
  for (std::size_t i = 0; i < loaded.data.size(); ++i) preds.push_back({loaded.data[i].tokens, spans[i]});
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  write_predictions_jsonl(out, preds, loaded.model->labels());
  return 0;
}

int cmd_sweep(const std::string& ckpt, const std::string& data, const std::string& range,
              const std::string& out_path) {
  const auto thresholds = parse_thresholds(range);
  auto loaded = load_for_inference(ckpt, data);
  const auto outputs = loaded.model->run(loaded.data);
  const auto rows = threshold_sweep(outputs, thresholds);
  write_sweep_table(std::cout, rows);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    write_sweep_csv(out, rows);
  }
  return 0;
}

int cmd_synth(const std::string& dir, std::uint64_t seed) {
  SyntheticOptions options;
  options.seed = seed;
  const auto corpus = make_synthetic_corpus(options);
  write_synthetic_corpus(corpus, dir);
  std::ofstream cfg(fs::path(dir) / "desk.cfg");
  cfg << "preset=desk\npretrained=vectors.txt\nclasses=PER,ORG\n";
  std::printf("wrote %s\n", dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Whole-entity detection NER"};
  app.require_subcommand(1);

  std::string config, train_path, dev_path, ckpt, data, out, thresholds = "0.1:0.9:0.1", dir;
  std::optional<double> threshold;
  std::uint64_t seed = 7;
  bool quiet = false;

  auto* train = app.add_subcommand("train", "train a model and save the best-dev checkpoint");
  train->add_option("--config", config, "key=value configuration file")->required();
  train->add_option("--train", train_path, "CoNLL training corpus")->required();
  train->add_option("--dev", dev_path, "CoNLL development corpus");
  train->add_option("--out", out, "checkpoint to write")->required();
  train->add_flag("--quiet", quiet, "suppress per-epoch logging");

  auto* eval = app.add_subcommand("eval", "span precision/recall/F1 on a corpus");
  eval->add_option("--ckpt", ckpt)->required();
  eval->add_option("--data", data)->required();
  eval->add_option("--threshold", threshold)->check(CLI::Range(0.0, 1.0));

  auto* predict = app.add_subcommand("predict", "write decoded spans as JSON lines");
  predict->add_option("--ckpt", ckpt)->required();
  predict->add_option("--data", data)->required();
  predict->add_option("--threshold", threshold)->check(CLI::Range(0.0, 1.0));
  predict->add_option("--out", out)->required();

  auto* sweep = app.add_subcommand("sweep", "scores over a range of thresholds");
  sweep->add_option("--ckpt", ckpt)->required();
  sweep->add_option("--data", data)->required();
  sweep->add_option("--thresholds", thresholds, "start:stop:step or a single value");
  sweep->add_option("--out", out, "CSV file");

  auto* synth = app.add_subcommand("synth", "write the toy two-type corpus, vectors and a config");
  synth->add_option("--out-dir", dir)->required();
  synth->add_option("--seed", seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "ecnet: usage error: %s\n", e.what());
    return 2;
  }

  try {
    if (*train) return cmd_train(config, train_path, dev_path, out, quiet);
    if (*eval) return cmd_eval(ckpt, data, threshold);
    if (*predict) return cmd_predict(ckpt, data, threshold, out);
    if (*sweep) return cmd_sweep(ckpt, data, thresholds, out);
    if (*synth) return cmd_synth(dir, seed);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "ecnet: usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ecnet: error: %s\n", e.what());
    return 1;
  }
  return 2;
}
