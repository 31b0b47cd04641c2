#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "toolwear/error.hpp"
#include "toolwear/parallel.hpp"
#include "toolwear/pipeline.hpp"

namespace fs = std::filesystem;
using namespace toolwear;

namespace {

struct Overrides {
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<bool> split_before_augment;
  std::optional<std::string> pool;
  std::optional<std::string> norm;
};

void add_common(CLI::App* cmd, Overrides& o, bool model_flags) {
  cmd->add_option("--config", o.config, "JSON pipeline config (defaults apply when omitted)");
  cmd->add_option("--seed", o.seed, "override the config seed");
  if (!model_flags) return;
  cmd->add_flag("--split-before-augment{true}", o.split_before_augment,
                "split runs before augmenting (=false pools augmented copies first)");
  cmd->add_option("--pool", o.pool, "pooling variant")->check(CLI::IsMember({"max", "avg"}));
  cmd->add_option("--norm", o.norm, "normalization variant")->check(CLI::IsMember({"layer", "batch"}));
}

PipelineConfig resolve(const Overrides& o) {
  PipelineConfig cfg = o.config ? load_config(*o.config) : parse_config("{}");
  if (o.seed) cfg.seed = cfg.train.seed = *o.seed;
  if (o.split_before_augment) cfg.spectrogram.split_before_augment = *o.split_before_augment;
  if (o.pool) cfg.arch.pool_kind = nn::parse_pool_kind(*o.pool);
  if (o.norm) cfg.arch.norm_kind = nn::parse_norm_kind(*o.norm);
  cfg.validate();
  return cfg;
}

fs::path sibling(const fs::path& p, const std::string& suffix) {
  return p.parent_path() / (p.stem().string() + suffix);
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Tool-wear estimation from ultrasonic array recordings: synth, train, eval, predict"};
  app.require_subcommand(1);

  Overrides o;
  fs::path out, dataset, checkpoint;
  std::optional<fs::path> metrics, plot, svg;
  int run_id = 0;
  std::optional<int> window;

  auto* synth = app.add_subcommand("synth", "generate a synthetic spectrogram dataset");
  add_common(synth, o, false);
  synth->add_option("--out", out, "dataset container to write")->required();

  auto* train = app.add_subcommand("train", "train the regression network");
  add_common(train, o, true);
  train->add_option("--dataset", dataset, "dataset container")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out, "checkpoint to write")->required();
  train->add_option("--metrics", metrics, "per-epoch CSV (default: <out>_metrics.csv)");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(eval, o, true);
  eval->add_option("--dataset", dataset, "dataset container")->required()->check(CLI::ExistingFile);
  eval->add_option("--checkpoint", checkpoint, "trained checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", out, "report CSV to write")->required();
  eval->add_option("--plot", plot, "plot-data CSV (default: <out>_plot.csv)");
  eval->add_option("--svg", svg, "also write an SVG plot");

  auto* predict = app.add_subcommand("predict", "predict run number and remaining life for one run");
  add_common(predict, o, false);
  predict->add_option("--dataset", dataset, "dataset container")->required()->check(CLI::ExistingFile);
  predict->add_option("--checkpoint", checkpoint, "trained checkpoint")->required()->check(CLI::ExistingFile);
  predict->add_option("--run-id", run_id, "run number")->required();
  predict->add_option("--window", window, "runs averaged for the windowed estimate");

  auto* config = app.add_subcommand("config", "print the effective config as JSON");
  add_common(config, o, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_code(ErrorKind::config);
  }

  try {
    const PipelineConfig cfg = resolve(o);
    if (*synth) {
      cmd_synth(cfg, out, std::cerr);
    } else if (*train) {
      cmd_train(cfg, dataset, {out, metrics.value_or(sibling(out, "_metrics.csv"))}, std::cerr);
    } else if (*eval) {
      cmd_eval(cfg, dataset, checkpoint, {out, plot.value_or(sibling(out, "_plot.csv")), svg}, std::cerr);
    } else if (*predict) {
      cmd_predict(checkpoint, dataset, run_id, window.value_or(cfg.eval.window), std::cout);
    } else if (*config) {
      std::cout << dump_config(cfg);
    }
  } catch (const Error& e) {
    std::cerr << "toolwear: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "toolwear: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
