#include <cmath>
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "support.hpp"
#include "toolwear/error.hpp"
#include "toolwear/pipeline.hpp"

using namespace toolwear;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& f) const { return path / f; }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  for (std::string l; std::getline(ss, l);) out.push_back(l);
  return out;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(TOOLWEAR_CLI) + " " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kTiny = R"({"n_total": 10, "spectrogram": {"frames_per_run": 16, "augment": {"max_shift": 2}},
                        "nn": {"training": {"max_epochs": 2}}})";

// Oracle setup: constant spectrograms encoding the label and a checkpoint that reads it back.
PipelineConfig oracle_config(int n_total, std::size_t frames) {
  return parse_config(R"({"n_total": )" + std::to_string(n_total) + R"(, "spectrogram": {"frames_per_run": )" +
                      std::to_string(frames) +
                      R"(, "split_before_augment": true}, "nn": {"architecture": {"norm_kind": "batch"}}})");
}

void write_oracle(const PipelineConfig& cfg, const fs::path& dataset, const fs::path& checkpoint) {
  SpectrogramDataset ds = oracle::constant_dataset(cfg.n_total(), cfg.spectrogram.frames_per_run);
  write_dataset(dataset, ds);
  write_checkpoint(checkpoint, CheckpointFile{{oracle::identity_model(cfg.arch), 1, 0.0}, cfg.n_total()});
}

}  // namespace

TEST_CASE("synth: run count, bins and byte-identical reruns") {
  TempDir dir("toolwear_cli_synth");
  const PipelineConfig cfg = parse_config(kTiny);
  std::ostringstream log;
  cmd_synth(cfg, dir / "a.twps", log);
  cmd_synth(cfg, dir / "b.twps", log);
  CHECK(slurp(dir / "a.twps") == slurp(dir / "b.twps"));
  const SpectrogramDataset ds = read_dataset(dir / "a.twps");
  CHECK(ds.runs.size() == 10);
  CHECK(ds.runs[0].bins == 513);
  CHECK(log.str().find("10 runs") != std::string::npos);

  PipelineConfig other = cfg;
  other.seed = 2;
  cmd_synth(other, dir / "c.twps", log);
  CHECK(slurp(dir / "a.twps") != slurp(dir / "c.twps"));
}

TEST_CASE("default config describes 350 runs of 513 bins") {
  const PipelineConfig cfg = parse_config("{}");
  CHECK(cfg.n_total() == 350);
  CHECK(frame_length(cfg.scene.sample_rate, cfg.scene.frame_seconds) / 2 >= cfg.dsp.welch_window / 2);
  CHECK(cfg.dsp.welch_window / 2 + 1 == 513);
}

TEST_CASE("train: smoke run writes checkpoint and metrics") {
  TempDir dir("toolwear_cli_train");
  const PipelineConfig cfg = parse_config(kTiny);
  std::ostringstream log;
  cmd_synth(cfg, dir / "d.twps", log);
  const nn::TrainResult r = cmd_train(cfg, dir / "d.twps", {dir / "m.twck", dir / "m.csv"}, log);
  const auto rows = lines(slurp(dir / "m.csv"));
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == "epoch,train_loss,val_loss");
  double min_val = 1e300;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto comma = rows[i].rfind(',');
    min_val = std::min(min_val, std::stod(rows[i].substr(comma + 1)));
  }
  const CheckpointFile ck = read_checkpoint(dir / "m.twck");
  CHECK(ck.checkpoint.val_loss == min_val);
  CHECK(ck.n_total == 10);
  CHECK(ck.checkpoint.params == r.best.params);
}

TEST_CASE("splits: before-augment keeps copies out of validation and test") {
  const SpectrogramDataset ds = oracle::constant_dataset(40, 16);
  PipelineConfig cfg = parse_config(R"({"n_total": 40, "spectrogram": {"frames_per_run": 16,
      "split_before_augment": true, "augment": {"copies": 2, "max_shift": 3}}})");
  const PreparedSplits a = prepare_splits(ds, cfg);
  CHECK(a.train.size() == 30 * 3);
  CHECK(a.val.size() == 4);
  CHECK(a.test.size() == 6);
  std::set<int> train_runs, held;
  for (const auto& s : a.train) train_runs.insert(s.run_label);
  for (const auto& s : a.val) held.insert(s.run_label);
  for (const auto& s : a.test) held.insert(s.run_label);
  for (int r : held) CHECK(!train_runs.count(r));

  cfg.spectrogram.split_before_augment = false;
  const PreparedSplits b = prepare_splits(ds, cfg);
  CHECK(b.train.size() + b.val.size() + b.test.size() == 120);
  CHECK(b.test.size() == 18);
}

TEST_CASE("eval: oracle checkpoint gives zero errors; outputs are reproducible") {
  TempDir dir("toolwear_cli_eval");
  const PipelineConfig cfg = oracle_config(90, 16);
  write_oracle(cfg, dir / "d.twps", dir / "o.twck");
  std::ostringstream log;
  const EvalReport r = cmd_eval(cfg, dir / "d.twps", dir / "o.twck", {dir / "r.csv", dir / "p.csv", dir / "p.svg"}, log);
  const auto report = lines(slurp(dir / "r.csv"));
  const auto plot = lines(slurp(dir / "p.csv"));
  CHECK(r.runs.size() == 13);  // 68 / 9 / 13 after rounding train and validation counts
  CHECK(plot.size() == r.runs.size() + 1);
  CHECK(report.size() == r.runs.size() + 2);
  for (const RunErrorStats& s : r.runs) {
    CHECK(std::abs(s.mean_err_single) < 1e-9);
    CHECK(std::abs(s.std_err_single) < 1e-9);
    // Clamped windows at the two ends of the tool life cannot be centred.
    if (s.run > 2 && s.run < 89) CHECK(std::abs(s.mean_err_windowed) < 1e-9);
  }
  for (std::size_t i = 1; i + 1 < report.size(); ++i) {
    const int run = std::stoi(report[i]);
    if (run > 2 && run < 89) CHECK(report[i] == std::to_string(run) + ",0.000000,0.000000,0.000000,0.000000");
  }
  CHECK(fs::exists(dir / "p.svg"));

  const std::string first = slurp(dir / "r.csv") + slurp(dir / "p.csv");
  cmd_eval(cfg, dir / "d.twps", dir / "o.twck", {dir / "r.csv", dir / "p.csv", std::nullopt}, log);
  CHECK(slurp(dir / "r.csv") + slurp(dir / "p.csv") == first);
}

TEST_CASE("eval: architecture mismatch is a compatibility error listing both") {
  TempDir dir("toolwear_cli_compat");
  const PipelineConfig cfg = oracle_config(20, 16);
  write_oracle(cfg, dir / "d.twps", dir / "o.twck");
  PipelineConfig other = cfg;
  other.arch.norm_kind = nn::NormKind::layer;
  std::ostringstream log;
  try {
    cmd_eval(other, dir / "d.twps", dir / "o.twck", {dir / "r.csv", dir / "p.csv", std::nullopt}, log);
    FAIL("mismatch accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::compatibility);
    CHECK(std::string(e.what()).find("norm=batch") != std::string::npos);
    CHECK(std::string(e.what()).find("norm=layer") != std::string::npos);
  }
}

TEST_CASE("predict: oracle RUL fraction and missing runs") {
  TempDir dir("toolwear_cli_predict");
  const PipelineConfig cfg = oracle_config(350, 16);
  write_oracle(cfg, dir / "d.twps", dir / "o.twck");
  std::ostringstream out, again;
  cmd_predict(dir / "o.twck", dir / "d.twps", 175, 5, out);
  cmd_predict(dir / "o.twck", dir / "d.twps", 175, 5, again);
  CHECK(out.str() == again.str());
  CHECK(out.str().find("pred_single 175.0000\n") != std::string::npos);
  CHECK(out.str().find("pred_win5 175.0000\n") != std::string::npos);
  CHECK(out.str().find("rul_fraction_raw 0.5000\n") != std::string::npos);
  CHECK(out.str().find("rul_fraction_clamped 0.5000\n") != std::string::npos);
  try {
    cmd_predict(dir / "o.twck", dir / "d.twps", 351, 5, out);
    FAIL("missing run accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::not_found);
  }
}

TEST_CASE("command-line exit codes") {
  TempDir dir("toolwear_cli_binary");
  const fs::path log = dir / "log.txt";
  {
    std::ofstream(dir / "tiny.json") << kTiny;
    std::ofstream(dir / "bad.json") << R"({"nn": {"training": {"epochs": 3}}})";
    std::ofstream(dir / "junk.twps") << "not a dataset at all";
  }
  const PipelineConfig ocfg = oracle_config(20, 16);
  write_oracle(ocfg, dir / "o.twps", dir / "o.twck");
  {
    std::ofstream(dir / "oracle.json") << R"({"n_total": 20, "spectrogram": {"frames_per_run": 16}})";
  }
  const std::string d = dir.path.string() + "/";

  CHECK(run_cli("--help", log) == 0);
  CHECK(run_cli("", log) == 2);
  CHECK(run_cli("synth --config " + d + "bad.json --out " + d + "x.twps", log) == 2);
  CHECK(slurp(log).find("nn.training.epochs") != std::string::npos);
  CHECK(run_cli("synth --config " + d + "missing.json --out " + d + "x.twps", log) == 2);
  CHECK(run_cli("train --pool median --dataset " + d + "o.twps --out " + d + "m.twck", log) == 2);
  CHECK(run_cli("train --config " + d + "tiny.json --dataset " + d + "junk.twps --out " + d + "m.twck", log) == 3);
  CHECK(slurp(log).find("offset 0") != std::string::npos);
  CHECK(run_cli("synth --config " + d + "tiny.json --out /nonexistent-dir/x.twps", log) == 3);
  CHECK(run_cli("eval --config " + d + "oracle.json --dataset " + d + "o.twps --checkpoint " + d +
                    "o.twck --out " + d + "r.csv",
                log) == 4);
  CHECK(run_cli("eval --config " + d + "oracle.json --norm batch --split-before-augment --dataset " + d +
                    "o.twps --checkpoint " + d + "o.twck --out " + d + "r.csv --svg " + d + "r.svg",
                log) == 0);
  CHECK(fs::exists(dir / "r_plot.csv"));
  CHECK(fs::exists(dir / "r.svg"));
  CHECK(run_cli("predict --dataset " + d + "o.twps --checkpoint " + d + "o.twck --run-id 10", log) == 0);
  CHECK(slurp(log).find("rul_fraction_raw 0.5000") != std::string::npos);
  CHECK(run_cli("predict --dataset " + d + "o.twps --checkpoint " + d + "o.twck --run-id 21", log) ==
        exit_code(ErrorKind::not_found));
  CHECK(exit_code(ErrorKind::not_found) != 0);
  CHECK(run_cli("config --seed 5 --norm batch", log) == 0);
  CHECK(slurp(log).find("\"seed\": 5") != std::string::npos);
}
