#include "toolwear/pipeline.hpp"

#include <cstdio>
#include <ostream>
#include <sstream>

#include "toolwear/error.hpp"
#include "toolwear/parallel.hpp"

namespace toolwear {

namespace {

constexpr std::uint64_t kAugmentTag = 0x6175676d;  // "augm"

std::vector<Spectrogram> with_copies(const Spectrogram& sg, std::size_t index, const PipelineConfig& cfg) {
  const AugmentConfig& a = cfg.spectrogram.augment;
  std::vector<Spectrogram> out{sg};
  for (std::size_t c = 0; c < a.copies; ++c) {
    auto rng = make_rng(cfg.seed, kAugmentTag, index, c);
    const long span = 2 * a.max_shift + 1;
    const long shift = static_cast<long>(rng() % static_cast<std::uint64_t>(span)) - a.max_shift;
    out.push_back(augment(sg, shift, a.noise_db_sigma, rng()));
  }
  return out;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string render(const EvalReport& r, void (*writer)(const EvalReport&, std::ostream&)) {
  std::ostringstream ss;
  writer(r, ss);
  return ss.str();
}

}  // namespace

PreparedSplits prepare_splits(const SpectrogramDataset& ds, const PipelineConfig& cfg) {
  if (ds.runs.empty()) throw Error(ErrorKind::empty_input, "dataset has no runs");
  const SpectrogramConfig& sp = cfg.spectrogram;
  PreparedSplits out;
  if (sp.split_before_augment) {
    const DatasetSplit split = split_dataset(ds.runs.size(), cfg.seed, sp.split);
    for (std::size_t i : split.train)
      for (Spectrogram& s : with_copies(ds.runs[i], i, cfg)) out.train.push_back(std::move(s));
    for (std::size_t i : split.val) out.val.push_back(ds.runs[i]);
    for (std::size_t i : split.test) out.test.push_back(ds.runs[i]);
  } else {
    std::vector<Spectrogram> pool;
    for (std::size_t i = 0; i < ds.runs.size(); ++i)
      for (Spectrogram& s : with_copies(ds.runs[i], i, cfg)) pool.push_back(std::move(s));
    const DatasetSplit split = split_dataset(pool.size(), cfg.seed, sp.split);
    for (std::size_t i : split.train) out.train.push_back(pool[i]);
    for (std::size_t i : split.val) out.val.push_back(pool[i]);
    for (std::size_t i : split.test) out.test.push_back(pool[i]);
  }
  return out;
}

std::vector<nn::Sample> make_samples(std::span<const Spectrogram> sgs, const nn::Architecture& arch, int n_total) {
  std::vector<nn::Sample> out(sgs.size());
  parallel_for(sgs.size(), [&](std::size_t i) {
    nn::Tensor t = nn::spectrogram_input(sgs[i], arch);
    out[i].input = t.reshaped({1, arch.input_height, arch.input_width});
    out[i].target = static_cast<double>(sgs[i].run_label) / n_total;
  });
  return out;
}

SpectrogramDataset synthesize(const PipelineConfig& cfg, std::ostream* log) {
  const ArrayGeometry geom = make_geometry(cfg.geometry);
  ProgressFn progress;
  if (log) {
    progress = [log, last = -1](int done, int total) mutable {
      const int pct = 100 * done / total;
      if (pct / 10 != last / 10 || done == total) {
        *log << "synth: " << done << "/" << total << " runs\n" << std::flush;
        last = pct;
      }
    };
  }
  return synth_dataset(cfg.scene, cfg.wear, geom, cfg.spectrogram.frames_per_run, cfg.seed, cfg.dsp, progress);
}

void cmd_synth(const PipelineConfig& cfg, const std::filesystem::path& out, std::ostream& log) {
  ensure_writable(out);
  const SpectrogramDataset ds = synthesize(cfg, &log);
  write_dataset(out, ds);
  std::size_t chromoly = 0;
  for (const Spectrogram& sg : ds.runs) chromoly += sg.material == Material::chromoly;
  log << "wrote " << out.string() << ": " << ds.runs.size() << " runs, " << ds.runs.front().bins << " bins x "
      << ds.runs.front().frames << " frames, n_total " << ds.n_total << ", sensor " << to_string(ds.sensor) << ", "
      << chromoly << " Chromoly / " << ds.runs.size() - chromoly << " C45\n";
}

std::string metrics_csv(const std::vector<nn::EpochMetrics>& curve) {
  std::string s = "epoch,train_loss,val_loss\n";
  for (const nn::EpochMetrics& m : curve)
    s += std::to_string(m.epoch) + "," + fmt("%.17g", m.train_loss) + "," + fmt("%.17g", m.val_loss) + "\n";
  return s;
}

nn::TrainResult cmd_train(const PipelineConfig& cfg, const std::filesystem::path& dataset, const TrainOutputs& out,
                          std::ostream& log) {
  ensure_writable(out.checkpoint);
  ensure_writable(out.metrics);
  const SpectrogramDataset ds = read_dataset(dataset);
  const PreparedSplits splits = prepare_splits(ds, cfg);
  if (splits.train.empty() || splits.val.empty())
    throw Error(ErrorKind::insufficient_data, "split leaves no training or validation spectrograms");
  const auto train = make_samples(splits.train, cfg.arch, ds.n_total);
  const auto val = make_samples(splits.val, cfg.arch, ds.n_total);
  log << "train: " << train.size() << " training / " << val.size() << " validation spectrograms, "
      << cfg.arch.describe() << "\n";
  nn::TrainResult result = nn::train(train, val, cfg.arch, cfg.train, [&](const nn::EpochMetrics& m) {
    log << "epoch " << m.epoch << ": train " << fmt("%.6g", m.train_loss) << ", val " << fmt("%.6g", m.val_loss)
        << "\n"
        << std::flush;
  });
  write_checkpoint(out.checkpoint, CheckpointFile{result.best, ds.n_total});
  write_file_atomic(out.metrics, metrics_csv(result.curve));
  log << "best epoch " << result.best.epoch << " (val " << fmt("%.6g", result.best.val_loss) << "); wrote "
      << out.checkpoint.string() << " and " << out.metrics.string() << "\n";
  return result;
}

void check_compatible(const nn::Architecture& configured, const nn::Architecture& stored) {
  if (!(configured == stored))
    throw Error(ErrorKind::compatibility, "checkpoint architecture " + stored.describe() +
                                              " does not match configured architecture " + configured.describe());
}

EvalReport cmd_eval(const PipelineConfig& cfg, const std::filesystem::path& dataset,
                    const std::filesystem::path& checkpoint, const EvalOutputs& out, std::ostream& log) {
  const CheckpointFile ckpt = read_checkpoint(checkpoint);
  check_compatible(cfg.arch, ckpt.checkpoint.params.architecture());
  const SpectrogramDataset ds = read_dataset(dataset);
  if (ds.n_total != ckpt.n_total)
    throw Error(ErrorKind::compatibility, "checkpoint was trained for n_total " + std::to_string(ckpt.n_total) +
                                              ", dataset has " + std::to_string(ds.n_total));
  const PreparedSplits splits = prepare_splits(ds, cfg);
  const EvalReport report = evaluate(ckpt.checkpoint.params, ds, splits.test, cfg.eval.window);
  write_file_atomic(out.report, render(report, write_report_csv));
  write_file_atomic(out.plot, render(report, write_plot_csv));
  if (out.svg) write_file_atomic(*out.svg, render(report, write_plot_svg));
  log << "eval: " << report.predictions.size() << " test spectrograms over " << report.runs.size() << " runs\n"
      << "  max |mean error| single " << fmt("%.2f", report.max_abs_error_pct_single) << "%, window "
      << report.window << " " << fmt("%.2f", report.max_abs_error_pct_windowed) << "%\n"
      << "  mean |error| single " << fmt("%.2f", report.mean_abs_error_pct_single) << "%, window "
      << fmt("%.2f", report.mean_abs_error_pct_windowed) << "%\n"
      << "  error variance single " << fmt("%.3f", report.error_variance_single) << ", window "
      << fmt("%.3f", report.error_variance_windowed) << "\n";
  return report;
}

void cmd_predict(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset, int run_id,
                 int window, std::ostream& out) {
  const CheckpointFile ckpt = read_checkpoint(checkpoint);
  const SpectrogramDataset ds = read_dataset(dataset);
  if (ds.n_total != ckpt.n_total)
    throw Error(ErrorKind::compatibility, "checkpoint was trained for n_total " + std::to_string(ckpt.n_total) +
                                              ", dataset has " + std::to_string(ds.n_total));
  const Spectrogram* sg = nullptr;
  for (const Spectrogram& s : ds.runs)
    if (s.run_label == run_id) sg = &s;
  if (!sg) throw Error(ErrorKind::not_found, "run " + std::to_string(run_id) + " is not in the dataset");
  const RunPredictor predict = model_predictor(ckpt.checkpoint.params, ds.n_total);
  const double single = predict(*sg);
  const double windowed = windowed_predict(predict, ds, run_id, window);
  const RulFraction rul = rul_fraction(windowed, ds.n_total);
  out << "run " << run_id << " of " << ds.n_total << "\n"
      << "pred_single " << fmt("%.4f", single) << "\n"
      << "pred_win" << window << " " << fmt("%.4f", windowed) << "\n"
      << "rul_fraction_raw " << fmt("%.4f", rul.raw) << "\n"
      << "rul_fraction_clamped " << fmt("%.4f", rul.clamped) << "\n";
}

}  // namespace toolwear
