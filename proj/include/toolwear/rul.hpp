#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "toolwear/nn/model.hpp"
#include "toolwear/spectrogram.hpp"

namespace toolwear {

// Maps a spectrogram to a (real-valued, unclamped) run number.
using RunPredictor = std::function<double(const Spectrogram&)>;

// Eval-mode network output scaled by n_total.
double predict_run(const nn::ModelParams& model, const Spectrogram& sg, int n_total);
RunPredictor model_predictor(const nn::ModelParams& model, int n_total);

constexpr int kDefaultWindow = 5;

// Runs whose predictions are averaged for run_id: [run_id - w/2, run_id + w/2]
// clipped to [1, n_total].
std::vector<int> window_runs(int run_id, int n_total, int window = kDefaultWindow);

// Mean single-spectrogram prediction over the window around run_id. `runs`
// holds one spectrogram per run label.
double windowed_predict(const RunPredictor& predict, const SpectrogramDataset& runs, int run_id,
                        int window = kDefaultWindow);

// (pred - true_run) / n_total * 100
double error_pct(double pred, double true_run, int n_total);

struct RulFraction {
  double raw;
  double clamped;  // raw clipped to [0, 1]
};

// (n_total - pred) / n_total
RulFraction rul_fraction(double pred, int n_total);

struct Prediction {
  int run_id = 0;
  double pred_single = 0.0;
  double pred_windowed = 0.0;
};

struct RunErrorStats {
  int run = 0;
  std::size_t count = 0;
  double mean_err_single = 0.0;  // % of tool life
  double std_err_single = 0.0;
  double mean_err_windowed = 0.0;
  double std_err_windowed = 0.0;
};

struct EvalReport {
  int n_total = 0;
  int window = kDefaultWindow;
  std::vector<RunErrorStats> runs;         // ascending run number
  std::vector<Prediction> predictions;     // one per test spectrogram, sorted by (run, pred)
  // Max over runs of |per-run mean error|.
  double max_abs_error_pct_single = 0.0;
  double max_abs_error_pct_windowed = 0.0;
  // Max over every individual test prediction.
  double max_abs_point_error_pct_single = 0.0;
  double max_abs_point_error_pct_windowed = 0.0;
  double mean_abs_error_pct_single = 0.0;
  double mean_abs_error_pct_windowed = 0.0;
  // Variance of the per-prediction errors over the whole test set.
  double error_variance_single = 0.0;
  double error_variance_windowed = 0.0;
};

// Evaluates each test spectrogram against its run label. The windowed
// prediction replaces the window centre with the test spectrogram itself and
// takes the neighbouring runs from `runs`.
EvalReport evaluate(const RunPredictor& predict, const SpectrogramDataset& runs,
                    std::span<const Spectrogram> test_set, int window = kDefaultWindow);

EvalReport evaluate(const nn::ModelParams& model, const SpectrogramDataset& runs,
                    std::span<const Spectrogram> test_set, int window = kDefaultWindow);

// CSV: run, mean/std error for single and windowed predictors, plus a "max" footer.
void write_report_csv(const EvalReport& report, std::ostream& out);
// CSV: run, true, pred_single, pred_win<w>; one row per test run (means over its predictions).
void write_plot_csv(const EvalReport& report, std::ostream& out);
// Predicted vs. true run number and per-run mean error, as a standalone SVG.
void write_plot_svg(const EvalReport& report, std::ostream& out);

}  // namespace toolwear
