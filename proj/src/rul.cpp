#include "toolwear/rul.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <string>

#include "toolwear/error.hpp"

namespace toolwear {

double predict_run(const nn::ModelParams& model, const Spectrogram& sg, int n_total) {
  return nn::forward(model, sg, nn::Mode::eval) * static_cast<double>(n_total);
}

RunPredictor model_predictor(const nn::ModelParams& model, int n_total) {
  return [&model, n_total](const Spectrogram& sg) { return predict_run(model, sg, n_total); };
}

std::vector<int> window_runs(int run_id, int n_total, int window) {
  if (window < 1 || window % 2 == 0)
    throw Error(ErrorKind::invalid_argument, "prediction window must be a positive odd integer");
  if (run_id < 1 || run_id > n_total)
    throw Error(ErrorKind::not_found, "run " + std::to_string(run_id) + " outside 1.." + std::to_string(n_total));
  std::vector<int> runs;
  for (int r = std::max(1, run_id - window / 2); r <= std::min(n_total, run_id + window / 2); ++r) runs.push_back(r);
  return runs;
}

namespace {

const Spectrogram& find_run(const SpectrogramDataset& runs, int label) {
  for (const Spectrogram& sg : runs.runs)
    if (sg.run_label == label) return sg;
  throw Error(ErrorKind::not_found, "run " + std::to_string(label) + " not present in the dataset");
}

// Population mean and standard deviation.
std::pair<double, double> mean_std(std::span<const double> v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / static_cast<double>(v.size()))};
}

}  // namespace

double windowed_predict(const RunPredictor& predict, const SpectrogramDataset& runs, int run_id, int window) {
  const auto members = window_runs(run_id, runs.n_total, window);
  double sum = 0.0;
  for (int r : members) sum += predict(find_run(runs, r));
  return sum / static_cast<double>(members.size());
}

double error_pct(double pred, double true_run, int n_total) {
  return (pred - true_run) / static_cast<double>(n_total) * 100.0;
}

RulFraction rul_fraction(double pred, int n_total) {
  const double raw = (static_cast<double>(n_total) - pred) / static_cast<double>(n_total);
  return {raw, std::clamp(raw, 0.0, 1.0)};
}

EvalReport evaluate(const RunPredictor& predict, const SpectrogramDataset& runs,
                    std::span<const Spectrogram> test_set, int window) {
  if (test_set.empty()) throw Error(ErrorKind::empty_input, "test set is empty");
  if (runs.n_total < 1) throw Error(ErrorKind::invalid_argument, "n_total must be >= 1");
  EvalReport report;
  report.n_total = runs.n_total;
  report.window = window;

  std::map<int, double> neighbour_cache;
  auto neighbour = [&](int r) {
    auto it = neighbour_cache.find(r);
    if (it != neighbour_cache.end()) return it->second;
    const double p = predict(find_run(runs, r));
    neighbour_cache.emplace(r, p);
    return p;
  };

  for (const Spectrogram& sg : test_set) {
    const auto members = window_runs(sg.run_label, runs.n_total, window);
    Prediction p;
    p.run_id = sg.run_label;
    p.pred_single = predict(sg);
    double sum = 0.0;
    for (int r : members) sum += r == sg.run_label ? p.pred_single : neighbour(r);
    p.pred_windowed = sum / static_cast<double>(members.size());
    report.predictions.push_back(p);
  }
  // Canonical order so the aggregation below does not depend on test-set order.
  std::sort(report.predictions.begin(), report.predictions.end(), [](const Prediction& a, const Prediction& b) {
    if (a.run_id != b.run_id) return a.run_id < b.run_id;
    if (a.pred_single != b.pred_single) return a.pred_single < b.pred_single;
    return a.pred_windowed < b.pred_windowed;
  });

  std::vector<double> all_single, all_windowed;
  for (std::size_t lo = 0; lo < report.predictions.size();) {
    std::size_t hi = lo;
    const int run = report.predictions[lo].run_id;
    std::vector<double> es, ew;
    while (hi < report.predictions.size() && report.predictions[hi].run_id == run) {
      es.push_back(error_pct(report.predictions[hi].pred_single, run, runs.n_total));
      ew.push_back(error_pct(report.predictions[hi].pred_windowed, run, runs.n_total));
      ++hi;
    }
    RunErrorStats st;
    st.run = run;
    st.count = hi - lo;
    std::tie(st.mean_err_single, st.std_err_single) = mean_std(es);
    std::tie(st.mean_err_windowed, st.std_err_windowed) = mean_std(ew);
    report.max_abs_error_pct_single = std::max(report.max_abs_error_pct_single, std::abs(st.mean_err_single));
    report.max_abs_error_pct_windowed =
        std::max(report.max_abs_error_pct_windowed, std::abs(st.mean_err_windowed));
    report.runs.push_back(st);
    all_single.insert(all_single.end(), es.begin(), es.end());
    all_windowed.insert(all_windowed.end(), ew.begin(), ew.end());
    lo = hi;
  }
  for (std::size_t i = 0; i < all_single.size(); ++i) {
    report.max_abs_point_error_pct_single = std::max(report.max_abs_point_error_pct_single, std::abs(all_single[i]));
    report.max_abs_point_error_pct_windowed =
        std::max(report.max_abs_point_error_pct_windowed, std::abs(all_windowed[i]));
    report.mean_abs_error_pct_single += std::abs(all_single[i]);
    report.mean_abs_error_pct_windowed += std::abs(all_windowed[i]);
  }
  const auto n = static_cast<double>(all_single.size());
  report.mean_abs_error_pct_single /= n;
  report.mean_abs_error_pct_windowed /= n;
  const double sd_single = mean_std(all_single).second;
  const double sd_windowed = mean_std(all_windowed).second;
  report.error_variance_single = sd_single * sd_single;
  report.error_variance_windowed = sd_windowed * sd_windowed;
  return report;
}

EvalReport evaluate(const nn::ModelParams& model, const SpectrogramDataset& runs,
                    std::span<const Spectrogram> test_set, int window) {
  return evaluate(model_predictor(model, runs.n_total), runs, test_set, window);
}

namespace {

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  std::string s = buf;
  // "-0.000000" prints as "0.000000".
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

}  // namespace

void write_report_csv(const EvalReport& report, std::ostream& out) {
  const std::string w = std::to_string(report.window);
  out << "run,mean_err_pct_single,std_err_pct_single,mean_err_pct_win" << w << ",std_err_pct_win" << w << "\n";
  double max_std_single = 0.0, max_std_windowed = 0.0;
  for (const RunErrorStats& r : report.runs) {
    out << r.run << ',' << fixed(r.mean_err_single) << ',' << fixed(r.std_err_single) << ','
        << fixed(r.mean_err_windowed) << ',' << fixed(r.std_err_windowed) << "\n";
    max_std_single = std::max(max_std_single, r.std_err_single);
    max_std_windowed = std::max(max_std_windowed, r.std_err_windowed);
  }
  out << "max," << fixed(report.max_abs_error_pct_single) << ',' << fixed(max_std_single) << ','
      << fixed(report.max_abs_error_pct_windowed) << ',' << fixed(max_std_windowed) << "\n";
}

void write_plot_csv(const EvalReport& report, std::ostream& out) {
  out << "run,true,pred_single,pred_win" << report.window << "\n";
  for (const RunErrorStats& r : report.runs) {
    double single = 0.0, windowed = 0.0;
    for (const Prediction& p : report.predictions) {
      if (p.run_id != r.run) continue;
      single += p.pred_single;
      windowed += p.pred_windowed;
    }
    const auto n = static_cast<double>(r.count);
    out << r.run << ',' << r.run << ',' << fixed(single / n, 4) << ',' << fixed(windowed / n, 4) << "\n";
  }
}

void write_plot_svg(const EvalReport& report, std::ostream& out) {
  constexpr double width = 640, height = 300, margin = 40;
  const double n = report.n_total;
  auto px = [&](double run) { return margin + (run / n) * (width - 2 * margin); };
  auto py = [&](double run) { return height - margin - (run / n) * (height - 2 * margin); };
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << 2 * height << "\">\n";
  out << "<text x=\"" << margin << "\" y=\"20\" font-size=\"12\">predicted vs. true run (grey: single, black: window "
      << report.window << ")</text>\n";
  out << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(n) << "\" y2=\"" << py(n)
      << "\" stroke=\"#bbb\"/>\n";
  for (const Prediction& p : report.predictions) {
    out << "<circle cx=\"" << fixed(px(p.run_id), 2) << "\" cy=\"" << fixed(py(p.pred_single), 2)
        << "\" r=\"2\" fill=\"#999\"/>\n";
    out << "<circle cx=\"" << fixed(px(p.run_id), 2) << "\" cy=\"" << fixed(py(p.pred_windowed), 2)
        << "\" r=\"2\" fill=\"#000\"/>\n";
  }
  // Lower panel: per-run mean error in % of tool life, +/- 1 std band, axis at 0.
  const double top = height, span = 20.0;
  auto ey = [&](double pct) { return top + height / 2 - std::clamp(pct, -span, span) / span * (height / 2 - margin); };
  out << "<text x=\"" << margin << "\" y=\"" << top + 20 << "\" font-size=\"12\">mean error, % of tool life (+/-"
      << span << ")</text>\n";
  out << "<line x1=\"" << px(0) << "\" y1=\"" << ey(0) << "\" x2=\"" << px(n) << "\" y2=\"" << ey(0)
      << "\" stroke=\"#bbb\"/>\n";
  for (const RunErrorStats& r : report.runs) {
    const double x = px(r.run);
    out << "<line x1=\"" << fixed(x, 2) << "\" y1=\"" << fixed(ey(r.mean_err_windowed - r.std_err_windowed), 2)
        << "\" x2=\"" << fixed(x, 2) << "\" y2=\"" << fixed(ey(r.mean_err_windowed + r.std_err_windowed), 2)
        << "\" stroke=\"#ccc\"/>\n";
    out << "<circle cx=\"" << fixed(x, 2) << "\" cy=\"" << fixed(ey(r.mean_err_windowed), 2)
        << "\" r=\"2\" fill=\"#000\"/>\n";
  }
  out << "</svg>\n";
}

}  // namespace toolwear
