// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "pmu_sentinel/models.hpp"
#include "pmu_sentinel/preprocess.hpp"
#include "pmu_sentinel/stats.hpp"

namespace pmu {

inline constexpr double kDefaultThresholdK = 3.0;

/// Per-timestep squared forecast errors and the flags they raise.
/// scores[j] refers to series index window_offset + j.
struct DetectionResult {
  std::vector<double> scores;
  double threshold = 0.0;
  std::vector<bool> flags;
  std::size_t window_offset = 0;

  /// flags[i] == (scores[i] > threshold) and scores are non-negative.
  bool consistent() const {
    if (flags.size() != scores.size()) return false;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (!(scores[i] >= 0.0) || flags[i] != (scores[i] > threshold)) return false;
    }
    return true;
  }
};

inline std::vector<double> residual_scores(std::span<const double> targets,
                                           std::span<const double> predictions) {
  if (targets.size() != predictions.size()) {
    throw ShapeError("residual_scores: " + std::to_string(targets.size()) +
                     " targets vs " + std::to_string(predictions.size()) +
                     " predictions");
  }
  std::vector<double> s(targets.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double d = targets[i] - predictions[i];
    s[i] = d * d;
  }
  return s;
}

/// (y_i - yhat_i)^2 for every window of `w`.
inline std::vector<double> residual_scores(nn::Network& net, const WindowedSet& w) {
  const std::vector<double> pred = predict(net, w);
  return residual_scores(w.targets.values(), pred);
}

/// mean + k * std (population) of the training scores.
inline double calibrate_threshold(std::span<const double> train_scores, double k) {
  if (train_scores.empty()) throw ParameterError("no training scores to calibrate on");
  if (!(k > 0.0)) throw ParameterError("threshold multiplier k must be > 0");
  return stats::mean(train_scores) + k * stats::stddev(train_scores);
}

/// Strict comparison: a score equal to the threshold is not flagged.
inline DetectionResult apply_threshold(std::vector<double> scores, double threshold,
                                       std::size_t window_offset = 0) {
  if (std::isnan(threshold)) throw ParameterError("threshold is NaN");
  DetectionResult r{std::move(scores), threshold, {}, window_offset};
  r.flags.resize(r.scores.size());
  for (std::size_t i = 0; i < r.scores.size(); ++i) r.flags[i] = r.scores[i] > threshold;
  return r;
}

/// Model-free detector: flags samples whose deviation from the running
/// median exceeds z times the MAD of those deviations.
inline std::vector<bool> statistical_baseline(std::span<const double> series,
                                              std::size_t filter_order, double z_threshold) {
  const Series smooth = median_filter(series, filter_order);
  std::vector<double> resid(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) resid[i] = series[i] - smooth[i];
  const double limit = z_threshold * stats::mad(resid);
  std::vector<bool> flags(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) flags[i] = std::abs(resid[i]) > limit;
  return flags;
}

/// `index,score,flag` rows with indices in series coordinates.
inline std::string detections_csv(const DetectionResult& r) {
  std::ostringstream ss;
  ss << "index,score,flag\n";
  for (std::size_t i = 0; i < r.scores.size(); ++i) {
    ss << (r.window_offset + i) << ',' << format_double(r.scores[i]) << ','
       << (r.flags[i] ? 1 : 0) << '\n';
  }
  return ss.str();
}

}  // namespace pmu
