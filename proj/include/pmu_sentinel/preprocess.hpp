// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "pmu_sentinel/error.hpp"
#include "pmu_sentinel/nn/tensor.hpp"
#include "pmu_sentinel/pmu_data.hpp"

namespace pmu {

using Series = std::vector<double>;

inline constexpr std::size_t kDefaultFilterOrder = 15;
inline constexpr std::size_t kDefaultWindowLen = 30;
inline constexpr std::size_t kDefaultHorizon = 1;
inline constexpr double kDefaultTrainFraction = 0.8;

// ---------------------------------------------------------------- filtering

/// Running median over a centred window of `order` samples, boundary values
/// replicated at both ends. Output length equals input length.
inline Series median_filter(std::span<const double> series, std::size_t order) {
  if (order == 0 || order % 2 == 0) {
    throw ParameterError("median filter order must be odd and >= 1, got " +
                         std::to_string(order));
  }
  if (order > series.size()) {
    throw ParameterError("median filter order " + std::to_string(order) +
                         " exceeds series length " +
                         std::to_string(series.size()));
  }
  const std::size_t n = series.size();
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(order / 2);
  auto padded = [&](std::ptrdiff_t i) {
    return series[static_cast<std::size_t>(
        std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1))];
  };

  // Sorted copy of the current window, updated by one removal and one
  // insertion per step.
  std::vector<double> window;
  window.reserve(order);
  for (std::ptrdiff_t j = -half; j <= half; ++j) window.push_back(padded(j));
  std::sort(window.begin(), window.end());

  Series out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = window[order / 2];
    if (i + 1 == n) break;
    const auto pos = static_cast<std::ptrdiff_t>(i);
    const double leaving = padded(pos - half);
    const double entering = padded(pos + half + 1);
    window.erase(std::lower_bound(window.begin(), window.end(), leaving));
    window.insert(std::upper_bound(window.begin(), window.end(), entering),
                  entering);
  }
  return out;
}

/// Removes the artificial 360 degree jumps of a wrapped angle trace. Each
/// output step lies in (-180, 180]; output[i] - input[i] is a multiple of 360.
inline Series unwrap_angles(std::span<const double> angles_deg) {
  Series out(angles_deg.size());
  if (angles_deg.empty()) return out;
  out[0] = angles_deg[0];
  double turns = 0.0;
  for (std::size_t i = 1; i < angles_deg.size(); ++i) {
    const double d = angles_deg[i] - angles_deg[i - 1];
    // Bring the step into (-180, 180] by whole turns.
    turns -= std::ceil((d - 180.0) / 360.0);
    out[i] = angles_deg[i] + 360.0 * turns;
  }
  return out;
}

// ---------------------------------------------------------------- scaling

/// Per-column min-max parameters fitted on training data.
struct ScalerParams {
  std::vector<double> min;
  std::vector<double> max;

  friend bool operator==(const ScalerParams&, const ScalerParams&) = default;
};

inline ScalerParams fit_scaler(std::span<const Series> columns) {
  ScalerParams p;
  for (const auto& col : columns) {
    if (col.empty()) throw ParameterError("cannot fit scaler on an empty column");
    const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
    p.min.push_back(*lo);
    p.max.push_back(*hi);
  }
  return p;
}

inline ScalerParams fit_scaler(std::span<const double> series) {
  const Series col(series.begin(), series.end());
  return fit_scaler(std::span<const Series>(&col, 1));
}

namespace detail {

inline void check_columns(const ScalerParams& p, std::size_t count) {
  if (p.min.size() != count || p.max.size() != count) {
    throw ShapeError("scaler fitted on " + std::to_string(p.min.size()) +
                     " columns, applied to " + std::to_string(count));
  }
}

}  // namespace detail

/// Affine map of each column onto [0, 1] by the fitted min/max. Values
/// outside the fitted range land outside [0, 1]; constant columns map to 0.
inline std::vector<Series> apply_scaler(std::span<const Series> columns,
                                        const ScalerParams& p) {
  detail::check_columns(p, columns.size());
  std::vector<Series> out;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const double range = p.max[c] - p.min[c];
    Series col(columns[c].size());
    for (std::size_t i = 0; i < col.size(); ++i) {
      col[i] = range > 0.0 ? (columns[c][i] - p.min[c]) / range : 0.0;
    }
    out.push_back(std::move(col));
  }
  return out;
}

inline std::vector<Series> invert_scaler(std::span<const Series> columns,
                                         const ScalerParams& p) {
  detail::check_columns(p, columns.size());
  std::vector<Series> out;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const double range = p.max[c] - p.min[c];
    Series col(columns[c].size());
    for (std::size_t i = 0; i < col.size(); ++i) {
      col[i] = columns[c][i] * range + p.min[c];
    }
    out.push_back(std::move(col));
  }
  return out;
}

inline Series apply_scaler(std::span<const double> series, const ScalerParams& p) {
  const Series col(series.begin(), series.end());
  return apply_scaler(std::span<const Series>(&col, 1), p).front();
}

inline Series invert_scaler(std::span<const double> series, const ScalerParams& p) {
  const Series col(series.begin(), series.end());
  return invert_scaler(std::span<const Series>(&col, 1), p).front();
}

namespace detail {

inline std::vector<Series> dataset_columns(const PmuDataset& d) {
  std::vector<Series> cols;
  for (const auto& c : d.channels()) cols.push_back(c.values);
  return cols;
}

inline PmuDataset replace_columns(const PmuDataset& d, std::vector<Series> cols) {
  std::vector<PmuChannel> channels = d.channels();
  for (std::size_t i = 0; i < channels.size(); ++i) {
    channels[i].values = std::move(cols[i]);
  }
  return PmuDataset(std::move(channels), d.start_time());
}

}  // namespace detail

/// One min/max pair per channel, in the dataset's canonical channel order.
inline ScalerParams fit_scaler(const PmuDataset& d) {
  return fit_scaler(detail::dataset_columns(d));
}

inline PmuDataset apply_scaler(const PmuDataset& d, const ScalerParams& p) {
  return detail::replace_columns(d, apply_scaler(detail::dataset_columns(d), p));
}

inline PmuDataset invert_scaler(const PmuDataset& d, const ScalerParams& p) {
  return detail::replace_columns(d, invert_scaler(detail::dataset_columns(d), p));
}

// ---------------------------------------------------------------- splitting

inline std::size_t split_point(std::size_t length, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ParameterError("train fraction must lie in (0, 1), got " +
                         format_double(train_fraction));
  }
  return static_cast<std::size_t>(
      std::floor(static_cast<double>(length) * train_fraction));
}

/// First floor(N * fraction) samples for training, the rest for testing;
/// order is preserved.
inline std::pair<Series, Series> chronological_split(std::span<const double> series,
                                                     double train_fraction) {
  const std::size_t cut = split_point(series.size(), train_fraction);
  return {Series(series.begin(), series.begin() + static_cast<std::ptrdiff_t>(cut)),
          Series(series.begin() + static_cast<std::ptrdiff_t>(cut), series.end())};
}

inline std::pair<PmuDataset, PmuDataset> chronological_split(const PmuDataset& d,
                                                             double train_fraction) {
  const std::size_t cut = split_point(d.length(), train_fraction);
  std::vector<PmuChannel> train = d.channels(), test = d.channels();
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto& v = d.channels()[i].values;
    train[i].values.assign(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(cut));
    test[i].values.assign(v.begin() + static_cast<std::ptrdiff_t>(cut), v.end());
  }
  return {PmuDataset(std::move(train), d.start_time()),
          PmuDataset(std::move(test), d.timestamp(cut))};
}

// ---------------------------------------------------------------- windowing

/// Supervised windows: inputs (N, window_len, features), targets (N, 1) where
/// target i is the target column `horizon` samples after window i ends.
struct WindowedSet {
  nn::Tensor inputs;
  nn::Tensor targets;
  std::size_t window_len = 0;
  std::size_t horizon = 0;

  std::size_t size() const { return targets.empty() ? 0 : targets.dim(0); }
  /// Index, in the source series, of the sample target 0 refers to.
  std::size_t offset() const { return window_len + horizon - 1; }
};

inline std::size_t window_count(std::size_t length, std::size_t window_len,
                                std::size_t horizon) {
  if (length < window_len + horizon) return 0;
  return length - window_len - horizon + 1;
}

/// Multi-feature windows; `columns` share one length and `target` selects
/// the column being forecast.
inline WindowedSet make_windows(std::span<const Series> columns,
                                std::size_t target, std::size_t window_len,
                                std::size_t horizon) {
  if (window_len < 1 || horizon < 1) {
    throw ParameterError("window_len and horizon must be >= 1");
  }
  if (columns.empty() || target >= columns.size()) {
    throw ParameterError("target column out of range");
  }
  const std::size_t length = columns.front().size();
  for (const auto& c : columns) {
    if (c.size() != length) throw ShapeError("feature columns differ in length");
  }
  const std::size_t n = window_count(length, window_len, horizon);
  if (n == 0) {
    throw ParameterError("series of length " + std::to_string(length) +
                         " too short for window " + std::to_string(window_len) +
                         " + horizon " + std::to_string(horizon));
  }
  const std::size_t f = columns.size();
  WindowedSet w{nn::Tensor({n, window_len, f}), nn::Tensor({n, 1}), window_len,
                horizon};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < window_len; ++t) {
      for (std::size_t c = 0; c < f; ++c) w.inputs.at(i, t, c) = columns[c][i + t];
    }
    w.targets[i] = columns[target][i + window_len + horizon - 1];
  }
  return w;
}

inline WindowedSet make_windows(std::span<const double> series,
                                std::size_t window_len, std::size_t horizon) {
  const Series col(series.begin(), series.end());
  return make_windows(std::span<const Series>(&col, 1), 0, window_len, horizon);
}

/// Windows [begin, begin + count) of an existing set.
inline WindowedSet slice_windows(const WindowedSet& w, std::size_t begin,
                                 std::size_t count) {
  const std::size_t per = w.inputs.size() / std::max<std::size_t>(w.size(), 1);
  const auto in_src = w.inputs.values().subspan(begin * per, count * per);
  const auto tg_src = w.targets.values().subspan(begin, count);
  std::vector<double> in(in_src.begin(), in_src.end());
  std::vector<double> tg(tg_src.begin(), tg_src.end());
  nn::Shape shape = w.inputs.shape();
  shape[0] = count;
  return {nn::Tensor(shape, std::move(in)), nn::Tensor({count, 1}, std::move(tg)),
          w.window_len, w.horizon};
}

}  // namespace pmu
