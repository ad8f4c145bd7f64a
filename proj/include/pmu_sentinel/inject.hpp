// SPDX-License-Identifier: Apache-2.0
#pragma once

// Simulated false-data injection: bursts of additive zero-mean Gaussian noise
// at random, non-overlapping positions, with a ground-truth mask.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "pmu_sentinel/error.hpp"
#include "pmu_sentinel/pmu_data.hpp"
#include "pmu_sentinel/stats.hpp"
#include "pmu_sentinel/text.hpp"

namespace pmu {

/// Half-open sample interval [start, end).
struct Episode {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
  friend bool operator==(const Episode&, const Episode&) = default;
};

struct AnomalyMask {
  std::vector<bool> flags;
  std::vector<Episode> episodes;  // sorted, disjoint

  static AnomalyMask none(std::size_t length) {
    return {std::vector<bool>(length, false), {}};
  }

  static AnomalyMask from_episodes(std::size_t length, std::vector<Episode> eps) {
    std::sort(eps.begin(), eps.end(),
              [](const Episode& a, const Episode& b) { return a.start < b.start; });
    AnomalyMask m = none(length);
    for (const auto& e : eps) {
      if (e.end > length || e.start >= e.end) {
        throw ParameterError("episode [" + std::to_string(e.start) + ", " +
                             std::to_string(e.end) + ") invalid for length " +
                             std::to_string(length));
      }
      for (std::size_t i = e.start; i < e.end; ++i) m.flags[i] = true;
    }
    m.episodes = std::move(eps);
    return m;
  }

  std::size_t positives() const {
    return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), true));
  }

  /// flags agree with the episode list, which is sorted and disjoint.
  bool consistent() const {
    std::vector<bool> expect(flags.size(), false);
    for (std::size_t k = 0; k < episodes.size(); ++k) {
      const auto& e = episodes[k];
      if (e.start >= e.end || e.end > flags.size()) return false;
      if (k > 0 && episodes[k - 1].end > e.start) return false;
      for (std::size_t i = e.start; i < e.end; ++i) expect[i] = true;
    }
    return expect == flags;
  }

  /// Samples [begin, begin + count), episodes clipped and re-based.
  AnomalyMask slice(std::size_t begin, std::size_t count) const {
    if (begin + count > flags.size()) {
      throw AlignmentError("mask slice [" + std::to_string(begin) + ", " +
                           std::to_string(begin + count) + ") exceeds length " +
                           std::to_string(flags.size()));
    }
    AnomalyMask out;
    out.flags.assign(flags.begin() + static_cast<std::ptrdiff_t>(begin),
                     flags.begin() + static_cast<std::ptrdiff_t>(begin + count));
    for (const auto& e : episodes) {
      const std::size_t s = std::max(e.start, begin);
      const std::size_t t = std::min(e.end, begin + count);
      if (s < t) out.episodes.push_back({s - begin, t - begin});
    }
    return out;
  }

  friend bool operator==(const AnomalyMask&, const AnomalyMask&) = default;
};

struct InjectOptions {
  std::size_t min_length = 30;  // 1 s at 30 Hz
  std::size_t max_length = 60;  // 2 s at 30 Hz
  double max_fraction = 0.05;   // worst-case share of the series under attack
};

struct SeriesInjection {
  std::vector<double> values;  // input plus noise
  std::vector<double> noise;   // the additive perturbation alone
  AnomalyMask mask;
};

/// Robust white-noise level: MAD of the first difference, scaled to a
/// standard deviation (1.4826 for Gaussian data, 1/sqrt 2 for differencing).
inline double estimate_noise_floor(std::span<const double> series) {
  if (series.size() < 2) throw ParameterError("noise floor needs >= 2 samples");
  std::vector<double> diff(series.size() - 1);
  for (std::size_t i = 1; i < series.size(); ++i) diff[i - 1] = series[i] - series[i - 1];
  return 1.4826 * stats::mad(diff) / std::sqrt(2.0);
}

/// Places `count` disjoint episodes, each of a length drawn uniformly from
/// [min_length, max_length] and a start drawn uniformly from every position
/// where it fits without touching earlier episodes, then adds N(0, sigma^2)
/// noise inside them. Throws PlacementError when the worst-case total length
/// exceeds max_fraction of the series or an episode has nowhere to go.
inline SeriesInjection inject_gaussian(std::span<const double> series,
                                       std::size_t count, double sigma,
                                       std::uint64_t seed,
                                       const InjectOptions& opts = {}) {
  if (!(sigma >= 0.0)) throw ParameterError("injection sigma must be >= 0");
  if (opts.min_length < 1 || opts.min_length > opts.max_length) {
    throw ParameterError("episode length range invalid");
  }
  const std::size_t n = series.size();
  if (static_cast<double>(count * opts.max_length) >
      opts.max_fraction * static_cast<double>(n)) {
    throw PlacementError(std::to_string(count) + " episodes of up to " +
                         std::to_string(opts.max_length) +
                         " samples exceed " + format_double(opts.max_fraction) +
                         " of a " + std::to_string(n) + "-sample series");
  }

  std::mt19937_64 rng(seed);
  std::vector<Episode> placed;
  for (std::size_t k = 0; k < count; ++k) {
    std::uniform_int_distribution<std::size_t> len_dist(opts.min_length,
                                                        opts.max_length);
    const std::size_t len = len_dist(rng);
    // Free gaps between the (sorted) episodes placed so far.
    std::vector<std::pair<std::size_t, std::size_t>> gaps;
    std::size_t cursor = 0;
    for (const auto& e : placed) {
      gaps.emplace_back(cursor, e.start);
      cursor = e.end;
    }
    gaps.emplace_back(cursor, n);
    std::size_t choices = 0;
    for (auto [a, b] : gaps) choices += b - a >= len ? b - a - len + 1 : 0;
    if (choices == 0) {
      throw PlacementError("no room for episode " + std::to_string(k + 1) +
                           " of length " + std::to_string(len));
    }
    std::size_t pick = std::uniform_int_distribution<std::size_t>(0, choices - 1)(rng);
    for (auto [a, b] : gaps) {
      const std::size_t here = b - a >= len ? b - a - len + 1 : 0;
      if (pick < here) {
        placed.push_back({a + pick, a + pick + len});
        break;
      }
      pick -= here;
    }
    std::sort(placed.begin(), placed.end(),
              [](const Episode& x, const Episode& y) { return x.start < y.start; });
  }

  SeriesInjection out{std::vector<double>(series.begin(), series.end()),
                      std::vector<double>(n, 0.0), AnomalyMask::from_episodes(n, placed)};
  std::normal_distribution<double> noise(0.0, 1.0);
  for (const auto& e : out.mask.episodes) {
    for (std::size_t i = e.start; i < e.end; ++i) {
      out.noise[i] = sigma * noise(rng);
      out.values[i] += out.noise[i];
    }
  }
  return out;
}

struct ChannelSelector {
  std::string station;
  ChannelKind kind = ChannelKind::voltage_magnitude;
};

struct Injection {
  PmuDataset dataset;
  AnomalyMask mask;
};

/// Injects into exactly one channel; every other channel is untouched.
inline Injection inject_gaussian(const PmuDataset& d, const ChannelSelector& target,
                                 std::size_t count, double sigma, std::uint64_t seed,
                                 const InjectOptions& opts = {}) {
  const auto& ch = d.channel(target.station, target.kind);
  auto r = inject_gaussian(ch.values, count, sigma, seed, opts);
  return {d.with_values(target.station, target.kind, std::move(r.values)),
          std::move(r.mask)};
}

// ---------------------------------------------------------------- mask files

/// `index,flag` rows, flag as 0/1.
inline std::string mask_to_csv(const AnomalyMask& m) {
  std::ostringstream ss;
  ss << "index,flag\n";
  for (std::size_t i = 0; i < m.flags.size(); ++i) {
    ss << i << ',' << (m.flags[i] ? 1 : 0) << '\n';
  }
  return ss.str();
}

inline nlohmann::json episodes_to_json(const AnomalyMask& m) {
  nlohmann::json eps = nlohmann::json::array();
  for (const auto& e : m.episodes) eps.push_back({{"start", e.start}, {"end", e.end}});
  return {{"length", m.flags.size()}, {"episodes", eps}};
}

inline AnomalyMask mask_from_json(const nlohmann::json& doc) {
  std::vector<Episode> eps;
  for (const auto& e : doc.at("episodes")) {
    eps.push_back({e.at("start").get<std::size_t>(), e.at("end").get<std::size_t>()});
  }
  return AnomalyMask::from_episodes(doc.at("length").get<std::size_t>(), std::move(eps));
}

}  // namespace pmu
