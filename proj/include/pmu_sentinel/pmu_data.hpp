// SPDX-License-Identifier: Apache-2.0
#pragma once

// PMU datasets: synthetic generation from the phasor model, CSV ingest and
// export, and integrity validation.
//
// CSV layout (one row per timestamp and station, sorted by timestamp then
// station, '\n' line endings):
//
//   timestamp,station,vmag,vangle,freq
//   1700000000.000,PMU1,7071.0678118654755,12.5,60.001
//
// timestamps carry three decimals; value columns are written in shortest
// round-trip form so a save/load cycle is lossless.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pmu_sentinel/error.hpp"
#include "pmu_sentinel/text.hpp"

namespace pmu {

enum class ChannelKind { voltage_magnitude = 0, voltage_angle = 1, frequency = 2 };

inline constexpr ChannelKind kAllChannelKinds[] = {
    ChannelKind::voltage_magnitude, ChannelKind::voltage_angle,
    ChannelKind::frequency};

/// CSV column name of each channel kind.
inline std::string_view to_string(ChannelKind kind) {
  switch (kind) {
    case ChannelKind::voltage_magnitude: return "vmag";
    case ChannelKind::voltage_angle: return "vangle";
    case ChannelKind::frequency: return "freq";
  }
  return "vmag";
}

inline ChannelKind parse_channel_kind(std::string_view name) {
  if (name == "vmag" || name == "voltage_magnitude") {
    return ChannelKind::voltage_magnitude;
  }
  if (name == "vangle" || name == "voltage_angle") {
    return ChannelKind::voltage_angle;
  }
  if (name == "freq" || name == "frequency") return ChannelKind::frequency;
  throw ParameterError("unknown channel kind '" + std::string(name) + "'");
}

struct PmuChannel {
  std::string station_id;
  ChannelKind kind = ChannelKind::voltage_magnitude;
  std::vector<double> values;
  double sample_rate = 30.0;

  friend bool operator==(const PmuChannel&, const PmuChannel&) = default;
};

/// Wraps an angle in degrees into (-180, 180].
inline double wrap_degrees(double deg) {
  double a = std::fmod(deg, 360.0);
  if (a <= -180.0) a += 360.0;
  if (a > 180.0) a -= 360.0;
  return a;
}

/// Multi-station PMU recording on a uniform time grid. Channels are kept in
/// canonical order (station id, then vmag/vangle/freq); the start time is
/// held at millisecond resolution, the precision of the CSV format.
class PmuDataset {
 public:
  PmuDataset() = default;

  PmuDataset(std::vector<PmuChannel> channels, double start_time)
      : channels_(std::move(channels)),
        start_time_(*parse_double(format_millis(start_time))) {
    std::stable_sort(channels_.begin(), channels_.end(),
                     [](const PmuChannel& a, const PmuChannel& b) {
                       if (a.station_id != b.station_id) {
                         return a.station_id < b.station_id;
                       }
                       return a.kind < b.kind;
                     });
  }

  const std::vector<PmuChannel>& channels() const { return channels_; }
  double start_time() const { return start_time_; }

  double sample_rate() const {
    return channels_.empty() ? 30.0 : channels_.front().sample_rate;
  }

  std::size_t length() const {
    return channels_.empty() ? 0 : channels_.front().values.size();
  }

  double timestamp(std::size_t i) const {
    return start_time_ + static_cast<double>(i) / sample_rate();
  }

  std::vector<std::string> station_ids() const {
    std::vector<std::string> ids;
    for (const auto& c : channels_) {
      if (ids.empty() || ids.back() != c.station_id) ids.push_back(c.station_id);
    }
    return ids;
  }

  std::size_t station_count() const { return station_ids().size(); }

  const PmuChannel& channel(std::string_view station, ChannelKind kind) const {
    for (const auto& c : channels_) {
      if (c.station_id == station && c.kind == kind) return c;
    }
    throw ParameterError("no channel " + std::string(to_string(kind)) +
                         " for station '" + std::string(station) + "'");
  }

  /// Copy with one channel's values replaced.
  PmuDataset with_values(std::string_view station, ChannelKind kind,
                         std::vector<double> values) const {
    PmuDataset copy = *this;
    for (auto& c : copy.channels_) {
      if (c.station_id == station && c.kind == kind) {
        c.values = std::move(values);
        return copy;
      }
    }
    throw ParameterError("no channel " + std::string(to_string(kind)) +
                         " for station '" + std::string(station) + "'");
  }

  friend bool operator==(const PmuDataset&, const PmuDataset&) = default;

 private:
  std::vector<PmuChannel> channels_;
  double start_time_ = 0.0;
};

// ---------------------------------------------------------------- synthesis

/// Instantaneous voltage-magnitude offset taking effect at `time_s`.
struct LoadStep {
  double time_s = 0.0;
  double magnitude_delta = 0.0;
};

struct SynthConfig {
  double amplitude_peak = 100.0 * std::numbers::sqrt2;  // U_m, volts
  double nominal_frequency = 60.0;                      // hertz
  double initial_phase_deg = 0.0;                       // delta_0
  double duration_s = 60.0;
  double noise_floor_sigma = 0.0;  // magnitude channel, volts
  std::uint64_t seed = 0;
  std::vector<LoadStep> load_steps;

  double sample_rate = 30.0;
  double start_time = 1700000000.0;
  std::size_t station_count = 1;
  // Off-nominal frequency: constant offset plus a slow sinusoidal swing.
  double frequency_offset_hz = 0.0;
  double frequency_swing_hz = 0.0;
  double frequency_swing_period_s = 60.0;
  double frequency_noise_sigma = 0.0;
  double angle_noise_sigma_deg = 0.0;
  // Slow magnitude wander (sum of three sinusoids), peak volts.
  double ambient_swing = 0.0;
  // Short impulsive measurement spikes on the magnitude channel.
  double spike_rate_hz = 0.0;
  double spike_amplitude = 0.0;

  void validate() const {
    auto fail = [](const std::string& m) { throw ParameterError("synth: " + m); };
    if (!(duration_s > 0.0)) fail("duration must be > 0");
    if (!(noise_floor_sigma >= 0.0)) fail("noise_floor_sigma must be >= 0");
    if (!(sample_rate > 0.0)) fail("sample_rate must be > 0");
    if (!(amplitude_peak >= 0.0)) fail("amplitude_peak must be >= 0");
    if (station_count < 1) fail("station_count must be >= 1");
    if (!(frequency_swing_period_s > 0.0)) fail("swing period must be > 0");
    if (frequency_noise_sigma < 0.0 || angle_noise_sigma_deg < 0.0 ||
        ambient_swing < 0.0 || spike_rate_hz < 0.0 || spike_amplitude < 0.0) {
      fail("noise, swing and spike settings must be >= 0");
    }
  }
};

/// Real and imaginary parts of the RMS synchrophasor.
struct Phasor {
  double re = 0.0;
  double im = 0.0;
};

/// Phase angle in degrees at time t: delta_0 plus the phase accumulated by
/// the off-nominal frequency deviation.
inline double phase_angle_deg(const SynthConfig& cfg, double t) {
  const double period = cfg.frequency_swing_period_s;
  const double swing_integral =
      cfg.frequency_swing_hz * period / (2.0 * std::numbers::pi) *
      (1.0 - std::cos(2.0 * std::numbers::pi * t / period));
  return cfg.initial_phase_deg +
         360.0 * (cfg.frequency_offset_hz * t + swing_integral);
}

inline double frequency_at(const SynthConfig& cfg, double t) {
  return cfg.nominal_frequency + cfg.frequency_offset_hz +
         cfg.frequency_swing_hz *
             std::sin(2.0 * std::numbers::pi * t / cfg.frequency_swing_period_s);
}

/// U = (U_m / sqrt 2)(cos delta(t) + j sin delta(t)).
inline Phasor synth_phasor(const SynthConfig& cfg, double t) {
  const double rms = cfg.amplitude_peak / std::numbers::sqrt2;
  const double delta = phase_angle_deg(cfg, t) * std::numbers::pi / 180.0;
  return {rms * std::cos(delta), rms * std::sin(delta)};
}

/// Station ids "PMU1".."PMUn", zero-padded so lexical order is numeric order.
inline std::string station_name(std::size_t index, std::size_t count) {
  const std::size_t width = std::to_string(count).size();
  std::string n = std::to_string(index + 1);
  return "PMU" + std::string(width - n.size(), '0') + n;
}

/// Magnitude, wrapped angle and frequency channels for every station.
/// Station 1 follows the config exactly; further stations get a seeded
/// amplitude scale within +/-2% and phase offset within +/-30 degrees.
inline PmuDataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.sample_rate));
  std::vector<LoadStep> steps = cfg.load_steps;
  std::sort(steps.begin(), steps.end(),
            [](const LoadStep& a, const LoadStep& b) { return a.time_s < b.time_s; });

  std::vector<PmuChannel> channels;
  for (std::size_t s = 0; s < cfg.station_count; ++s) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed),
                      static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(s)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    const double scale = s == 0 ? 1.0 : 1.0 + 0.04 * (unit(rng) - 0.5);
    SynthConfig station = cfg;
    station.initial_phase_deg += s == 0 ? 0.0 : 60.0 * (unit(rng) - 0.5);

    double ambient_period[3], ambient_phase[3];
    for (int k = 0; k < 3; ++k) {
      ambient_period[k] = 20.0 + 100.0 * unit(rng);
      ambient_phase[k] = 2.0 * std::numbers::pi * unit(rng);
    }

    const std::string id = station_name(s, cfg.station_count);
    PmuChannel vmag{id, ChannelKind::voltage_magnitude, std::vector<double>(n),
                    cfg.sample_rate};
    PmuChannel vang{id, ChannelKind::voltage_angle, std::vector<double>(n),
                    cfg.sample_rate};
    PmuChannel freq{id, ChannelKind::frequency, std::vector<double>(n),
                    cfg.sample_rate};

    std::size_t next_step = 0;
    double step_offset = 0.0;
    std::size_t spike_left = 0;
    double spike_value = 0.0;
    const double spike_p = cfg.spike_rate_hz / cfg.sample_rate;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / cfg.sample_rate;
      while (next_step < steps.size() && steps[next_step].time_s <= t) {
        step_offset += steps[next_step++].magnitude_delta;
      }
      double ambient = 0.0;
      for (int k = 0; k < 3; ++k) {
        ambient += cfg.ambient_swing / 3.0 *
                   std::sin(2.0 * std::numbers::pi * t / ambient_period[k] +
                            ambient_phase[k]);
      }
      // Fixed draw order keeps every channel reproducible from the seed.
      const double mag_noise = normal(rng);
      const double ang_noise = normal(rng);
      const double freq_noise = normal(rng);
      const double spike_draw = unit(rng);
      const double spike_shape = unit(rng);
      if (spike_left == 0 && spike_p > 0.0 && spike_draw < spike_p) {
        spike_left = 1 + static_cast<std::size_t>(spike_shape * 3.0) % 3;
        const double sign = spike_shape < 0.5 ? -1.0 : 1.0;
        spike_value = sign * cfg.spike_amplitude * (0.5 + spike_shape * 0.5);
      }
      double spike = 0.0;
      if (spike_left > 0) {
        spike = spike_value;
        --spike_left;
      }

      const Phasor p = synth_phasor(station, t);
      vmag.values[i] = scale * (std::hypot(p.re, p.im) + step_offset) + ambient +
                       cfg.noise_floor_sigma * mag_noise + spike;
      vang.values[i] =
          wrap_degrees(std::atan2(p.im, p.re) * 180.0 / std::numbers::pi +
                       cfg.angle_noise_sigma_deg * ang_noise);
      freq.values[i] = frequency_at(cfg, t) + cfg.frequency_noise_sigma * freq_noise;
    }
    channels.push_back(std::move(vmag));
    channels.push_back(std::move(vang));
    channels.push_back(std::move(freq));
  }
  return PmuDataset(std::move(channels), cfg.start_time);
}

// ---------------------------------------------------------------- CSV

inline constexpr std::string_view kCsvHeader = "timestamp,station,vmag,vangle,freq";

inline void write_csv(const PmuDataset& d, std::ostream& out) {
  out << kCsvHeader << '\n';
  const auto ids = d.station_ids();
  std::vector<const PmuChannel*> cols;
  for (const auto& id : ids) {
    for (ChannelKind k : kAllChannelKinds) cols.push_back(&d.channel(id, k));
  }
  for (std::size_t i = 0; i < d.length(); ++i) {
    const std::string ts = format_millis(d.timestamp(i));
    for (std::size_t s = 0; s < ids.size(); ++s) {
      out << ts << ',' << ids[s];
      for (std::size_t k = 0; k < 3; ++k) {
        out << ',' << format_double(cols[s * 3 + k]->values[i]);
      }
      out << '\n';
    }
  }
}

inline std::string to_csv(const PmuDataset& d) {
  std::ostringstream ss;
  write_csv(d, ss);
  return ss.str();
}

inline void save_csv(const PmuDataset& d, const std::string& path) {
  write_file(path, to_csv(d));
}

/// Parses the CSV layout above. Throws SchemaError for a bad header or
/// field count, ParseError for non-numeric cells, IntegrityError for blank
/// cells, inconsistent station sets or a non-uniform time grid. Locations
/// are reported as 1-based line and column numbers.
inline PmuDataset parse_csv(std::string_view text) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  std::vector<std::string_view> lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty() || lines.front() != kCsvHeader) {
    throw SchemaError("expected header '" + std::string(kCsvHeader) + "', got '" +
                      std::string(lines.empty() ? "" : lines.front()) + "'");
  }

  std::vector<std::string> station_order;
  std::map<std::string, std::array<std::vector<double>, 3>> values;
  std::vector<double> times;
  std::set<std::string> group;

  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const std::string where = "line " + std::to_string(ln + 1);
    const auto fields = split(lines[ln], ',');
    if (fields.size() != 5) {
      throw SchemaError(where + ": expected 5 fields, got " +
                        std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (fields[c].empty()) {
        throw IntegrityError(where + ", column " + std::to_string(c + 1) +
                             ": missing value");
      }
    }
    auto number = [&](std::size_t c) {
      auto v = parse_double(fields[c]);
      if (!v) {
        throw ParseError(where + ", column " + std::to_string(c + 1) +
                         ": not a number: '" + std::string(fields[c]) + "'");
      }
      return *v;
    };
    const double ts = number(0);
    const std::string station(fields[1]);

    if (times.empty() || ts != times.back()) {
      if (!times.empty()) {
        if (ts < times.back()) {
          throw IntegrityError(where + ": timestamps not increasing");
        }
        if (group.size() != station_order.size()) {
          throw IntegrityError("line " + std::to_string(ln) +
                               ": timestamp " + format_millis(times.back()) +
                               " has " + std::to_string(group.size()) +
                               " stations, expected " +
                               std::to_string(station_order.size()));
        }
      }
      times.push_back(ts);
      group.clear();
    }
    if (!group.insert(station).second) {
      throw IntegrityError(where + ": station '" + station +
                           "' repeated at one timestamp");
    }
    if (times.size() == 1) {
      station_order.push_back(station);
    } else if (!values.contains(station)) {
      throw IntegrityError(where + ": station '" + station +
                           "' absent from the first timestamp");
    }
    auto& v = values[station];
    for (std::size_t k = 0; k < 3; ++k) v[k].push_back(number(k + 2));
  }
  if (times.empty()) throw IntegrityError("no data rows");
  if (group.size() != station_order.size()) {
    throw IntegrityError("last timestamp has " + std::to_string(group.size()) +
                         " stations, expected " +
                         std::to_string(station_order.size()));
  }

  double rate = 30.0;
  if (times.size() > 1) {
    rate = static_cast<double>(times.size() - 1) / (times.back() - times.front());
    if (rate >= 1.0) rate = std::round(rate);
    for (std::size_t i = 0; i < times.size(); ++i) {
      const double expected = times.front() + static_cast<double>(i) / rate;
      if (std::abs(times[i] - expected) > 1.5e-3) {
        throw IntegrityError("timestamp " + format_millis(times[i]) +
                             " is off the uniform " + format_double(rate) +
                             " Hz grid");
      }
    }
  }

  std::vector<PmuChannel> channels;
  for (const auto& id : station_order) {
    for (ChannelKind k : kAllChannelKinds) {
      channels.push_back(
          {id, k, std::move(values[id][static_cast<std::size_t>(k)]), rate});
    }
  }
  return PmuDataset(std::move(channels), times.front());
}

inline PmuDataset load_csv(const std::string& path) {
  return parse_csv(read_file(path));
}

// ---------------------------------------------------------------- validation

struct Violation {
  std::string channel;  // "<station>/<kind>", or "<station>" / "dataset"
  std::size_t index = 0;
  std::string message;
};

/// Every broken dataset invariant; empty when the dataset is sound.
inline std::vector<Violation> validate(const PmuDataset& d) {
  std::vector<Violation> out;
  if (d.channels().empty()) {
    out.push_back({"dataset", 0, "no stations"});
    return out;
  }
  const std::size_t length = d.length();
  const double rate = d.sample_rate();
  std::map<std::string, std::array<int, 3>> kinds;
  for (const auto& c : d.channels()) {
    const std::string name = c.station_id + "/" + std::string(to_string(c.kind));
    ++kinds[c.station_id][static_cast<std::size_t>(c.kind)];
    if (!(c.sample_rate > 0.0)) {
      out.push_back({name, 0, "sample rate must be > 0"});
    } else if (c.sample_rate != rate) {
      out.push_back({name, 0, "sample rate " + format_double(c.sample_rate) +
                                  " differs from " + format_double(rate)});
    }
    if (c.values.size() != length) {
      out.push_back({name, std::min(c.values.size(), length),
                     "length " + std::to_string(c.values.size()) +
                         " differs from " + std::to_string(length)});
    }
    for (std::size_t i = 0; i < c.values.size(); ++i) {
      if (!std::isfinite(c.values[i])) {
        out.push_back({name, i, "missing or non-finite value"});
      }
    }
  }
  for (const auto& [station, count] : kinds) {
    for (ChannelKind k : kAllChannelKinds) {
      const int n = count[static_cast<std::size_t>(k)];
      if (n != 1) {
        out.push_back({station + "/" + std::string(to_string(k)), 0,
                       "expected exactly one channel, found " + std::to_string(n)});
      }
    }
  }
  return out;
}

}  // namespace pmu
