// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pmu_sentinel/detect.hpp"
#include "pmu_sentinel/inject.hpp"
#include "pmu_sentinel/models.hpp"
#include "pmu_sentinel/pmu_data.hpp"
#include "pmu_sentinel/preprocess.hpp"
#include "pmu_sentinel/seed.hpp"

namespace pmu::pipeline {

using Json = nlohmann::json;

// ---------------------------------------------------------------- config

struct InputConfig {
  enum class Kind { synth, csv };
  Kind kind = Kind::synth;
  SynthConfig synth;
  bool synth_seed_given = false;
  std::string path;  // csv
};

struct PreprocessConfig {
  bool filter = true;
  std::size_t filter_order = kDefaultFilterOrder;
  std::size_t window_len = kDefaultWindowLen;
  std::size_t horizon = kDefaultHorizon;
  double train_fraction = kDefaultTrainFraction;
};

struct InjectConfig {
  std::size_t count = 10;
  double sigma_multiplier = 5.0;
  std::optional<std::uint64_t> seed;
  InjectOptions options;
  /// Bursts are added to the preprocessed signal; otherwise they are added
  /// to the raw channel and pass through the same preprocessing.
  bool filter_before_inject = true;
};

struct SearchConfig {
  SearchSpace space;
  std::size_t budget = 8;
};

struct ModelConfig {
  ModelName name = ModelName::clstm;
  std::size_t width_divisor = 1;
  TrainConfig train;
  bool train_seed_given = false;
  std::optional<SearchConfig> search;
};

struct DetectConfig {
  double k = kDefaultThresholdK;
  std::optional<std::size_t> baseline_order;  // defaults to the filter order
  double baseline_z = 4.0;
};

struct EvalConfig {
  std::size_t tolerance = 0;
};

struct MatrixConfig {
  std::vector<ModelName> models;
  std::vector<bool> filtration;
};

struct RunConfig {
  std::uint64_t seed = 0;
  InputConfig input;
  ChannelSelector channel;
  PreprocessConfig preprocess;
  InjectConfig inject;
  ModelConfig model;
  DetectConfig detect;
  EvalConfig evaluate;
  std::optional<MatrixConfig> matrix;
  std::string output;

  std::uint64_t synth_seed() const {
    return input.synth_seed_given ? input.synth.seed
                                  : derive_seed(seed, {seed_tag("synth")});
  }
  std::uint64_t inject_seed() const {
    return inject.seed ? *inject.seed : derive_seed(seed, {seed_tag("inject")});
  }
  std::uint64_t train_seed() const {
    return model_train_seed(model.name);
  }
  std::uint64_t model_train_seed(ModelName m) const {
    return model.train_seed_given
               ? model.train.seed
               : derive_seed(seed, {seed_tag("train"), seed_tag(to_string(m))});
  }
  std::size_t baseline_order() const {
    return detect.baseline_order.value_or(preprocess.filter_order);
  }

  Json seeds_json() const {
    Json s{{"master", seed}, {"inject", inject_seed()}, {"train", train_seed()}};
    if (input.kind == InputConfig::Kind::synth) s["synth"] = synth_seed();
    return s;
  }

  Json to_json() const;
  static RunConfig from_json(const Json& doc);
};

namespace detail {

/// Rejects keys outside `allowed` so typos surface as schema errors.
inline void check_keys(const Json& obj, const std::string& where,
                       std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw SchemaError(where + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw SchemaError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const Json& obj, const char* key, T& into, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    into = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw SchemaError(where + "." + key + " has the wrong type");
  }
}

inline Json synth_to_json(const SynthConfig& s, bool with_seed) {
  Json steps = Json::array();
  for (const auto& l : s.load_steps) {
    steps.push_back({{"time_s", l.time_s}, {"magnitude_delta", l.magnitude_delta}});
  }
  Json j{{"amplitude_peak", s.amplitude_peak},
         {"nominal_frequency", s.nominal_frequency},
         {"initial_phase_deg", s.initial_phase_deg},
         {"duration_s", s.duration_s},
         {"noise_floor_sigma", s.noise_floor_sigma},
         {"load_steps", steps},
         {"sample_rate", s.sample_rate},
         {"start_time", s.start_time},
         {"station_count", s.station_count},
         {"frequency_offset_hz", s.frequency_offset_hz},
         {"frequency_swing_hz", s.frequency_swing_hz},
         {"frequency_swing_period_s", s.frequency_swing_period_s},
         {"frequency_noise_sigma", s.frequency_noise_sigma},
         {"angle_noise_sigma_deg", s.angle_noise_sigma_deg},
         {"ambient_swing", s.ambient_swing},
         {"spike_rate_hz", s.spike_rate_hz},
         {"spike_amplitude", s.spike_amplitude}};
  if (with_seed) j["seed"] = s.seed;
  return j;
}

inline SynthConfig synth_from_json(const Json& j, bool& seed_given) {
  const std::string w = "input.synth";
  check_keys(j, w,
             {"amplitude_peak", "nominal_frequency", "initial_phase_deg", "duration_s",
              "noise_floor_sigma", "seed", "load_steps", "sample_rate", "start_time",
              "station_count", "frequency_offset_hz", "frequency_swing_hz",
              "frequency_swing_period_s", "frequency_noise_sigma",
              "angle_noise_sigma_deg", "ambient_swing", "spike_rate_hz",
              "spike_amplitude"});
  SynthConfig s;
  read(j, "amplitude_peak", s.amplitude_peak, w);
  read(j, "nominal_frequency", s.nominal_frequency, w);
  read(j, "initial_phase_deg", s.initial_phase_deg, w);
  read(j, "duration_s", s.duration_s, w);
  read(j, "noise_floor_sigma", s.noise_floor_sigma, w);
  seed_given = j.contains("seed");
  read(j, "seed", s.seed, w);
  read(j, "sample_rate", s.sample_rate, w);
  read(j, "start_time", s.start_time, w);
  read(j, "station_count", s.station_count, w);
  read(j, "frequency_offset_hz", s.frequency_offset_hz, w);
  read(j, "frequency_swing_hz", s.frequency_swing_hz, w);
  read(j, "frequency_swing_period_s", s.frequency_swing_period_s, w);
  read(j, "frequency_noise_sigma", s.frequency_noise_sigma, w);
  read(j, "angle_noise_sigma_deg", s.angle_noise_sigma_deg, w);
  read(j, "ambient_swing", s.ambient_swing, w);
  read(j, "spike_rate_hz", s.spike_rate_hz, w);
  read(j, "spike_amplitude", s.spike_amplitude, w);
  if (j.contains("load_steps")) {
    for (const auto& step : j.at("load_steps")) {
      check_keys(step, w + ".load_steps[]", {"time_s", "magnitude_delta"});
      LoadStep l;
      read(step, "time_s", l.time_s, w);
      read(step, "magnitude_delta", l.magnitude_delta, w);
      s.load_steps.push_back(l);
    }
  }
  s.validate();
  return s;
}

inline ModelName model_from_json(const Json& j, const std::string& where) {
  if (!j.is_string()) throw SchemaError(where + " must be a model name string");
  try {
    return parse_model_name(j.get<std::string>());
  } catch (const Error& e) {
    throw SchemaError(where + ": " + e.what());
  }
}

}  // namespace detail

inline Json RunConfig::to_json() const {
  Json in;
  if (input.kind == InputConfig::Kind::synth) {
    in["synth"] = detail::synth_to_json(input.synth, input.synth_seed_given);
  } else {
    in["csv"] = input.path;
  }
  Json inj{{"count", inject.count},
           {"sigma_multiplier", inject.sigma_multiplier},
           {"min_length", inject.options.min_length},
           {"max_length", inject.options.max_length},
           {"max_fraction", inject.options.max_fraction},
           {"filter_before_inject", inject.filter_before_inject}};
  if (inject.seed) inj["seed"] = *inject.seed;
  Json tr{{"epochs", model.train.epochs},
          {"batch_size", model.train.batch_size},
          {"learning_rate", model.train.learning_rate},
          {"validation_fraction", model.train.validation_fraction}};
  tr["patience"] = model.train.early_stop_patience ? Json(*model.train.early_stop_patience)
                                                   : Json(nullptr);
  if (model.train_seed_given) tr["seed"] = model.train.seed;
  Json mdl{{"name", to_string(model.name)},
           {"width_divisor", model.width_divisor},
           {"train", tr}};
  if (model.search) {
    const auto& sp = model.search->space;
    mdl["search"] = {{"filters", sp.filters},
                     {"kernel_sizes", sp.kernel_sizes},
                     {"hidden_units", sp.hidden_units},
                     {"dropout_rates", sp.dropout_rates},
                     {"learning_rates", sp.learning_rates},
                     {"budget", model.search->budget}};
  }
  Json det{{"k", detect.k},
           {"baseline_order", baseline_order()},
           {"baseline_z", detect.baseline_z}};
  Json doc{{"seed", seed},
           {"input", in},
           {"channel", {{"station", channel.station}, {"kind", to_string(channel.kind)}}},
           {"preprocess",
            {{"filter", preprocess.filter},
             {"filter_order", preprocess.filter_order},
             {"window_len", preprocess.window_len},
             {"horizon", preprocess.horizon},
             {"train_fraction", preprocess.train_fraction}}},
           {"inject", inj},
           {"model", mdl},
           {"detect", det},
           {"evaluate", {{"tolerance", evaluate.tolerance}}}};
  if (matrix) {
    Json models = Json::array();
    for (auto m : matrix->models) models.push_back(to_string(m));
    doc["matrix"] = {{"models", models}, {"filtration", matrix->filtration}};
  }
  return doc;
}

/// Accepts either a run config or a manifest, whose "config" entry is the
/// normalized run config it was produced from.
inline RunConfig RunConfig::from_json(const Json& raw) {
  using detail::check_keys;
  using detail::read;
  const Json& doc = raw.contains("config") && raw.contains("engine") ? raw.at("config") : raw;
  check_keys(doc, "config",
             {"seed", "input", "channel", "preprocess", "inject", "model", "detect",
              "evaluate", "matrix", "output"});
  RunConfig c;
  if (!doc.contains("seed")) throw SchemaError("config.seed (master seed) is required");
  read(doc, "seed", c.seed, "config");
  read(doc, "output", c.output, "config");

  if (!doc.contains("input")) throw SchemaError("config.input is required");
  const Json& in = doc.at("input");
  check_keys(in, "input", {"synth", "csv"});
  if (in.contains("synth") == in.contains("csv")) {
    throw SchemaError("input needs exactly one of 'synth' or 'csv'");
  }
  if (in.contains("synth")) {
    c.input.kind = InputConfig::Kind::synth;
    c.input.synth = detail::synth_from_json(in.at("synth"), c.input.synth_seed_given);
  } else {
    c.input.kind = InputConfig::Kind::csv;
    read(in, "csv", c.input.path, "input");
  }

  if (!doc.contains("channel")) {
    throw SchemaError("config.channel is required (station and kind)");
  }
  const Json& ch = doc.at("channel");
  check_keys(ch, "channel", {"station", "kind"});
  if (!ch.contains("station") || !ch.contains("kind")) {
    throw SchemaError("channel needs both 'station' and 'kind'");
  }
  read(ch, "station", c.channel.station, "channel");
  try {
    c.channel.kind = parse_channel_kind(ch.at("kind").get<std::string>());
  } catch (const Error& e) {
    throw SchemaError(std::string("channel.kind: ") + e.what());
  }

  if (doc.contains("preprocess")) {
    const Json& p = doc.at("preprocess");
    check_keys(p, "preprocess",
               {"filter", "filter_order", "window_len", "horizon", "train_fraction"});
    read(p, "filter", c.preprocess.filter, "preprocess");
    read(p, "filter_order", c.preprocess.filter_order, "preprocess");
    read(p, "window_len", c.preprocess.window_len, "preprocess");
    read(p, "horizon", c.preprocess.horizon, "preprocess");
    read(p, "train_fraction", c.preprocess.train_fraction, "preprocess");
  }

  if (doc.contains("inject")) {
    const Json& p = doc.at("inject");
    check_keys(p, "inject",
               {"count", "sigma_multiplier", "seed", "min_length", "max_length",
                "max_fraction", "filter_before_inject"});
    read(p, "count", c.inject.count, "inject");
    read(p, "sigma_multiplier", c.inject.sigma_multiplier, "inject");
    if (p.contains("seed")) {
      std::uint64_t s = 0;
      read(p, "seed", s, "inject");
      c.inject.seed = s;
    }
    read(p, "min_length", c.inject.options.min_length, "inject");
    read(p, "max_length", c.inject.options.max_length, "inject");
    read(p, "max_fraction", c.inject.options.max_fraction, "inject");
    read(p, "filter_before_inject", c.inject.filter_before_inject, "inject");
  }

  if (doc.contains("model")) {
    const Json& m = doc.at("model");
    check_keys(m, "model", {"name", "width_divisor", "train", "search"});
    if (m.contains("name")) c.model.name = detail::model_from_json(m.at("name"), "model.name");
    read(m, "width_divisor", c.model.width_divisor, "model");
    if (m.contains("train")) {
      const Json& t = m.at("train");
      check_keys(t, "model.train",
                 {"epochs", "batch_size", "learning_rate", "seed", "patience",
                  "validation_fraction"});
      auto& tc = c.model.train;
      read(t, "epochs", tc.epochs, "model.train");
      read(t, "batch_size", tc.batch_size, "model.train");
      read(t, "learning_rate", tc.learning_rate, "model.train");
      read(t, "validation_fraction", tc.validation_fraction, "model.train");
      c.model.train_seed_given = t.contains("seed");
      read(t, "seed", tc.seed, "model.train");
      if (t.contains("patience")) {
        if (t.at("patience").is_null()) {
          tc.early_stop_patience.reset();
        } else {
          std::size_t pat = 0;
          read(t, "patience", pat, "model.train");
          tc.early_stop_patience = pat;
        }
      }
    }
    if (m.contains("search")) {
      const Json& s = m.at("search");
      check_keys(s, "model.search",
                 {"filters", "kernel_sizes", "hidden_units", "dropout_rates",
                  "learning_rates", "budget"});
      SearchConfig sc{SearchSpace::tuned(c.model.name)};
      read(s, "filters", sc.space.filters, "model.search");
      read(s, "kernel_sizes", sc.space.kernel_sizes, "model.search");
      read(s, "hidden_units", sc.space.hidden_units, "model.search");
      read(s, "dropout_rates", sc.space.dropout_rates, "model.search");
      read(s, "learning_rates", sc.space.learning_rates, "model.search");
      read(s, "budget", sc.budget, "model.search");
      c.model.search = sc;
    }
  }

  if (doc.contains("detect")) {
    const Json& d = doc.at("detect");
    check_keys(d, "detect", {"k", "baseline_order", "baseline_z"});
    read(d, "k", c.detect.k, "detect");
    if (d.contains("baseline_order")) {
      std::size_t o = 0;
      read(d, "baseline_order", o, "detect");
      c.detect.baseline_order = o;
    }
    read(d, "baseline_z", c.detect.baseline_z, "detect");
  }

  if (doc.contains("evaluate")) {
    const Json& e = doc.at("evaluate");
    check_keys(e, "evaluate", {"tolerance"});
    read(e, "tolerance", c.evaluate.tolerance, "evaluate");
  }

  if (doc.contains("matrix")) {
    const Json& mx = doc.at("matrix");
    check_keys(mx, "matrix", {"models", "filtration"});
    MatrixConfig m;
    if (mx.contains("models")) {
      for (const auto& name : mx.at("models")) {
        m.models.push_back(detail::model_from_json(name, "matrix.models[]"));
      }
    } else {
      m.models.assign(std::begin(kAllModels), std::end(kAllModels));
    }
    if (mx.contains("filtration")) {
      read(mx, "filtration", m.filtration, "matrix");
    } else {
      m.filtration = {true, false};
    }
    if (m.models.empty() || m.filtration.empty()) {
      throw SchemaError("matrix needs at least one model and one filtration setting");
    }
    c.matrix = m;
  }

  c.model.train.validate();
  if (!(c.detect.k > 0.0)) throw SchemaError("detect.k must be > 0");
  if (c.model.width_divisor < 1) throw SchemaError("model.width_divisor must be >= 1");
  if (c.model.search) c.model.search->space.model = c.model.name;
  return c;
}

}  // namespace pmu::pipeline
