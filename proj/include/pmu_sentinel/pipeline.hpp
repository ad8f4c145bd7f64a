// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <openssl/evp.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "pmu_sentinel/detect.hpp"
#include "pmu_sentinel/evaluate.hpp"
#include "pmu_sentinel/inject.hpp"
#include "pmu_sentinel/models.hpp"
#include "pmu_sentinel/nn/network.hpp"
#include "pmu_sentinel/pmu_data.hpp"
#include "pmu_sentinel/preprocess.hpp"
#include "pmu_sentinel/run_config.hpp"

namespace pmu::pipeline {

namespace fs = std::filesystem;

inline constexpr const char* kManifest = "manifest.json";

// ---------------------------------------------------------------- files

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw IntegrityError("SHA-256 computation failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

/// Path of an upstream artifact; DependencyError naming it when absent.
inline std::string require(const fs::path& dir, const std::string& name) {
  const fs::path p = dir / name;
  if (!fs::exists(p)) throw DependencyError("missing upstream artifact '" + p.string() + "'");
  return p.string();
}

inline Json read_json(const std::string& path) {
  const std::string text = read_file(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

/// Numeric columns under a fixed header; the first column is an integer index.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }

  const std::vector<double>& column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return columns[i];
    }
    throw SchemaError("table has no column '" + name + "'");
  }
};

inline std::string table_to_csv(const Table& t) {
  std::string out;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    out += (c ? "," : "") + t.header[c];
  }
  out += '\n';
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
      if (c) out += ',';
      const double v = t.columns[c][r];
      out += c == 0 ? std::to_string(static_cast<std::size_t>(v)) : format_double(v);
    }
    out += '\n';
  }
  return out;
}

inline Table read_table(const std::string& path, const std::vector<std::string>& header) {
  const std::string text = read_file(path);
  const auto lines = split(text, '\n');
  std::string expected;
  for (std::size_t c = 0; c < header.size(); ++c) expected += (c ? "," : "") + header[c];
  if (lines.empty() || lines.front() != expected) {
    throw SchemaError("'" + path + "' header must be '" + expected + "'");
  }
  Table t{header, std::vector<std::vector<double>>(header.size())};
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty() && ln + 1 == lines.size()) break;
    const auto fields = split(lines[ln], ',');
    if (fields.size() != header.size()) {
      throw SchemaError("'" + path + "' line " + std::to_string(ln + 1) + ": expected " +
                        std::to_string(header.size()) + " fields");
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const auto v = parse_double(fields[c]);
      if (!v) {
        throw ParseError("'" + path + "' line " + std::to_string(ln + 1) + ", column " +
                         std::to_string(c + 1) + ": not a number");
      }
      t.columns[c].push_back(*v);
    }
  }
  return t;
}

inline std::vector<double> index_column(std::size_t n, std::size_t offset = 0) {
  std::vector<double> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<double>(offset + i);
  return idx;
}

inline std::vector<double> to_doubles(const std::vector<bool>& flags) {
  return std::vector<double>(flags.begin(), flags.end());
}

inline std::vector<bool> to_flags(const std::vector<double>& v) {
  std::vector<bool> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] != 0.0;
  return out;
}

// ---------------------------------------------------------------- manifest

/// A run directory. Artifacts written through it are hashed, and commit()
/// refreshes manifest.json with the config, seeds, engine tag and the hash
/// of every artifact written so far.
class RunDir {
 public:
  RunDir(fs::path dir, const RunConfig& cfg) : dir_(std::move(dir)), cfg_(cfg) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw DependencyError("cannot create run directory '" + dir_.string() + "'");
  }

  const fs::path& path() const { return dir_; }
  std::string file(const std::string& name) const { return (dir_ / name).string(); }
  std::string input(const std::string& name) const { return require(dir_, name); }

  void write(const std::string& name, std::string_view content) {
    write_file(file(name), content);
    hashes_[name] = sha256_hex(content);
  }

  /// Records the hash of a file written elsewhere (e.g. by a matrix cell).
  void write_hash(const std::string& name, std::string_view content) {
    hashes_[name] = sha256_hex(content);
  }

  /// Writes without tracking in the manifest.
  void write_plain(const std::string& name, std::string_view content) const {
    write_file(file(name), content);
  }

  /// Merges this stage's artifacts into the manifest.
  void commit() {
    Json manifest = Json::object();
    const fs::path mpath = dir_ / kManifest;
    if (fs::exists(mpath)) {
      try {
        manifest = Json::parse(read_file(mpath.string()));
      } catch (const nlohmann::json::parse_error&) {
        manifest = Json::object();
      }
    }
    Json artifacts = manifest.value("artifacts", Json::object());
    for (const auto& [name, hash] : hashes_) artifacts[name] = hash;
    Json out{{"engine", nn::kEngineVersion},
             {"config", cfg_.to_json()},
             {"seeds", cfg_.seeds_json()},
             {"artifacts", artifacts}};
    write_file(mpath.string(), dump(out));
    hashes_.clear();
  }

 private:
  fs::path dir_;
  const RunConfig& cfg_;
  std::map<std::string, std::string> hashes_;
};

// ---------------------------------------------------------------- stages

/// Generates the synthetic dataset -> dataset.csv
inline void stage_synth(const RunConfig& cfg, const fs::path& dir) {
  if (cfg.input.kind != InputConfig::Kind::synth) {
    throw ParameterError("synth needs an input.synth block");
  }
  RunDir run(dir, cfg);
  SynthConfig s = cfg.input.synth;
  s.seed = cfg.synth_seed();
  run.write("dataset.csv", to_csv(generate_synthetic(s)));
  run.commit();
}

/// Loads and validates a user CSV -> dataset.csv (canonical form)
inline void stage_ingest(const RunConfig& cfg, const fs::path& dir) {
  if (cfg.input.kind != InputConfig::Kind::csv) {
    throw ParameterError("ingest needs an input.csv path");
  }
  if (!fs::exists(cfg.input.path)) {
    throw DependencyError("input dataset '" + cfg.input.path + "' does not exist");
  }
  const PmuDataset d = load_csv(cfg.input.path);
  const auto problems = validate(d);
  if (!problems.empty()) {
    const auto& v = problems.front();
    throw IntegrityError(std::to_string(problems.size()) + " violation(s); first: " +
                         v.channel + " index " + std::to_string(v.index) + ": " +
                         v.message);
  }
  RunDir run(dir, cfg);
  run.write("dataset.csv", to_csv(d));
  run.commit();
}

inline void stage_acquire(const RunConfig& cfg, const fs::path& dir) {
  if (cfg.input.kind == InputConfig::Kind::synth) {
    stage_synth(cfg, dir);
  } else {
    stage_ingest(cfg, dir);
  }
}

inline const std::vector<std::string> kSeriesHeader{"index", "raw", "prepared"};
inline const std::vector<std::string> kStreamHeader{"index", "attacked_raw", "monitored"};
inline const std::vector<std::string> kDetectionsHeader{"index", "score", "flag"};
inline const std::vector<std::string> kBaselineHeader{"index", "flag"};

/// The selected channel, unwrapped when it is an angle.
inline Series select_channel(const PmuDataset& d, const ChannelSelector& ch) {
  const auto& values = d.channel(ch.station, ch.kind).values;
  return ch.kind == ChannelKind::voltage_angle ? unwrap_angles(values) : values;
}

/// dataset.csv -> series.csv (index,raw,prepared) + preprocess.json
inline void stage_preprocess(const RunConfig& cfg, const fs::path& dir) {
  RunDir run(dir, cfg);
  const PmuDataset d = load_csv(run.input("dataset.csv"));
  const Series raw = select_channel(d, cfg.channel);
  const auto& p = cfg.preprocess;
  const Series prepared = p.filter ? median_filter(raw, p.filter_order) : raw;
  const std::size_t cut = split_point(prepared.size(), p.train_fraction);
  if (window_count(cut, p.window_len, p.horizon) == 0) {
    throw ParameterError("training split of " + std::to_string(cut) +
                         " samples is too short for the window");
  }
  const ScalerParams scaler =
      fit_scaler(std::span<const double>(prepared.data(), cut));

  run.write("series.csv", table_to_csv({kSeriesHeader,
                                        {index_column(raw.size()), raw, prepared}}));
  const Json info{{"station", cfg.channel.station},
                  {"kind", to_string(cfg.channel.kind)},
                  {"unwrapped", cfg.channel.kind == ChannelKind::voltage_angle},
                  {"filter", p.filter},
                  {"filter_order", p.filter_order},
                  {"window_len", p.window_len},
                  {"horizon", p.horizon},
                  {"train_fraction", p.train_fraction},
                  {"length", raw.size()},
                  {"split_index", cut},
                  {"sample_rate", d.sample_rate()},
                  {"scaler", {{"min", scaler.min.front()}, {"max", scaler.max.front()}}}};
  run.write("preprocess.json", dump(info));
  run.commit();
}

struct PreparedSeries {
  Series raw;
  Series prepared;
  std::size_t split_index = 0;
  ScalerParams scaler;
};

inline PreparedSeries load_prepared(const RunDir& run) {
  const Table t = read_table(run.input("series.csv"), kSeriesHeader);
  const Json info = read_json(run.input("preprocess.json"));
  PreparedSeries s{t.column("raw"), t.column("prepared"),
                   info.at("split_index").get<std::size_t>(),
                   {{info.at("scaler").at("min").get<double>()},
                    {info.at("scaler").at("max").get<double>()}}};
  if (s.split_index > s.prepared.size()) {
    throw IntegrityError("preprocess.json split index exceeds series length");
  }
  return s;
}

/// series.csv -> stream.csv (index,attacked_raw,monitored) + mask.csv + episodes.json
inline void stage_inject(const RunConfig& cfg, const fs::path& dir) {
  RunDir run(dir, cfg);
  const PreparedSeries s = load_prepared(run);
  const double floor = estimate_noise_floor(s.raw);
  const double sigma = cfg.inject.sigma_multiplier * floor;
  const auto inj = inject_gaussian(s.raw, cfg.inject.count, sigma, cfg.inject_seed(),
                                   cfg.inject.options);
  Series monitored(s.raw.size());
  if (cfg.inject.filter_before_inject) {
    for (std::size_t i = 0; i < monitored.size(); ++i) monitored[i] = s.prepared[i] + inj.noise[i];
  } else {
    monitored = cfg.preprocess.filter ? median_filter(inj.values, cfg.preprocess.filter_order)
                                      : inj.values;
  }
  run.write("stream.csv", table_to_csv({kStreamHeader,
                                        {index_column(monitored.size()), inj.values,
                                         monitored}}));
  run.write("mask.csv", mask_to_csv(inj.mask));
  Json eps = episodes_to_json(inj.mask);
  eps["noise_floor"] = floor;
  eps["sigma"] = sigma;
  eps["seed"] = cfg.inject_seed();
  run.write("episodes.json", dump(eps));
  run.commit();
}

inline WindowedSet training_windows(const PreparedSeries& s, const PreprocessConfig& p) {
  const Series scaled =
      apply_scaler(std::span<const double>(s.prepared.data(), s.split_index), s.scaler);
  return make_windows(scaled, p.window_len, p.horizon);
}

inline std::size_t env_threads() {
  const char* v = std::getenv("PMU_SENTINEL_THREADS");
  if (!v) return 1;
  const auto n = parse_double(v);
  return n && *n >= 1.0 ? static_cast<std::size_t>(*n) : 1;
}

/// series.csv + preprocess.json -> model.json + loss_history.csv (+ search.json)
inline void stage_train(const RunConfig& cfg, const fs::path& dir) {
  RunDir run(dir, cfg);
  const PreparedSeries s = load_prepared(run);
  const WindowedSet windows = training_windows(s, cfg.preprocess);

  ModelSpec spec = scale_width(build(cfg.model.name), cfg.model.width_divisor);
  TrainConfig tc = cfg.model.train;
  tc.seed = cfg.train_seed();
  if (cfg.model.search) {
    // Tail of the training windows ranks the candidates.
    const double frac = tc.validation_fraction > 0.0 ? tc.validation_fraction : 0.2;
    const auto n_val = static_cast<std::size_t>(frac * static_cast<double>(windows.size()));
    if (n_val == 0 || n_val >= windows.size()) {
      throw ParameterError("too few windows for a search validation split");
    }
    const std::size_t n_fit = windows.size() - n_val;
    auto trials = grid_search(cfg.model.search->space, slice_windows(windows, 0, n_fit),
                              slice_windows(windows, n_fit, n_val), cfg.model.search->budget,
                              tc, env_threads());
    Json ranked = Json::array();
    for (const auto& t : trials) ranked.push_back(t.to_json());
    run.write("search.json", dump({{"trials", ranked}, {"selected", trials.front().index}}));
    spec = scale_width(apply_trial(build(cfg.model.name), trials.front()),
                       cfg.model.width_divisor);
    tc.learning_rate = trials.front().learning_rate;
  }

  TrainResult result = train(spec, windows, tc);
  const Json doc{{"model", to_string(cfg.model.name)},
                 {"spec", to_json(spec)},
                 {"window_len", cfg.preprocess.window_len},
                 {"horizon", cfg.preprocess.horizon},
                 {"scaler", {{"min", s.scaler.min.front()}, {"max", s.scaler.max.front()}}},
                 {"train_seed", tc.seed},
                 {"learning_rate", tc.learning_rate},
                 {"epochs_run", result.epochs_run},
                 {"best_epoch", result.best_epoch},
                 {"network", result.network.to_json()}};
  run.write("model.json", dump(doc));
  run.write("loss_history.csv", loss_history_csv(result.history));
  run.commit();
}

/// model.json + series.csv + stream.csv -> detections.csv + detection.json + baseline.csv
inline void stage_detect(const RunConfig& cfg, const fs::path& dir) {
  RunDir run(dir, cfg);
  const Json model_doc = read_json(run.input("model.json"));
  nn::Network net = nn::Network::from_json(model_doc.at("network"));
  const PreparedSeries s = load_prepared(run);
  const Table stream = read_table(run.input("stream.csv"), kStreamHeader);
  const Series& monitored = stream.column("monitored");
  if (monitored.size() != s.prepared.size()) {
    throw AlignmentError("stream.csv and series.csv differ in length");
  }

  const auto& p = cfg.preprocess;
  const auto train_scores = residual_scores(net, training_windows(s, p));
  const double threshold = calibrate_threshold(train_scores, cfg.detect.k);
  const WindowedSet live = make_windows(apply_scaler(monitored, s.scaler), p.window_len,
                                        p.horizon);
  const DetectionResult r =
      apply_threshold(residual_scores(net, live), threshold, live.offset());

  run.write("detections.csv", detections_csv(r));
  const auto flagged = static_cast<std::size_t>(std::count(r.flags.begin(), r.flags.end(), true));
  run.write("detection.json",
            dump({{"threshold", threshold},
                  {"k", cfg.detect.k},
                  {"window_offset", r.window_offset},
                  {"scored", r.scores.size()},
                  {"flagged", flagged},
                  {"train_score_mean", stats::mean(train_scores)},
                  {"train_score_std", stats::stddev(train_scores)}}));
  // The baseline sees the raw measurements with the attack, not the
  // filtered stream, whose running-median residual is nearly zero.
  const auto base = statistical_baseline(stream.column("attacked_raw"), cfg.baseline_order(),
                                         cfg.detect.baseline_z);
  run.write("baseline.csv",
            table_to_csv({kBaselineHeader, {index_column(base.size()), to_doubles(base)}}));
  run.commit();
}

/// Scored-range flags, baseline flags and truth, aligned to the same indices.
struct Aligned {
  std::size_t offset = 0;
  std::vector<bool> model_flags;
  std::vector<double> scores;
  std::vector<bool> baseline_flags;
  AnomalyMask truth;
};

inline Aligned load_aligned(const RunDir& run) {
  const Table det = read_table(run.input("detections.csv"), kDetectionsHeader);
  const Table base = read_table(run.input("baseline.csv"), kBaselineHeader);
  const AnomalyMask mask = mask_from_json(read_json(run.input("episodes.json")));
  if (det.rows() == 0) throw AlignmentError("detections.csv has no rows");
  const auto offset = static_cast<std::size_t>(det.column("index").front());
  if (base.rows() != mask.flags.size()) {
    throw AlignmentError("baseline.csv length differs from the injection mask");
  }
  Aligned a{offset, to_flags(det.column("flag")), det.column("score"), {},
            mask.slice(offset, det.rows())};
  const auto all = to_flags(base.column("flag"));
  a.baseline_flags.assign(all.begin() + static_cast<std::ptrdiff_t>(offset),
                          all.begin() + static_cast<std::ptrdiff_t>(offset + det.rows()));
  return a;
}

inline Json counts_json(const ConfusionCounts& c) {
  return {{"true_positives", c.true_positives},
          {"false_positives", c.false_positives},
          {"false_negatives", c.false_negatives},
          {"true_negatives", c.true_negatives}};
}

/// detections + baseline + episodes -> report.json + report.csv
inline void stage_eval(const RunConfig& cfg, const fs::path& dir) {
  RunDir run(dir, cfg);
  const Aligned a = load_aligned(run);
  const Json detection = read_json(run.input("detection.json"));
  const std::size_t w = cfg.evaluate.tolerance;

  const ConfusionCounts counts = confusion(a.model_flags, a.truth, w);
  const Json echo{{"threshold_k", cfg.detect.k},
                  {"threshold", detection.at("threshold")},
                  {"filter_order", cfg.preprocess.filter_order},
                  {"window_len", cfg.preprocess.window_len},
                  {"horizon", cfg.preprocess.horizon},
                  {"tolerance", w},
                  {"window_offset", a.offset},
                  {"seeds", cfg.seeds_json()}};
  const EvalReport report = EvalReport::from_counts(std::string(to_string(cfg.model.name)),
                                                    cfg.preprocess.filter, counts, echo);

  const ConfusionCounts base = confusion(a.baseline_flags, a.truth, w);
  const auto model_hits = episodes_hit(a.model_flags, a.truth, w);
  const auto base_hits = episodes_hit(a.baseline_flags, a.truth, w);
  std::size_t by_model = 0, by_base = 0, by_both = 0;
  for (std::size_t i = 0; i < model_hits.size(); ++i) {
    by_model += model_hits[i];
    by_base += base_hits[i];
    by_both += model_hits[i] && base_hits[i];
  }

  Json doc = report.to_json();
  doc["baseline"] = {{"filter_order", cfg.baseline_order()},
                     {"z_threshold", cfg.detect.baseline_z},
                     {"precision", 100.0 * precision(base)},
                     {"recall", 100.0 * recall(base)},
                     {"f1", 100.0 * f1(base)},
                     {"counts", counts_json(base)}};
  doc["episodes"] = {{"total", model_hits.size()},
                     {"detected_by_model", by_model},
                     {"detected_by_baseline", by_base},
                     {"detected_by_both", by_both}};
  if (const auto* ref = find_reference(report.model, report.noise_filtration)) {
    doc["reference"] = {{"recall", ref->recall}, {"precision", ref->precision}, {"f1", ref->f1}};
  }
  run.write("report.json", dump(doc));
  run.write("report.csv", std::string(kTableCsvHeader) + "\n" + table_row_csv(report));
  run.commit();
}

// ---------------------------------------------------------------- orchestration

/// Runs `fn`, re-raising any library error with the stage name prefixed.
template <typename Fn>
void run_stage(const char* stage, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string(stage) + ": " + e.what());
  }
}

/// Every stage of a single (model, filtration) run, in order.
inline void run_single(const RunConfig& cfg, const fs::path& dir) {
  run_stage("acquire", [&] { stage_acquire(cfg, dir); });
  run_stage("preprocess", [&] { stage_preprocess(cfg, dir); });
  run_stage("inject", [&] { stage_inject(cfg, dir); });
  run_stage("train", [&] { stage_train(cfg, dir); });
  run_stage("detect", [&] { stage_detect(cfg, dir); });
  run_stage("eval", [&] { stage_eval(cfg, dir); });
}

inline std::string cell_name(ModelName m, bool filtered) {
  return std::string(to_string(m)) + (filtered ? "_filtered" : "_unfiltered");
}

/// Config of one matrix cell: the base config with model and filtration fixed.
inline RunConfig cell_config(const RunConfig& base, ModelName m, bool filtered) {
  RunConfig c = base;
  c.matrix.reset();
  c.model.name = m;
  c.preprocess.filter = filtered;
  if (c.model.search) c.model.search->space.model = m;
  return c;
}

inline const char* kComparisonHeader =
    "model,noise_filtration,recall,precision,f1,reference_recall,reference_precision,"
    "reference_f1";

/// Single run in `dir`, or with a matrix, one full run per (model, filtration)
/// cell under cells/ plus report.csv and comparison.csv over all cells.
inline void run_all(const RunConfig& cfg, const fs::path& dir,
                    std::size_t threads = env_threads()) {
  if (!cfg.matrix) {
    run_single(cfg, dir);
    return;
  }
  std::vector<std::pair<ModelName, bool>> cells;
  for (auto m : cfg.matrix->models) {
    for (bool f : cfg.matrix->filtration) cells.emplace_back(m, f);
  }
  std::vector<std::optional<Error>> failures(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const auto [m, f] = cells[i];
      try {
        run_single(cell_config(cfg, m, f), dir / "cells" / cell_name(m, f));
      } catch (const Error& e) {
        failures[i] = Error(e.kind(), cell_name(m, f) + ": " + e.what());
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < std::clamp<std::size_t>(threads, 1, cells.size()); ++i) {
    pool.emplace_back(worker);
  }
  worker();
  for (auto& t : pool) t.join();
  for (auto& f : failures) {
    if (f) throw *f;
  }

  RunDir run(dir, cfg);
  std::string table = std::string(kTableCsvHeader) + "\n";
  std::string comparison = std::string(kComparisonHeader) + "\n";
  for (const auto& [m, f] : cells) {
    const std::string name = cell_name(m, f);
    const fs::path cell = fs::path("cells") / name;
    const std::string report_text = read_file((dir / cell / "report.json").string());
    const EvalReport r = EvalReport::from_json(Json::parse(report_text));
    table += table_row_csv(r);
    comparison += table_row_csv(r).substr(0, table_row_csv(r).size() - 1);
    if (const auto* ref = find_reference(r.model, r.noise_filtration)) {
      comparison += "," + format_double(ref->recall) + "," + format_double(ref->precision) +
                    "," + format_double(ref->f1) + "\n";
    } else {
      comparison += ",,,\n";
    }
    run.write_hash((cell / "report.json").string(), report_text);
    run.write_hash((cell / kManifest).string(),
                   read_file((dir / cell / kManifest).string()));
  }
  run.write("report.csv", table);
  run.write("comparison.csv", comparison);
  run.commit();
}

// ---------------------------------------------------------------- plots

/// <run>/plots/{filter_compare,angle_compare,detections}.csv for a single
/// run directory, or for every cell of a matrix run.
inline void export_plots(const fs::path& dir) {
  if (fs::exists(dir / "cells") && !fs::exists(dir / "series.csv")) {
    std::vector<fs::path> cells;
    for (const auto& e : fs::directory_iterator(dir / "cells")) {
      if (e.is_directory()) cells.push_back(e.path());
    }
    std::sort(cells.begin(), cells.end());
    for (const auto& c : cells) export_plots(c);
    return;
  }
  const RunConfig cfg = RunConfig::from_json(read_json(require(dir, kManifest)));
  const PmuDataset d = load_csv(require(dir, "dataset.csv"));
  const Table series = read_table(require(dir, "series.csv"), kSeriesHeader);
  RunDir plots(dir / "plots", cfg);

  const Series& raw = series.column("raw");
  plots.write_plain("filter_compare.csv",
                    table_to_csv({{"index", "raw", "filtered"},
                                  {index_column(raw.size()), raw,
                                   median_filter(raw, cfg.preprocess.filter_order)}}));

  const auto& wrapped = d.channel(cfg.channel.station, ChannelKind::voltage_angle).values;
  plots.write_plain("angle_compare.csv",
                    table_to_csv({{"index", "wrapped", "unwrapped"},
                                  {index_column(wrapped.size()), wrapped,
                                   unwrap_angles(wrapped)}}));

  const RunDir run(dir, cfg);
  const Aligned a = load_aligned(run);
  plots.write_plain("detections.csv",
                    table_to_csv({{"index", "truth_flag", "detected_flag", "score"},
                                  {index_column(a.scores.size(), a.offset),
                                   to_doubles(a.truth.flags), to_doubles(a.model_flags),
                                   a.scores}}));
}

}  // namespace pmu::pipeline
