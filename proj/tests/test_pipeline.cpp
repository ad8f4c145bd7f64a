// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "cli_harness.hpp"
#include "pmu_sentinel/pipeline.hpp"

using namespace harness;
using pmu::pipeline::Json;

namespace {

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  for (std::string l; std::getline(ss, l);) out.push_back(l);
  return out;
}

Json single_error_line(const Outcome& o) {
  const auto l = lines(o.err);
  EXPECT_EQ(l.size(), 1u) << o.err;
  return l.empty() ? Json{} : Json::parse(l.front());
}

const char* const kStages[] = {"synth", "preprocess", "inject", "train", "detect", "eval"};

const Json kMatrix = {{"matrix", {{"models", {"CNN", "LSTM", "BiLSTM", "CLSTM"}},
                                  {"filtration", {true, false}}}}};

}  // namespace

TEST(Sha256, KnownVector) {
  EXPECT_EQ(pmu::pipeline::sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Cli, SynthIsByteIdenticalAcrossRuns) {
  const fs::path d = temp_dir("synth");
  const std::string cfg = (source_dir() / "configs" / "smoke.json").string();
  ASSERT_EQ(run({"synth", "--config", cfg, "--out", (d / "a").string()}, d).exit_code, 0);
  ASSERT_EQ(run({"synth", "--config", cfg, "--out", (d / "b").string()}, d).exit_code, 0);
  EXPECT_EQ(slurp(d / "a" / "dataset.csv"), slurp(d / "b" / "dataset.csv"));
  EXPECT_EQ(slurp(d / "a" / "manifest.json"), slurp(d / "b" / "manifest.json"));

  ASSERT_EQ(run({"synth", "--config", cfg, "--seed", "8", "--out", (d / "c").string()}, d)
                .exit_code,
            0);
  EXPECT_NE(slurp(d / "a" / "dataset.csv"), slurp(d / "c" / "dataset.csv"));
  EXPECT_EQ(load_json(d / "c" / "manifest.json").at("config").at("seed"), 8);
}

TEST(Cli, SuccessPrintsJsonLine) {
  const fs::path d = temp_dir("success");
  const std::string cfg = (source_dir() / "configs" / "smoke.json").string();
  const Outcome o = run({"synth", "--config", cfg, "--out", (d / "run").string()}, d);
  ASSERT_EQ(o.exit_code, 0) << o.err;
  const Json j = Json::parse(o.out);
  EXPECT_EQ(j.at("command"), "synth");
  EXPECT_TRUE(o.err.empty());
}

TEST(Cli, FiltrationOffPassesSeriesThrough) {
  const fs::path d = temp_dir("passthrough");
  const fs::path cfg = patched_config("smoke.json", {{"preprocess", {{"filter", false}}}}, d);
  const std::string out = (d / "run").string();
  ASSERT_EQ(run({"synth", "--config", cfg.string(), "--out", out}, d).exit_code, 0);
  ASSERT_EQ(run({"preprocess", "--config", cfg.string(), "--out", out}, d).exit_code, 0);
  const auto t = pmu::pipeline::read_table(out + "/series.csv", {"index", "raw", "prepared"});
  EXPECT_EQ(t.column("raw"), t.column("prepared"));
  const auto ds = pmu::load_csv(out + "/dataset.csv");
  EXPECT_EQ(t.column("raw"), ds.channel("PMU1", pmu::ChannelKind::voltage_magnitude).values);
}

TEST(Cli, MissingUpstreamArtifactNamesPath) {
  const fs::path d = temp_dir("missing");
  const std::string cfg = (source_dir() / "configs" / "smoke.json").string();
  const std::string out = (d / "run").string();
  const Outcome o = run({"train", "--config", cfg, "--out", out}, d);
  EXPECT_EQ(o.exit_code, 1);
  const Json e = single_error_line(o);
  EXPECT_EQ(e.at("error"), "dependency");
  EXPECT_EQ(e.at("command"), "train");
  EXPECT_NE(e.at("message").get<std::string>().find(out + "/series.csv"), std::string::npos)
      << e.dump();
}

TEST(Cli, SchemaAndUsageErrors) {
  const fs::path d = temp_dir("schema");
  Json bad = load_json(source_dir() / "configs" / "smoke.json");
  bad.erase("channel");
  spit(d / "no_channel.json", bad.dump());
  Outcome o = run({"synth", "--config", (d / "no_channel.json").string(), "--out",
                   (d / "run").string()},
                  d);
  EXPECT_EQ(o.exit_code, 1);
  EXPECT_EQ(single_error_line(o).at("error"), "schema");

  bad = load_json(source_dir() / "configs" / "smoke.json");
  bad["detect"]["threshold_k"] = 3;
  spit(d / "unknown_key.json", bad.dump());
  o = run({"synth", "--config", (d / "unknown_key.json").string(), "--out",
           (d / "run").string()},
          d);
  EXPECT_EQ(o.exit_code, 1);
  EXPECT_EQ(single_error_line(o).at("error"), "schema");

  spit(d / "broken.json", "{\"seed\": ");
  o = run({"synth", "--config", (d / "broken.json").string(), "--out", (d / "run").string()},
          d);
  EXPECT_EQ(o.exit_code, 1);
  EXPECT_EQ(single_error_line(o).at("error"), "parse");

  o = run({"synth", "--out", (d / "run").string()}, d);
  EXPECT_EQ(o.exit_code, 2);
  EXPECT_EQ(single_error_line(o).at("error"), "usage");

  o = run({"export-plots", (d / "nowhere").string()}, d);
  EXPECT_EQ(o.exit_code, 1);
  EXPECT_EQ(single_error_line(o).at("error"), "dependency");
}

TEST(Cli, InjectionBeyondCapIsPlacementError) {
  const fs::path d = temp_dir("placement");
  const fs::path cfg = patched_config("smoke.json", {{"inject", {{"count", 4}}}}, d);
  const Outcome o = run({"run-all", "--config", cfg.string(), "--out", (d / "run").string()}, d);
  EXPECT_EQ(o.exit_code, 1);
  EXPECT_EQ(single_error_line(o).at("error"), "placement");
}

TEST(Cli, StageCommandsComposeToRunAll) {
  const fs::path d = temp_dir("compose");
  const std::string cfg = (source_dir() / "configs" / "smoke.json").string();
  const std::string manual = (d / "manual").string();
  for (const char* stage : kStages) {
    const Outcome o = run({stage, "--config", cfg, "--out", manual}, d);
    ASSERT_EQ(o.exit_code, 0) << stage << ": " << o.err;
  }
  ASSERT_EQ(run({"run-all", "--config", cfg, "--out", (d / "all").string()}, d).exit_code, 0);
  const auto a = tree(d / "manual"), b = tree(d / "all");
  EXPECT_EQ(a.size(), b.size());
  for (const auto& [name, content] : a) {
    ASSERT_TRUE(b.contains(name)) << name;
    EXPECT_EQ(content, b.at(name)) << name;
  }
}

TEST(Cli, ManifestRecordsEverythingAndReruns) {
  const fs::path d = temp_dir("manifest");
  const std::string cfg = (source_dir() / "configs" / "smoke.json").string();
  ASSERT_EQ(run({"run-all", "--config", cfg, "--out", (d / "first").string()}, d).exit_code, 0);

  const Json m = load_json(d / "first" / "manifest.json");
  EXPECT_EQ(m.at("engine"), pmu::nn::kEngineVersion);
  EXPECT_TRUE(m.at("seeds").contains("inject"));
  EXPECT_TRUE(m.at("seeds").contains("train"));
  EXPECT_FALSE(m.at("config").contains("output"));
  for (const auto& [name, hash] : m.at("artifacts").items()) {
    EXPECT_EQ(hash, pmu::pipeline::sha256_hex(slurp(d / "first" / name))) << name;
  }
  for (const char* f : {"dataset.csv", "series.csv", "stream.csv", "mask.csv", "model.json",
                        "detections.csv", "report.json"}) {
    EXPECT_TRUE(m.at("artifacts").contains(f)) << f;
  }

  const std::string rerun = (d / "second").string();
  ASSERT_EQ(run({"run-all", "--config", (d / "first" / "manifest.json").string(), "--out",
                 rerun},
                d)
                .exit_code,
            0);
  EXPECT_EQ(tree(d / "first"), tree(rerun));
}

TEST(Cli, EvalReportValidates) {
  const fs::path d = temp_dir("report");
  const std::string cfg = (source_dir() / "configs" / "smoke.json").string();
  ASSERT_EQ(run({"run-all", "--config", cfg, "--out", (d / "run").string()}, d).exit_code, 0);
  const Json doc = load_json(d / "run" / "report.json");
  const pmu::EvalReport r = pmu::EvalReport::from_json(doc);
  const Json det = load_json(d / "run" / "detection.json");
  EXPECT_EQ(r.counts.total(), det.at("scored").get<std::size_t>());
  EXPECT_EQ(r.model, "LSTM");
  EXPECT_TRUE(r.noise_filtration);
  EXPECT_EQ(doc.at("config").at("tolerance"), 5);
  const auto csv = lines(slurp(d / "run" / "report.csv"));
  ASSERT_EQ(csv.size(), 2u);
  EXPECT_EQ(csv[0], pmu::kTableCsvHeader);

  const auto detections = lines(slurp(d / "run" / "detections.csv"));
  EXPECT_EQ(detections.size(), r.counts.total() + 1);
  EXPECT_EQ(detections[0], "index,score,flag");
}

TEST(Cli, MatrixRunIsDeterministicAndExportsPlots) {
  const fs::path d = temp_dir("matrix");
  const fs::path cfg = patched_config("smoke.json", kMatrix, d);
  const Outcome first = run({"run-all", "--config", cfg.string(), "--out",
                             (d / "one").string()},
                            d, "PMU_SENTINEL_THREADS=4");
  ASSERT_EQ(first.exit_code, 0) << first.err;
  const Outcome second = run({"run-all", "--config", cfg.string(), "--out",
                              (d / "two").string()},
                             d, "PMU_SENTINEL_THREADS=1");
  ASSERT_EQ(second.exit_code, 0) << second.err;

  const auto report = lines(slurp(d / "one" / "report.csv"));
  ASSERT_EQ(report.size(), 9u);
  EXPECT_EQ(report[0], "model,noise_filtration,recall,precision,f1");
  EXPECT_EQ(lines(slurp(d / "one" / "comparison.csv")).size(), 9u);
  EXPECT_EQ(tree(d / "one"), tree(d / "two"));

  ASSERT_EQ(run({"export-plots", (d / "one").string()}, d).exit_code, 0);
  const fs::path cell = d / "one" / "cells" / "CLSTM_filtered";
  const auto n = pmu::load_csv((cell / "dataset.csv").string()).length();
  const auto filter = lines(slurp(cell / "plots" / "filter_compare.csv"));
  const auto angle = lines(slurp(cell / "plots" / "angle_compare.csv"));
  const auto detect = lines(slurp(cell / "plots" / "detections.csv"));
  EXPECT_EQ(filter.size(), n + 1);
  EXPECT_EQ(angle.size(), n + 1);
  EXPECT_EQ(filter[0], "index,raw,filtered");
  EXPECT_EQ(angle[0], "index,wrapped,unwrapped");
  EXPECT_EQ(detect[0], "index,truth_flag,detected_flag,score");
  EXPECT_EQ(detect.size(), load_json(cell / "detection.json").at("scored").get<std::size_t>() + 1);

  const auto t = pmu::pipeline::read_table((cell / "plots" / "angle_compare.csv").string(),
                                           {"index", "wrapped", "unwrapped"});
  const auto& w = t.column("wrapped");
  const auto& u = t.column("unwrapped");
  for (std::size_t i = 0; i < w.size(); ++i) {
    ASSERT_NEAR(std::remainder(u[i] - w[i], 360.0), 0.0, 1e-9);
    if (i > 0) {
      ASSERT_LE(std::abs(u[i] - u[i - 1]), 180.0);
    }
  }
}
