// SPDX-License-Identifier: Apache-2.0
// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

#include "cli_harness.hpp"
#include "oracles.hpp"
#include "pmu_sentinel/models.hpp"
#include "pmu_sentinel/nn/gradient_check.hpp"
#include "pmu_sentinel/pipeline.hpp"

using namespace pmu;
using namespace pmu::nn;
using namespace harness;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

constexpr double kGradTol = 1e-4;
constexpr int kGradSeeds = 10;
constexpr std::size_t kTolerance = 5;

// ---------------------------------------------------------------- 1

Tensor tie_free(Shape shape, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::vector<double> levels(t.size());
  for (std::size_t i = 0; i < levels.size(); ++i) levels[i] = 0.02 * static_cast<double>(i);
  std::shuffle(levels.begin(), levels.end(), rng);
  const double mid = 0.01 * static_cast<double>(levels.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = levels[i] - mid;
  return t;
}

double check(Network net, const Tensor& x, std::mt19937_64& rng) {
  oracle::randomize(net, rng);
  Shape out = net.output_shape();
  out.insert(out.begin(), x.dim(0));
  const Tensor y = oracle::random_tensor(out, rng);
  return gradient_check(net, x, y).max_relative_error;
}

Verdict gradients() {
  const auto t0 = Clock::now();
  std::vector<std::pair<std::string, std::function<double(std::mt19937_64&)>>> cases;
  cases.emplace_back("Dense", [](std::mt19937_64& rng) {
    double worst = 0.0;
    for (auto act : {Activation::identity, Activation::relu, Activation::tanh,
                     Activation::sigmoid}) {
      Network net({4});
      net.add(std::make_unique<Dense>(4, 3, act));
      worst = std::max(worst, check(std::move(net), oracle::random_tensor({5, 4}, rng), rng));
    }
    return worst;
  });
  cases.emplace_back("Conv1D", [](std::mt19937_64& rng) {
    double worst = 0.0;
    for (auto act : {Activation::identity, Activation::relu, Activation::tanh}) {
      Network net({7, 2});
      net.add(std::make_unique<Conv1D>(2, 3, 3, act));
      worst = std::max(worst, check(std::move(net), oracle::random_tensor({3, 7, 2}, rng), rng));
    }
    return worst;
  });
  cases.emplace_back("MaxPool", [](std::mt19937_64& rng) {
    Network net({8, 2});
    net.add(std::make_unique<MaxPool1D>(2));
    return check(std::move(net), tie_free({3, 8, 2}, rng), rng);
  });
  cases.emplace_back("Dropout", [](std::mt19937_64& rng) {
    Network net({5});
    net.add(std::make_unique<Dense>(5, 4, Activation::tanh));
    net.add(std::make_unique<Dropout>(0.12, rng()));
    net.add(std::make_unique<Dense>(4, 1, Activation::identity));
    return check(std::move(net), oracle::random_tensor({3, 5}, rng), rng);
  });
  cases.emplace_back("LSTM", [](std::mt19937_64& rng) {
    double worst = 0.0;
    for (bool seq : {true, false}) {
      for (auto dir : {Direction::forward, Direction::reverse}) {
        Network net({5, 2});
        net.add(std::make_unique<Lstm>(2, 3, seq, dir));
        worst = std::max(worst, check(std::move(net), oracle::random_tensor({2, 5, 2}, rng), rng));
      }
    }
    return worst;
  });
  cases.emplace_back("BiLSTM", [](std::mt19937_64& rng) {
    double worst = 0.0;
    for (bool seq : {true, false}) {
      Network net({4, 2});
      net.add(std::make_unique<BiLstm>(2, 3, seq));
      worst = std::max(worst, check(std::move(net), oracle::random_tensor({2, 4, 2}, rng), rng));
    }
    return worst;
  });
  for (ModelName m : kAllModels) {
    cases.emplace_back(std::string(to_string(m)), [m](std::mt19937_64& rng) {
      Network net = instantiate(scale_width(build(m), 8), {10, 1}, rng());
      return check(std::move(net), oracle::random_tensor({3, 10, 1}, rng), rng);
    });
  }

  bool pass = true;
  std::string detail;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    double worst = 0.0;
    for (int s = 0; s < kGradSeeds; ++s) {
      std::mt19937_64 rng(1000 * (c + 1) + static_cast<std::uint64_t>(s));
      worst = std::max(worst, cases[c].second(rng));
    }
    pass = pass && worst < kGradTol;
    detail += fmt("%s %.1e; ", cases[c].first.c_str(), worst);
  }
  const double elapsed = seconds_since(t0);
  pass = pass && elapsed < 120.0;
  return {pass, fmt("max relative error over %d seeds: %s%.1f s (limit 120 s)", kGradSeeds,
                    detail.c_str(), elapsed)};
}

// ---------------------------------------------------------------- 2

Verdict preprocessing() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> len(1, 400), half(0, 10);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::size_t median_mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> x(len(rng));
    // Rounded values produce ties, which the filter must handle like the oracle.
    for (auto& v : x) v = trial % 2 ? noise(rng) : std::round(4.0 * noise(rng));
    const std::size_t order = std::min(2 * half(rng) + 1, x.size() - (x.size() + 1) % 2);
    median_mismatches += median_filter(x, order) != oracle::median_filter(x, order);
  }

  std::uniform_real_distribution<double> step(-179.0, 179.0), start(-180.0, 180.0);
  std::size_t unwrap_violations = 0;
  double worst_congruence = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> wrapped(len(rng));
    double a = start(rng);
    for (auto& w : wrapped) {
      w = wrap_degrees(a);
      a += step(rng);
    }
    const Series u = unwrap_angles(wrapped);
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double c = std::abs(std::remainder(u[i] - wrapped[i], 360.0));
      worst_congruence = std::max(worst_congruence, c);
      if (c > 1e-9) ++unwrap_violations;
      if (i > 0 && std::abs(u[i] - u[i - 1]) > 180.0 + 1e-9) ++unwrap_violations;
    }
  }
  const double elapsed = seconds_since(t0);
  return {median_mismatches == 0 && unwrap_violations == 0 && elapsed < 30.0,
          fmt("median filter mismatches %zu/1000; unwrap violations %zu, worst mod-360 "
              "residue %.1e; %.1f s (limit 30 s)",
              median_mismatches, unwrap_violations, worst_congruence, elapsed)};
}

// ---------------------------------------------------------------- 3

Verdict metrics() {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> len(1, 300);
  std::uniform_real_distribution<double> density(0.0, 0.5);
  std::uniform_int_distribution<std::size_t> tol(0, 6);
  std::size_t mismatches = 0, bound_violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = len(rng);
    const auto flags = oracle::random_flags(n, density(rng), rng);
    const auto truth = oracle::random_flags(n, density(rng), rng);
    const std::size_t w = tol(rng);
    const ConfusionCounts got = confusion(flags, oracle::mask_of(truth), w);
    const ConfusionCounts want = oracle::confusion(flags, truth, w);
    const auto ratio = [](std::size_t a, std::size_t b) {
      return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
    };
    const double p = ratio(want.true_positives, want.true_positives + want.false_positives);
    const double r = ratio(want.true_positives, want.true_positives + want.false_negatives);
    const double f = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    if (!(got == want) || precision(got) != p || recall(got) != r || f1(got) != f) ++mismatches;
    const double pf = precision(got), rf = recall(got), ff = f1(got);
    if (pf + rf > 0.0 && (ff < std::min(pf, rf) - 1e-15 || ff > std::max(pf, rf) + 1e-15)) {
      ++bound_violations;
    }
  }
  return {mismatches == 0 && bound_violations == 0,
          fmt("mismatches against enumeration %zu/1000; F1 bound violations %zu", mismatches,
              bound_violations)};
}

// ---------------------------------------------------------------- 4, 6, 7

struct BundledRuns {
  fs::path first, second;
  double first_seconds = 0.0;
  std::string error;
};

BundledRuns run_bundled(const fs::path& scratch) {
  BundledRuns b;
  b.first = scratch / "bundled_a";
  b.second = scratch / "bundled_b";
  const std::string cfg = (source_dir() / "configs" / "bundled.json").string();
  const auto t0 = Clock::now();
  Outcome o = run({"run-all", "--config", cfg, "--out", b.first.string()}, scratch,
                  "PMU_SENTINEL_THREADS=1");
  b.first_seconds = seconds_since(t0);
  if (o.exit_code != 0) {
    b.error = "first run failed: " + o.err;
    return b;
  }
  o = run({"run-all", "--config", cfg, "--out", b.second.string()}, scratch);
  if (o.exit_code != 0) b.error = "second run failed: " + o.err;
  return b;
}

Verdict end_to_end(const BundledRuns& b) {
  if (!b.error.empty()) return {false, b.error};
  const auto report = load_json(b.first / "report.json");
  const auto manifest = load_json(b.first / "manifest.json");
  const auto& synth = manifest.at("config").at("input").at("synth");
  const double f1_pct = report.at("f1").get<double>();
  const bool setup = report.at("model") == "CLSTM" && report.at("noise_filtration") == true &&
                     report.at("config").at("tolerance") == kTolerance &&
                     synth.at("duration_s") == 600 && synth.at("sample_rate") == 30 &&
                     report.at("episodes").at("total") == 10;
  return {setup && f1_pct >= 85.0 && b.first_seconds <= 900.0,
          fmt("C-LSTM filtered F1 %.2f%% (need >= 85%%, reference 96.89%%), recall %.2f%%, "
              "precision %.2f%% at w=%zu; %.0f s on one thread (limit 900 s)",
              f1_pct, report.at("recall").get<double>(), report.at("precision").get<double>(),
              kTolerance, b.first_seconds)};
}

/// Fraction of injected, scored samples whose own flag is set.
double pointwise_recall(const fs::path& run_dir, const std::string& flags_file,
                        const std::vector<std::string>& header) {
  const auto mask = pipeline::read_table((run_dir / "mask.csv").string(), {"index", "flag"});
  const auto det = pipeline::read_table((run_dir / flags_file).string(), header);
  const auto scored = pipeline::read_table((run_dir / "detections.csv").string(),
                                           pipeline::kDetectionsHeader);
  const auto begin = static_cast<std::size_t>(scored.column("index").front());
  const auto& idx = det.column("index");
  const auto& flag = det.column("flag");
  std::size_t hit = 0, total = 0;
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto i = static_cast<std::size_t>(idx[r]);
    if (i < begin || mask.column("flag")[i] == 0.0) continue;
    ++total;
    hit += flag[r] != 0.0;
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

Verdict calibration(const BundledRuns& b) {
  if (!b.error.empty()) return {false, b.error};
  const auto report = load_json(b.first / "report.json");
  const double model_recall = report.at("recall").get<double>();
  const double base_recall = report.at("baseline").at("recall").get<double>();
  const auto& eps = report.at("episodes");
  const double both = eps.at("detected_by_both").get<double>() / eps.at("total").get<double>();
  const double model_pw = pointwise_recall(b.first, "detections.csv", pipeline::kDetectionsHeader);
  const double base_pw = pointwise_recall(b.first, "baseline.csv", pipeline::kBaselineHeader);
  return {model_recall >= 80.0 && base_recall >= 80.0 && both >= 0.8,
          fmt("injected samples flagged at w=%zu: C-LSTM %.1f%%, baseline %.1f%% (need >= 80%%; "
              "exact-sample %.1f%% and %.1f%%); episodes detected by both %.0f%% (need >= 80%%)",
              kTolerance, model_recall, base_recall, 100.0 * model_pw, 100.0 * base_pw,
              100.0 * both)};
}

Verdict determinism(const BundledRuns& b) {
  if (!b.error.empty()) return {false, b.error};
  const bool manifest = slurp(b.first / "manifest.json") == slurp(b.second / "manifest.json");
  const bool report = slurp(b.first / "report.json") == slurp(b.second / "report.json") &&
                      slurp(b.first / "report.csv") == slurp(b.second / "report.csv");
  const bool everything = tree(b.first) == tree(b.second);
  return {manifest && report,
          fmt("manifest %s, report %s, all %zu artifacts %s (threads 1 vs default)",
              manifest ? "identical" : "DIFFERS", report ? "identical" : "DIFFERS",
              tree(b.first).size(), everything ? "identical" : "differ")};
}

// ---------------------------------------------------------------- 5

Verdict filtration(const fs::path& scratch) {
  const std::string cfg = (source_dir() / "configs" / "noisy.json").string();
  int wins = 0;
  std::string detail;
  for (int seed = 1; seed <= 5; ++seed) {
    const fs::path out = scratch / ("noisy_" + std::to_string(seed));
    const Outcome o = run({"run-all", "--config", cfg, "--seed", std::to_string(seed), "--out",
                           out.string()},
                          scratch);
    if (o.exit_code != 0) return {false, "seed " + std::to_string(seed) + " failed: " + o.err};
    const double on =
        load_json(out / "cells" / "LSTM_filtered" / "report.json").at("f1").get<double>();
    const double off =
        load_json(out / "cells" / "LSTM_unfiltered" / "report.json").at("f1").get<double>();
    wins += on > off;
    detail += fmt("seed %d %.1f vs %.1f; ", seed, on, off);
  }
  return {wins >= 4, fmt("LSTM filtered beats unfiltered F1 in %d/5 runs (need >= 4): %s", wins,
                         detail.substr(0, detail.size() - 2).c_str())};
}

// ---------------------------------------------------------------- 8

Verdict serialization(const fs::path& scratch, const BundledRuns& b) {
  SynthConfig sc;
  sc.duration_s = 120.0;
  sc.noise_floor_sigma = 0.05;
  sc.seed = 8;
  const PmuDataset data = generate_synthetic(sc);
  const std::string csv = to_csv(data);
  spit(scratch / "roundtrip.csv", csv);
  const PmuDataset back = load_csv((scratch / "roundtrip.csv").string());
  const bool dataset_ok = back == data && to_csv(back) == csv;

  const Series filtered =
      median_filter(data.channel("PMU1", ChannelKind::voltage_magnitude).values, 15);
  const auto [train_part, test_part] = chronological_split(filtered, 0.8);
  const ScalerParams scaler = fit_scaler(train_part);
  const Series train_s = apply_scaler(std::vector<Series>{train_part}, scaler).front();
  const Series test_s = apply_scaler(std::vector<Series>{test_part}, scaler).front();
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 32;
  tc.learning_rate = 1e-3;
  tc.seed = 8;
  std::size_t identical_models = 0;
  for (ModelName m : kAllModels) {
    TrainResult r = train(scale_width(build(m), 4), make_windows(train_s, 30, 1), tc);
    const WindowedSet test = make_windows(test_s, 30, 1);
    const auto before = predict(r.network, test);
    const fs::path file = scratch / (std::string(to_string(m)) + ".json");
    spit(file, r.network.to_json().dump());
    Network restored = Network::from_json(load_json(file));
    identical_models += predict(restored, test) == before;
  }

  bool artifacts_ok = b.error.empty();
  if (artifacts_ok) {
    const std::string text = slurp(b.first / "dataset.csv");
    artifacts_ok = to_csv(load_csv((b.first / "dataset.csv").string())) == text;
    const auto network = load_json(b.first / "model.json").at("network");
    artifacts_ok = artifacts_ok && Network::from_json(network).to_json() == network;
  }
  return {dataset_ok && identical_models == std::size(kAllModels) && artifacts_ok,
          fmt("trained networks with bit-identical test predictions after JSON round trip "
              "%zu/%zu; dataset CSV round trip %s; bundled run artifacts re-serialise %s",
              identical_models, std::size(kAllModels), dataset_ok ? "lossless" : "LOSSY",
              artifacts_ok ? "unchanged" : "CHANGED")};
}

}  // namespace

int main() {
  const fs::path scratch = temp_dir("acceptance");
  int failures = 0;
  auto report = [&](int n, const char* title, const std::function<Verdict()>& fn) {
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += !v.pass;
    std::printf("%s criterion %d (%s): %s\n", v.pass ? "PASS" : "FAIL", n, title,
                v.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "gradient correctness", gradients);
  report(2, "preprocessing oracles", preprocessing);
  report(3, "metric oracles", metrics);
  const BundledRuns bundled = run_bundled(scratch);
  report(4, "end-to-end synthetic detection", [&] { return end_to_end(bundled); });
  report(5, "filtration sensitivity", [&] { return filtration(scratch); });
  report(6, "calibration cross-check", [&] { return calibration(bundled); });
  report(7, "determinism", [&] { return determinism(bundled); });
  report(8, "serialization", [&] { return serialization(scratch, bundled); });

  std::printf("%d of 8 criteria passed\n", 8 - failures);
  if (failures == 0) fs::remove_all(scratch);
  return failures == 0 ? 0 : 1;
}
