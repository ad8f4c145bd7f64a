// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"
#include "pmu_sentinel/error.hpp"
#include "pmu_sentinel/inject.hpp"
#include "pmu_sentinel/text.hpp"

namespace pmu {

struct ConfusionCounts {
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  std::size_t true_negatives = 0;

  std::size_t total() const {
    return true_positives + false_positives + false_negatives + true_negatives;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

namespace detail {

// prefix[i] = number of set flags in [0, i).
inline std::vector<std::size_t> prefix_counts(const std::vector<bool>& v) {
  std::vector<std::size_t> p(v.size() + 1, 0);
  for (std::size_t i = 0; i < v.size(); ++i) p[i + 1] = p[i] + (v[i] ? 1 : 0);
  return p;
}

inline bool any_within(const std::vector<std::size_t>& prefix, std::size_t i,
                       std::size_t w) {
  const std::size_t n = prefix.size() - 1;
  const std::size_t lo = i >= w ? i - w : 0;
  const std::size_t hi = std::min(n, i + w + 1);
  return prefix[hi] > prefix[lo];
}

}  // namespace detail

/// Labels every timestep exactly once. With tolerance w:
///  - a truth-positive sample is TP if some flag lies within w samples, else FN;
///  - a flagged truth-negative sample is TP if some truth positive lies
///    within w samples, else FP;
///  - an unflagged truth-negative sample is TN.
/// w = 0 is plain pointwise matching.
inline ConfusionCounts confusion(const std::vector<bool>& flags, const AnomalyMask& mask,
                                 std::size_t tolerance = 0) {
  if (flags.size() != mask.flags.size()) {
    throw AlignmentError("confusion: " + std::to_string(flags.size()) +
                         " flags vs mask of length " + std::to_string(mask.flags.size()));
  }
  const auto flag_prefix = detail::prefix_counts(flags);
  const auto truth_prefix = detail::prefix_counts(mask.flags);
  ConfusionCounts c;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (mask.flags[i]) {
      if (detail::any_within(flag_prefix, i, tolerance)) {
        ++c.true_positives;
      } else {
        ++c.false_negatives;
      }
    } else if (flags[i]) {
      if (detail::any_within(truth_prefix, i, tolerance)) {
        ++c.true_positives;
      } else {
        ++c.false_positives;
      }
    } else {
      ++c.true_negatives;
    }
  }
  return c;
}

/// Episodes with at least one flag inside [start - w, end + w).
inline std::vector<bool> episodes_hit(const std::vector<bool>& flags, const AnomalyMask& mask,
                                      std::size_t tolerance = 0) {
  if (flags.size() != mask.flags.size()) {
    throw AlignmentError("episodes_hit: length mismatch");
  }
  const auto prefix = detail::prefix_counts(flags);
  std::vector<bool> hit;
  for (const auto& e : mask.episodes) {
    const std::size_t lo = e.start >= tolerance ? e.start - tolerance : 0;
    const std::size_t hi = std::min(flags.size(), e.end + tolerance);
    hit.push_back(prefix[hi] > prefix[lo]);
  }
  return hit;
}

// Zero denominators yield 0.
inline double precision(const ConfusionCounts& c) {
  const std::size_t d = c.true_positives + c.false_positives;
  return d ? static_cast<double>(c.true_positives) / static_cast<double>(d) : 0.0;
}

inline double recall(const ConfusionCounts& c) {
  const std::size_t d = c.true_positives + c.false_negatives;
  return d ? static_cast<double>(c.true_positives) / static_cast<double>(d) : 0.0;
}

inline double f1(const ConfusionCounts& c) {
  const double p = precision(c), r = recall(c);
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

/// Published per-model results used as side-by-side references (percent).
struct ReferenceRow {
  const char* model;
  bool noise_filtration;
  double recall;
  double precision;
  double f1;
};

inline const std::vector<ReferenceRow>& reference_table() {
  static const std::vector<ReferenceRow> rows{
      {"CNN", true, 94.67, 87.65, 91.03},    {"CNN", false, 86.67, 94.20, 90.28},
      {"LSTM", true, 90.38, 94.0, 92.16},    {"LSTM", false, 91.23, 69.33, 78.79},
      {"BiLSTM", true, 94.05, 98.75, 96.34}, {"BiLSTM", false, 82.0, 91.11, 86.32},
      {"CLSTM", true, 97.50, 96.30, 96.89},  {"CLSTM", false, 94.12, 96.0, 95.05},
  };
  return rows;
}

inline const ReferenceRow* find_reference(const std::string& model, bool filtration) {
  for (const auto& r : reference_table()) {
    if (model == r.model && filtration == r.noise_filtration) return &r;
  }
  return nullptr;
}

inline constexpr const char* kZeroDenominatorPolicy = "zero-denominator metrics reported as 0";

/// Metrics in percent, derived from `counts`.
struct EvalReport {
  std::string model;
  bool noise_filtration = false;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  ConfusionCounts counts;
  nlohmann::json config;  // threshold k, filter order, tolerance, seeds, ...

  static EvalReport from_counts(std::string model, bool filtration,
                                const ConfusionCounts& c, nlohmann::json config) {
    return {std::move(model), filtration, 100.0 * pmu::precision(c),
            100.0 * pmu::recall(c), 100.0 * pmu::f1(c), c, std::move(config)};
  }

  /// Throws IntegrityError if the metrics disagree with the counts.
  void check_consistency() const {
    auto near = [](double a, double b) { return std::abs(a - b) <= 1e-9 * 100.0; };
    if (!near(precision, 100.0 * pmu::precision(counts)) ||
        !near(recall, 100.0 * pmu::recall(counts)) ||
        !near(f1, 100.0 * pmu::f1(counts))) {
      throw IntegrityError("report metrics inconsistent with confusion counts for " + model);
    }
  }

  nlohmann::json to_json() const {
    check_consistency();
    return {{"model", model},
            {"noise_filtration", noise_filtration},
            {"precision", precision},
            {"recall", recall},
            {"f1", f1},
            {"counts",
             {{"true_positives", counts.true_positives},
              {"false_positives", counts.false_positives},
              {"false_negatives", counts.false_negatives},
              {"true_negatives", counts.true_negatives}}},
            {"metric_policy", kZeroDenominatorPolicy},
            {"config", config}};
  }

  static EvalReport from_json(const nlohmann::json& j) {
    const auto& c = j.at("counts");
    EvalReport r{j.at("model").get<std::string>(),
                 j.at("noise_filtration").get<bool>(),
                 j.at("precision").get<double>(),
                 j.at("recall").get<double>(),
                 j.at("f1").get<double>(),
                 {c.at("true_positives").get<std::size_t>(),
                  c.at("false_positives").get<std::size_t>(),
                  c.at("false_negatives").get<std::size_t>(),
                  c.at("true_negatives").get<std::size_t>()},
                 j.value("config", nlohmann::json::object())};
    r.check_consistency();
    return r;
  }
};

inline constexpr const char* kTableCsvHeader = "model,noise_filtration,recall,precision,f1";

inline std::string table_row_csv(const EvalReport& r) {
  return r.model + "," + (r.noise_filtration ? "yes" : "no") + "," +
         format_double(r.recall) + "," + format_double(r.precision) + "," +
         format_double(r.f1) + "\n";
}

}  // namespace pmu
