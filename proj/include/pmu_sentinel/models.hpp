// SPDX-License-Identifier: Apache-2.0
#pragma once

// The four forecasting architectures, their training loop and a grid search
// over their main hyperparameters.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "pmu_sentinel/nn/adam.hpp"
#include "pmu_sentinel/nn/network.hpp"
#include "pmu_sentinel/preprocess.hpp"
#include "pmu_sentinel/seed.hpp"

namespace pmu {

enum class ModelName { cnn, lstm, bilstm, clstm };

inline constexpr ModelName kAllModels[] = {ModelName::cnn, ModelName::lstm,
                                           ModelName::bilstm, ModelName::clstm};

inline std::string_view to_string(ModelName m) {
  switch (m) {
    case ModelName::cnn: return "CNN";
    case ModelName::lstm: return "LSTM";
    case ModelName::bilstm: return "BiLSTM";
    case ModelName::clstm: return "CLSTM";
  }
  return "CNN";
}

inline ModelName parse_model_name(std::string_view s) {
  if (s == "CNN" || s == "cnn") return ModelName::cnn;
  if (s == "LSTM" || s == "lstm") return ModelName::lstm;
  if (s == "BiLSTM" || s == "Bi-LSTM" || s == "bilstm") return ModelName::bilstm;
  if (s == "CLSTM" || s == "C-LSTM" || s == "clstm") return ModelName::clstm;
  throw ParameterError("unknown model '" + std::string(s) +
                       "' (expected CNN, LSTM, BiLSTM or CLSTM)");
}

enum class LayerKind { conv1d, maxpool1d, flatten, dense, lstm, bilstm, dropout };

inline std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv1d: return "conv1d";
    case LayerKind::maxpool1d: return "maxpool1d";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
    case LayerKind::lstm: return "lstm";
    case LayerKind::bilstm: return "bilstm";
    case LayerKind::dropout: return "dropout";
  }
  return "dense";
}

/// One layer of a declarative model. `units` is the filter count, hidden
/// width (per direction for bilstm) or dense width depending on `kind`.
struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t units = 0;
  std::size_t kernel_size = 0;
  std::size_t pool_size = 0;
  nn::Activation activation = nn::Activation::identity;
  double rate = 0.0;
  bool return_sequences = false;

  static LayerSpec conv(std::size_t filters, std::size_t kernel) {
    return {LayerKind::conv1d, filters, kernel, 0, nn::Activation::relu};
  }
  static LayerSpec pool(std::size_t size) { return {LayerKind::maxpool1d, 0, 0, size}; }
  static LayerSpec flatten() { return {LayerKind::flatten}; }
  static LayerSpec dense(std::size_t units,
                         nn::Activation act = nn::Activation::identity) {
    return {LayerKind::dense, units, 0, 0, act};
  }
  static LayerSpec lstm(std::size_t units, bool sequences) {
    return {LayerKind::lstm, units, 0, 0, nn::Activation::tanh, 0.0, sequences};
  }
  static LayerSpec bilstm(std::size_t units, bool sequences) {
    return {LayerKind::bilstm, units, 0, 0, nn::Activation::tanh, 0.0, sequences};
  }
  static LayerSpec dropout(double rate) {
    return {LayerKind::dropout, 0, 0, 0, nn::Activation::identity, rate};
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ModelSpec {
  ModelName name = ModelName::cnn;
  std::vector<LayerSpec> layers;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

inline constexpr double kTableDropout = 0.12;

struct BuildOptions {
  /// Bi-LSTM width counts per direction (64 + 64); false splits 64 in two.
  bool bilstm_units_per_direction = true;
};

/// The tuned architectures. Every model ends in Dense(1).
inline ModelSpec build(ModelName name, const BuildOptions& opts = {}) {
  using L = LayerSpec;
  switch (name) {
    case ModelName::cnn:
      return {name,
              {L::conv(32, 3), L::conv(16, 3), L::conv(64, 3), L::pool(2),
               L::flatten(), L::dense(50, nn::Activation::relu), L::dense(1)}};
    case ModelName::lstm:
      return {name,
              {L::lstm(64, true), L::dropout(kTableDropout), L::lstm(32, false),
               L::dense(1)}};
    case ModelName::bilstm:
      return {name,
              {L::bilstm(opts.bilstm_units_per_direction ? 64 : 32, true),
               L::dropout(kTableDropout), L::lstm(32, false), L::dense(1)}};
    case ModelName::clstm:
      return {name,
              {L::conv(64, 3), L::lstm(64, true), L::dropout(kTableDropout),
               L::lstm(32, false), L::dropout(kTableDropout), L::dense(1)}};
  }
  throw ParameterError("unknown model");
}

/// Same topology with every width divided by `divisor` (minimum 1); the
/// output layer keeps its single unit.
inline ModelSpec scale_width(ModelSpec spec, std::size_t divisor) {
  if (divisor == 0) throw ParameterError("width divisor must be >= 1");
  for (std::size_t i = 0; i + 1 < spec.layers.size(); ++i) {
    auto& l = spec.layers[i];
    if (l.units > 0) l.units = std::max<std::size_t>(1, l.units / divisor);
  }
  return spec;
}

inline nlohmann::json to_json(const ModelSpec& spec) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : spec.layers) {
    nlohmann::json j{{"kind", to_string(l.kind)}};
    switch (l.kind) {
      case LayerKind::conv1d:
        j["filters"] = l.units;
        j["kernel_size"] = l.kernel_size;
        j["activation"] = nn::to_string(l.activation);
        break;
      case LayerKind::maxpool1d: j["pool_size"] = l.pool_size; break;
      case LayerKind::dense:
        j["units"] = l.units;
        j["activation"] = nn::to_string(l.activation);
        break;
      case LayerKind::lstm:
      case LayerKind::bilstm:
        j["hidden_units"] = l.units;
        j["return_sequences"] = l.return_sequences;
        break;
      case LayerKind::dropout: j["rate"] = l.rate; break;
      case LayerKind::flatten: break;
    }
    layers.push_back(j);
  }
  return {{"name", to_string(spec.name)}, {"layers", layers}};
}

/// Fresh network for `spec` over per-sample input (window_len, features).
/// Throws ShapeError when the layer chain does not fit or does not end in a
/// single output unit.
inline nn::Network instantiate(const ModelSpec& spec, const nn::Shape& input,
                               std::uint64_t seed) {
  nn::Rng rng(seed);
  nn::Network net(input);
  for (const auto& l : spec.layers) {
    const nn::Shape in = net.output_shape();
    auto need_rank = [&](std::size_t r) {
      if (in.size() != r) {
        throw ShapeError(std::string(to_string(l.kind)) + " cannot follow output " +
                         nn::to_string(in));
      }
    };
    switch (l.kind) {
      case LayerKind::conv1d: {
        need_rank(2);
        auto layer = std::make_unique<nn::Conv1D>(in[1], l.units, l.kernel_size,
                                                  l.activation);
        layer->initialize(rng);
        net.add(std::move(layer));
        break;
      }
      case LayerKind::maxpool1d:
        net.add(std::make_unique<nn::MaxPool1D>(l.pool_size));
        break;
      case LayerKind::flatten: net.add(std::make_unique<nn::Flatten>()); break;
      case LayerKind::dense: {
        need_rank(1);
        auto layer = std::make_unique<nn::Dense>(in[0], l.units, l.activation);
        layer->initialize(rng);
        net.add(std::move(layer));
        break;
      }
      case LayerKind::lstm: {
        need_rank(2);
        auto layer = std::make_unique<nn::Lstm>(in[1], l.units, l.return_sequences);
        layer->initialize(rng);
        net.add(std::move(layer));
        break;
      }
      case LayerKind::bilstm: {
        need_rank(2);
        auto layer = std::make_unique<nn::BiLstm>(in[1], l.units, l.return_sequences);
        layer->initialize(rng);
        net.add(std::move(layer));
        break;
      }
      case LayerKind::dropout:
        net.add(std::make_unique<nn::Dropout>(l.rate, rng()));
        break;
    }
  }
  if (net.output_shape() != nn::Shape{1}) {
    throw ShapeError(std::string(to_string(spec.name)) + " ends in output " +
                     nn::to_string(net.output_shape()) + ", expected (1)");
  }
  return net;
}

// ---------------------------------------------------------------- training

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::optional<std::size_t> early_stop_patience = 5;
  /// Tail share of the training windows held out for early stopping.
  double validation_fraction = 0.1;

  void validate() const {
    if (epochs < 1) throw ParameterError("epochs must be >= 1");
    if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be > 0");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
      throw ParameterError("validation_fraction must lie in [0, 1)");
    }
  }
};

struct EpochLoss {
  std::size_t epoch = 0;  // 1-based
  double train_mse = 0.0;
  double val_mse = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  nn::Network network;
  std::vector<EpochLoss> history;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
};

/// Predictions for every window, in window order.
inline std::vector<double> predict(nn::Network& net, const WindowedSet& w,
                                   std::size_t batch_size = 256) {
  if (w.size() == 0) return {};
  const nn::Tensor y = net.predict(w.inputs, batch_size);
  return y.storage();
}

/// Minimises one-step-ahead MSE with Adam over shuffled mini-batches.
///
/// With early stopping, the monitored loss is the validation MSE when a
/// validation tail exists and the epoch's training MSE otherwise; training
/// stops once it has failed to improve for more than `patience` epochs, the
/// best weights are restored and the history ends at the best epoch.
inline TrainResult train(const ModelSpec& spec, const WindowedSet& data,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) throw ParameterError("training set is empty");
  const std::size_t n_val =
      cfg.validation_fraction > 0.0
          ? static_cast<std::size_t>(std::floor(cfg.validation_fraction *
                                                static_cast<double>(data.size())))
          : 0;
  const std::size_t n_train = data.size() - n_val;
  if (n_train == 0) throw ParameterError("validation tail leaves no training windows");
  const WindowedSet train_set = n_val ? slice_windows(data, 0, n_train) : data;
  const std::optional<WindowedSet> val_set =
      n_val ? std::optional(slice_windows(data, n_train, n_val)) : std::nullopt;

  const nn::Shape input(data.inputs.shape().begin() + 1, data.inputs.shape().end());
  TrainResult result{instantiate(spec, input, derive_seed(cfg.seed, {seed_tag("init")})), {}};
  nn::Adam adam(nn::AdamConfig{cfg.learning_rate});
  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, {seed_tag("shuffle")}));

  std::vector<std::size_t> order(n_train);
  double best = std::numeric_limits<double>::infinity();
  std::optional<nn::Network> best_net;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < n_train; begin += cfg.batch_size, ++batch_index) {
      const std::size_t count = std::min(cfg.batch_size, n_train - begin);
      const std::span<const std::size_t> rows(order.data() + begin, count);
      const nn::Tensor x = nn::gather_rows(train_set.inputs, rows);
      const nn::Tensor y = nn::gather_rows(train_set.targets, rows);

      auto& net = result.network;
      net.zero_grad();
      const nn::Tensor pred = net.forward(x, nn::Mode::training);
      const double loss = nn::mse(y, pred);
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(batch_index + 1) + " (" +
                            std::string(to_string(spec.name)) + ")");
      }
      net.backward(nn::mse_grad(y, pred));
      adam.step(net.parameters());
      loss_sum += loss * static_cast<double>(count);
    }

    EpochLoss record{epoch, loss_sum / static_cast<double>(n_train)};
    if (val_set) {
      record.val_mse = nn::mse(val_set->targets,
                               result.network.predict(val_set->inputs));
    }
    result.history.push_back(record);
    result.epochs_run = epoch;

    if (!cfg.early_stop_patience) continue;
    const double monitored = val_set ? record.val_mse : record.train_mse;
    if (monitored < best) {
      best = monitored;
      best_net = result.network;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best > *cfg.early_stop_patience) {
      break;
    }
  }

  if (cfg.early_stop_patience && best_net) {
    result.network = std::move(*best_net);
    result.history.resize(result.best_epoch);
  } else {
    result.best_epoch = result.epochs_run;
  }
  return result;
}

/// `epoch,train_mse,val_mse` rows; val_mse is empty without a validation tail.
inline std::string loss_history_csv(const std::vector<EpochLoss>& history) {
  std::string out = "epoch,train_mse,val_mse\n";
  for (const auto& e : history) {
    out += std::to_string(e.epoch) + "," + format_double(e.train_mse) + "," +
           (std::isnan(e.val_mse) ? std::string() : format_double(e.val_mse)) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------- search

/// Candidate values per hyperparameter. `filters` sets the first Conv1D
/// layer and `hidden_units` the first recurrent layer; later layers of the
/// same kind keep their tuned ratio to the first. `kernel_sizes` applies to
/// every Conv1D and `dropout_rates` to every Dropout. Dimensions the model
/// does not use contribute only their first value.
struct SearchSpace {
  ModelName model = ModelName::clstm;
  std::vector<std::size_t> filters;
  std::vector<std::size_t> kernel_sizes;
  std::vector<std::size_t> hidden_units;
  std::vector<double> dropout_rates;
  std::vector<double> learning_rates;

  /// The tuned values only: a single-point space.
  static SearchSpace tuned(ModelName m) {
    switch (m) {
      case ModelName::cnn: return {m, {32}, {3}, {64}, {kTableDropout}, {1e-3}};
      case ModelName::clstm: return {m, {64}, {3}, {64}, {kTableDropout}, {1e-3}};
      default: return {m, {64}, {3}, {64}, {kTableDropout}, {1e-3}};
    }
  }
};

struct Trial {
  std::size_t index = 0;
  std::size_t filters = 0;
  std::size_t kernel_size = 0;
  std::size_t hidden_units = 0;
  double dropout = 0.0;
  double learning_rate = 0.0;
  double validation_mse = 0.0;

  nlohmann::json to_json() const {
    return {{"index", index},           {"filters", filters},
            {"kernel_size", kernel_size}, {"hidden_units", hidden_units},
            {"dropout", dropout},       {"learning_rate", learning_rate},
            {"validation_mse", validation_mse}};
  }
};

inline ModelSpec apply_trial(ModelSpec spec, const Trial& t) {
  std::size_t first_conv = 0, first_rec = 0;
  for (auto& l : spec.layers) {
    auto rescale = [](std::size_t orig, std::size_t first, std::size_t chosen) {
      const double r = static_cast<double>(orig) * static_cast<double>(chosen) /
                       static_cast<double>(first);
      return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(r)));
    };
    switch (l.kind) {
      case LayerKind::conv1d:
        if (!first_conv) first_conv = l.units;
        l.units = rescale(l.units, first_conv, t.filters);
        l.kernel_size = t.kernel_size;
        break;
      case LayerKind::lstm:
      case LayerKind::bilstm:
        if (!first_rec) first_rec = l.units;
        l.units = rescale(l.units, first_rec, t.hidden_units);
        break;
      case LayerKind::dropout: l.rate = t.dropout; break;
      default: break;
    }
  }
  return spec;
}

/// Every combination in the space (restricted to dimensions the model uses).
inline std::vector<Trial> enumerate_trials(const SearchSpace& s) {
  if (s.filters.empty() || s.kernel_sizes.empty() || s.hidden_units.empty() ||
      s.dropout_rates.empty() || s.learning_rates.empty()) {
    throw ParameterError("search space has an empty candidate list");
  }
  const ModelSpec base = build(s.model);
  auto uses = [&](LayerKind a, LayerKind b = LayerKind::flatten) {
    return std::any_of(base.layers.begin(), base.layers.end(), [&](const LayerSpec& l) {
      return l.kind == a || (b != LayerKind::flatten && l.kind == b);
    });
  };
  auto pick = [](const auto& v, bool used) {
    return used ? v : std::decay_t<decltype(v)>{v.front()};
  };
  const auto filters = pick(s.filters, uses(LayerKind::conv1d));
  const auto kernels = pick(s.kernel_sizes, uses(LayerKind::conv1d));
  const auto hidden = pick(s.hidden_units, uses(LayerKind::lstm, LayerKind::bilstm));
  const auto drops = pick(s.dropout_rates, uses(LayerKind::dropout));

  std::vector<Trial> out;
  for (auto f : filters)
    for (auto k : kernels)
      for (auto h : hidden)
        for (auto d : drops)
          for (auto lr : s.learning_rates) out.push_back({out.size(), f, k, h, d, lr});
  return out;
}

/// Trains up to `budget` configurations and ranks them by MSE on
/// `validation` (ascending, ties by enumeration index). Exhaustive when the
/// space fits the budget, otherwise a seeded uniform sample without
/// replacement. Trials run on up to `threads` workers, each with a seed
/// derived from `base.seed` and its enumeration index.
inline std::vector<Trial> grid_search(const SearchSpace& space, const WindowedSet& train_set,
                                      const WindowedSet& validation, std::size_t budget,
                                      const TrainConfig& base, std::size_t threads = 1) {
  if (budget < 1) throw ParameterError("search budget must be >= 1");
  if (validation.size() == 0) throw ParameterError("validation set is empty");
  std::vector<Trial> all = enumerate_trials(space);
  if (all.size() > budget) {
    std::mt19937_64 rng(derive_seed(base.seed, {seed_tag("search")}));
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(budget);
    std::sort(all.begin(), all.end(),
              [](const Trial& a, const Trial& b) { return a.index < b.index; });
  }

  const ModelSpec spec = build(space.model);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < all.size(); i = next++) {
      Trial& t = all[i];
      TrainConfig cfg = base;
      cfg.learning_rate = t.learning_rate;
      cfg.seed = derive_seed(base.seed, {seed_tag("trial"), t.index});
      auto r = train(apply_trial(spec, t), train_set, cfg);
      t.validation_mse = nn::mse(validation.targets, r.network.predict(validation.inputs));
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(threads, 1, all.size());
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < n_threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  std::stable_sort(all.begin(), all.end(), [](const Trial& a, const Trial& b) {
    if (a.validation_mse != b.validation_mse) return a.validation_mse < b.validation_mse;
    return a.index < b.index;
  });
  return all;
}

}  // namespace pmu
