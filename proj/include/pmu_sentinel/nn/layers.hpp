// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "pmu_sentinel/nn/ops.hpp"

namespace pmu::nn {

using Json = nlohmann::json;
using Rng = std::mt19937_64;

/// Non-owning handle on a trainable tensor and its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor* value;
  Tensor* grad;
};

/// A layer caches whatever its backward pass needs during forward. Shapes
/// passed to `output_shape` exclude the batch axis; tensors passed to
/// forward/backward include it. backward() adds into the gradient buffers.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string_view type() const = 0;
  virtual Shape output_shape(const Shape& input) const = 0;
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor backward(const Tensor& dy) = 0;
  virtual std::vector<Parameter> parameters() { return {}; }
  virtual Json config() const = 0;
  virtual std::unique_ptr<Layer> clone() const = 0;
};

namespace detail {

inline void uniform_fill(Tensor& t, double limit, Rng& rng) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& v : t.values()) v = dist(rng);
}

inline double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

inline void accumulate(Tensor& into, const Tensor& add) {
  as_row(into) += as_row(add);
}

inline void require_input_rank(const Shape& in, std::size_t rank,
                               std::string_view layer) {
  if (in.size() != rank) {
    throw ShapeError(std::string(layer) + " expects per-sample rank " +
                     std::to_string(rank) + " input, got " + to_string(in));
  }
}

}  // namespace detail

class Dense final : public Layer {
 public:
  Dense(std::size_t inputs, std::size_t units, Activation activation)
      : weights_({inputs, units}),
        bias_({units}),
        dweights_({inputs, units}),
        dbias_({units}),
        activation_(activation) {}

  void initialize(Rng& rng) {
    detail::uniform_fill(weights_,
                         detail::glorot_limit(weights_.dim(0), weights_.dim(1)),
                         rng);
    bias_.fill(0.0);
  }

  std::string_view type() const override { return "dense"; }

  Shape output_shape(const Shape& in) const override {
    detail::require_input_rank(in, 1, "dense");
    if (in[0] != weights_.dim(0)) {
      throw ShapeError("dense expects " + std::to_string(weights_.dim(0)) +
                       " inputs, got " + to_string(in));
    }
    return {weights_.dim(1)};
  }

  Tensor forward(const Tensor& x, Mode) override {
    auto r = dense_forward(x, weights_, bias_, activation_);
    ctx_ = std::move(r.context);
    return std::move(r.output);
  }

  Tensor backward(const Tensor& dy) override {
    auto g = dense_backward(ctx_, weights_, dy);
    detail::accumulate(dweights_, g.params[0]);
    detail::accumulate(dbias_, g.params[1]);
    return std::move(g.input);
  }

  std::vector<Parameter> parameters() override {
    return {{"weights", &weights_, &dweights_}, {"bias", &bias_, &dbias_}};
  }

  Json config() const override {
    return {{"type", "dense"},
            {"inputs", weights_.dim(0)},
            {"units", weights_.dim(1)},
            {"activation", to_string(activation_)}};
  }

  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<Dense>(*this);
  }

  Tensor& weights() { return weights_; }
  Tensor& bias() { return bias_; }

 private:
  Tensor weights_, bias_, dweights_, dbias_;
  Activation activation_;
  DenseContext ctx_;
};

class Conv1D final : public Layer {
 public:
  Conv1D(std::size_t in_channels, std::size_t filters, std::size_t kernel,
         Activation activation)
      : weights_({kernel, in_channels, filters}),
        bias_({filters}),
        dweights_({kernel, in_channels, filters}),
        dbias_({filters}),
        activation_(activation) {
    if (kernel == 0) throw ParameterError("conv1d kernel size must be >= 1");
  }

  void initialize(Rng& rng) {
    const std::size_t k = weights_.dim(0);
    detail::uniform_fill(
        weights_, detail::glorot_limit(k * weights_.dim(1), k * weights_.dim(2)),
        rng);
    bias_.fill(0.0);
  }

  std::string_view type() const override { return "conv1d"; }

  Shape output_shape(const Shape& in) const override {
    detail::require_input_rank(in, 2, "conv1d");
    const std::size_t k = weights_.dim(0);
    if (in[1] != weights_.dim(1) || in[0] < k) {
      throw ShapeError("conv1d (kernel " + std::to_string(k) + ", " +
                       std::to_string(weights_.dim(1)) +
                       " channels) cannot take input " + to_string(in));
    }
    return {in[0] - k + 1, weights_.dim(2)};
  }

  Tensor forward(const Tensor& x, Mode) override {
    auto r = conv1d_forward(x, weights_, bias_, activation_);
    ctx_ = std::move(r.context);
    return std::move(r.output);
  }

  Tensor backward(const Tensor& dy) override {
    auto g = conv1d_backward(ctx_, weights_, dy);
    detail::accumulate(dweights_, g.params[0]);
    detail::accumulate(dbias_, g.params[1]);
    return std::move(g.input);
  }

  std::vector<Parameter> parameters() override {
    return {{"weights", &weights_, &dweights_}, {"bias", &bias_, &dbias_}};
  }

  Json config() const override {
    return {{"type", "conv1d"},
            {"in_channels", weights_.dim(1)},
            {"filters", weights_.dim(2)},
            {"kernel_size", weights_.dim(0)},
            {"activation", to_string(activation_)}};
  }

  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<Conv1D>(*this);
  }

  Tensor& weights() { return weights_; }
  Tensor& bias() { return bias_; }

 private:
  Tensor weights_, bias_, dweights_, dbias_;
  Activation activation_;
  Conv1dContext ctx_;
};

class MaxPool1D final : public Layer {
 public:
  explicit MaxPool1D(std::size_t pool) : pool_(pool) {
    if (pool < 1) throw ParameterError("maxpool1d: pool size must be >= 1");
  }

  std::string_view type() const override { return "maxpool1d"; }

  Shape output_shape(const Shape& in) const override {
    detail::require_input_rank(in, 2, "maxpool1d");
    if (in[0] < pool_) {
      throw ShapeError("maxpool1d pool " + std::to_string(pool_) +
                       " exceeds input " + to_string(in));
    }
    return {in[0] / pool_, in[1]};
  }

  Tensor forward(const Tensor& x, Mode) override {
    auto r = maxpool1d_forward(x, pool_);
    ctx_ = std::move(r.context);
    return std::move(r.output);
  }

  Tensor backward(const Tensor& dy) override {
    return maxpool1d_backward(ctx_, dy);
  }

  Json config() const override {
    return {{"type", "maxpool1d"}, {"pool_size", pool_}};
  }

  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<MaxPool1D>(*this);
  }

 private:
  std::size_t pool_;
  MaxPoolContext ctx_;
};

class Flatten final : public Layer {
 public:
  std::string_view type() const override { return "flatten"; }

  Shape output_shape(const Shape& in) const override {
    return {element_count(in)};
  }

  Tensor forward(const Tensor& x, Mode) override {
    input_shape_ = x.shape();
    return x.reshaped({x.dim(0), x.size() / x.dim(0)});
  }

  Tensor backward(const Tensor& dy) override {
    return dy.reshaped(input_shape_);
  }

  Json config() const override { return {{"type", "flatten"}}; }

  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<Flatten>(*this);
  }

 private:
  Shape input_shape_;
};

class Dropout final : public Layer {
 public:
  Dropout(double rate, std::uint64_t seed) : rate_(rate), rng_(seed) {
    check_dropout_rate(rate);
  }

  std::string_view type() const override { return "dropout"; }

  Shape output_shape(const Shape& in) const override { return in; }

  Tensor forward(const Tensor& x, Mode mode) override {
    auto r = dropout_forward(x, rate_, mode, rng_);
    mask_ = std::move(r.mask);
    return std::move(r.output);
  }

  Tensor backward(const Tensor& dy) override {
    return dropout_backward(mask_, dy);
  }

  Json config() const override { return {{"type", "dropout"}, {"rate", rate_}}; }

  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<Dropout>(*this);
  }

  void reseed(std::uint64_t seed) { rng_.seed(seed); }
  double rate() const { return rate_; }

 private:
  double rate_;
  Rng rng_;
  Tensor mask_;
};

namespace detail {

inline void initialize_lstm(LstmParams& p, Rng& rng) {
  const std::size_t h = p.hidden_units;
  uniform_fill(p.input_weights, glorot_limit(p.inputs(), 4 * h), rng);
  uniform_fill(p.recurrent_weights, std::sqrt(1.0 / static_cast<double>(h)),
               rng);
  p.bias.fill(0.0);
  for (std::size_t j = 0; j < h; ++j) p.bias[p.offset(Gate::forget) + j] = 1.0;
}

inline LstmParams lstm_grad_buffers(const LstmParams& p) {
  return LstmParams::zeros(p.inputs(), p.hidden_units);
}

inline std::vector<Parameter> lstm_parameters(LstmParams& p, LstmParams& g,
                                              const std::string& prefix) {
  return {{prefix + "input_weights", &p.input_weights, &g.input_weights},
          {prefix + "recurrent_weights", &p.recurrent_weights,
           &g.recurrent_weights},
          {prefix + "bias", &p.bias, &g.bias}};
}

// Expands a last-step gradient (B, H) into a full-sequence gradient.
inline Tensor scatter_last_step(const Tensor& dy, std::size_t steps,
                                std::size_t step) {
  const std::size_t batch = dy.dim(0), h = dy.dim(1);
  Tensor full({batch, steps, h});
  for (std::size_t n = 0; n < batch; ++n) {
    std::copy_n(dy.data() + n * h, h, full.data() + (n * steps + step) * h);
  }
  return full;
}

inline Tensor gather_step(const Tensor& seq, std::size_t step) {
  const std::size_t batch = seq.dim(0), steps = seq.dim(1), h = seq.dim(2);
  Tensor out({batch, h});
  for (std::size_t n = 0; n < batch; ++n) {
    std::copy_n(seq.data() + (n * steps + step) * h, h, out.data() + n * h);
  }
  return out;
}

}  // namespace detail

/// Unidirectional LSTM. With return_sequences=false only the hidden state of
/// the last processed step is emitted.
class Lstm final : public Layer {
 public:
  Lstm(std::size_t inputs, std::size_t hidden, bool return_sequences,
       Direction direction = Direction::forward)
      : params_(LstmParams::zeros(inputs, hidden)),
        grads_(LstmParams::zeros(inputs, hidden)),
        return_sequences_(return_sequences),
        direction_(direction) {
    if (hidden == 0) throw ParameterError("lstm hidden units must be >= 1");
  }

  void initialize(Rng& rng) { detail::initialize_lstm(params_, rng); }

  std::string_view type() const override { return "lstm"; }

  Shape output_shape(const Shape& in) const override {
    detail::require_input_rank(in, 2, "lstm");
    if (in[1] != params_.inputs() || in[0] == 0) {
      throw ShapeError("lstm with " + std::to_string(params_.inputs()) +
                       " inputs cannot take " + to_string(in));
    }
    if (return_sequences_) return {in[0], params_.hidden_units};
    return {params_.hidden_units};
  }

  Tensor forward(const Tensor& x, Mode) override {
    auto r = lstm_forward(x, params_, direction_);
    ctx_ = std::move(r.context);
    if (return_sequences_) return std::move(r.output);
    return detail::gather_step(r.output, last_step(x.dim(1)));
  }

  Tensor backward(const Tensor& dy) override {
    const std::size_t steps = ctx_.input.dim(1);
    const Tensor full = return_sequences_
                            ? dy
                            : detail::scatter_last_step(dy, steps,
                                                        last_step(steps));
    auto g = lstm_backward(ctx_, params_, full);
    detail::accumulate(grads_.input_weights, g.params[0]);
    detail::accumulate(grads_.recurrent_weights, g.params[1]);
    detail::accumulate(grads_.bias, g.params[2]);
    return std::move(g.input);
  }

  std::vector<Parameter> parameters() override {
    return detail::lstm_parameters(params_, grads_, "");
  }

  Json config() const override {
    return {{"type", "lstm"},
            {"inputs", params_.inputs()},
            {"hidden_units", params_.hidden_units},
            {"return_sequences", return_sequences_},
            {"direction",
             direction_ == Direction::forward ? "forward" : "reverse"}};
  }

  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<Lstm>(*this);
  }

  LstmParams& params() { return params_; }

 private:
  std::size_t last_step(std::size_t steps) const {
    return direction_ == Direction::forward ? steps - 1 : 0;
  }

  LstmParams params_, grads_;
  bool return_sequences_;
  Direction direction_;
  LstmContext ctx_;
};

/// Forward and reversed LSTMs over the same input, concatenated per step.
/// `hidden` is the width of each direction. Without return_sequences the
/// output is [forward state after the last step | reverse state after step 0].
class BiLstm final : public Layer {
 public:
  BiLstm(std::size_t inputs, std::size_t hidden, bool return_sequences)
      : forward_(LstmParams::zeros(inputs, hidden)),
        backward_(LstmParams::zeros(inputs, hidden)),
        dforward_(LstmParams::zeros(inputs, hidden)),
        dbackward_(LstmParams::zeros(inputs, hidden)),
        return_sequences_(return_sequences) {
    if (hidden == 0) throw ParameterError("bilstm hidden units must be >= 1");
  }

  void initialize(Rng& rng) {
    detail::initialize_lstm(forward_, rng);
    detail::initialize_lstm(backward_, rng);
  }

  std::string_view type() const override { return "bilstm"; }

  Shape output_shape(const Shape& in) const override {
    detail::require_input_rank(in, 2, "bilstm");
    if (in[1] != forward_.inputs() || in[0] == 0) {
      throw ShapeError("bilstm with " + std::to_string(forward_.inputs()) +
                       " inputs cannot take " + to_string(in));
    }
    const std::size_t width = 2 * forward_.hidden_units;
    if (return_sequences_) return {in[0], width};
    return {width};
  }

  Tensor forward(const Tensor& x, Mode) override {
    auto r = bilstm_forward(x, forward_, backward_);
    ctx_ = std::move(r.context);
    if (return_sequences_) return std::move(r.output);
    const std::size_t batch = x.dim(0), steps = x.dim(1),
                      h = forward_.hidden_units;
    Tensor out({batch, 2 * h});
    for (std::size_t n = 0; n < batch; ++n) {
      std::copy_n(r.output.data() + (n * steps + steps - 1) * 2 * h, h,
                  out.data() + n * 2 * h);
      std::copy_n(r.output.data() + n * steps * 2 * h + h, h,
                  out.data() + n * 2 * h + h);
    }
    return out;
  }

  Tensor backward(const Tensor& dy) override {
    const std::size_t batch = ctx_.forward.input.dim(0),
                      steps = ctx_.forward.input.dim(1),
                      h = forward_.hidden_units;
    Tensor full;
    if (return_sequences_) {
      full = dy;
    } else {
      full = Tensor({batch, steps, 2 * h});
      for (std::size_t n = 0; n < batch; ++n) {
        std::copy_n(dy.data() + n * 2 * h, h,
                    full.data() + (n * steps + steps - 1) * 2 * h);
        std::copy_n(dy.data() + n * 2 * h + h, h,
                    full.data() + n * steps * 2 * h + h);
      }
    }
    auto g = bilstm_backward(ctx_, forward_, backward_, full);
    detail::accumulate(dforward_.input_weights, g.params[0]);
    detail::accumulate(dforward_.recurrent_weights, g.params[1]);
    detail::accumulate(dforward_.bias, g.params[2]);
    detail::accumulate(dbackward_.input_weights, g.params[3]);
    detail::accumulate(dbackward_.recurrent_weights, g.params[4]);
    detail::accumulate(dbackward_.bias, g.params[5]);
    return std::move(g.input);
  }

  std::vector<Parameter> parameters() override {
    auto ps = detail::lstm_parameters(forward_, dforward_, "forward.");
    auto bs = detail::lstm_parameters(backward_, dbackward_, "backward.");
    ps.insert(ps.end(), bs.begin(), bs.end());
    return ps;
  }

  Json config() const override {
    return {{"type", "bilstm"},
            {"inputs", forward_.inputs()},
            {"hidden_units", forward_.hidden_units},
            {"return_sequences", return_sequences_}};
  }

  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<BiLstm>(*this);
  }

  LstmParams& forward_params() { return forward_; }
  LstmParams& backward_params() { return backward_; }

 private:
  LstmParams forward_, backward_, dforward_, dbackward_;
  bool return_sequences_;
  BiLstmContext ctx_;
};

/// Rebuilds a layer (uninitialised parameters) from its config() record.
inline std::unique_ptr<Layer> make_layer(const Json& cfg,
                                         std::uint64_t dropout_seed = 0) {
  const std::string type = cfg.at("type").get<std::string>();
  if (type == "dense") {
    return std::make_unique<Dense>(
        cfg.at("inputs").get<std::size_t>(), cfg.at("units").get<std::size_t>(),
        parse_activation(cfg.at("activation").get<std::string>()));
  }
  if (type == "conv1d") {
    return std::make_unique<Conv1D>(
        cfg.at("in_channels").get<std::size_t>(),
        cfg.at("filters").get<std::size_t>(),
        cfg.at("kernel_size").get<std::size_t>(),
        parse_activation(cfg.at("activation").get<std::string>()));
  }
  if (type == "maxpool1d") {
    return std::make_unique<MaxPool1D>(cfg.at("pool_size").get<std::size_t>());
  }
  if (type == "flatten") return std::make_unique<Flatten>();
  if (type == "dropout") {
    return std::make_unique<Dropout>(cfg.at("rate").get<double>(),
                                     dropout_seed);
  }
  if (type == "lstm") {
    return std::make_unique<Lstm>(
        cfg.at("inputs").get<std::size_t>(),
        cfg.at("hidden_units").get<std::size_t>(),
        cfg.at("return_sequences").get<bool>(),
        cfg.value("direction", std::string("forward")) == "reverse"
            ? Direction::reverse
            : Direction::forward);
  }
  if (type == "bilstm") {
    return std::make_unique<BiLstm>(cfg.at("inputs").get<std::size_t>(),
                                    cfg.at("hidden_units").get<std::size_t>(),
                                    cfg.at("return_sequences").get<bool>());
  }
  throw SchemaError("unknown layer type '" + type + "'");
}

}  // namespace pmu::nn
