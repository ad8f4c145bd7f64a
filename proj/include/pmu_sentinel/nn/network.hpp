// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pmu_sentinel/nn/layers.hpp"

namespace pmu::nn {

inline constexpr const char* kEngineVersion = "pmu-sentinel-nn/1";

/// Copies rows [begin, begin + count) along the leading axis.
inline Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t count) {
  Shape shape = t.shape();
  const std::size_t row = t.size() / shape[0];
  shape[0] = count;
  const auto src = t.values().subspan(begin * row, count * row);
  std::vector<double> data(src.begin(), src.end());
  return Tensor(std::move(shape), std::move(data));
}

/// Gathers the listed rows along the leading axis.
inline Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows) {
  Shape shape = t.shape();
  const std::size_t row = t.size() / shape[0];
  shape[0] = rows.size();
  Tensor out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(t.data() + rows[i] * row, row, out.data() + i * row);
  }
  return out;
}

/// Sequential stack of layers over per-sample input shape `input_shape`.
class Network {
 public:
  Network() = default;
  explicit Network(Shape input_shape) : input_shape_(std::move(input_shape)) {}

  Network(const Network& other) : input_shape_(other.input_shape_) {
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
  }
  Network& operator=(const Network& other) {
    if (this != &other) {
      Network copy(other);
      *this = std::move(copy);
    }
    return *this;
  }
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  /// Appends a layer after checking it accepts the current output shape.
  Layer& add(std::unique_ptr<Layer> layer) {
    layer->output_shape(output_shape());
    layers_.push_back(std::move(layer));
    return *layers_.back();
  }

  const Shape& input_shape() const { return input_shape_; }

  Shape output_shape() const {
    Shape s = input_shape_;
    for (const auto& l : layers_) s = l->output_shape(s);
    return s;
  }

  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }

  Tensor forward(const Tensor& x, Mode mode) {
    Shape per_sample(x.shape().begin() + 1, x.shape().end());
    if (x.rank() == 0 || per_sample != input_shape_) {
      throw ShapeError("network expects per-sample input " +
                       to_string(input_shape_) + ", got batch " +
                       to_string(x.shape()));
    }
    Tensor h = x;
    for (auto& l : layers_) h = l->forward(h, mode);
    return h;
  }

  /// Backpropagates dy through every layer; returns d loss / d input.
  Tensor backward(const Tensor& dy) {
    Tensor g = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
      g = (*it)->backward(g);
    }
    return g;
  }

  std::vector<Parameter> parameters() {
    std::vector<Parameter> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      for (auto p : layers_[i]->parameters()) {
        p.name = std::to_string(i) + "." + std::string(layers_[i]->type()) +
                 "." + p.name;
        out.push_back(p);
      }
    }
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.value->size();
    return n;
  }

  void zero_grad() {
    for (auto& p : parameters()) p.grad->fill(0.0);
  }

  /// Inference over `inputs` (leading axis = samples) in fixed-size chunks.
  Tensor predict(const Tensor& inputs, std::size_t batch_size = 256) {
    const std::size_t n = inputs.dim(0);
    Shape out_shape = output_shape();
    out_shape.insert(out_shape.begin(), n);
    Tensor out(out_shape);
    const std::size_t row = out.size() / std::max<std::size_t>(n, 1);
    for (std::size_t begin = 0; begin < n; begin += batch_size) {
      const std::size_t count = std::min(batch_size, n - begin);
      const Tensor y = forward(slice_rows(inputs, begin, count), Mode::inference);
      std::copy_n(y.data(), y.size(), out.data() + begin * row);
    }
    return out;
  }

  /// Layer configs plus flat parameter values; doubles are written in
  /// shortest round-trip form so reloading is bit-exact.
  Json to_json() const {
    Json layers = Json::array();
    for (const auto& l : layers_) {
      Json params = Json::array();
      for (const auto& p : const_cast<Layer&>(*l).parameters()) {
        params.push_back({{"name", p.name},
                          {"shape", p.value->shape()},
                          {"values", p.value->storage()}});
      }
      layers.push_back({{"config", l->config()}, {"params", params}});
    }
    return {{"engine", kEngineVersion},
            {"input_shape", input_shape_},
            {"layers", layers}};
  }

  static Network from_json(const Json& doc) {
    if (doc.value("engine", std::string()) != kEngineVersion) {
      throw SchemaError("network document has engine tag '" +
                        doc.value("engine", std::string()) + "', expected '" +
                        kEngineVersion + "'");
    }
    Network net(doc.at("input_shape").get<Shape>());
    for (const auto& entry : doc.at("layers")) {
      Layer& layer = net.add(make_layer(entry.at("config")));
      auto params = layer.parameters();
      const auto& stored = entry.at("params");
      if (stored.size() != params.size()) {
        throw SchemaError("layer '" + std::string(layer.type()) + "' stores " +
                          std::to_string(stored.size()) +
                          " parameter tensors, expected " +
                          std::to_string(params.size()));
      }
      for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor t(stored[i].at("shape").get<Shape>(),
                 stored[i].at("values").get<std::vector<double>>());
        if (t.shape() != params[i].value->shape()) {
          throw SchemaError("parameter '" + params[i].name + "' has shape " +
                            to_string(t.shape()) + ", expected " +
                            to_string(params[i].value->shape()));
        }
        *params[i].value = std::move(t);
      }
    }
    return net;
  }

 private:
  Shape input_shape_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace pmu::nn
