// SPDX-License-Identifier: Apache-2.0
#pragma once

// Forward/backward kernels for every layer type the forecasting models use.
// Each kernel is a free function over Tensors; the classes in layers.hpp own
// the parameters and cache the contexts between passes.
//
// Layout conventions (row-major throughout):
//   dense     x (batch, in)           W (in, out)          b (out)
//   conv1d    x (batch, time, in_ch)  W (kernel, in_ch, out_ch)  b (out_ch)
//   maxpool   x (batch, time, ch)
//   lstm      x (batch, time, in)     see LstmParams

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "pmu_sentinel/nn/activation.hpp"
#include "pmu_sentinel/nn/tensor.hpp"

namespace pmu::nn {

enum class Mode { training, inference };

/// Gradients produced by one backward call: one entry per parameter tensor,
/// in the order the layer declares them, plus the gradient of the input.
struct LayerGrad {
  std::vector<Tensor> params;
  Tensor input;
};

namespace detail {

using StridedConstMatrix =
    Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;
using StridedMatrix = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;

inline Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

// Multiplies dy by act'(.) evaluated from the cached activation output.
inline Tensor activation_backward(Activation act, const Tensor& output,
                                  const Tensor& dy) {
  if (act == Activation::identity) return dy;
  Tensor dz = dy;
  for (std::size_t i = 0; i < dz.size(); ++i) {
    dz[i] *= activation_slope(act, output[i]);
  }
  return dz;
}

}  // namespace detail

// ---------------------------------------------------------------- dense

struct DenseContext {
  Tensor input;
  Tensor output;
  Activation activation = Activation::identity;
};

struct DenseResult {
  Tensor output;
  DenseContext context;
};

inline DenseResult dense_forward(const Tensor& x, const Tensor& weights,
                                 const Tensor& bias, Activation activation) {
  require_rank(x, 2, "dense input");
  require_rank(weights, 2, "dense weights");
  if (x.dim(1) != weights.dim(0)) {
    throw ShapeError("dense: input " + to_string(x.shape()) +
                     " incompatible with weights " +
                     to_string(weights.shape()));
  }
  require_shape(bias, {weights.dim(1)}, "dense bias");

  Tensor y({x.dim(0), weights.dim(1)});
  auto out = as_matrix(y);
  out.noalias() = as_matrix(x) * as_matrix(weights);
  out.rowwise() += as_row(bias);
  activate_inplace(activation, y.values());
  return {y, DenseContext{x, y, activation}};
}

/// params = {dW, db}
inline LayerGrad dense_backward(const DenseContext& ctx, const Tensor& weights,
                                const Tensor& dy) {
  require_shape(dy, ctx.output.shape(), "dense output gradient");
  const Tensor dz = detail::activation_backward(ctx.activation, ctx.output, dy);

  Tensor dw(weights.shape());
  Tensor db({weights.dim(1)});
  Tensor dx(ctx.input.shape());
  as_matrix(dw).noalias() = as_matrix(ctx.input).transpose() * as_matrix(dz);
  as_row(db) = as_matrix(dz).colwise().sum();
  as_matrix(dx).noalias() = as_matrix(dz) * as_matrix(weights).transpose();
  return {{std::move(dw), std::move(db)}, std::move(dx)};
}

// ---------------------------------------------------------------- conv1d

struct Conv1dContext {
  Tensor input;
  Tensor output;
  Activation activation = Activation::identity;
};

struct Conv1dResult {
  Tensor output;
  Conv1dContext context;
};

/// Valid (unpadded) cross-correlation along the time axis.
inline Conv1dResult conv1d_forward(const Tensor& x, const Tensor& weights,
                                   const Tensor& bias, Activation activation) {
  require_rank(x, 3, "conv1d input");
  require_rank(weights, 3, "conv1d weights");
  const std::size_t batch = x.dim(0), steps = x.dim(1), in_ch = x.dim(2);
  const std::size_t kernel = weights.dim(0), out_ch = weights.dim(2);
  if (weights.dim(1) != in_ch) {
    throw ShapeError("conv1d: input " + to_string(x.shape()) +
                     " incompatible with weights " +
                     to_string(weights.shape()));
  }
  if (kernel == 0 || kernel > steps) {
    throw ShapeError("conv1d: kernel size " + std::to_string(kernel) +
                     " does not fit input length " + std::to_string(steps));
  }
  require_shape(bias, {out_ch}, "conv1d bias");

  const std::size_t out_steps = steps - kernel + 1;
  Tensor y({batch, out_steps, out_ch});
  const auto w = as_matrix(weights, kernel * in_ch, out_ch);
  const auto b = as_row(bias);
  for (std::size_t n = 0; n < batch; ++n) {
    // Window t is the contiguous block x[n, t:t+kernel, :].
    detail::StridedConstMatrix cols(x.data() + n * steps * in_ch,
                                    detail::idx(out_steps),
                                    detail::idx(kernel * in_ch),
                                    Eigen::OuterStride<>(detail::idx(in_ch)));
    auto out = as_matrix(y, batch * out_steps, out_ch)
                   .middleRows(detail::idx(n * out_steps),
                               detail::idx(out_steps));
    out.noalias() = cols * w;
    out.rowwise() += b;
  }
  activate_inplace(activation, y.values());
  return {y, Conv1dContext{x, y, activation}};
}

/// params = {dW, db}
inline LayerGrad conv1d_backward(const Conv1dContext& ctx,
                                 const Tensor& weights, const Tensor& dy) {
  require_shape(dy, ctx.output.shape(), "conv1d output gradient");
  const Tensor dz = detail::activation_backward(ctx.activation, ctx.output, dy);
  const std::size_t batch = ctx.input.dim(0), steps = ctx.input.dim(1),
                    in_ch = ctx.input.dim(2);
  const std::size_t kernel = weights.dim(0), out_ch = weights.dim(2);
  const std::size_t out_steps = dz.dim(1);

  Tensor dw(weights.shape());
  Tensor db({out_ch});
  Tensor dx(ctx.input.shape());
  auto dw_m = as_matrix(dw, kernel * in_ch, out_ch);
  const auto w = as_matrix(weights, kernel * in_ch, out_ch);
  RowMatrix dcols(detail::idx(out_steps), detail::idx(kernel * in_ch));
  for (std::size_t n = 0; n < batch; ++n) {
    detail::StridedConstMatrix cols(ctx.input.data() + n * steps * in_ch,
                                    detail::idx(out_steps),
                                    detail::idx(kernel * in_ch),
                                    Eigen::OuterStride<>(detail::idx(in_ch)));
    const auto dz_n = as_matrix(dz, batch * out_steps, out_ch)
                          .middleRows(detail::idx(n * out_steps),
                                      detail::idx(out_steps));
    dw_m.noalias() += cols.transpose() * dz_n;
    as_row(db) += dz_n.colwise().sum();
    dcols.noalias() = dz_n * w.transpose();
    double* dx_n = dx.data() + n * steps * in_ch;
    for (std::size_t t = 0; t < out_steps; ++t) {
      Eigen::Map<Eigen::RowVectorXd>(dx_n + t * in_ch,
                                     detail::idx(kernel * in_ch)) +=
          dcols.row(detail::idx(t));
    }
  }
  return {{std::move(dw), std::move(db)}, std::move(dx)};
}

// ---------------------------------------------------------------- maxpool1d

struct MaxPoolContext {
  Shape input_shape;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

struct MaxPoolResult {
  Tensor output;
  MaxPoolContext context;
};

/// Non-overlapping windows along time; trailing remainder dropped; ties go to
/// the earliest index.
inline MaxPoolResult maxpool1d_forward(const Tensor& x, std::size_t pool) {
  if (pool < 1) throw ParameterError("maxpool1d: pool size must be >= 1");
  require_rank(x, 3, "maxpool1d input");
  const std::size_t batch = x.dim(0), steps = x.dim(1), ch = x.dim(2);
  const std::size_t out_steps = steps / pool;
  if (out_steps == 0) {
    throw ShapeError("maxpool1d: pool size " + std::to_string(pool) +
                     " exceeds input length " + std::to_string(steps));
  }
  Tensor y({batch, out_steps, ch});
  MaxPoolContext ctx{x.shape(), std::vector<std::size_t>(y.size())};
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t o = 0; o < out_steps; ++o) {
      for (std::size_t c = 0; c < ch; ++c) {
        std::size_t best = (n * steps + o * pool) * ch + c;
        for (std::size_t i = 1; i < pool; ++i) {
          const std::size_t cand = (n * steps + o * pool + i) * ch + c;
          if (x[cand] > x[best]) best = cand;
        }
        const std::size_t out = (n * out_steps + o) * ch + c;
        y[out] = x[best];
        ctx.argmax[out] = best;
      }
    }
  }
  return {y, std::move(ctx)};
}

inline Tensor maxpool1d_backward(const MaxPoolContext& ctx, const Tensor& dy) {
  if (dy.size() != ctx.argmax.size()) {
    throw ShapeError("maxpool1d: output gradient " + to_string(dy.shape()) +
                     " does not match forward output");
  }
  Tensor dx(ctx.input_shape);
  for (std::size_t i = 0; i < dy.size(); ++i) dx[ctx.argmax[i]] += dy[i];
  return dx;
}

// ---------------------------------------------------------------- dropout

struct DropoutResult {
  Tensor output;
  Tensor mask;  // per-element scale (0 or 1/(1-rate)); empty means identity
};

inline void check_dropout_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ParameterError("dropout rate must lie in [0, 1), got " +
                         std::to_string(rate));
  }
}

/// Inverted dropout: survivors are scaled by 1/(1-rate) so inference is the
/// identity.
template <typename Engine>
DropoutResult dropout_forward(const Tensor& x, double rate, Mode mode,
                              Engine& rng) {
  check_dropout_rate(rate);
  if (mode == Mode::inference || rate == 0.0) return {x, Tensor{}};
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  Tensor mask(x.shape());
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = keep(rng) ? scale : 0.0;
    y[i] = x[i] * mask[i];
  }
  return {std::move(y), std::move(mask)};
}

inline Tensor dropout_backward(const Tensor& mask, const Tensor& dy) {
  if (mask.empty()) return dy;
  require_shape(dy, mask.shape(), "dropout output gradient");
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * mask[i];
  return dx;
}

// ---------------------------------------------------------------- lstm

enum class Direction { forward, reverse };

/// Gate blocks inside the fused weight matrices, in column order.
enum class Gate : std::size_t { input = 0, forget = 1, output = 2, candidate = 3 };

/// Parameters of one LSTM cell. The four gates are fused column-wise:
///   input_weights      (in, 4H)   = [W_xi | W_xf | W_xo | W_xc]
///   recurrent_weights  (H, 4H)    = [W_hi | W_hf | W_ho | W_hc]
///   bias               (4H)       = [b_i  | b_f  | b_o  | b_c ]
struct LstmParams {
  Tensor input_weights;
  Tensor recurrent_weights;
  Tensor bias;
  std::size_t hidden_units = 0;

  static LstmParams zeros(std::size_t inputs, std::size_t hidden) {
    return {Tensor({inputs, 4 * hidden}), Tensor({hidden, 4 * hidden}),
            Tensor({4 * hidden}), hidden};
  }

  std::size_t inputs() const { return input_weights.dim(0); }

  /// Column offset of `gate` within the fused matrices.
  std::size_t offset(Gate gate) const {
    return static_cast<std::size_t>(gate) * hidden_units;
  }

  void check() const {
    const std::size_t h = hidden_units;
    if (input_weights.rank() != 2 || input_weights.dim(1) != 4 * h ||
        recurrent_weights.shape() != Shape{h, 4 * h} ||
        bias.shape() != Shape{4 * h}) {
      throw ShapeError("lstm parameters inconsistent with hidden_units=" +
                       std::to_string(h) + ": Wx " +
                       to_string(input_weights.shape()) + ", Wh " +
                       to_string(recurrent_weights.shape()) + ", b " +
                       to_string(bias.shape()));
    }
  }
};

struct LstmContext {
  Tensor input;       // (B, T, in)
  Tensor gates;       // (T, B, 4H) activated [i f o c~]
  Tensor cells;       // (T, B, H)
  Tensor cells_tanh;  // (T, B, H)
  Tensor hidden;      // (T, B, H)
  Direction direction = Direction::forward;
};

struct LstmResult {
  Tensor output;  // (B, T, H), indexed by input time step
  LstmContext context;
};

/// Runs the cell over the whole sequence from H0 = C0 = 0:
///   I = s(X Wxi + H Whi + bi)   F = s(X Wxf + H Whf + bf)
///   O = s(X Wxo + H Who + bo)   C~ = tanh(X Wxc + H Whc + bc)
///   C = F*C_prev + I*C~         H = O*tanh(C)
/// Reverse direction consumes the steps last-to-first; outputs stay aligned
/// with the input time index either way.
inline LstmResult lstm_forward(const Tensor& x, const LstmParams& params,
                               Direction direction = Direction::forward) {
  using detail::idx;
  params.check();
  require_rank(x, 3, "lstm input");
  const std::size_t batch = x.dim(0), steps = x.dim(1), in = x.dim(2);
  const std::size_t h = params.hidden_units, g4 = 4 * h;
  if (steps == 0) throw ShapeError("lstm: empty input sequence");
  if (in != params.inputs()) {
    throw ShapeError("lstm: input " + to_string(x.shape()) +
                     " incompatible with input weights " +
                     to_string(params.input_weights.shape()));
  }

  LstmContext ctx{x,
                  Tensor({steps, batch, g4}),
                  Tensor({steps, batch, h}),
                  Tensor({steps, batch, h}),
                  Tensor({steps, batch, h}),
                  direction};

  // Input projections for every (batch, step) row in one product.
  RowMatrix projected = as_matrix(x, batch * steps, in) *
                        as_matrix(params.input_weights, in, g4);
  projected.rowwise() += as_row(params.bias);

  const auto wh = as_matrix(params.recurrent_weights, h, g4);
  RowMatrix z(idx(batch), idx(g4));
  const double* prev_h = nullptr;
  const double* prev_c = nullptr;
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = direction == Direction::forward ? s : steps - 1 - s;
    detail::StridedConstMatrix proj_t(projected.data() + t * g4, idx(batch),
                                      idx(g4), Eigen::OuterStride<>(idx(steps * g4)));
    z = proj_t;
    if (prev_h) z.noalias() += ConstMatrixView(prev_h, idx(batch), idx(h)) * wh;

    double* gate = ctx.gates.data() + t * batch * g4;
    double* cell = ctx.cells.data() + t * batch * h;
    double* cell_tanh = ctx.cells_tanh.data() + t * batch * h;
    double* hid = ctx.hidden.data() + t * batch * h;
    for (std::size_t n = 0; n < batch; ++n) {
      const double* zr = z.data() + n * g4;
      double* gr = gate + n * g4;
      for (std::size_t j = 0; j < 3 * h; ++j) gr[j] = sigmoid(zr[j]);
      for (std::size_t j = 3 * h; j < g4; ++j) gr[j] = std::tanh(zr[j]);
      for (std::size_t j = 0; j < h; ++j) {
        const double c_prev = prev_c ? prev_c[n * h + j] : 0.0;
        const double c = gr[h + j] * c_prev + gr[j] * gr[3 * h + j];
        const double tc = std::tanh(c);
        cell[n * h + j] = c;
        cell_tanh[n * h + j] = tc;
        hid[n * h + j] = gr[2 * h + j] * tc;
      }
    }
    prev_h = hid;
    prev_c = cell;
  }

  Tensor out({batch, steps, h});
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t n = 0; n < batch; ++n) {
      std::copy_n(ctx.hidden.data() + (t * batch + n) * h, h,
                  out.data() + (n * steps + t) * h);
    }
  }
  return {std::move(out), std::move(ctx)};
}

/// Backpropagation through time. `dy` is the gradient of the loss w.r.t.
/// every output step (B, T, H); zeros where a step's output is unused.
/// params = {dWx, dWh, db}
inline LayerGrad lstm_backward(const LstmContext& ctx, const LstmParams& params,
                               const Tensor& dy) {
  using detail::idx;
  const std::size_t batch = ctx.input.dim(0), steps = ctx.input.dim(1),
                    in = ctx.input.dim(2);
  const std::size_t h = params.hidden_units, g4 = 4 * h;
  require_shape(dy, {batch, steps, h}, "lstm output gradient");

  Tensor dz_all({batch, steps, g4});
  RowMatrix dh_next = RowMatrix::Zero(idx(batch), idx(h));
  RowMatrix dc_next = RowMatrix::Zero(idx(batch), idx(h));
  RowMatrix dz(idx(batch), idx(g4));
  Tensor dwh({h, g4});
  auto dwh_m = as_matrix(dwh);
  const auto wh = as_matrix(params.recurrent_weights, h, g4);

  for (std::size_t s = steps; s-- > 0;) {
    const std::size_t t =
        ctx.direction == Direction::forward ? s : steps - 1 - s;
    const bool has_prev = s > 0;
    const std::size_t t_prev =
        ctx.direction == Direction::forward ? t - 1 : t + 1;

    const double* gate = ctx.gates.data() + t * batch * g4;
    const double* cell_tanh = ctx.cells_tanh.data() + t * batch * h;
    const double* c_prev =
        has_prev ? ctx.cells.data() + t_prev * batch * h : nullptr;
    for (std::size_t n = 0; n < batch; ++n) {
      const double* gr = gate + n * g4;
      double* dzr = dz.data() + n * g4;
      for (std::size_t j = 0; j < h; ++j) {
        const double i_g = gr[j], f_g = gr[h + j], o_g = gr[2 * h + j],
                     c_hat = gr[3 * h + j];
        const double tc = cell_tanh[n * h + j];
        const double dh = dy[(n * steps + t) * h + j] + dh_next(idx(n), idx(j));
        const double dc = dc_next(idx(n), idx(j)) + dh * o_g * (1.0 - tc * tc);
        const double cp = c_prev ? c_prev[n * h + j] : 0.0;
        dzr[j] = dc * c_hat * i_g * (1.0 - i_g);
        dzr[h + j] = dc * cp * f_g * (1.0 - f_g);
        dzr[2 * h + j] = dh * tc * o_g * (1.0 - o_g);
        dzr[3 * h + j] = dc * i_g * (1.0 - c_hat * c_hat);
        dc_next(idx(n), idx(j)) = dc * f_g;
      }
    }
    detail::StridedMatrix(dz_all.data() + t * g4, idx(batch), idx(g4),
                          Eigen::OuterStride<>(idx(steps * g4))) = dz;
    if (has_prev) {
      const ConstMatrixView h_prev(ctx.hidden.data() + t_prev * batch * h,
                                   idx(batch), idx(h));
      dwh_m.noalias() += h_prev.transpose() * dz;
      dh_next.noalias() = dz * wh.transpose();
    }
  }

  const auto dz_m = as_matrix(dz_all, batch * steps, g4);
  Tensor dwx({in, g4});
  Tensor db({g4});
  Tensor dx(ctx.input.shape());
  as_matrix(dwx).noalias() =
      as_matrix(ctx.input, batch * steps, in).transpose() * dz_m;
  as_row(db) = dz_m.colwise().sum();
  as_matrix(dx, batch * steps, in).noalias() =
      dz_m * as_matrix(params.input_weights, in, g4).transpose();
  return {{std::move(dwx), std::move(dwh), std::move(db)}, std::move(dx)};
}

// ---------------------------------------------------------------- bilstm

struct BiLstmContext {
  LstmContext forward;
  LstmContext backward;
};

struct BiLstmResult {
  Tensor output;  // (B, T, 2H): [forward half | backward half] per step
  BiLstmContext context;
};

inline BiLstmResult bilstm_forward(const Tensor& x,
                                   const LstmParams& forward_params,
                                   const LstmParams& backward_params) {
  if (forward_params.hidden_units != backward_params.hidden_units) {
    throw ShapeError("bilstm: direction widths differ (" +
                     std::to_string(forward_params.hidden_units) + " vs " +
                     std::to_string(backward_params.hidden_units) + ")");
  }
  auto fwd = lstm_forward(x, forward_params, Direction::forward);
  auto bwd = lstm_forward(x, backward_params, Direction::reverse);
  const std::size_t batch = x.dim(0), steps = x.dim(1),
                    h = forward_params.hidden_units;
  Tensor out({batch, steps, 2 * h});
  for (std::size_t r = 0; r < batch * steps; ++r) {
    std::copy_n(fwd.output.data() + r * h, h, out.data() + r * 2 * h);
    std::copy_n(bwd.output.data() + r * h, h, out.data() + r * 2 * h + h);
  }
  return {std::move(out),
          BiLstmContext{std::move(fwd.context), std::move(bwd.context)}};
}

/// params = {forward dWx, dWh, db, backward dWx, dWh, db}
inline LayerGrad bilstm_backward(const BiLstmContext& ctx,
                                 const LstmParams& forward_params,
                                 const LstmParams& backward_params,
                                 const Tensor& dy) {
  const std::size_t batch = ctx.forward.input.dim(0),
                    steps = ctx.forward.input.dim(1),
                    h = forward_params.hidden_units;
  require_shape(dy, {batch, steps, 2 * h}, "bilstm output gradient");
  Tensor dy_f({batch, steps, h}), dy_b({batch, steps, h});
  for (std::size_t r = 0; r < batch * steps; ++r) {
    std::copy_n(dy.data() + r * 2 * h, h, dy_f.data() + r * h);
    std::copy_n(dy.data() + r * 2 * h + h, h, dy_b.data() + r * h);
  }
  LayerGrad gf = lstm_backward(ctx.forward, forward_params, dy_f);
  LayerGrad gb = lstm_backward(ctx.backward, backward_params, dy_b);
  as_row(gf.input) += as_row(gb.input);
  for (auto& p : gb.params) gf.params.push_back(std::move(p));
  return gf;
}

// ---------------------------------------------------------------- loss

inline double mse(const Tensor& target, const Tensor& prediction) {
  if (target.shape() != prediction.shape()) {
    throw ShapeError("mse: target " + to_string(target.shape()) +
                     " vs prediction " + to_string(prediction.shape()));
  }
  if (target.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = target[i] - prediction[i];
    sum += d * d;
  }
  return sum / static_cast<double>(target.size());
}

/// d mse / d prediction = (2/n)(prediction - target)
inline Tensor mse_grad(const Tensor& target, const Tensor& prediction) {
  if (target.shape() != prediction.shape()) {
    throw ShapeError("mse_grad: target " + to_string(target.shape()) +
                     " vs prediction " + to_string(prediction.shape()));
  }
  Tensor g(prediction.shape());
  const double scale = 2.0 / static_cast<double>(target.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = scale * (prediction[i] - target[i]);
  }
  return g;
}

}  // namespace pmu::nn
