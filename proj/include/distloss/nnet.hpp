#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "distloss/errors.hpp"
#include "distloss/rng.hpp"

namespace distloss {

enum class Activation { relu, tanh };

inline std::string_view to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

inline Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw Error(ErrorCode::ConfigError, "unknown activation '" + std::string(s) + "'");
}

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

namespace detail {
inline std::uint64_t next_param_stamp() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}
}  // namespace detail

/// Fully-connected regressor. layer_dims = (d, hidden..., 1); every hidden
/// layer is followed by the activation, the output layer is linear.
struct MlpParams {
  std::vector<std::size_t> layer_dims;
  Activation activation = Activation::relu;
  std::vector<DenseLayer> layers;
  /// Changes on every in-place update; tapes remember the stamp they saw.
  std::uint64_t stamp = detail::next_param_stamp();

  std::size_t input_dim() const { return layer_dims.front(); }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  void touch() { stamp = detail::next_param_stamp(); }
};

using MlpGrads = std::vector<DenseLayer>;

/// He-uniform (relu) or Glorot-uniform (tanh) weights, zero biases.
inline MlpParams init_mlp(std::vector<std::size_t> layer_dims, Activation activation,
                          std::uint64_t seed) {
  require(layer_dims.size() >= 2, ErrorCode::InvalidSpec, "need input and output dimensions");
  require(layer_dims.back() == 1, ErrorCode::InvalidSpec, "output dimension must be 1");
  for (auto d : layer_dims) require(d >= 1, ErrorCode::InvalidSpec, "layer widths must be >= 1");

  MlpParams p;
  p.layer_dims = std::move(layer_dims);
  p.activation = activation;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < p.layer_dims.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(p.layer_dims[l]);
    const auto out = static_cast<Eigen::Index>(p.layer_dims[l + 1]);
    const double limit = activation == Activation::relu
                             ? std::sqrt(6.0 / static_cast<double>(in))
                             : std::sqrt(6.0 / static_cast<double>(in + out));
    DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    for (Eigen::Index c = 0; c < in; ++c)
      for (Eigen::Index r = 0; r < out; ++r) layer.weight(r, c) = rng.uniform(-limit, limit);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

/// Activation record of one forward pass. inputs is d x batch; one
/// pre-activation and post-activation matrix per layer.
struct Tape {
  std::uint64_t stamp = 0;
  Eigen::MatrixXd inputs;
  std::vector<Eigen::MatrixXd> pre;
  std::vector<Eigen::MatrixXd> post;
};

struct ForwardResult {
  std::vector<double> predictions;
  Tape tape;
};

/// batch_inputs: d x batch, one sample per column.
inline ForwardResult forward(const MlpParams& params, const Eigen::MatrixXd& batch_inputs) {
  require(static_cast<std::size_t>(batch_inputs.rows()) == params.input_dim(),
          ErrorCode::ShapeMismatch, "input dimension does not match the network");
  ForwardResult out;
  out.tape.stamp = params.stamp;
  out.tape.inputs = batch_inputs;
  const std::size_t depth = params.layers.size();
  const Eigen::MatrixXd* current = &out.tape.inputs;
  for (std::size_t l = 0; l < depth; ++l) {
    const auto& layer = params.layers[l];
    Eigen::MatrixXd z = layer.weight * (*current);
    z.colwise() += layer.bias;
    Eigen::MatrixXd a;
    if (l + 1 == depth) a = z;
    else if (params.activation == Activation::relu) a = z.cwiseMax(0.0);
    else a = z.array().tanh().matrix();
    out.tape.pre.push_back(std::move(z));
    out.tape.post.push_back(std::move(a));
    current = &out.tape.post.back();
  }
  const auto& y = out.tape.post.back();
  out.predictions.assign(y.data(), y.data() + y.size());
  return out;
}

inline ForwardResult forward(const MlpParams& params, std::span<const std::vector<double>> batch) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(params.input_dim()),
                    static_cast<Eigen::Index>(batch.size()));
  for (std::size_t j = 0; j < batch.size(); ++j) {
    require(batch[j].size() == params.input_dim(), ErrorCode::ShapeMismatch,
            "input dimension does not match the network");
    for (std::size_t i = 0; i < batch[j].size(); ++i)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = batch[j][i];
  }
  return forward(params, x);
}

/// Gradients of sum_j grad_predictions[j] * prediction_j with respect to
/// every weight and bias.
inline MlpGrads backward(const MlpParams& params, const Tape& tape,
                         std::span<const double> grad_predictions) {
  require(tape.stamp == params.stamp && tape.pre.size() == params.layers.size(),
          ErrorCode::InvalidTape, "tape does not belong to the current parameters");
  const auto batch = tape.inputs.cols();
  require(static_cast<Eigen::Index>(grad_predictions.size()) == batch, ErrorCode::ShapeMismatch,
          "one upstream gradient per prediction expected");

  const std::size_t depth = params.layers.size();
  MlpGrads grads(depth);
  Eigen::MatrixXd delta = Eigen::Map<const Eigen::MatrixXd>(grad_predictions.data(), 1, batch);
  for (std::size_t l = depth; l-- > 0;) {
    const Eigen::MatrixXd& below = l == 0 ? tape.inputs : tape.post[l - 1];
    grads[l].weight = delta * below.transpose();
    grads[l].bias = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd up = params.layers[l].weight.transpose() * delta;
    const Eigen::MatrixXd& z = tape.pre[l - 1];
    if (params.activation == Activation::relu) {
      delta = (z.array() > 0.0).select(up, 0.0);
    } else {
      const auto t = tape.post[l - 1].array();
      delta = (up.array() * (1.0 - t * t)).matrix();
    }
  }
  return grads;
}

struct AdamState {
  std::int64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
  double weight_decay = 1e-4;
  std::vector<DenseLayer> first;
  std::vector<DenseLayer> second;
};

inline AdamState make_adam(const MlpParams& params, double lr = 1e-3, double beta1 = 0.9,
                           double beta2 = 0.999, double eps_hat = 1e-8,
                           double weight_decay = 1e-4) {
  AdamState s;
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps_hat = eps_hat;
  s.weight_decay = weight_decay;
  for (const auto& l : params.layers) {
    DenseLayer zero{Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                    Eigen::VectorXd::Zero(l.bias.size())};
    s.first.push_back(zero);
    s.second.push_back(zero);
  }
  return s;
}

/// One Adam update with L2 weight decay folded into the gradient.
/// `trainable` (empty = all) masks layers out of the update entirely.
inline void adam_step(MlpParams& params, const MlpGrads& grads, AdamState& state,
                      const std::vector<bool>& trainable = {}) {
  require(grads.size() == params.layers.size() && state.first.size() == params.layers.size(),
          ErrorCode::ShapeMismatch, "gradient/optimizer shapes do not match the network");
  for (const auto& g : grads) {
    require(g.weight.allFinite() && g.bias.allFinite(), ErrorCode::NonFiniteGradient,
            "non-finite gradient");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);

  auto update = [&](auto& theta, const auto& grad, auto& m, auto& v) {
    const auto g = (grad.array() + state.weight_decay * theta.array()).eval();
    m.array() = state.beta1 * m.array() + (1.0 - state.beta1) * g;
    v.array() = state.beta2 * v.array() + (1.0 - state.beta2) * g * g;
    theta.array() -= state.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps_hat);
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    if (!trainable.empty() && !trainable[l]) continue;
    update(params.layers[l].weight, grads[l].weight, state.first[l].weight, state.second[l].weight);
    update(params.layers[l].bias, grads[l].bias, state.first[l].bias, state.second[l].bias);
  }
  params.touch();
}

}  // namespace distloss
