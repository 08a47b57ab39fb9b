#pragma once

// A small fully connected network trained with minibatch SGD on a synthetic
// binary task; its empirical NTK is diagnosed after every evaluation epoch.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "postkernel/errors.hpp"
#include "postkernel/kernel_metrics.hpp"
#include "postkernel/random.hpp"

namespace postkernel::ntk {

inline constexpr std::size_t kMaxParameters = 10000;
/// Largest parameters x inputs product empirical_ntk will form.
inline constexpr double kJacobianBudget = 1e8;

enum class Activation { tanh, relu, identity };

inline double activate(Activation a, double z) {
  switch (a) {
    case Activation::tanh: return std::tanh(z);
    case Activation::relu: return z > 0.0 ? z : 0.0;
    case Activation::identity: return z;
  }
  return z;
}

inline double activate_derivative(Activation a, double z) {
  switch (a) {
    case Activation::tanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;
};

/// Hidden layers apply `activation`; the last layer is a linear scalar readout.
///
/// Flat parameter order: layer by layer from the input, each layer's weight
/// matrix in row-major order followed by its bias.
struct TinyNet {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::tanh;

  Eigen::Index input_dim() const { return layers.front().weight.cols(); }

  std::size_t parameter_count() const {
    std::size_t p = 0;
    for (const auto& l : layers) p += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return p;
  }
};

/// widths = {input_dim, hidden_1, ..., hidden_k}; a scalar output layer is
/// appended. Weights are N(0, 1/fan_in), biases zero.
inline TinyNet init_net(std::uint64_t seed, const std::vector<std::size_t>& widths,
                        Activation activation = Activation::tanh) {
  if (widths.empty() || std::find(widths.begin(), widths.end(), 0) != widths.end()) {
    throw ConfigError("network widths must be a non-empty list of positive sizes");
  }
  TinyNet net;
  net.activation = activation;
  Rng rng = make_rng(seed, 0x6e6574);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t l = 0; l < widths.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(widths[l]);
    const auto out = static_cast<Eigen::Index>(l + 1 < widths.size() ? widths[l + 1] : 1);
    DenseLayer layer{Matrix(out, in), Vector::Zero(out)};
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = scale * normal(rng);
    }
    net.layers.push_back(std::move(layer));
  }
  if (net.parameter_count() > kMaxParameters) {
    throw ConfigError("network has " + std::to_string(net.parameter_count()) + " parameters, limit is " +
                      std::to_string(kMaxParameters));
  }
  return net;
}

inline void check_input(const TinyNet& net, const Vector& x) {
  if (x.size() != net.input_dim()) {
    throw DimensionMismatchError("input has dimension " + std::to_string(x.size()) + ", network expects " +
                                 std::to_string(net.input_dim()));
  }
}

inline double forward(const TinyNet& net, const Vector& x) {
  check_input(net, x);
  Vector h = x;
  for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) {
    h = (net.layers[l].weight * h + net.layers[l].bias).unaryExpr([&](double z) { return activate(net.activation, z); });
  }
  const auto& out = net.layers.back();
  return (out.weight * h + out.bias)(0);
}

/// Reverse-mode gradient of the scalar output, in the flat parameter order.
inline Vector param_gradient(const TinyNet& net, const Vector& x) {
  check_input(net, x);
  const std::size_t depth = net.layers.size();
  std::vector<Vector> inputs(depth);  // input to each layer
  std::vector<Vector> pre(depth);     // pre-activation of each layer
  Vector h = x;
  for (std::size_t l = 0; l < depth; ++l) {
    inputs[l] = h;
    pre[l] = net.layers[l].weight * h + net.layers[l].bias;
    if (l + 1 < depth) h = pre[l].unaryExpr([&](double z) { return activate(net.activation, z); });
  }

  Vector grad(static_cast<Eigen::Index>(net.parameter_count()));
  std::vector<Eigen::Index> offset(depth);
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < depth; ++l) {
    offset[l] = at;
    at += net.layers[l].weight.size() + net.layers[l].bias.size();
  }

  Vector delta = Vector::Ones(1);  // d out / d pre[last]
  for (std::size_t l = depth; l-- > 0;) {
    const auto& layer = net.layers[l];
    const Eigen::Index rows = layer.weight.rows();
    const Eigen::Index cols = layer.weight.cols();
    Eigen::Index p = offset[l];
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) grad(p++) = delta(r) * inputs[l](c);
    }
    for (Eigen::Index r = 0; r < rows; ++r) grad(p++) = delta(r);
    if (l > 0) {
      const Vector up = layer.weight.transpose() * delta;
      delta = up.cwiseProduct(pre[l - 1].unaryExpr([&](double z) { return activate_derivative(net.activation, z); }));
    }
  }
  return grad;
}

inline Vector flatten(const TinyNet& net) {
  Vector theta(static_cast<Eigen::Index>(net.parameter_count()));
  Eigen::Index p = 0;
  for (const auto& l : net.layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) theta(p++) = l.weight(r, c);
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) theta(p++) = l.bias(r);
  }
  return theta;
}

inline void assign(TinyNet& net, const Vector& theta) {
  if (static_cast<std::size_t>(theta.size()) != net.parameter_count()) {
    throw DimensionMismatchError("parameter vector length does not match network");
  }
  Eigen::Index p = 0;
  for (auto& l : net.layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = theta(p++);
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = theta(p++);
  }
}

/// Rows of `inputs` are the points; returns the per-example Jacobian J (N x P).
inline Matrix jacobian(const TinyNet& net, const Matrix& inputs) {
  const double work = static_cast<double>(net.parameter_count()) * static_cast<double>(inputs.rows());
  if (work > kJacobianBudget) throw BudgetExceededError("empirical NTK Jacobian exceeds the size budget");
  Matrix j(inputs.rows(), static_cast<Eigen::Index>(net.parameter_count()));
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) j.row(i) = param_gradient(net, inputs.row(i).transpose()).transpose();
  return j;
}

/// K_ij = grad f(x_i) . grad f(x_j).
inline Matrix empirical_ntk(const TinyNet& net, const Matrix& inputs) {
  const Matrix j = jacobian(net, inputs);
  Matrix k = j * j.transpose();
  return 0.5 * (k + k.transpose());
}

// ---------------------------------------------------------------------------
// Data and training

struct ToyDataset {
  Matrix inputs;  // N x d
  Vector labels;  // +-1
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> test;

  Matrix split_inputs(const std::vector<Eigen::Index>& idx) const { return inputs(idx, Eigen::all); }
  Vector split_labels(const std::vector<Eigen::Index>& idx) const { return labels(idx); }
};

/// Two isotropic 2-D Gaussian blobs with centers +(1,1) (label +1) and
/// -(1,1) (label -1): unit-covariance noise scaled by 0.5 (std 0.5 per
/// coordinate). Labels alternate so each split is balanced.
inline ToyDataset make_two_blobs(std::uint64_t seed, std::size_t n_train = 200, std::size_t n_test = 200) {
  const auto n = static_cast<Eigen::Index>(n_train + n_test);
  ToyDataset data{Matrix(n, 2), Vector(n), {}, {}};
  Rng rng = make_rng(seed, 0x626c6f62);
  std::normal_distribution<double> normal(0.0, 0.5);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double label = (i % 2 == 0) ? 1.0 : -1.0;
    data.labels(i) = label;
    data.inputs(i, 0) = label + normal(rng);
    data.inputs(i, 1) = label + normal(rng);
    (static_cast<std::size_t>(i) < n_train ? data.train : data.test).push_back(i);
  }
  return data;
}

struct TrainConfig {
  double learning_rate = 1e-2;
  int epochs = 300;
  int batch_size = 10;
  std::uint64_t seed = 0;
  int eval_every = 5;
  double rtol = kDefaultRtol;
  double eps = kDefaultEigenFloor;
};

inline void validate(const TrainConfig& cfg) {
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate)) throw ConfigError("learning rate must be >= 0");
  if (cfg.epochs <= 0 || cfg.batch_size <= 0 || cfg.eval_every <= 0) {
    throw ConfigError("epochs, batch size and eval-every must be positive");
  }
  if (!(cfg.rtol > 0.0) || !(cfg.eps > 0.0)) throw ConfigError("rtol and eps must be positive");
}

struct TraceRecord {
  int epoch = 0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double a_train = 0.0;
  double a_test = 0.0;
  double atilde_train = 0.0;
  double atilde_test = 0.0;
  double erank_train = 0.0;
  double erank_test = 0.0;
  double trace_train = 0.0;
};

using AlignmentTrace = std::vector<TraceRecord>;

/// Epochs at which train_and_trace records metrics: 0 (initialization),
/// every multiple of eval_every, and the final epoch.
inline std::vector<int> eval_schedule(const TrainConfig& cfg) {
  std::vector<int> out{0};
  for (int e = 1; e <= cfg.epochs; ++e) {
    if (e % cfg.eval_every == 0 || e == cfg.epochs) out.push_back(e);
  }
  return out;
}

struct SplitMetrics {
  double accuracy = 0.0;
  double alignment = 0.0;
  double rkhs_alignment = 0.0;
  double erank = 0.0;
  double trace = 0.0;
};

inline SplitMetrics split_metrics(const TinyNet& net, const Matrix& x, const Vector& y, const TrainConfig& cfg) {
  SplitMetrics m;
  int correct = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double out = forward(net, x.row(i).transpose());
    if ((out >= 0.0 ? 1.0 : -1.0) == y(i)) ++correct;
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(x.rows());
  const Matrix k = empirical_ntk(net, x);
  const auto spectrum = spectral_decomposition(k);
  m.alignment = alignment(y, k);
  m.rkhs_alignment = rkhs_alignment(y, spectrum, cfg.rtol);
  m.erank = effective_rank_of_spectrum(spectrum.eigenvalues, cfg.eps);
  m.trace = k.trace();
  return m;
}

/// Minibatch SGD on 0.5 * sum (f(x) - y)^2 / batch, reshuffling the training
/// split every epoch. Both splits are evaluated after the epoch completes.
inline AlignmentTrace train_and_trace(TinyNet net, const ToyDataset& data, const TrainConfig& cfg) {
  validate(cfg);
  const Matrix x_train = data.split_inputs(data.train);
  const Vector y_train = data.split_labels(data.train);
  const Matrix x_test = data.split_inputs(data.test);
  const Vector y_test = data.split_labels(data.test);

  AlignmentTrace trace;
  const auto record = [&](int epoch) {
    const SplitMetrics tr = split_metrics(net, x_train, y_train, cfg);
    const SplitMetrics te = split_metrics(net, x_test, y_test, cfg);
    TraceRecord r{epoch,          tr.accuracy, te.accuracy, tr.alignment, te.alignment, tr.rkhs_alignment,
                  te.rkhs_alignment, tr.erank,    te.erank,    tr.trace};
    for (double v : {r.a_train, r.a_test, r.atilde_train, r.atilde_test, r.erank_train, r.erank_test, r.trace_train}) {
      if (!std::isfinite(v)) throw DivergedRunError("training diverged at epoch " + std::to_string(epoch), epoch);
    }
    trace.push_back(r);
  };

  const auto schedule = eval_schedule(cfg);
  auto next_eval = schedule.begin();
  record(*next_eval++);

  Rng rng = make_rng(cfg.seed, 0x73676421);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(x_train.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Vector theta = flatten(net);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      Vector grad = Vector::Zero(theta.size());
      for (std::size_t b = start; b < stop; ++b) {
        const Vector xi = x_train.row(order[b]).transpose();
        const double residual = forward(net, xi) - y_train(order[b]);
        grad += residual * param_gradient(net, xi);
      }
      theta -= cfg.learning_rate * grad / static_cast<double>(stop - start);
      if (!theta.allFinite()) throw DivergedRunError("parameters diverged at epoch " + std::to_string(epoch), epoch);
      assign(net, theta);
    }
    if (next_eval != schedule.end() && *next_eval == epoch) record(*next_eval++);
  }
  return trace;
}

}  // namespace postkernel::ntk
