#pragma once

// Fully connected tanh networks over a flat parameter vector.
//
// Parameter layout, per layer in order: the weight matrix (fan_in x fan_out,
// row-major) followed by the bias vector (fan_out). Hidden layers use tanh;
// the output head is either softmax + cross-entropy or linear + mean squared
// error. All losses are means over the examples in the batch.

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "levelset/errors.hpp"
#include "levelset/geometry.hpp"

namespace levelset {

using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Head { softmax_classification, linear_regression };

inline const char* to_string(Head h) {
  return h == Head::softmax_classification ? "softmax-classification" : "linear-regression";
}

struct NetworkSpec {
  std::vector<int> layer_sizes; // input, hidden..., output
  Head head = Head::softmax_classification;

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  std::size_t num_layers() const { return layer_sizes.size() - 1; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
      n += static_cast<std::size_t>(layer_sizes[i]) * layer_sizes[i + 1] + layer_sizes[i + 1];
    }
    return n;
  }

  /// Throws ShapeError unless there is at least one hidden layer and all sizes are positive.
  void validate() const {
    if (layer_sizes.size() < 3) {
      throw ShapeError("network needs an input, at least one hidden layer, and an output");
    }
    for (int s : layer_sizes) {
      if (s < 1) throw ShapeError("layer sizes must be positive");
    }
  }

  bool operator==(const NetworkSpec&) const = default;
};

/// Offsets of one layer's weights and biases inside the flat parameter vector.
struct LayerSlice {
  std::size_t weight_offset;
  std::size_t bias_offset;
  int fan_in;
  int fan_out;
};

inline std::vector<LayerSlice> layer_slices(const NetworkSpec& spec) {
  std::vector<LayerSlice> out;
  std::size_t off = 0;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const int in = spec.layer_sizes[l];
    const int outd = spec.layer_sizes[l + 1];
    LayerSlice s{off, off + static_cast<std::size_t>(in) * outd, in, outd};
    out.push_back(s);
    off = s.bias_offset + outd;
  }
  return out;
}

/// Examples are rows. Classification batches use `labels`; regression batches use `targets`.
struct Batch {
  Matrix inputs;
  std::vector<int> labels;
  Matrix targets;
  /// Regression targets are stored divided by this factor; reported errors are scaled back.
  double target_scale = 1.0;

  std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
};

inline Batch select_rows(const Batch& b, std::span<const std::size_t> rows) {
  Batch out;
  out.target_scale = b.target_scale;
  out.inputs.resize(static_cast<Eigen::Index>(rows.size()), b.inputs.cols());
  if (!b.labels.empty()) out.labels.reserve(rows.size());
  if (b.targets.size() > 0) out.targets.resize(static_cast<Eigen::Index>(rows.size()), b.targets.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows[i]);
    out.inputs.row(static_cast<Eigen::Index>(i)) = b.inputs.row(r);
    if (!b.labels.empty()) out.labels.push_back(b.labels[rows[i]]);
    if (b.targets.size() > 0) out.targets.row(static_cast<Eigen::Index>(i)) = b.targets.row(r);
  }
  return out;
}

/// Running total of example-wise gradient evaluations.
struct GradEvalCounter {
  std::uint64_t count = 0;
  void add(std::size_t examples) { count += examples; }
};

/// Weights ~ Normal(0, 2 / (fan_in + fan_out)), biases zero.
inline Vector glorot_init(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Vector theta = Vector::Zero(static_cast<Eigen::Index>(spec.param_count()));
  std::mt19937_64 rng(seed);
  for (const auto& s : layer_slices(spec)) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (s.fan_in + s.fan_out)));
    const std::size_t n = static_cast<std::size_t>(s.fan_in) * s.fan_out;
    for (std::size_t i = 0; i < n; ++i) theta[static_cast<Eigen::Index>(s.weight_offset + i)] = dist(rng);
  }
  return theta;
}

namespace detail {

inline void check_shapes(const NetworkSpec& spec, const Vector& theta, const Batch& batch) {
  spec.validate();
  if (static_cast<std::size_t>(theta.size()) != spec.param_count()) {
    throw ShapeError("parameter vector has " + std::to_string(theta.size()) + " entries, network needs " +
                     std::to_string(spec.param_count()));
  }
  if (batch.inputs.cols() != spec.input_dim()) {
    throw ShapeError("batch has " + std::to_string(batch.inputs.cols()) + " input columns, network expects " +
                     std::to_string(spec.input_dim()));
  }
  if (spec.head == Head::softmax_classification) {
    if (batch.labels.size() != batch.size()) throw ShapeError("label count does not match example count");
  } else if (batch.targets.rows() != batch.inputs.rows() || batch.targets.cols() != spec.output_dim()) {
    throw ShapeError("regression targets do not match batch/output shape");
  }
}

inline Eigen::Map<const RowMatrix> weights(const Vector& theta, const LayerSlice& s) {
  return {theta.data() + s.weight_offset, s.fan_in, s.fan_out};
}

inline Eigen::Map<const Eigen::RowVectorXd> biases(const Vector& theta, const LayerSlice& s) {
  return {theta.data() + s.bias_offset, s.fan_out};
}

/// Activations of every layer; the last entry holds the output-layer pre-activations.
inline std::vector<Matrix> forward_activations(const NetworkSpec& spec, const Vector& theta, const Matrix& x) {
  const auto slices = layer_slices(spec);
  std::vector<Matrix> acts;
  acts.reserve(slices.size() + 1);
  acts.push_back(x);
  for (std::size_t l = 0; l < slices.size(); ++l) {
    Matrix z = acts.back() * weights(theta, slices[l]);
    z.rowwise() += biases(theta, slices[l]);
    if (l + 1 < slices.size()) z = z.array().tanh().matrix();
    acts.push_back(std::move(z));
  }
  return acts;
}

/// Row-wise softmax of logits with max subtraction.
inline Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - mx).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

} // namespace detail

/// Network outputs per example: probabilities for the softmax head, raw values for the linear head.
inline Matrix forward(const NetworkSpec& spec, const Vector& theta, const Batch& batch) {
  detail::check_shapes(spec, theta, batch);
  auto acts = detail::forward_activations(spec, theta, batch.inputs);
  if (spec.head == Head::softmax_classification) return detail::softmax_rows(acts.back());
  return std::move(acts.back());
}

struct LossGradient {
  double loss = 0.0;
  Vector gradient;
};

namespace detail {

// Cross-entropy of one row of logits against `label`, plus dloss/dlogits written into `dz`.
// Uses log1p on the off-argmax mass so tiny losses near the level set keep full precision.
inline double cross_entropy_row(const Eigen::Ref<const Eigen::RowVectorXd, 0, Eigen::InnerStride<>>& z, int label,
                                Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> dz) {
  Eigen::Index arg = 0;
  const double mx = z.maxCoeff(&arg);
  double off_mass = 0.0;
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    const double e = std::exp(z[j] - mx);
    dz[j] = e;
    if (j != arg) off_mass += e;
  }
  const double denom = 1.0 + off_mass;
  dz /= denom;
  if (label == arg) dz[label] = -off_mass / denom;
  else dz[label] -= 1.0;
  return (mx - z[label]) + std::log1p(off_mass);
}

} // namespace detail

/// Mean loss and its exact gradient with respect to the flat parameter vector.
/// Adds the batch size to `counter`.
inline LossGradient loss_and_gradient(const NetworkSpec& spec, const Vector& theta, const Batch& batch,
                                      GradEvalCounter& counter) {
  detail::check_shapes(spec, theta, batch);
  const auto slices = layer_slices(spec);
  const auto acts = detail::forward_activations(spec, theta, batch.inputs);
  const Matrix& out = acts.back();
  const double m = static_cast<double>(batch.size());

  LossGradient r;
  Matrix delta(out.rows(), out.cols());
  if (spec.head == Head::softmax_classification) {
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      const int label = batch.labels[static_cast<std::size_t>(i)];
      if (label < 0 || label >= spec.output_dim()) throw ShapeError("class label out of range");
      r.loss += detail::cross_entropy_row(out.row(i), label, delta.row(i));
    }
    r.loss /= m;
    delta /= m;
  } else {
    const Matrix diff = out - batch.targets;
    const double k = static_cast<double>(out.cols());
    r.loss = diff.squaredNorm() / (m * k);
    delta = diff * (2.0 / (m * k));
  }

  r.gradient = Vector::Zero(theta.size());
  for (std::size_t l = slices.size(); l-- > 0;) {
    const auto& s = slices[l];
    Eigen::Map<RowMatrix> gw(r.gradient.data() + s.weight_offset, s.fan_in, s.fan_out);
    gw.noalias() = acts[l].transpose() * delta;
    Eigen::Map<Eigen::RowVectorXd>(r.gradient.data() + s.bias_offset, s.fan_out) = delta.colwise().sum();
    if (l > 0) {
      Matrix back = delta * detail::weights(theta, s).transpose();
      delta = back.array() * (1.0 - acts[l].array().square());
    }
  }
  counter.add(batch.size());

  if (!std::isfinite(r.loss) || !r.gradient.allFinite()) {
    throw NumericalFailure("non-finite loss or gradient (loss = " + std::to_string(r.loss) + ")");
  }
  return r;
}

/// Mean loss without a gradient. Does not touch any gradient counter.
inline double loss_value(const NetworkSpec& spec, const Vector& theta, const Batch& batch) {
  detail::check_shapes(spec, theta, batch);
  const auto acts = detail::forward_activations(spec, theta, batch.inputs);
  const Matrix& out = acts.back();
  double loss = 0.0;
  if (spec.head == Head::softmax_classification) {
    Eigen::RowVectorXd scratch(out.cols());
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      loss += detail::cross_entropy_row(out.row(i), batch.labels[static_cast<std::size_t>(i)], scratch);
    }
    loss /= static_cast<double>(batch.size());
  } else {
    loss = (out - batch.targets).squaredNorm() / static_cast<double>(out.size());
  }
  return loss;
}

/// Fraction of examples whose argmax output equals the label; ties go to the lowest class index.
inline double accuracy(const NetworkSpec& spec, const Vector& theta, const Batch& batch) {
  if (spec.head != Head::softmax_classification) {
    throw UnsupportedMetricError("accuracy is only defined for the softmax classification head");
  }
  const Matrix out = forward(spec, theta, batch);
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    Eigen::Index arg = 0;
    for (Eigen::Index j = 1; j < out.cols(); ++j) {
      if (out(i, j) > out(i, arg)) arg = j;
    }
    if (arg == batch.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(batch.size());
}

/// Accuracy for classification, mean squared error in original target units for regression.
inline double test_metric(const NetworkSpec& spec, const Vector& theta, const Batch& batch) {
  if (spec.head == Head::softmax_classification) return accuracy(spec, theta, batch);
  return loss_value(spec, theta, batch) * batch.target_scale * batch.target_scale;
}

/// True when larger metric values are better.
inline bool metric_higher_is_better(Head head) { return head == Head::softmax_classification; }

} // namespace levelset
