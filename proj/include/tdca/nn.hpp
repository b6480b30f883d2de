#pragma once

// Dense feed-forward networks: initialization, forward evaluation with an
// activation cache, mean cross-entropy, reverse-mode gradients and flat
// parameter views. All arithmetic is double precision.

#include "tdca/dataset.hpp"
#include "tdca/error.hpp"
#include "tdca/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tdca {

enum class Activation { Tanh, ReLU, Sigmoid, Identity, Softmax };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::ReLU: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Identity: return "identity";
    case Activation::Softmax: return "softmax";
  }
  return "?";
}

inline Activation activation_from_string(std::string_view s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::ReLU;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "identity") return Activation::Identity;
  if (s == "softmax") return Activation::Softmax;
  throw ValueError("unknown activation '" + std::string(s) + "'");
}

struct LayerSpec {
  std::size_t in_dim = 1;
  std::size_t out_dim = 1;
  Activation activation = Activation::Identity;

  std::size_t param_count() const { return out_dim * (in_dim + 1); }
  bool operator==(const LayerSpec&) const = default;
};

/// Throws DimensionError unless the specs form a valid chain.
inline void validate_specs(std::span<const LayerSpec> specs) {
  detail::require_dims(!specs.empty(), "network needs at least one layer");
  for (std::size_t t = 0; t < specs.size(); ++t) {
    const auto& s = specs[t];
    detail::require_dims(s.in_dim >= 1 && s.out_dim >= 1,
                         "layer " + std::to_string(t) + " has a zero dimension");
    if (s.activation == Activation::Softmax && t + 1 != specs.size()) {
      throw DimensionError("softmax is only allowed on the final layer (layer " +
                           std::to_string(t) + ")");
    }
    if (t + 1 < specs.size() && s.out_dim != specs[t + 1].in_dim) {
      throw DimensionError("layer chain mismatch: layer " + std::to_string(t) + " outputs " +
                           std::to_string(s.out_dim) + " but layer " + std::to_string(t + 1) +
                           " expects " + std::to_string(specs[t + 1].in_dim));
    }
  }
}

inline std::size_t parameter_count(std::span<const LayerSpec> specs) {
  std::size_t n = 0;
  for (const auto& s : specs) n += s.param_count();
  return n;
}

inline std::size_t neuron_count(std::span<const LayerSpec> specs) {
  std::size_t n = 0;
  for (const auto& s : specs) n += s.out_dim;
  return n;
}

/// Offset of layer t's block in the standard flat layout: per layer, weights
/// row-major (out x in) followed by biases.
inline std::size_t layer_offset(std::span<const LayerSpec> specs, std::size_t t) {
  std::size_t off = 0;
  for (std::size_t i = 0; i < t; ++i) off += specs[i].param_count();
  return off;
}

/// θ or Δθ in the standard layout.
struct ParamVector {
  Vector values;
  std::vector<LayerSpec> layout;

  static ParamVector zeros(std::vector<LayerSpec> layout) {
    ParamVector p;
    p.values = Vector::Zero(static_cast<Eigen::Index>(parameter_count(layout)));
    p.layout = std::move(layout);
    return p;
  }

  std::size_t size() const { return static_cast<std::size_t>(values.size()); }

  /// Weight block of layer t viewed as an (out x in) row-major matrix.
  Eigen::Map<Matrix> weights(std::size_t t) {
    const auto& s = layout[t];
    return {values.data() + layer_offset(layout, t), static_cast<Eigen::Index>(s.out_dim),
            static_cast<Eigen::Index>(s.in_dim)};
  }
  Eigen::Map<const Matrix> weights(std::size_t t) const {
    const auto& s = layout[t];
    return {values.data() + layer_offset(layout, t), static_cast<Eigen::Index>(s.out_dim),
            static_cast<Eigen::Index>(s.in_dim)};
  }
  Eigen::Map<Vector> biases(std::size_t t) {
    const auto& s = layout[t];
    return {values.data() + layer_offset(layout, t) + s.out_dim * s.in_dim,
            static_cast<Eigen::Index>(s.out_dim)};
  }
  Eigen::Map<const Vector> biases(std::size_t t) const {
    const auto& s = layout[t];
    return {values.data() + layer_offset(layout, t) + s.out_dim * s.in_dim,
            static_cast<Eigen::Index>(s.out_dim)};
  }
};

class Mlp {
 public:
  /// Zero-parameter network with the given (validated) architecture.
  explicit Mlp(std::vector<LayerSpec> specs) : layers_(std::move(specs)) {
    validate_specs(layers_);
    for (const auto& s : layers_) {
      weights_.push_back(Matrix::Zero(static_cast<Eigen::Index>(s.out_dim),
                                      static_cast<Eigen::Index>(s.in_dim)));
      biases_.push_back(Vector::Zero(static_cast<Eigen::Index>(s.out_dim)));
    }
  }

  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t layer_count() const { return layers_.size(); }
  std::size_t input_dim() const { return layers_.front().in_dim; }
  std::size_t output_dim() const { return layers_.back().out_dim; }
  std::size_t parameter_count() const { return tdca::parameter_count(layers_); }

  Matrix& weights(std::size_t t) { return weights_[t]; }
  const Matrix& weights(std::size_t t) const { return weights_[t]; }
  Vector& biases(std::size_t t) { return biases_[t]; }
  const Vector& biases(std::size_t t) const { return biases_[t]; }

  ParamVector flatten() const {
    ParamVector p = ParamVector::zeros(layers_);
    for (std::size_t t = 0; t < layers_.size(); ++t) {
      p.weights(t) = weights_[t];
      p.biases(t) = biases_[t];
    }
    return p;
  }

  void unflatten(const ParamVector& p) {
    detail::require_dims(p.size() == parameter_count(),
                         "parameter vector has " + std::to_string(p.size()) +
                             " entries, network needs " + std::to_string(parameter_count()));
    for (std::size_t t = 0; t < layers_.size(); ++t) {
      weights_[t] = p.weights(t);
      biases_[t] = p.biases(t);
    }
  }

  static Mlp from_params(std::vector<LayerSpec> specs, const ParamVector& p) {
    Mlp m(std::move(specs));
    m.unflatten(p);
    return m;
  }

 private:
  std::vector<LayerSpec> layers_;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
};

/// Uniform(-1/sqrt(in), 1/sqrt(in)) weights drawn layer by layer in row-major
/// order, zero biases.
inline Mlp init_mlp(std::vector<LayerSpec> specs, std::uint64_t seed) {
  Mlp m(std::move(specs));
  Rng rng(seed);
  for (std::size_t t = 0; t < m.layer_count(); ++t) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(m.layers()[t].in_dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix& w = m.weights(t);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  }
  return m;
}

struct Batch {
  Matrix inputs;   // batch_size x input_dim
  Matrix targets;  // batch_size x class_count, one-hot rows

  std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }

  static Batch make(Matrix inputs, Matrix targets) {
    detail::require_dims(inputs.rows() >= 1, "batch must contain at least one row");
    detail::require_dims(inputs.rows() == targets.rows(),
                         "batch inputs and targets disagree on row count");
    for (Eigen::Index r = 0; r < targets.rows(); ++r) {
      int ones = 0;
      for (Eigen::Index c = 0; c < targets.cols(); ++c) {
        const double v = targets(r, c);
        if (v == 1.0) {
          ++ones;
        } else if (v != 0.0) {
          ones = -1;
          break;
        }
      }
      detail::require_value(ones == 1, "target row " + std::to_string(r) + " is not one-hot");
    }
    return Batch{std::move(inputs), std::move(targets)};
  }
};

inline Matrix one_hot(std::span<const std::uint8_t> labels, std::size_t classes = kClassCount) {
  Matrix y = Matrix::Zero(static_cast<Eigen::Index>(labels.size()),
                          static_cast<Eigen::Index>(classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    detail::require_value(labels[i] < classes, "label out of range");
    y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return y;
}

inline Batch make_batch(const Dataset& ds) {
  return Batch{ds.inputs, one_hot(ds.labels)};
}

namespace detail {

inline void activate_inplace(Matrix& z, Activation a) {
  switch (a) {
    // exp is vectorized for double, tanh is not; absolute error stays ~1e-16
    case Activation::Tanh: z = 1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0); break;
    case Activation::ReLU: z = z.cwiseMax(0.0); break;
    case Activation::Sigmoid: z = (1.0 + (-z.array()).exp()).inverse(); break;
    case Activation::Identity: break;
    case Activation::Softmax:
      for (Eigen::Index r = 0; r < z.rows(); ++r) {
        auto row = z.row(r);
        row.array() -= row.maxCoeff();
        row = row.array().exp();
        row /= row.sum();
      }
      break;
  }
}

/// f'(z) expressed through the post-activation value a = f(z). Softmax is
/// handled jointly with the loss and never reaches here.
inline void multiply_derivative(Matrix& delta, const Matrix& post, Activation a) {
  switch (a) {
    case Activation::Tanh: delta.array() *= 1.0 - post.array().square(); break;
    case Activation::ReLU: delta.array() *= (post.array() > 0.0).cast<double>(); break;
    case Activation::Sigmoid: delta.array() *= post.array() * (1.0 - post.array()); break;
    case Activation::Identity: break;
    case Activation::Softmax: throw DimensionError("softmax on a hidden layer");
  }
}

inline std::size_t argmax_row(const auto& row) {
  std::size_t best = 0;
  for (Eigen::Index c = 1; c < row.size(); ++c) {
    if (row(c) > row(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(c);
  }
  return best;
}

}  // namespace detail

/// Post-activation values of every layer; activations[0] is the input batch.
struct ForwardCache {
  std::vector<Matrix> activations;

  const Matrix& input() const { return activations.front(); }
  const Matrix& output() const { return activations.back(); }
  /// Input to layer t (pre-synaptic activity).
  const Matrix& presynaptic(std::size_t t) const { return activations[t]; }
};

inline ForwardCache forward(const Mlp& mlp, const Matrix& inputs) {
  detail::require_dims(static_cast<std::size_t>(inputs.cols()) == mlp.input_dim(),
                       "input has " + std::to_string(inputs.cols()) + " columns, network expects " +
                           std::to_string(mlp.input_dim()));
  detail::require_value(all_finite(inputs), "non-finite value in network input");
  ForwardCache cache;
  cache.activations.reserve(mlp.layer_count() + 1);
  cache.activations.push_back(inputs);
  for (std::size_t t = 0; t < mlp.layer_count(); ++t) {
    Matrix z = cache.activations.back() * mlp.weights(t).transpose();
    z.rowwise() += mlp.biases(t).transpose();
    detail::activate_inplace(z, mlp.layers()[t].activation);
    cache.activations.push_back(std::move(z));
  }
  return cache;
}

inline ForwardCache forward(const Mlp& mlp, const Batch& batch) { return forward(mlp, batch.inputs); }

inline constexpr double kProbabilityFloor = 1e-12;

/// Mean over rows of -log(p_true) with p clamped to [1e-12, 1].
inline double cross_entropy(const Matrix& outputs, const Matrix& targets) {
  detail::require_dims(outputs.rows() == targets.rows() && outputs.cols() == targets.cols(),
                       "cross_entropy: outputs and targets differ in shape");
  detail::require_dims(outputs.rows() >= 1, "cross_entropy: empty batch");
  double total = 0.0;
  for (Eigen::Index r = 0; r < outputs.rows(); ++r) {
    const std::size_t k = detail::argmax_row(targets.row(r));
    const double p = std::clamp(outputs(r, static_cast<Eigen::Index>(k)), kProbabilityFloor, 1.0);
    total -= std::log(p);
  }
  return total / static_cast<double>(outputs.rows());
}

/// Gradient of cross_entropy with respect to θ, standard layout.
inline ParamVector backprop_grads(const Mlp& mlp, const Batch& batch, const ForwardCache& cache) {
  detail::require_dims(static_cast<std::size_t>(batch.targets.cols()) == mlp.output_dim(),
                       "targets have " + std::to_string(batch.targets.cols()) +
                           " classes, network outputs " + std::to_string(mlp.output_dim()));
  detail::require_dims(cache.activations.size() == mlp.layer_count() + 1 &&
                           cache.output().rows() == batch.targets.rows(),
                       "forward cache does not match network/batch");
  const auto& layers = mlp.layers();
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const Matrix& out = cache.output();
  const Matrix& y = batch.targets;

  // dL/d(output) for each row; the clamp makes the loss flat (zero gradient)
  // wherever p_true sits below the floor.
  Matrix delta = Matrix::Zero(out.rows(), out.cols());
  const Activation last = layers.back().activation;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const auto k = static_cast<Eigen::Index>(detail::argmax_row(y.row(r)));
    const double p = out(r, k);
    if (p < kProbabilityFloor || p > 1.0) continue;
    if (last == Activation::Softmax) {
      delta.row(r) = (out.row(r) - y.row(r)) * inv_b;
    } else {
      delta(r, k) = -inv_b / p;
    }
  }
  if (last != Activation::Softmax) detail::multiply_derivative(delta, out, last);

  ParamVector grad = ParamVector::zeros(layers);
  for (std::size_t t = layers.size(); t-- > 0;) {
    const Matrix& pre = cache.presynaptic(t);
    grad.weights(t).noalias() = delta.transpose() * pre;
    grad.biases(t) = delta.colwise().sum().transpose();
    if (t > 0) {
      Matrix next = delta * mlp.weights(t);
      detail::multiply_derivative(next, pre, layers[t - 1].activation);
      delta = std::move(next);
    }
  }
  return grad;
}

inline ParamVector backprop_grads(const Mlp& mlp, const Batch& batch) {
  return backprop_grads(mlp, batch, forward(mlp, batch));
}

/// θ += scale·delta in place.
inline void apply_update_inplace(Mlp& mlp, const ParamVector& delta, double scale) {
  detail::require_dims(delta.size() == mlp.parameter_count(),
                       "update has " + std::to_string(delta.size()) + " entries, network has " +
                           std::to_string(mlp.parameter_count()) + " parameters");
  detail::require_value(all_finite(delta.values), "non-finite value in parameter update");
  for (std::size_t t = 0; t < mlp.layer_count(); ++t) {
    mlp.weights(t) += scale * delta.weights(t);
    mlp.biases(t) += scale * delta.biases(t);
  }
}

/// Returns θ + scale·delta; the input network is left untouched.
inline Mlp apply_update(const Mlp& mlp, const ParamVector& delta, double scale) {
  Mlp out = mlp;
  apply_update_inplace(out, delta, scale);
  return out;
}

/// Fraction of rows whose argmax output (lowest index on ties) equals the
/// label. Evaluated in chunks to bound memory on large splits.
inline double accuracy(const Mlp& mlp, const Dataset& ds) {
  detail::require_value(!ds.empty(), "accuracy of an empty dataset");
  constexpr Eigen::Index kChunk = 4096;
  std::size_t correct = 0;
  for (Eigen::Index start = 0; start < ds.inputs.rows(); start += kChunk) {
    const Eigen::Index n = std::min(kChunk, ds.inputs.rows() - start);
    const ForwardCache cache = forward(mlp, Matrix(ds.inputs.middleRows(start, n)));
    for (Eigen::Index r = 0; r < n; ++r) {
      if (detail::argmax_row(cache.output().row(r)) == ds.labels[static_cast<std::size_t>(start + r)]) {
        ++correct;
      }
    }
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

/// Accuracy of precomputed output rows against labels.
inline double accuracy_of_outputs(const Matrix& outputs, std::span<const std::uint8_t> labels) {
  detail::require_value(outputs.rows() >= 1, "accuracy of an empty dataset");
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < outputs.rows(); ++r) {
    if (detail::argmax_row(outputs.row(r)) == labels[static_cast<std::size_t>(r)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(outputs.rows());
}

}  // namespace tdca
