#pragma once
// Dense MLP with explicit forward/backward passes, Adam, and a central
// finite-difference gradient used as a test oracle.
//
// Batches are column-major: one sample per column. Every type is templated on
// the scalar so that gradient checks can run in double while the same code
// backs the trained models.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "difclue/error.hpp"
#include "difclue/rng.hpp"

namespace difclue {

using Index = Eigen::Index;

template <typename T>
using NoDeduce = std::type_identity_t<T>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

enum class Activation : std::uint8_t { Identity = 0, Tanh = 1, Sigmoid = 2, Softmax = 3 };

template <typename Scalar>
struct Layer {
  Matrix<Scalar> weight;  // out x in
  Vector<Scalar> bias;    // out
  Activation activation = Activation::Identity;
};

template <typename Scalar>
struct MlpParams {
  std::vector<Layer<Scalar>> layers;

  Index input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }
  Index output_dim() const { return layers.empty() ? 0 : layers.back().weight.rows(); }

  Index parameter_count() const {
    Index n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  // Same layer shapes and activations, all entries zero.
  MlpParams zeros_like() const {
    MlpParams out;
    out.layers.reserve(layers.size());
    for (const auto& l : layers) {
      out.layers.push_back({Matrix<Scalar>::Zero(l.weight.rows(), l.weight.cols()),
                            Vector<Scalar>::Zero(l.bias.size()), l.activation});
    }
    return out;
  }

  bool all_finite() const {
    for (const auto& l : layers) {
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    }
    return true;
  }

  template <typename Other>
  MlpParams<Other> cast() const {
    MlpParams<Other> out;
    for (const auto& l : layers) {
      out.layers.push_back({l.weight.template cast<Other>(), l.bias.template cast<Other>(), l.activation});
    }
    return out;
  }

  bool operator==(const MlpParams& o) const {
    if (layers.size() != o.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& a = layers[i];
      const auto& b = o.layers[i];
      if (a.activation != b.activation || a.weight.rows() != b.weight.rows() ||
          a.weight.cols() != b.weight.cols() || a.bias.size() != b.bias.size()) {
        return false;
      }
      if (a.weight != b.weight || a.bias != b.bias) return false;
    }
    return true;
  }
};

using Mlp = MlpParams<double>;

// Glorot-uniform weights, zero biases. sizes = {in, hidden..., out}.
template <typename Scalar>
MlpParams<Scalar> make_mlp(std::span<const Index> sizes, Activation hidden, Activation output, Rng& rng) {
  if (sizes.size() < 2) throw ParameterError("make_mlp: need at least input and output sizes");
  MlpParams<Scalar> p;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const Index in = sizes[i];
    const Index out = sizes[i + 1];
    if (in < 1 || out < 1) throw ParameterError("make_mlp: layer sizes must be positive");
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    Layer<Scalar> layer;
    layer.weight.resize(out, in);
    for (Index r = 0; r < out; ++r) {
      for (Index c = 0; c < in; ++c) layer.weight(r, c) = static_cast<Scalar>(rng.uniform(-limit, limit));
    }
    layer.bias = Vector<Scalar>::Zero(out);
    layer.activation = (i + 2 == sizes.size()) ? output : hidden;
    p.layers.push_back(std::move(layer));
  }
  return p;
}

template <typename Scalar>
MlpParams<Scalar> make_mlp(std::initializer_list<Index> sizes, Activation hidden, Activation output, Rng& rng) {
  const std::vector<Index> v(sizes);
  return make_mlp<Scalar>(std::span<const Index>(v), hidden, output, rng);
}

// Flat parameter vector, layer by layer: weight row-major, then bias.
template <typename Scalar>
Vector<Scalar> flatten(const MlpParams<Scalar>& p) {
  Vector<Scalar> out(p.parameter_count());
  Index k = 0;
  for (const auto& l : p.layers) {
    for (Index r = 0; r < l.weight.rows(); ++r) {
      for (Index c = 0; c < l.weight.cols(); ++c) out[k++] = l.weight(r, c);
    }
    for (Index r = 0; r < l.bias.size(); ++r) out[k++] = l.bias[r];
  }
  return out;
}

template <typename Scalar>
void unflatten(MlpParams<Scalar>& p, const NoDeduce<Eigen::Ref<const Vector<Scalar>>>& flat) {
  if (flat.size() != p.parameter_count()) throw ShapeError("unflatten: parameter count mismatch");
  Index k = 0;
  for (auto& l : p.layers) {
    for (Index r = 0; r < l.weight.rows(); ++r) {
      for (Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = flat[k++];
    }
    for (Index r = 0; r < l.bias.size(); ++r) l.bias[r] = flat[k++];
  }
}

// Rounds every parameter to the nearest binary32 value so that a float32
// checkpoint reproduces the model exactly.
template <typename Scalar>
void round_to_binary32(MlpParams<Scalar>& p) {
  for (auto& l : p.layers) {
    l.weight = l.weight.template cast<float>().template cast<Scalar>();
    l.bias = l.bias.template cast<float>().template cast<Scalar>();
  }
}

namespace detail {

template <typename Scalar>
void activate_inplace(Activation a, Matrix<Scalar>& m) {
  switch (a) {
    case Activation::Identity:
      break;
    case Activation::Tanh:
      m = m.array().tanh().matrix();
      break;
    case Activation::Sigmoid:
      m = (Scalar(1) / (Scalar(1) + (-m.array()).exp())).matrix();
      break;
    case Activation::Softmax:
      for (Index c = 0; c < m.cols(); ++c) {
        auto col = m.col(c);
        const Scalar mx = col.maxCoeff();
        col = (col.array() - mx).exp().matrix();
        col /= col.sum();
      }
      break;
  }
}

// Maps a gradient w.r.t. the activation output to one w.r.t. its input.
template <typename Scalar>
Matrix<Scalar> activation_vjp(Activation a, const Matrix<Scalar>& out, const Matrix<Scalar>& grad) {
  switch (a) {
    case Activation::Identity:
      return grad;
    case Activation::Tanh:
      return (grad.array() * (Scalar(1) - out.array().square())).matrix();
    case Activation::Sigmoid:
      return (grad.array() * out.array() * (Scalar(1) - out.array())).matrix();
    case Activation::Softmax: {
      Matrix<Scalar> res(grad.rows(), grad.cols());
      for (Index c = 0; c < grad.cols(); ++c) {
        const Scalar dot = grad.col(c).dot(out.col(c));
        res.col(c) = (out.col(c).array() * (grad.col(c).array() - dot)).matrix();
      }
      return res;
    }
  }
  return grad;
}

template <typename Scalar>
void check_input(const MlpParams<Scalar>& p, Index rows, bool finite) {
  if (p.layers.empty()) throw ShapeError("mlp: network has no layers");
  if (rows != p.input_dim()) {
    throw ShapeError("mlp: input length " + std::to_string(rows) + " does not match first layer " +
                     std::to_string(p.input_dim()));
  }
  if (!finite) throw NumericError("mlp: non-finite input");
}

}  // namespace detail

// activations[0] is the input batch, activations[l + 1] the output of layer l.
template <typename Scalar>
struct MlpCache {
  std::vector<Matrix<Scalar>> activations;
};

template <typename Scalar>
struct ForwardPass {
  Matrix<Scalar> output;
  MlpCache<Scalar> cache;
};

template <typename Scalar>
ForwardPass<Scalar> mlp_forward(const MlpParams<Scalar>& p, const NoDeduce<Eigen::Ref<const Matrix<Scalar>>>& input) {
  detail::check_input(p, input.rows(), input.allFinite());
  ForwardPass<Scalar> fp;
  fp.cache.activations.reserve(p.layers.size() + 1);
  fp.cache.activations.emplace_back(input);
  for (const auto& l : p.layers) {
    Matrix<Scalar> z = l.weight * fp.cache.activations.back();
    z.colwise() += l.bias;
    detail::activate_inplace(l.activation, z);
    fp.cache.activations.push_back(std::move(z));
  }
  fp.output = fp.cache.activations.back();
  return fp;
}

// Single-sample inference without a cache. Per-sample evaluation keeps each
// result independent of how samples are batched.
template <typename Scalar>
Vector<Scalar> mlp_apply(const MlpParams<Scalar>& p, const NoDeduce<Eigen::Ref<const Vector<Scalar>>>& input) {
  detail::check_input(p, input.size(), input.allFinite());
  Vector<Scalar> a = input;
  for (const auto& l : p.layers) {
    Matrix<Scalar> z = l.weight * a + l.bias;
    detail::activate_inplace(l.activation, z);
    a = z;
  }
  return a;
}

// Output of every layer for one sample; entry l is layer l's activation.
template <typename Scalar>
std::vector<Vector<Scalar>> mlp_layer_outputs(const MlpParams<Scalar>& p, const NoDeduce<Eigen::Ref<const Vector<Scalar>>>& input) {
  detail::check_input(p, input.size(), input.allFinite());
  std::vector<Vector<Scalar>> outs;
  Vector<Scalar> a = input;
  for (const auto& l : p.layers) {
    Matrix<Scalar> z = l.weight * a + l.bias;
    detail::activate_inplace(l.activation, z);
    a = z;
    outs.push_back(a);
  }
  return outs;
}

template <typename Scalar>
struct MlpGradients {
  MlpParams<Scalar> params;  // shaped like the network
  Matrix<Scalar> input;      // gradient w.r.t. the input batch
};

// Whether grad_output refers to the network output or to the pre-activation
// of the output layer (e.g. softmax cross-entropy supplies p - y directly).
enum class GradAt { Output, OutputPreactivation };

// Exact gradient of sum(output .* grad_output) w.r.t. every parameter and the input.
template <typename Scalar>
MlpGradients<Scalar> mlp_backward(const MlpParams<Scalar>& p, const MlpCache<Scalar>& cache,
                                  const NoDeduce<Eigen::Ref<const Matrix<Scalar>>>& grad_output,
                                  GradAt at = GradAt::Output) {
  const std::size_t n = p.layers.size();
  if (cache.activations.size() != n + 1) throw ShapeError("mlp_backward: cache does not match network depth");
  const auto& out = cache.activations.back();
  if (grad_output.rows() != out.rows() || grad_output.cols() != out.cols()) {
    throw ShapeError("mlp_backward: grad_output shape does not match output");
  }
  MlpGradients<Scalar> g;
  g.params = p.zeros_like();
  Matrix<Scalar> delta = (at == GradAt::Output) ? detail::activation_vjp(p.layers[n - 1].activation, out, Matrix<Scalar>(grad_output))
                                                : Matrix<Scalar>(grad_output);
  for (std::size_t li = n; li-- > 0;) {
    const auto& a_in = cache.activations[li];
    if (a_in.cols() != delta.cols() || a_in.rows() != p.layers[li].weight.cols()) {
      throw ShapeError("mlp_backward: cache activation shape mismatch");
    }
    g.params.layers[li].weight.noalias() = delta * a_in.transpose();
    g.params.layers[li].bias = delta.rowwise().sum();
    Matrix<Scalar> back = p.layers[li].weight.transpose() * delta;
    if (li == 0) {
      g.input = std::move(back);
    } else {
      delta = detail::activation_vjp(p.layers[li - 1].activation, a_in, back);
    }
  }
  return g;
}

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar>
struct AdamState {
  AdamConfig config;
  MlpParams<Scalar> first_moment;
  MlpParams<Scalar> second_moment;
  std::int64_t step = 0;
};

template <typename Scalar>
AdamState<Scalar> make_adam(const MlpParams<Scalar>& p, AdamConfig config = {}) {
  return {config, p.zeros_like(), p.zeros_like(), 0};
}

// One bias-corrected Adam update of params in place.
template <typename Scalar>
void adam_step(AdamState<Scalar>& state, MlpParams<Scalar>& params, const MlpParams<Scalar>& grads) {
  if (grads.layers.size() != params.layers.size() || state.first_moment.layers.size() != params.layers.size()) {
    throw ShapeError("adam_step: layer count mismatch");
  }
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& gl = grads.layers[i];
    const auto& pl = params.layers[i];
    if (gl.weight.rows() != pl.weight.rows() || gl.weight.cols() != pl.weight.cols() ||
        gl.bias.size() != pl.bias.size() || state.first_moment.layers[i].weight.size() != pl.weight.size()) {
      throw ShapeError("adam_step: gradient shape mismatch");
    }
    if (!gl.weight.allFinite() || !gl.bias.allFinite()) throw NumericError("adam_step: non-finite gradient");
  }
  const auto& c = state.config;
  ++state.step;
  const Scalar b1 = static_cast<Scalar>(c.beta1);
  const Scalar b2 = static_cast<Scalar>(c.beta2);
  const Scalar corr1 = Scalar(1) - static_cast<Scalar>(std::pow(c.beta1, static_cast<double>(state.step)));
  const Scalar corr2 = Scalar(1) - static_cast<Scalar>(std::pow(c.beta2, static_cast<double>(state.step)));
  const Scalar lr = static_cast<Scalar>(c.learning_rate);
  const Scalar eps = static_cast<Scalar>(c.epsilon);

  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = b1 * m + (Scalar(1) - b1) * g;
    v = (b2 * v.array() + (Scalar(1) - b2) * g.array().square()).matrix();
    param.array() -= lr * (m.array() / corr1) / ((v.array() / corr2).sqrt() + eps);
  };
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    auto& m = state.first_moment.layers[i];
    auto& v = state.second_moment.layers[i];
    update(params.layers[i].weight, m.weight, v.weight, grads.layers[i].weight);
    update(params.layers[i].bias, m.bias, v.bias, grads.layers[i].bias);
  }
}

// Central-difference gradient of a scalar function.
template <typename Scalar, typename F>
Vector<Scalar> finite_diff_grad(F&& f, const NoDeduce<Eigen::Ref<const Vector<Scalar>>>& x, Scalar step) {
  if (!(step > Scalar(0))) throw ParameterError("finite_diff_grad: step must be positive");
  Vector<Scalar> probe = x;
  Vector<Scalar> grad(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const Scalar orig = probe[i];
    probe[i] = orig + step;
    const Scalar up = f(static_cast<const Vector<Scalar>&>(probe));
    probe[i] = orig - step;
    const Scalar down = f(static_cast<const Vector<Scalar>&>(probe));
    probe[i] = orig;
    grad[i] = (up - down) / (Scalar(2) * step);
  }
  return grad;
}

// Largest entrywise relative error |a - b| / max(|a|, |b|, floor).
template <typename Scalar>
Scalar max_relative_error(const NoDeduce<Eigen::Ref<const Vector<Scalar>>>& a, const NoDeduce<Eigen::Ref<const Vector<Scalar>>>& b,
                          Scalar floor = Scalar(1e-6)) {
  if (a.size() != b.size()) throw ShapeError("max_relative_error: size mismatch");
  Scalar worst = 0;
  for (Index i = 0; i < a.size(); ++i) {
    const Scalar denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace difclue
