#pragma once
// Seeded random instances of every trainable component, each returning the
// worst relative error between its analytic gradient and central differences.

#include <algorithm>
#include <cstdint>
#include <vector>

#include "difclue/classifier.hpp"
#include "difclue/diffusion_ae.hpp"
#include "difclue/mode_discovery.hpp"

namespace difclue::testing {

inline constexpr double kGradTolerance = 1e-4;
inline constexpr double kFdStep = 1e-5;

inline Eigen::MatrixXd normal_matrix(Index rows, Index cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Index c = 0; c < cols; ++c) {
    for (Index r = 0; r < rows; ++r) m(r, c) = rng.normal();
  }
  return m;
}

inline void jitter_biases(Mlp& p, Rng& rng) {
  for (auto& l : p.layers) {
    for (Index i = 0; i < l.bias.size(); ++i) l.bias[i] = rng.uniform(-0.3, 0.3);
  }
}

struct AutoencoderInstance {
  DiffusionAutoencoder model;
  NoisedBatch batch;
};

inline AutoencoderInstance autoencoder_instance(std::uint64_t seed) {
  AutoencoderConfig c;
  c.latent_dim = 2;
  c.timesteps = 10;
  c.encoder_hidden = {5};
  c.denoiser_hidden = {6, 6};
  c.time_embedding_dim = 4;
  c.noise_skip = (seed % 2 == 0);
  Rng rng(derive_seed(seed, "gradcheck-ae"));
  AutoencoderInstance inst{make_autoencoder(3, c, seed), {}};
  jitter_biases(inst.model.sem_encoder, rng);
  jitter_biases(inst.model.denoiser, rng);
  inst.batch.x0 = normal_matrix(3, 4, rng);
  inst.batch.eps = normal_matrix(3, 4, rng);
  for (int i = 0; i < 4; ++i) inst.batch.t.push_back(static_cast<int>(rng.below(11)));
  return inst;
}

inline double denoiser_gradient_error(std::uint64_t seed) {
  auto inst = autoencoder_instance(seed);
  Mlp analytic;
  autoencoder_loss(inst.model, inst.batch, nullptr, &analytic);
  DiffusionAutoencoder probe = inst.model;
  auto f = [&](const Eigen::VectorXd& theta) {
    unflatten(probe.denoiser, theta);
    return autoencoder_loss(probe, inst.batch);
  };
  const Eigen::VectorXd numeric = finite_diff_grad<double>(f, flatten(inst.model.denoiser), kFdStep);
  return max_relative_error<double>(flatten(analytic), numeric);
}

inline double encoder_gradient_error(std::uint64_t seed) {
  auto inst = autoencoder_instance(seed);
  Mlp analytic;
  autoencoder_loss(inst.model, inst.batch, &analytic, nullptr);
  DiffusionAutoencoder probe = inst.model;
  auto f = [&](const Eigen::VectorXd& theta) {
    unflatten(probe.sem_encoder, theta);
    return autoencoder_loss(probe, inst.batch);
  };
  const Eigen::VectorXd numeric = finite_diff_grad<double>(f, flatten(inst.model.sem_encoder), kFdStep);
  return max_relative_error<double>(flatten(analytic), numeric);
}

inline double direction_gradient_error(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "gradcheck-direction"));
  const int k = 2 + static_cast<int>(seed % 3);
  const Eigen::MatrixXd codes = normal_matrix(3, 12, rng);
  std::vector<int> labels;
  for (int i = 0; i < 12; ++i) labels.push_back(i % k);
  const Eigen::VectorXd params = normal_matrix(k * 3 + k, 1, rng);
  Eigen::VectorXd analytic;
  direction_loss(params, codes, labels, k, &analytic);
  auto f = [&](const Eigen::VectorXd& p) { return direction_loss(p, codes, labels, k); };
  return max_relative_error<double>(analytic, finite_diff_grad<double>(f, params, kFdStep));
}

inline double oracle_gradient_error(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "gradcheck-oracle"));
  Mlp net = make_mlp<double>({4, 6, 3}, Activation::Tanh, Activation::Softmax, rng);
  jitter_biases(net, rng);
  const Eigen::MatrixXd x = normal_matrix(4, 8, rng);
  std::vector<int> labels;
  for (int i = 0; i < 8; ++i) labels.push_back(static_cast<int>(rng.below(3)));
  Mlp analytic;
  softmax_cross_entropy(net, x, labels, &analytic);
  Mlp probe = net;
  auto f = [&](const Eigen::VectorXd& theta) {
    unflatten(probe, theta);
    return softmax_cross_entropy(probe, x, labels);
  };
  return max_relative_error<double>(flatten(analytic), finite_diff_grad<double>(f, flatten(net), kFdStep));
}

template <class Fn>
double worst_over_seeds(Fn&& fn, int instances) {
  double worst = 0.0;
  for (int s = 0; s < instances; ++s) worst = std::max(worst, fn(static_cast<std::uint64_t>(1000 + s)));
  return worst;
}

}  // namespace difclue::testing
