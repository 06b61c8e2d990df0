#pragma once
// Diffusion autoencoder: a semantic encoder x0 -> z_sem, an epsilon-predicting
// denoiser conditioned on (x_t, z_sem, t), and deterministic DDIM (eta = 0)
// inversion/decoding between x0 and the stochastic subcode x_T.

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "difclue/tensor_nn.hpp"

namespace difclue {

// betas[t - 1] is beta_t for t = 1..T; alphas_bar[t] = prod_{s <= t} (1 - beta_s),
// alphas_bar[0] = 1.
struct NoiseSchedule {
  int timesteps = 0;
  double beta_min = 0.0;
  double beta_max = 0.0;
  Eigen::VectorXd betas;
  Eigen::VectorXd alphas_bar;
};

// Linear betas from beta_min to beta_max over T steps.
NoiseSchedule make_schedule(int timesteps, double beta_min, double beta_max);

// sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps
Eigen::VectorXd q_sample(const Eigen::Ref<const Eigen::VectorXd>& x0, int t,
                         const Eigen::Ref<const Eigen::VectorXd>& eps, const NoiseSchedule& schedule);

// Sinusoidal features of t / T: (sin(pi 2^k u), cos(pi 2^k u)) for k < dim / 2.
Eigen::VectorXd time_embedding(int t, int timesteps, Index dim);

struct SemanticCode {
  Eigen::VectorXd z;
  bool operator==(const SemanticCode& o) const { return z.size() == o.z.size() && z == o.z; }
};

struct StochasticCode {
  Eigen::VectorXd x_T;
  bool operator==(const StochasticCode& o) const { return x_T.size() == o.x_T.size() && x_T == o.x_T; }
};

struct AutoencoderConfig {
  Index latent_dim = 8;
  int timesteps = 100;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  int ddim_steps = 20;
  int epochs = 100;
  Index batch_size = 64;
  double learning_rate = 1e-3;
  std::vector<Index> encoder_hidden = {64, 64};
  std::vector<Index> denoiser_hidden = {128, 128, 128};
  Index time_embedding_dim = 8;
  // Adds sqrt(1 - alpha_bar_t) * x_t to the denoiser output, so the network
  // only models the residual; needed once the sample dim exceeds the width.
  bool noise_skip = true;
  // After training, codes are rescaled (exactly, through the encoder output
  // layer and the denoiser's z inputs) to this total variance; 0 disables.
  double latent_variance = 4.0;
};

// Both networks and the diffusion process act on normalized samples
// (x - input_shift) / input_scale; encode/invert take and decode returns raw
// samples, while x_T lives in the normalized space.
struct DiffusionAutoencoder {
  Index sample_dim = 0;
  Index latent_dim = 0;
  Index time_embedding_dim = 0;
  Mlp sem_encoder;  // sample_dim -> latent_dim
  Mlp denoiser;     // sample_dim + latent_dim + time_embedding_dim -> sample_dim
  NoiseSchedule schedule;
  Eigen::VectorXd input_shift;  // per-coordinate training mean
  double input_scale = 1.0;     // global std of the centered training data
  bool noise_skip = false;

  Eigen::VectorXd normalize(const Eigen::Ref<const Eigen::VectorXd>& x) const { return (x - input_shift) / input_scale; }
  Eigen::VectorXd denormalize(const Eigen::Ref<const Eigen::VectorXd>& x) const { return input_shift + input_scale * x; }

  bool operator==(const DiffusionAutoencoder& o) const {
    return sample_dim == o.sample_dim && latent_dim == o.latent_dim && time_embedding_dim == o.time_embedding_dim &&
           sem_encoder == o.sem_encoder && denoiser == o.denoiser && input_scale == o.input_scale && noise_skip == o.noise_skip &&
           input_shift.size() == o.input_shift.size() && input_shift == o.input_shift &&
           schedule.timesteps == o.schedule.timesteps &&
           schedule.beta_min == o.schedule.beta_min && schedule.beta_max == o.schedule.beta_max;
  }
};

// Fresh, untrained model with Glorot-initialized networks and identity
// normalization.
DiffusionAutoencoder make_autoencoder(Index sample_dim, const AutoencoderConfig& config, std::uint64_t seed);

// Multiplies every code by a constant so the codes of `normalized` have the
// given total variance, compensating in the denoiser; decoding is unchanged.
void rescale_latent(DiffusionAutoencoder& model, const Eigen::MatrixXd& normalized, double target_variance);

// One minibatch of the epsilon-prediction objective on normalized samples:
// columns of x0 and eps pair with entries of t.
struct NoisedBatch {
  Eigen::MatrixXd x0;
  std::vector<int> t;
  Eigen::MatrixXd eps;
};

// Mean squared epsilon error over batch and coordinates. Gradients flow through
// the denoiser into the semantic encoder.
double autoencoder_loss(const DiffusionAutoencoder& model, const NoisedBatch& batch, Mlp* encoder_grad = nullptr,
                        Mlp* denoiser_grad = nullptr);

struct TrainedAutoencoder {
  DiffusionAutoencoder model;
  std::vector<double> loss_history;  // mean minibatch loss per epoch
};

// dataset: one sample per column. Sets the input normalization from the data;
// final parameters are rounded to binary32.
TrainedAutoencoder train_autoencoder(const Eigen::MatrixXd& dataset, const AutoencoderConfig& config,
                                     std::uint64_t seed);

SemanticCode encode_semantic(const DiffusionAutoencoder& model, const Eigen::Ref<const Eigen::VectorXd>& x0);

// Denoiser output for a normalized x_t.
Eigen::VectorXd predict_noise(const DiffusionAutoencoder& model, const Eigen::Ref<const Eigen::VectorXd>& x_t,
                              const SemanticCode& z, int t);

// Uniform-stride subsequence 0, T/steps, ..., T. steps must divide T.
std::vector<int> ddim_timesteps(const NoiseSchedule& schedule, int steps);

StochasticCode ddim_invert(const DiffusionAutoencoder& model, const Eigen::Ref<const Eigen::VectorXd>& x0,
                           const SemanticCode& z, int steps);

Eigen::VectorXd ddim_decode(const DiffusionAutoencoder& model, const SemanticCode& z, const StochasticCode& x_T,
                            int steps);

// ddim_decode(encode, ddim_invert(encode)) for one sample.
Eigen::VectorXd reconstruct(const DiffusionAutoencoder& model, const Eigen::Ref<const Eigen::VectorXd>& x0, int steps);

}  // namespace difclue
