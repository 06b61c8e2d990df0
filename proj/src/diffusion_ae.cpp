#include "difclue/diffusion_ae.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "difclue/classifier.hpp"

namespace difclue {

NoiseSchedule make_schedule(int timesteps, double beta_min, double beta_max) {
  if (timesteps < 2) throw ParameterError("make_schedule: need T >= 2");
  if (!(beta_min > 0.0 && beta_min < beta_max && beta_max < 1.0)) {
    throw ParameterError("make_schedule: need 0 < beta_min < beta_max < 1");
  }
  NoiseSchedule s;
  s.timesteps = timesteps;
  s.beta_min = beta_min;
  s.beta_max = beta_max;
  s.betas.resize(timesteps);
  s.alphas_bar.resize(timesteps + 1);
  s.alphas_bar[0] = 1.0;
  for (int t = 1; t <= timesteps; ++t) {
    const double frac = static_cast<double>(t - 1) / static_cast<double>(timesteps - 1);
    const double beta = beta_min + (beta_max - beta_min) * frac;
    s.betas[t - 1] = beta;
    s.alphas_bar[t] = s.alphas_bar[t - 1] * (1.0 - beta);
  }
  return s;
}

Eigen::VectorXd q_sample(const Eigen::Ref<const Eigen::VectorXd>& x0, int t,
                         const Eigen::Ref<const Eigen::VectorXd>& eps, const NoiseSchedule& schedule) {
  if (t < 0 || t > schedule.timesteps) throw ParameterError("q_sample: t out of range");
  if (x0.size() != eps.size()) throw ShapeError("q_sample: x0 and eps lengths differ");
  const double ab = schedule.alphas_bar[t];
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

Eigen::VectorXd time_embedding(int t, int timesteps, Index dim) {
  Eigen::VectorXd e(dim);
  const double u = static_cast<double>(t) / static_cast<double>(timesteps);
  for (Index k = 0; k < dim / 2; ++k) {
    const double w = std::numbers::pi * std::ldexp(1.0, static_cast<int>(k)) * u;
    e[2 * k] = std::sin(w);
    e[2 * k + 1] = std::cos(w);
  }
  if (dim % 2 == 1) e[dim - 1] = u;
  return e;
}

DiffusionAutoencoder make_autoencoder(Index sample_dim, const AutoencoderConfig& config, std::uint64_t seed) {
  if (sample_dim < 1 || config.latent_dim < 1 || config.time_embedding_dim < 1) {
    throw ParameterError("make_autoencoder: dimensions must be positive");
  }
  DiffusionAutoencoder m;
  m.sample_dim = sample_dim;
  m.latent_dim = config.latent_dim;
  m.time_embedding_dim = config.time_embedding_dim;
  m.schedule = make_schedule(config.timesteps, config.beta_min, config.beta_max);
  m.input_shift = Eigen::VectorXd::Zero(sample_dim);
  m.input_scale = 1.0;
  m.noise_skip = config.noise_skip;

  Rng enc_rng(derive_seed(seed, "dae-encoder-init"));
  std::vector<Index> enc_sizes{sample_dim};
  enc_sizes.insert(enc_sizes.end(), config.encoder_hidden.begin(), config.encoder_hidden.end());
  enc_sizes.push_back(config.latent_dim);
  m.sem_encoder = make_mlp<double>(std::span<const Index>(enc_sizes), Activation::Tanh, Activation::Identity, enc_rng);

  Rng den_rng(derive_seed(seed, "dae-denoiser-init"));
  std::vector<Index> den_sizes{sample_dim + config.latent_dim + config.time_embedding_dim};
  den_sizes.insert(den_sizes.end(), config.denoiser_hidden.begin(), config.denoiser_hidden.end());
  den_sizes.push_back(sample_dim);
  m.denoiser = make_mlp<double>(std::span<const Index>(den_sizes), Activation::Tanh, Activation::Identity, den_rng);
  return m;
}

double autoencoder_loss(const DiffusionAutoencoder& model, const NoisedBatch& batch, Mlp* encoder_grad,
                        Mlp* denoiser_grad) {
  const Index d = model.sample_dim;
  const Index dz = model.latent_dim;
  const Index de = model.time_embedding_dim;
  const Index n = batch.x0.cols();
  if (n == 0) throw ParameterError("autoencoder_loss: empty batch");
  if (batch.x0.rows() != d || batch.eps.rows() != d || batch.eps.cols() != n ||
      static_cast<Index>(batch.t.size()) != n) {
    throw ShapeError("autoencoder_loss: batch shape mismatch");
  }
  const auto& ab = model.schedule.alphas_bar;

  auto enc = mlp_forward(model.sem_encoder, batch.x0);
  Eigen::MatrixXd input(d + dz + de, n);
  for (Index i = 0; i < n; ++i) {
    const int t = batch.t[static_cast<std::size_t>(i)];
    if (t < 0 || t > model.schedule.timesteps) throw ParameterError("autoencoder_loss: t out of range");
    input.col(i).head(d) = std::sqrt(ab[t]) * batch.x0.col(i) + std::sqrt(1.0 - ab[t]) * batch.eps.col(i);
    input.col(i).segment(d, dz) = enc.output.col(i);
    input.col(i).tail(de) = time_embedding(t, model.schedule.timesteps, de);
  }
  auto den = mlp_forward(model.denoiser, input);
  Eigen::MatrixXd diff = den.output - batch.eps;
  if (model.noise_skip) {
    for (Index i = 0; i < n; ++i) {
      diff.col(i) += std::sqrt(1.0 - ab[batch.t[static_cast<std::size_t>(i)]]) * input.col(i).head(d);
    }
  }
  const double scale = 1.0 / static_cast<double>(n * d);
  const double loss = diff.squaredNorm() * scale;

  if (encoder_grad != nullptr || denoiser_grad != nullptr) {
    const Eigen::MatrixXd g_out = 2.0 * scale * diff;
    auto den_g = mlp_backward(model.denoiser, den.cache, g_out);
    if (denoiser_grad != nullptr) *denoiser_grad = std::move(den_g.params);
    if (encoder_grad != nullptr) {
      const Eigen::MatrixXd g_z = den_g.input.middleRows(d, dz);
      *encoder_grad = mlp_backward(model.sem_encoder, enc.cache, g_z).params;
    }
  }
  return loss;
}

void rescale_latent(DiffusionAutoencoder& model, const Eigen::MatrixXd& normalized, double target_variance) {
  if (!(target_variance > 0.0)) throw ParameterError("rescale_latent: target variance must be positive");
  const Eigen::MatrixXd codes = mlp_forward(model.sem_encoder, normalized).output;
  const Eigen::MatrixXd centered = codes.colwise() - codes.rowwise().mean();
  const double variance = centered.squaredNorm() / static_cast<double>(codes.cols());
  if (!(variance > 0.0)) return;  // collapsed encoder: nothing to scale
  const double c = std::sqrt(target_variance / variance);
  auto& out = model.sem_encoder.layers.back();
  out.weight *= c;
  out.bias *= c;
  model.denoiser.layers.front().weight.middleCols(model.sample_dim, model.latent_dim) /= c;
}

TrainedAutoencoder train_autoencoder(const Eigen::MatrixXd& dataset, const AutoencoderConfig& config,
                                     std::uint64_t seed) {
  if (dataset.cols() == 0 || dataset.rows() == 0) throw ParameterError("train_autoencoder: empty dataset");
  if (!dataset.allFinite()) throw NumericError("train_autoencoder: non-finite sample");
  if (config.epochs < 1 || config.batch_size < 1) throw ParameterError("train_autoencoder: bad schedule");
  TrainedAutoencoder out;
  out.model = make_autoencoder(dataset.rows(), config, seed);
  DiffusionAutoencoder& m = out.model;
  m.input_shift = dataset.rowwise().mean().cast<float>().cast<double>();
  const Eigen::MatrixXd centered = dataset.colwise() - m.input_shift;
  const double spread = std::sqrt(centered.squaredNorm() / static_cast<double>(centered.size()));
  m.input_scale = spread > 0.0 ? static_cast<double>(static_cast<float>(spread)) : 1.0;
  const Eigen::MatrixXd normalized = centered / m.input_scale;

  AdamConfig adam_cfg;
  adam_cfg.learning_rate = config.learning_rate;
  auto enc_adam = make_adam(m.sem_encoder, adam_cfg);
  auto den_adam = make_adam(m.denoiser, adam_cfg);

  Rng order_rng(derive_seed(seed, "dae-order"));
  Rng noise_rng(derive_seed(seed, "dae-noise"));
  std::vector<Index> order(static_cast<std::size_t>(dataset.cols()));
  std::iota(order.begin(), order.end(), Index{0});
  const auto T = static_cast<std::uint64_t>(config.timesteps);
  const auto bs = static_cast<std::size_t>(config.batch_size);

  Mlp enc_g;
  Mlp den_g;
  NoisedBatch batch;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    order_rng.shuffle(order.begin(), order.end());
    double total = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      const std::span<const Index> idx(order.data() + start, end - start);
      batch.x0 = select_columns(normalized, idx);
      batch.t.resize(idx.size());
      batch.eps.resize(dataset.rows(), static_cast<Index>(idx.size()));
      for (std::size_t i = 0; i < idx.size(); ++i) {
        batch.t[i] = static_cast<int>(noise_rng.below(T + 1));
        for (Index r = 0; r < dataset.rows(); ++r) batch.eps(r, static_cast<Index>(i)) = noise_rng.normal();
      }
      total += autoencoder_loss(m, batch, &enc_g, &den_g);
      ++batches;
      adam_step(enc_adam, m.sem_encoder, enc_g);
      adam_step(den_adam, m.denoiser, den_g);
    }
    out.loss_history.push_back(total / batches);
  }
  if (config.latent_variance > 0.0) rescale_latent(m, normalized, config.latent_variance);
  round_to_binary32(m.sem_encoder);
  round_to_binary32(m.denoiser);
  return out;
}

SemanticCode encode_semantic(const DiffusionAutoencoder& model, const Eigen::Ref<const Eigen::VectorXd>& x0) {
  if (x0.size() != model.sample_dim) throw ShapeError("encode_semantic: sample length mismatch");
  return {mlp_apply(model.sem_encoder, model.normalize(x0))};
}

Eigen::VectorXd predict_noise(const DiffusionAutoencoder& model, const Eigen::Ref<const Eigen::VectorXd>& x_t,
                              const SemanticCode& z, int t) {
  if (x_t.size() != model.sample_dim || z.z.size() != model.latent_dim) {
    throw ShapeError("predict_noise: input length mismatch");
  }
  if (t < 0 || t > model.schedule.timesteps) throw ParameterError("predict_noise: t out of range");
  Eigen::VectorXd input(model.sample_dim + model.latent_dim + model.time_embedding_dim);
  input << x_t, z.z, time_embedding(t, model.schedule.timesteps, model.time_embedding_dim);
  Eigen::VectorXd eps = mlp_apply(model.denoiser, input);
  if (model.noise_skip) eps += std::sqrt(1.0 - model.schedule.alphas_bar[t]) * x_t;
  return eps;
}

std::vector<int> ddim_timesteps(const NoiseSchedule& schedule, int steps) {
  const int T = schedule.timesteps;
  if (steps < 1 || steps > T) throw ParameterError("ddim: steps must be in [1, T]");
  if (T % steps != 0) {
    throw ParameterError("ddim: " + std::to_string(steps) + " steps do not divide T = " + std::to_string(T));
  }
  std::vector<int> ts;
  const int stride = T / steps;
  for (int i = 0; i <= steps; ++i) ts.push_back(i * stride);
  return ts;
}

namespace {

// Moves x from time `from` to time `to` along the deterministic DDIM path,
// using the noise predicted at `from`.
Eigen::VectorXd ddim_move(const DiffusionAutoencoder& model, const Eigen::VectorXd& x, const SemanticCode& z, int from,
                          int to) {
  const auto& ab = model.schedule.alphas_bar;
  const Eigen::VectorXd eps = predict_noise(model, x, z, from);
  const Eigen::VectorXd x0_hat = (x - std::sqrt(1.0 - ab[from]) * eps) / std::sqrt(ab[from]);
  return std::sqrt(ab[to]) * x0_hat + std::sqrt(1.0 - ab[to]) * eps;
}

}  // namespace

StochasticCode ddim_invert(const DiffusionAutoencoder& model, const Eigen::Ref<const Eigen::VectorXd>& x0,
                           const SemanticCode& z, int steps) {
  if (x0.size() != model.sample_dim) throw ShapeError("ddim_invert: sample length mismatch");
  const auto ts = ddim_timesteps(model.schedule, steps);
  Eigen::VectorXd x = model.normalize(x0);
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) x = ddim_move(model, x, z, ts[i], ts[i + 1]);
  return {std::move(x)};
}

Eigen::VectorXd ddim_decode(const DiffusionAutoencoder& model, const SemanticCode& z, const StochasticCode& x_T,
                            int steps) {
  if (x_T.x_T.size() != model.sample_dim) throw ShapeError("ddim_decode: x_T length mismatch");
  if (!x_T.x_T.allFinite() || !z.z.allFinite()) throw NumericError("ddim_decode: non-finite code");
  const auto ts = ddim_timesteps(model.schedule, steps);
  Eigen::VectorXd x = x_T.x_T;
  for (std::size_t i = ts.size() - 1; i > 0; --i) x = ddim_move(model, x, z, ts[i], ts[i - 1]);
  return model.denormalize(x);
}

Eigen::VectorXd reconstruct(const DiffusionAutoencoder& model, const Eigen::Ref<const Eigen::VectorXd>& x0, int steps) {
  const SemanticCode z = encode_semantic(model, x0);
  return ddim_decode(model, z, ddim_invert(model, x0, z, steps), steps);
}

}  // namespace difclue
