#include <doctest.h>

#include <cmath>

#include "difclue/diffusion_ae.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

using namespace difclue;
using difclue::testing::gauss_pipeline;

namespace {

AutoencoderConfig tiny_config() {
  AutoencoderConfig c;
  c.latent_dim = 2;
  c.timesteps = 20;
  c.encoder_hidden = {8};
  c.denoiser_hidden = {16};
  c.time_embedding_dim = 4;
  c.epochs = 3;
  c.batch_size = 8;
  return c;
}

// Model whose denoiser output is identically zero.
DiffusionAutoencoder zero_prediction_model() {
  AutoencoderConfig c = tiny_config();
  c.noise_skip = false;
  auto m = make_autoencoder(3, c, 5);
  m.denoiser.layers.back().weight.setZero();
  m.denoiser.layers.back().bias.setZero();
  return m;
}

double mse(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).squaredNorm() / static_cast<double>(a.size()); }

}  // namespace

TEST_CASE("schedule products") {
  const auto s = make_schedule(2, 0.1, 0.2);
  CHECK(s.alphas_bar[0] == 1.0);
  CHECK(s.alphas_bar[1] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(s.alphas_bar[2] == doctest::Approx(0.72).epsilon(1e-15));

  const auto t = make_schedule(100, 1e-4, 0.02);
  double prod = 1.0;
  for (int i = 0; i < 100; ++i) prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * i / 99.0);
  CHECK(t.alphas_bar[0] == 1.0);
  CHECK(t.alphas_bar[100] == doctest::Approx(prod).epsilon(1e-12));
  for (int i = 1; i <= 100; ++i) CHECK(t.alphas_bar[i] < t.alphas_bar[i - 1]);
  for (int i = 1; i < 100; ++i) CHECK(t.betas[i] > t.betas[i - 1]);
}

TEST_CASE("schedule rejects bad ranges") {
  CHECK_THROWS_AS(make_schedule(1, 0.1, 0.2), ParameterError);
  CHECK_THROWS_AS(make_schedule(10, 0.2, 0.1), ParameterError);
  CHECK_THROWS_AS(make_schedule(10, 0.0, 0.1), ParameterError);
  CHECK_THROWS_AS(make_schedule(10, 0.1, 1.0), ParameterError);
}

TEST_CASE("q_sample closed forms") {
  const auto s = make_schedule(10, 1e-4, 0.02);
  const Eigen::Vector3d x0(1, -2, 3);
  const Eigen::Vector3d eps(0.3, 0.1, -0.7);
  CHECK(q_sample(x0, 0, eps, s) == Eigen::VectorXd(x0));

  NoiseSchedule quarter = s;
  quarter.alphas_bar[4] = 0.25;
  const Eigen::VectorXd r = q_sample(Eigen::Vector3d::Zero(), 4, Eigen::Vector3d::UnitX(), quarter);
  CHECK(r[0] == doctest::Approx(std::sqrt(0.75)).epsilon(1e-15));
  CHECK(r[1] == 0.0);
  CHECK(r[2] == 0.0);

  CHECK_THROWS_AS(q_sample(x0, -1, eps, s), ParameterError);
  CHECK_THROWS_AS(q_sample(x0, 11, eps, s), ParameterError);
}

TEST_CASE("q_sample moments over many draws") {
  const auto s = make_schedule(100, 1e-4, 0.02);
  const int t = 60;
  const double ab = s.alphas_bar[t];
  const Eigen::Vector2d x0(1.5, -0.5);
  const int n = 10000;
  Rng rng(77);
  Eigen::Vector2d sum = Eigen::Vector2d::Zero(), sq = Eigen::Vector2d::Zero();
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d eps(rng.normal(), rng.normal());
    const Eigen::VectorXd x = q_sample(x0, t, eps, s);
    sum += x;
    sq += x.array().square().matrix();
  }
  const double var = 1.0 - ab;
  for (int k = 0; k < 2; ++k) {
    const double mean = sum[k] / n;
    const double v = sq[k] / n - mean * mean;
    CHECK(std::abs(mean - std::sqrt(ab) * x0[k]) < 3.0 * std::sqrt(var / n));
    // std error of a normal sample variance: var * sqrt(2 / (n - 1))
    CHECK(std::abs(v - var) < 3.0 * var * std::sqrt(2.0 / (n - 1)));
  }
}

TEST_CASE("zero-prediction denoiser: inversion scales, decoding unscales") {
  const auto m = zero_prediction_model();
  const Eigen::Vector3d x0(0.4, -1.0, 2.0);
  const SemanticCode z = encode_semantic(m, x0);
  const double abT = m.schedule.alphas_bar[m.schedule.timesteps];
  for (int steps : {1, 5, 20}) {
    const auto xT = ddim_invert(m, x0, z, steps);
    CHECK((xT.x_T - std::sqrt(abT) * x0).norm() < 1e-12);
    const Eigen::VectorXd dec = ddim_decode(m, z, xT, steps);
    CHECK((dec - xT.x_T / std::sqrt(abT)).norm() < 1e-12);
  }
}

TEST_CASE("zero-weight encoder returns its bias") {
  auto m = make_autoencoder(3, tiny_config(), 1);
  for (auto& l : m.sem_encoder.layers) l.weight.setZero();
  m.sem_encoder.layers.back().bias = Eigen::Vector2d(0.25, -4.0);
  CHECK(encode_semantic(m, Eigen::Vector3d(9, 8, 7)).z == Eigen::VectorXd(Eigen::Vector2d(0.25, -4.0)));
}

TEST_CASE("DDIM timestep grid") {
  const auto s = make_schedule(100, 1e-4, 0.02);
  CHECK(ddim_timesteps(s, 4) == std::vector<int>{0, 25, 50, 75, 100});
  CHECK_THROWS_AS(ddim_timesteps(s, 3), ParameterError);
  CHECK_THROWS_AS(ddim_timesteps(s, 0), ParameterError);
  CHECK_THROWS_AS(ddim_timesteps(s, 101), ParameterError);
}

TEST_CASE("shape and range errors") {
  const auto m = make_autoencoder(3, tiny_config(), 1);
  const SemanticCode z{Eigen::Vector2d::Zero()};
  CHECK_THROWS_AS(encode_semantic(m, Eigen::Vector2d::Zero()), ShapeError);
  CHECK_THROWS_AS(ddim_invert(m, Eigen::Vector4d::Zero(), z, 5), ShapeError);
  CHECK_THROWS_AS(ddim_decode(m, z, StochasticCode{Eigen::Vector2d::Zero()}, 5), ShapeError);
  CHECK_THROWS_AS(predict_noise(m, Eigen::Vector3d::Zero(), z, 21), ParameterError);
}

TEST_CASE("autoencoder gradients match finite differences") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    CHECK(difclue::testing::denoiser_gradient_error(s) < difclue::testing::kGradTolerance);
    CHECK(difclue::testing::encoder_gradient_error(s) < difclue::testing::kGradTolerance);
  }
}

TEST_CASE("latent rescale leaves decoding unchanged") {
  auto m = make_autoencoder(3, tiny_config(), 3);
  Rng rng(4);
  const Eigen::MatrixXd data = difclue::testing::normal_matrix(3, 30, rng);
  const Eigen::VectorXd x = data.col(0);
  const auto z0 = encode_semantic(m, x);
  const auto xT0 = ddim_invert(m, x, z0, 5);
  auto r = m;
  rescale_latent(r, data, 4.0);
  Eigen::MatrixXd codes(2, 30);
  for (Index i = 0; i < 30; ++i) codes.col(i) = encode_semantic(r, data.col(i)).z;
  const Eigen::MatrixXd centered = codes.colwise() - codes.rowwise().mean();
  CHECK(centered.squaredNorm() / 30.0 == doctest::Approx(4.0).epsilon(1e-12));
  const auto z1 = encode_semantic(r, x);
  CHECK((ddim_invert(r, x, z1, 5).x_T - xT0.x_T).norm() < 1e-10);
  CHECK_THROWS_AS(rescale_latent(r, data, 0.0), ParameterError);
}

TEST_CASE("training is deterministic") {
  Rng rng(9);
  const Eigen::MatrixXd data = difclue::testing::normal_matrix(3, 40, rng);
  const auto a = train_autoencoder(data, tiny_config(), 42);
  const auto b = train_autoencoder(data, tiny_config(), 42);
  CHECK(a.model == b.model);
  CHECK(a.loss_history == b.loss_history);
  const auto c = train_autoencoder(data, tiny_config(), 43);
  CHECK_FALSE(a.model == c.model);
  const Eigen::VectorXd x = data.col(3);
  const auto z = encode_semantic(a.model, x);
  CHECK(z == encode_semantic(a.model, x));
  CHECK(ddim_invert(a.model, x, z, 5) == ddim_invert(a.model, x, z, 5));
  const auto xT = ddim_invert(a.model, x, z, 5);
  CHECK(ddim_decode(a.model, z, xT, 5) == ddim_decode(a.model, z, xT, 5));
}

TEST_CASE("constant dataset reconstructs") {
  const Eigen::MatrixXd data = Eigen::Vector3d(0.5, -1.0, 2.0).replicate(1, 64);
  auto c = tiny_config();
  c.epochs = 30;
  const auto ae = train_autoencoder(data, c, 1);
  CHECK(mse(reconstruct(ae.model, data.col(0), 10), data.col(0)) < 1e-2);
}

TEST_CASE("trained gauss-mix model") {
  const auto& p = gauss_pipeline();
  const auto& m = p.ae.model;
  const auto& loss = p.ae.loss_history;
  REQUIRE(loss.size() >= 2);
  CHECK(loss.back() < 0.5 * loss.front());

  const int steps = p.cfg.dae.ddim_steps;
  double total = 0.0;
  for (Index i = 0; i < p.mixed.size(); i += 7) total += mse(reconstruct(m, p.mixed.values.col(i), steps), p.mixed.values.col(i));
  CHECK(total / static_cast<double>((p.mixed.size() + 6) / 7) < 1e-2);

  SUBCASE("codes cluster by mode") {
    double same = 0.0, diff = 0.0;
    int ns = 0, nd = 0;
    for (Index i = 0; i < p.raw.size(); i += 5) {
      for (Index j = i + 5; j < p.raw.size(); j += 11) {
        const double dist = (encode_semantic(m, p.raw.values.col(i)).z - encode_semantic(m, p.raw.values.col(j)).z).norm();
        if (p.raw.modes[i] == p.raw.modes[j]) {
          same += dist;
          ++ns;
        } else {
          diff += dist;
          ++nd;
        }
      }
    }
    REQUIRE(ns > 0);
    REQUIRE(nd > 0);
    CHECK(same / ns < diff / nd);
  }

  SUBCASE("semantic code decides the decoded class") {
    // z from one positive mode, x_T from the other
    const auto a = p.raw.indices_with_label(p.cfg.mix_a);
    const auto b = p.raw.indices_with_label(p.cfg.mix_b);
    int hits = 0, trials = 0;
    for (std::size_t i = 0; i < 50; ++i) {
      const Index ia = a[(i * 7) % a.size()];
      const Index ib = b[(i * 13) % b.size()];
      for (int dir = 0; dir < 2; ++dir) {
        const Index src_z = dir == 0 ? ia : ib;
        const Index src_x = dir == 0 ? ib : ia;
        const auto zs = encode_semantic(m, p.raw.values.col(src_z));
        const auto zx = encode_semantic(m, p.raw.values.col(src_x));
        const auto xT = ddim_invert(m, p.raw.values.col(src_x), zx, steps);
        const Eigen::VectorXd dec = ddim_decode(m, zs, xT, steps);
        hits += p.oracle.predict(dec) == p.raw.labels[src_z];
        ++trials;
      }
    }
    CHECK(static_cast<double>(hits) / trials >= 0.8);
  }
}
