#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>

#include "difclue/metrics.hpp"
#include "gradcheck.hpp"

using namespace difclue;
using difclue::testing::normal_matrix;

namespace {

constexpr double kFdOracleTol = 1e-6;
constexpr double kCorrelationTol = 1e-9;

// Tr((Sa Sb)^(1/2)) from the (real, nonnegative) spectrum of the product.
double frechet_oracle(const GaussianFit& a, const GaussianFit& b) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(a.covariance * b.covariance, false);
  double tr_root = 0.0;
  for (Index i = 0; i < es.eigenvalues().size(); ++i) tr_root += std::sqrt(std::sqrt(std::norm(es.eigenvalues()[i])));
  return (a.mean - b.mean).squaredNorm() + a.covariance.trace() + b.covariance.trace() - 2.0 * tr_root;
}

GaussianFit gaussian(std::initializer_list<double> mean, const Eigen::MatrixXd& cov) {
  GaussianFit g;
  g.mean = Eigen::VectorXd::Map(mean.begin(), static_cast<Index>(mean.size()));
  g.covariance = cov;
  return g;
}

double direct_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

std::vector<SweepPoint> trajectory(const std::vector<double>& a, const std::vector<double>& p) {
  std::vector<SweepPoint> t;
  for (std::size_t i = 0; i < a.size(); ++i) t.push_back({a[i], p[i]});
  return t;
}

OracleClassifier argmax_oracle(int k) {
  OracleClassifier o;
  o.classifier.num_classes = k;
  o.classifier.net.layers.push_back({10.0 * Eigen::MatrixXd::Identity(k, k), Eigen::VectorXd::Zero(k), Activation::Softmax});
  return o;
}

}  // namespace

TEST_CASE("gaussian fit closed forms") {
  Eigen::MatrixXd two(2, 2);
  two << 0, 2,
         0, 0;
  const auto g = fit_gaussian(two);
  CHECK(g.mean == Eigen::VectorXd(Eigen::Vector2d(1, 0)));
  CHECK(g.covariance(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(g.covariance(0, 1) == 0.0);
  CHECK(g.covariance(1, 1) == 0.0);

  const auto same = fit_gaussian(Eigen::Vector3d(1, 2, 3).replicate(1, 7));
  CHECK(same.covariance.isZero(0.0));
}

TEST_CASE("gaussian fit matches a two-pass computation") {
  Rng rng(41);
  const Eigen::MatrixXd x = normal_matrix(3, 50, rng);
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (Index i = 0; i < 50; ++i) mean += x.col(i);
  mean /= 50.0;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (Index i = 0; i < 50; ++i) cov += (x.col(i) - mean) * (x.col(i) - mean).transpose();
  cov /= 49.0;
  const auto g = fit_gaussian(x);
  CHECK((g.mean - mean).norm() < 1e-14);
  CHECK((g.covariance - cov).norm() < 1e-13);
  CHECK((g.covariance - g.covariance.transpose()).norm() == 0.0);
}

TEST_CASE("frechet distance 1-d closed forms") {
  Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(1, 1);
  CHECK(frechet_distance(gaussian({0.0}, zero), gaussian({1.0}, zero)) == 1.0);
  Eigen::MatrixXd one = Eigen::MatrixXd::Constant(1, 1, 1.0);
  Eigen::MatrixXd four = Eigen::MatrixXd::Constant(1, 1, 4.0);
  CHECK(frechet_distance(gaussian({0.0}, one), gaussian({0.0}, four)) == 1.0);
  const auto g = gaussian({0.3, -2.0}, Eigen::Matrix2d{{2.0, 0.5}, {0.5, 1.0}});
  CHECK(frechet_distance(g, g) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(frechet_distance(g, g) >= 0.0);
}

TEST_CASE("frechet distance matches the product-spectrum oracle") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(500 + s);
    const auto a = fit_gaussian(normal_matrix(4, 30, rng));
    Eigen::MatrixXd raw = normal_matrix(4, 30, rng);
    raw.row(0) *= 3.0;
    const auto b = fit_gaussian(raw);
    CHECK(std::abs(frechet_distance(a, b) - frechet_oracle(a, b)) < kFdOracleTol);
    CHECK(std::abs(frechet_distance(a, b) - frechet_distance(b, a)) < kFdOracleTol);
  }
  // rank-deficient covariances
  Rng rng(7);
  const auto a = fit_gaussian(normal_matrix(5, 3, rng));
  const auto b = fit_gaussian(normal_matrix(5, 4, rng));
  CHECK(std::abs(frechet_distance(a, b) - frechet_oracle(a, b)) < kFdOracleTol);
}

TEST_CASE("psd square root") {
  Rng rng(3);
  const Eigen::MatrixXd x = normal_matrix(3, 10, rng);
  const Eigen::MatrixXd m = x * x.transpose();
  const Eigen::MatrixXd r = psd_sqrt(m);
  CHECK((r * r - m).norm() < 1e-10);
  CHECK((r - r.transpose()).norm() < 1e-12);
}

TEST_CASE("correlation fixtures") {
  const std::vector<double> a{0, 1, 2, 3, 4};
  const std::vector<double> p{0.1, 0.3, 0.2, 0.8, 0.9};
  CHECK(std::abs(pearson(a, p) - direct_pearson(a, p)) < kCorrelationTol);
  CHECK(std::abs(pearson(a, p) - 2.1 / std::sqrt(10.0 * 0.532)) < kCorrelationTol);
  // ranks of p: 1 3 2 4 5, sum d^2 = 2, 1 - 6 * 2 / (5 * 24)
  CHECK(std::abs(spearman(a, p) - 0.9) < kCorrelationTol);

  const std::vector<double> tied{1, 2, 2, 3};
  CHECK(average_ranks(tied) == std::vector<double>{1, 2.5, 2.5, 4});
  const std::vector<double> x4{1, 2, 3, 4};
  CHECK(std::abs(spearman(x4, tied) - direct_pearson(x4, average_ranks(tied))) < kCorrelationTol);

  const std::vector<double> flat{0.4, 0.4, 0.4, 0.4, 0.4};
  CHECK(pearson(a, flat) == 0.0);
  CHECK(spearman(a, flat) == 0.0);
}

TEST_CASE("importance of proportional and constant trajectories") {
  const std::vector<double> a{0, 0.5, 1, 1.5, 2};
  const auto prop = trajectory(a, {0, 0.1, 0.2, 0.3, 0.4});
  const auto r = importance_eval({prop});
  CHECK(r.R == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.rho == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.MSE == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(std::abs(r.KL) < 1e-12);
  CHECK(r.trajectories == 1);

  const auto flat = trajectory(a, {0.3, 0.3, 0.3, 0.3, 0.3});
  const auto f = importance_eval({flat});
  CHECK(f.R == 0.0);
  CHECK(f.rho == 0.0);
  CHECK(f.KL >= 0.0);
  CHECK(f.MSE >= 0.0);

  const auto both = importance_eval({prop, flat});
  CHECK(both.R == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(both.trajectories == 2);

  CHECK_THROWS_AS(importance_eval({}), ParameterError);
  CHECK_THROWS_AS(importance_eval({trajectory({0, 1}, {0, 1})}), ParameterError);
  CHECK_THROWS_AS(importance_eval({trajectory({0, 2, 1}, {0, 1, 2})}), ParameterError);
}

TEST_CASE("ramp divergences by hand") {
  const std::vector<double> a{0, 1, 2};
  const auto t = trajectory(a, {0.2, 0.2, 0.6});
  // min-max: (0, 0, 1) vs ramp (0, 0.5, 1)
  CHECK(ramp_mse(t) == doctest::Approx(0.25 / 3.0).epsilon(1e-12));
  // normalized p (0.2, 0.2, 0.6), ramp (0, 1/3, 2/3), eps-smoothed
  const double e = 1e-6, z = 1.0 + 3 * e;
  const double p[3] = {(0.2 + e) / z, (0.2 + e) / z, (0.6 + e) / z};
  const double q[3] = {(0.0 + e) / z, (1.0 / 3 + e) / z, (2.0 / 3 + e) / z};
  double kl = 0.0;
  for (int i = 0; i < 3; ++i) kl += p[i] * std::log(p[i] / q[i]);
  CHECK(ramp_kl(t) == doctest::Approx(kl).epsilon(1e-12));
}

TEST_CASE("distinctness of identical and offset sets") {
  Rng rng(60);
  const Eigen::MatrixXd base = normal_matrix(4, 500, rng);
  Eigen::MatrixXd shuffled = base;
  std::vector<Index> perm(500);
  for (Index i = 0; i < 500; ++i) perm[static_cast<std::size_t>(i)] = i;
  rng.shuffle(perm.begin(), perm.end());
  for (Index i = 0; i < 500; ++i) shuffled.col(i) = base.col(perm[static_cast<std::size_t>(i)]);
  CHECK(std::abs(distinctness_eval(base, shuffled, 1).accuracy - 0.5) <= 0.1);

  const Eigen::MatrixXd offset = base.array() + 20.0;
  const auto r = distinctness_eval(base.leftCols(100), offset.rightCols(100), 2);
  CHECK(r.accuracy == 1.0);
  CHECK(distinctness_eval(base, shuffled, 3) == distinctness_eval(base, shuffled, 3));
  CHECK_THROWS_AS(distinctness_eval(base.leftCols(3), offset, 1), ParameterError);
}

TEST_CASE("substitutability reference cases") {
  Rng rng(70);
  LabeledSet train, test;
  auto fill = [&](LabeledSet& s, int per) {
    s.samples.resize(3, 3 * per);
    for (int c = 0; c < 3; ++c) {
      for (int i = 0; i < per; ++i) {
        Eigen::Vector3d x = 0.3 * Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
        x[c] += 2.0;
        s.samples.col(c * per + i) = x;
        s.labels.push_back(10 + c);
      }
    }
  };
  fill(train, 80);
  fill(test, 40);

  // Training and evaluating on the real corpus is ordinary generalization.
  const auto r = substitutability_eval(train, test, 5);
  std::vector<int> idx_train, idx_test;
  for (int y : train.labels) idx_train.push_back(y - 10);
  for (int y : test.labels) idx_test.push_back(y - 10);
  const auto clf = train_softmax_classifier(train.samples, idx_train, 3, oracle_classifier_config(), derive_seed(5, "substitutability"));
  CHECK(r == classification_report(idx_test, clf.predict_all(test.samples), 3));
  CHECK(r.accuracy >= 0.99);

  LabeledSet shuffled = train;
  rng.shuffle(shuffled.labels.begin(), shuffled.labels.end());
  CHECK(std::abs(substitutability_eval(shuffled, test, 5).accuracy - 1.0 / 3.0) <= 0.15);

  LabeledSet two = test;
  for (auto& y : two.labels) y = y == 12 ? 11 : y;
  CHECK_THROWS_AS(substitutability_eval(train, two, 5), ParameterError);
}

TEST_CASE("classification report by hand") {
  const std::vector<int> truth{0, 0, 0, 1, 1, 1, 1, 2, 2, 2};
  const std::vector<int> pred{0, 1, 0, 1, 1, 2, 1, 2, 0, 2};
  const auto r = classification_report(truth, pred, 3);
  CHECK(r.accuracy == doctest::Approx(0.7));
  CHECK(r.precision_micro == doctest::Approx(0.7));
  CHECK(r.recall_micro == doctest::Approx(0.7));
  CHECK(r.per_class[0].precision == doctest::Approx(2.0 / 3.0));
  CHECK(r.per_class[1].precision == doctest::Approx(3.0 / 4.0));
  CHECK(r.per_class[2].precision == doctest::Approx(2.0 / 3.0));
  CHECK(r.per_class[0].recall == doctest::Approx(2.0 / 3.0));
  CHECK(r.per_class[1].recall == doctest::Approx(3.0 / 4.0));
  CHECK(r.per_class[2].recall == doctest::Approx(2.0 / 3.0));
  CHECK(r.precision_macro == doctest::Approx((2.0 / 3 + 0.75 + 2.0 / 3) / 3));
  CHECK(r.recall_macro == doctest::Approx((2.0 / 3 + 0.75 + 2.0 / 3) / 3));
  CHECK(r.per_class[1].support == 4);
  CHECK_THROWS_AS(classification_report(truth, std::vector<int>(9, 0), 3), ShapeError);
}

TEST_CASE("alignment conversion rates") {
  const auto oracle = argmax_oracle(3);
  std::vector<CounterfactualRecord> recs;
  auto rec = [](int cluster, int winner) {
    CounterfactualRecord r;
    r.target_cluster = cluster;
    r.decoded = Eigen::Vector3d::Zero();
    r.decoded[winner] = 1.0;
    return r;
  };
  // cluster 0 -> class 2, cluster 1 -> class 1
  const std::map<int, int> mapping{{0, 2}, {1, 1}};
  for (int i = 0; i < 4; ++i) recs.push_back(rec(0, 2));
  for (int i = 0; i < 3; ++i) recs.push_back(rec(1, 1));
  auto rates = alignment_eval(recs, oracle, mapping);
  REQUIRE(rates.size() == 2);
  CHECK(rates[0].class_label == 1);
  CHECK(rates[0].rate() == 1.0);
  CHECK(rates[1].class_label == 2);
  CHECK(rates[1].rate() == 1.0);

  recs.push_back(rec(1, 0));
  rates = alignment_eval(recs, oracle, mapping);
  CHECK(rates[0].converted == 3);
  CHECK(rates[0].total == 4);
  recs.push_back(rec(5, 0));
  CHECK_THROWS_AS(alignment_eval(recs, oracle, mapping), ParameterError);
}

TEST_CASE("adjusted rand index") {
  const std::vector<int> a{0, 0, 0, 1, 1, 1};
  const std::vector<int> relabeled{5, 5, 5, 2, 2, 2};
  CHECK(adjusted_rand_index(a, relabeled) == 1.0);
  const std::vector<int> b{0, 0, 1, 1, 2, 2};
  // pair counts: index 2, row sums 6, column sums 3, total 15
  CHECK(adjusted_rand_index(a, b) == doctest::Approx((2.0 - 6.0 * 3.0 / 15.0) / (4.5 - 6.0 * 3.0 / 15.0)).epsilon(1e-12));
  const std::vector<int> one(6, 0);
  CHECK(adjusted_rand_index(one, one) == 1.0);
  CHECK_THROWS_AS(adjusted_rand_index(a, std::vector<int>{0, 1}), ShapeError);
}

TEST_CASE("oracle classifier gradient matches finite differences") {
  for (std::uint64_t s = 0; s < 20; ++s) CHECK(difclue::testing::oracle_gradient_error(s) < difclue::testing::kGradTolerance);
}
