#include <doctest.h>

#include <cmath>
#include <limits>

#include "difclue/mode_discovery.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

using namespace difclue;

namespace {

// Centroids are stored in binary32, so inertia can sit a few ulps of float
// above the exact optimum.
constexpr double kInertiaRelTol = 1e-6;

// Minimum within-cluster SSE over every 2-partition of the columns.
double brute_force_two_partition(const Eigen::MatrixXd& pts) {
  const int n = static_cast<int>(pts.cols());
  double best = std::numeric_limits<double>::infinity();
  for (int mask = 1; mask < (1 << n) - 1; ++mask) {
    double sse = 0.0;
    for (int side = 0; side < 2; ++side) {
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(pts.rows());
      int count = 0;
      for (int i = 0; i < n; ++i) {
        if (((mask >> i) & 1) == side) {
          mean += pts.col(i);
          ++count;
        }
      }
      mean /= count;
      for (int i = 0; i < n; ++i) {
        if (((mask >> i) & 1) == side) sse += (pts.col(i) - mean).squaredNorm();
      }
    }
    best = std::min(best, sse);
  }
  return best;
}

}  // namespace

TEST_CASE("two points, two clusters") {
  Eigen::MatrixXd pts(1, 2);
  pts << 0, 10;
  const auto m = kmeans_fit(pts, 2, 1);
  const double lo = std::min(m.centroids(0, 0), m.centroids(0, 1));
  const double hi = std::max(m.centroids(0, 0), m.centroids(0, 1));
  CHECK(lo == 0.0);
  CHECK(hi == 10.0);
  CHECK(m.inertia == 0.0);
}

TEST_CASE("k = 1 centroid is the mean") {
  Rng rng(3);
  const Eigen::MatrixXd pts = difclue::testing::normal_matrix(3, 25, rng);
  const auto m = kmeans_fit(pts, 1, 2);
  const Eigen::VectorXd mean = pts.rowwise().mean();
  CHECK((m.centroids.col(0) - mean).norm() < 1e-6);
}

TEST_CASE("inertia equals the brute-force partition minimum") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng rng(100 + s);
    const Eigen::MatrixXd pts = difclue::testing::normal_matrix(2, 6, rng);
    const auto m = kmeans_fit(pts, 2, s);
    const double oracle = brute_force_two_partition(pts);
    CHECK(m.inertia == doctest::Approx(oracle).epsilon(kInertiaRelTol));
  }
}

TEST_CASE("inertia history never increases") {
  Rng rng(5);
  const Eigen::MatrixXd pts = difclue::testing::normal_matrix(2, 60, rng);
  const auto m = kmeans_fit(pts, 3, 9);
  for (std::size_t i = 1; i < m.inertia_history.size(); ++i) CHECK(m.inertia_history[i] <= m.inertia_history[i - 1] + 1e-12);
}

TEST_CASE("kmeans errors") {
  Eigen::MatrixXd same = Eigen::MatrixXd::Ones(2, 5);
  CHECK_THROWS_AS(kmeans_fit(same, 2, 1), ParameterError);
  CHECK_THROWS_AS(kmeans_fit(same, 0, 1), ParameterError);
  same(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(kmeans_fit(same, 1, 1), NumericError);
}

TEST_CASE("assignment rules") {
  ClusterModel m;
  m.centroids.resize(2, 3);
  m.centroids << 0, 2, 5,
                 0, 0, 5;
  CHECK(kmeans_assign(m, Eigen::Vector2d(2, 0)) == 1);
  CHECK(kmeans_assign(m, Eigen::Vector2d(5, 5)) == 2);
  CHECK(kmeans_assign(m, Eigen::Vector2d(1, 0)) == 0);  // tie between 0 and 1
  CHECK_THROWS_AS(kmeans_assign(m, Eigen::Vector3d::Zero()), ShapeError);

  Rng rng(8);
  const Eigen::MatrixXd pts = difclue::testing::normal_matrix(2, 200, rng) * 4.0;
  const auto labels = kmeans_assign_all(m, pts);
  for (Index i = 0; i < pts.cols(); ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < 3; ++j) {
      const double d = (pts.col(i) - m.centroids.col(j)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    CHECK(labels[static_cast<std::size_t>(i)] == best);
  }
}

TEST_CASE("kmeans is deterministic") {
  Rng rng(12);
  const Eigen::MatrixXd pts = difclue::testing::normal_matrix(3, 80, rng);
  const auto a = kmeans_fit(pts, 4, 21);
  const auto b = kmeans_fit(pts, 4, 21);
  CHECK(a.centroids == b.centroids);
  CHECK(a.inertia == b.inertia);
}

TEST_CASE("direction classifier on symmetric clusters") {
  Rng rng(30);
  Eigen::MatrixXd pts(3, 80);
  std::vector<int> labels;
  for (Index i = 0; i < 80; ++i) {
    const int y = static_cast<int>(i % 2);
    pts.col(i) << (y == 1 ? 3.0 : -3.0) + 0.3 * rng.normal(), 0.3 * rng.normal(), 0.3 * rng.normal();
    labels.push_back(y);
  }
  const auto ds = fit_direction_classifier(pts, labels, 4);
  const Eigen::VectorXd w1 = direction_for_cluster(ds, 1);
  CHECK(std::abs(w1[0]) > 0.99);
  CHECK(w1[0] > 0.0);
  for (int j = 0; j < 2; ++j) CHECK(direction_for_cluster(ds, j).norm() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(direction_for_cluster(ds, 2), ParameterError);
  CHECK_THROWS_AS(direction_for_cluster(ds, -1), ParameterError);

  // Shifting both weight rows by the same vector keeps every decision.
  DirectionSet shifted = ds;
  const Eigen::RowVector3d c(0.7, -2.0, 5.0);
  shifted.weights.rowwise() += c;
  for (Index i = 0; i < pts.cols(); ++i) CHECK(direction_predict(shifted, pts.col(i)) == direction_predict(ds, pts.col(i)));
  for (Index i = 0; i < pts.cols(); ++i) CHECK(direction_predict(ds, pts.col(i)) == labels[static_cast<std::size_t>(i)]);
}

TEST_CASE("direction loss gradient matches finite differences") {
  for (std::uint64_t s = 0; s < 20; ++s) CHECK(difclue::testing::direction_gradient_error(s) < difclue::testing::kGradTolerance);
}

TEST_CASE("direction classifier errors") {
  const Eigen::MatrixXd pts = Eigen::MatrixXd::Random(2, 4);
  const std::vector<int> gap{0, 2, 0, 2};
  CHECK_THROWS_AS(fit_direction_classifier(pts, gap, 1), ParameterError);
  const std::vector<int> short_labels{0, 1};
  CHECK_THROWS_AS(fit_direction_classifier(pts, short_labels, 1), ShapeError);
}

TEST_CASE("directions point from the global mean toward each cluster on gauss-mix codes") {
  const auto& p = difclue::testing::gauss_pipeline();
  const auto& mm = p.modes;
  Eigen::MatrixXd codes(p.ae.model.latent_dim, static_cast<Index>(mm.positives.size()));
  for (std::size_t i = 0; i < mm.positives.size(); ++i) {
    codes.col(static_cast<Index>(i)) = encode_semantic(p.ae.model, p.mixed.values.col(mm.positives[i])).z;
  }
  const Eigen::VectorXd mean = codes.rowwise().mean();
  for (int j = 0; j < mm.clusters.k(); ++j) {
    CHECK(direction_for_cluster(mm.directions, j).dot(mm.clusters.centroids.col(j) - mean) > 0.0);
  }
}
