#pragma once
// Intra-class mode discovery: k-means over semantic codes, then a softmax
// linear classifier on the cluster labels whose weight rows give the
// per-cluster perturbation directions.

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

#include "difclue/tensor_nn.hpp"

namespace difclue {

struct ClusterModel {
  Eigen::MatrixXd centroids;            // d_z x k
  double inertia = 0.0;                 // within-cluster SSE at the stored centroids
  std::vector<double> inertia_history;  // after every Lloyd update
  int iterations = 0;

  int k() const { return static_cast<int>(centroids.cols()); }
  Index dim() const { return centroids.rows(); }
};

struct KMeansOptions {
  int max_iterations = 300;
  int restarts = 10;  // independent k-means++ seedings; lowest inertia kept
};

// k-means++ seeding then Lloyd iterations to an assignment fixpoint, with
// Hartigan single-point moves to escape poor fixpoints; repeated
// options.restarts times from one seeded stream (first lowest inertia wins).
// codes has one code per column. Centroids are rounded to binary32 on return.
ClusterModel kmeans_fit(const Eigen::MatrixXd& codes, int k, std::uint64_t seed, KMeansOptions options = {});

// Nearest centroid; ties go to the lowest index.
int kmeans_assign(const ClusterModel& model, const Eigen::Ref<const Eigen::VectorXd>& z);
std::vector<int> kmeans_assign_all(const ClusterModel& model, const Eigen::MatrixXd& codes);

// Within-cluster SSE of codes under the given assignment and centroids.
double cluster_inertia(const Eigen::MatrixXd& codes, std::span<const int> labels, const Eigen::MatrixXd& centroids);

struct DirectionSet {
  Eigen::MatrixXd weights;                // k x d_z, one row per cluster
  Eigen::VectorXd biases;                 // k
  Eigen::MatrixXd normalized_directions;  // d_z x k, unit columns
  int iterations = 0;
  double final_gradient_norm = 0.0;

  int k() const { return static_cast<int>(weights.rows()); }
  Index dim() const { return weights.cols(); }
};

struct DirectionOptions {
  int max_iterations = 5000;
  double gradient_tolerance = 1e-5;
};

// Mean softmax cross-entropy of the linear classifier [W | b] over the codes;
// params is W row-major followed by b. Fills grad (same layout) when non-null.
double direction_loss(const Eigen::Ref<const Eigen::VectorXd>& params, const Eigen::MatrixXd& codes,
                      std::span<const int> labels, int k, Eigen::VectorXd* grad = nullptr);

// Full-batch gradient descent on direction_loss with step 1 / L, where L
// bounds the Hessian. Weights are rounded to binary32 on return and the
// normalized directions derived from them.
DirectionSet fit_direction_classifier(const Eigen::MatrixXd& codes, std::span<const int> cluster_labels,
                                      std::uint64_t seed, DirectionOptions options = {});

// Rebuilds normalized directions from weights; used after loading.
void normalize_directions(DirectionSet& ds);

int direction_predict(const DirectionSet& ds, const Eigen::Ref<const Eigen::VectorXd>& z);

Eigen::VectorXd direction_for_cluster(const DirectionSet& ds, int j);

}  // namespace difclue
