#include "difclue/mode_discovery.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

namespace difclue {

namespace {

Index count_distinct_columns(const Eigen::MatrixXd& codes) {
  std::vector<std::vector<double>> cols;
  cols.reserve(static_cast<std::size_t>(codes.cols()));
  for (Index i = 0; i < codes.cols(); ++i) cols.emplace_back(codes.col(i).data(), codes.col(i).data() + codes.rows());
  std::sort(cols.begin(), cols.end());
  return static_cast<Index>(std::unique(cols.begin(), cols.end()) - cols.begin());
}

int nearest(const Eigen::MatrixXd& centroids, const Eigen::Ref<const Eigen::VectorXd>& z, double* dist2 = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index j = 0; j < centroids.cols(); ++j) {
    const double d = (centroids.col(j) - z).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(j);
    }
  }
  if (dist2 != nullptr) *dist2 = best_d;
  return best;
}

Eigen::MatrixXd kmeans_plus_plus(const Eigen::MatrixXd& codes, int k, Rng& rng) {
  const Index n = codes.cols();
  Eigen::MatrixXd centroids(codes.rows(), k);
  centroids.col(0) = codes.col(static_cast<Index>(rng.below(static_cast<std::uint64_t>(n))));
  Eigen::VectorXd d2(n);
  for (Index i = 0; i < n; ++i) d2[i] = (codes.col(i) - centroids.col(0)).squaredNorm();
  for (int j = 1; j < k; ++j) {
    const double total = d2.sum();
    Index pick = n - 1;
    if (total > 0.0) {
      const double r = rng.uniform() * total;
      double acc = 0.0;
      for (Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > r && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
      // Rounding can leave r beyond the final partial sum; take the last point
      // that is not already a centroid.
      while (d2[pick] == 0.0 && pick > 0) --pick;
    }
    centroids.col(j) = codes.col(pick);
    for (Index i = 0; i < n; ++i) d2[i] = std::min(d2[i], (codes.col(i) - centroids.col(j)).squaredNorm());
  }
  return centroids;
}

}  // namespace

double cluster_inertia(const Eigen::MatrixXd& codes, std::span<const int> labels, const Eigen::MatrixXd& centroids) {
  if (static_cast<Index>(labels.size()) != codes.cols()) throw ShapeError("cluster_inertia: label count mismatch");
  double sse = 0.0;
  for (Index i = 0; i < codes.cols(); ++i) sse += (codes.col(i) - centroids.col(labels[static_cast<std::size_t>(i)])).squaredNorm();
  return sse;
}

namespace {

// Single-point moves from a Lloyd fixpoint: x leaves A for B when
// n_B/(n_B+1) |x-c_B|^2 < n_A/(n_A-1) |x-c_A|^2, which strictly lowers the
// SSE. Lloyd fixpoints with a better neighbouring partition are escaped.
bool hartigan_refine(const Eigen::MatrixXd& codes, std::vector<int>& assign, ClusterModel& model) {
  const Index n = codes.cols();
  const int k = model.k();
  std::vector<Index> counts(static_cast<std::size_t>(k), 0);
  for (int a : assign) ++counts[static_cast<std::size_t>(a)];
  bool any = false;
  bool moved = true;
  for (int pass = 0; moved && pass < 100; ++pass) {
    moved = false;
    for (Index i = 0; i < n; ++i) {
      const int a = assign[static_cast<std::size_t>(i)];
      const auto na = static_cast<double>(counts[static_cast<std::size_t>(a)]);
      if (na < 2.0) continue;
      const double cost_out = na / (na - 1.0) * (codes.col(i) - model.centroids.col(a)).squaredNorm();
      int best = a;
      double best_gain = 0.0;
      for (int b = 0; b < k; ++b) {
        if (b == a) continue;
        const auto nb = static_cast<double>(counts[static_cast<std::size_t>(b)]);
        const double gain = cost_out - nb / (nb + 1.0) * (codes.col(i) - model.centroids.col(b)).squaredNorm();
        // relative margin keeps rounding noise from cycling
        if (gain > best_gain && gain > 1e-12 * cost_out) {
          best_gain = gain;
          best = b;
        }
      }
      if (best == a) continue;
      const auto nb = static_cast<double>(counts[static_cast<std::size_t>(best)]);
      model.centroids.col(a) = (na * model.centroids.col(a) - codes.col(i)) / (na - 1.0);
      model.centroids.col(best) = (nb * model.centroids.col(best) + codes.col(i)) / (nb + 1.0);
      --counts[static_cast<std::size_t>(a)];
      ++counts[static_cast<std::size_t>(best)];
      assign[static_cast<std::size_t>(i)] = best;
      moved = true;
      ++model.iterations;
    }
    if (moved) {
      // recompute exactly to drop the drift of the incremental updates
      Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(codes.rows(), k);
      for (Index i = 0; i < n; ++i) sums.col(assign[static_cast<std::size_t>(i)]) += codes.col(i);
      for (int j = 0; j < k; ++j) model.centroids.col(j) = sums.col(j) / static_cast<double>(counts[static_cast<std::size_t>(j)]);
      model.inertia_history.push_back(cluster_inertia(codes, assign, model.centroids));
      any = true;
    }
  }
  return any;
}

ClusterModel lloyd(const Eigen::MatrixXd& codes, int k, Rng& rng, int max_iterations) {
  const Index n = codes.cols();
  ClusterModel model;
  model.centroids = kmeans_plus_plus(codes, k, rng);

  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  std::vector<int> next(static_cast<std::size_t>(n));
  for (int round = 0; round < 100; ++round) {
    for (int iter = 0; iter < max_iterations; ++iter) {
      for (Index i = 0; i < n; ++i) next[static_cast<std::size_t>(i)] = nearest(model.centroids, codes.col(i));
      if (next == assign) break;
      assign = next;
      ++model.iterations;

      Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(codes.rows(), k);
      std::vector<Index> counts(static_cast<std::size_t>(k), 0);
      for (Index i = 0; i < n; ++i) {
        sums.col(assign[static_cast<std::size_t>(i)]) += codes.col(i);
        ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
      }
      for (int j = 0; j < k; ++j) {
        if (counts[static_cast<std::size_t>(j)] > 0) {
          model.centroids.col(j) = sums.col(j) / static_cast<double>(counts[static_cast<std::size_t>(j)]);
        }
      }
      for (int j = 0; j < k; ++j) {
        if (counts[static_cast<std::size_t>(j)] > 0) continue;
        // Empty cluster: reseed at the point farthest from its own centroid.
        Index far = 0;
        double far_d = -1.0;
        for (Index i = 0; i < n; ++i) {
          const double d = (codes.col(i) - model.centroids.col(assign[static_cast<std::size_t>(i)])).squaredNorm();
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        model.centroids.col(j) = codes.col(far);
      }
      model.inertia_history.push_back(cluster_inertia(codes, assign, model.centroids));
    }
    if (!hartigan_refine(codes, assign, model)) break;
  }

  model.centroids = model.centroids.cast<float>().cast<double>();
  double sse = 0.0;
  for (Index i = 0; i < n; ++i) {
    double d2 = 0.0;
    nearest(model.centroids, codes.col(i), &d2);
    sse += d2;
  }
  model.inertia = sse;
  return model;
}

}  // namespace

ClusterModel kmeans_fit(const Eigen::MatrixXd& codes, int k, std::uint64_t seed, KMeansOptions options) {
  if (k < 1) throw ParameterError("kmeans_fit: k must be >= 1");
  if (options.restarts < 1 || options.max_iterations < 1) throw ParameterError("kmeans_fit: bad options");
  if (!codes.allFinite()) throw NumericError("kmeans_fit: non-finite code");
  if (count_distinct_columns(codes) < k) {
    throw ParameterError("kmeans_fit: fewer than " + std::to_string(k) + " distinct codes");
  }
  Rng rng(derive_seed(seed, "kmeans++"));
  ClusterModel best;
  for (int r = 0; r < options.restarts; ++r) {
    ClusterModel m = lloyd(codes, k, rng, options.max_iterations);
    if (r == 0 || m.inertia < best.inertia) best = std::move(m);
  }
  return best;
}

int kmeans_assign(const ClusterModel& model, const Eigen::Ref<const Eigen::VectorXd>& z) {
  if (z.size() != model.dim()) throw ShapeError("kmeans_assign: code length mismatch");
  return nearest(model.centroids, z);
}

std::vector<int> kmeans_assign_all(const ClusterModel& model, const Eigen::MatrixXd& codes) {
  std::vector<int> out(static_cast<std::size_t>(codes.cols()));
  for (Index i = 0; i < codes.cols(); ++i) out[static_cast<std::size_t>(i)] = kmeans_assign(model, codes.col(i));
  return out;
}

double direction_loss(const Eigen::Ref<const Eigen::VectorXd>& params, const Eigen::MatrixXd& codes,
                      std::span<const int> labels, int k, Eigen::VectorXd* grad) {
  const Index d = codes.rows();
  const Index n = codes.cols();
  if (params.size() != k * d + k) throw ShapeError("direction_loss: parameter length mismatch");
  if (static_cast<Index>(labels.size()) != n || n == 0) throw ShapeError("direction_loss: label count mismatch");
  Eigen::MatrixXd w(k, d);
  for (Index r = 0; r < k; ++r) w.row(r) = params.segment(r * d, d).transpose();
  const Eigen::VectorXd b = params.tail(k);

  Eigen::MatrixXd logits = w * codes;
  logits.colwise() += b;
  double loss = 0.0;
  Eigen::MatrixXd resid(k, n);
  for (Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    const double mx = logits.col(i).maxCoeff();
    const Eigen::VectorXd e = (logits.col(i).array() - mx).exp().matrix();
    const double s = e.sum();
    loss += std::log(s) + mx - logits(y, i);
    resid.col(i) = e / s;
    resid(y, i) -= 1.0;
  }
  loss /= static_cast<double>(n);
  if (grad != nullptr) {
    const Eigen::MatrixXd gw = resid * codes.transpose() / static_cast<double>(n);
    grad->resize(params.size());
    for (Index r = 0; r < k; ++r) grad->segment(r * d, d) = gw.row(r).transpose();
    grad->tail(k) = resid.rowwise().sum() / static_cast<double>(n);
  }
  return loss;
}

void normalize_directions(DirectionSet& ds) {
  ds.normalized_directions.resize(ds.dim(), ds.k());
  for (int j = 0; j < ds.k(); ++j) {
    const double norm = ds.weights.row(j).norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) throw NumericError("direction set: zero or non-finite weight row");
    ds.normalized_directions.col(j) = ds.weights.row(j).transpose() / norm;
  }
}

DirectionSet fit_direction_classifier(const Eigen::MatrixXd& codes, std::span<const int> cluster_labels,
                                      std::uint64_t seed, DirectionOptions options) {
  if (codes.cols() == 0) throw ParameterError("fit_direction_classifier: no codes");
  if (static_cast<Index>(cluster_labels.size()) != codes.cols()) {
    throw ShapeError("fit_direction_classifier: label count mismatch");
  }
  if (!codes.allFinite()) throw NumericError("fit_direction_classifier: non-finite code");
  int k = 0;
  for (int y : cluster_labels) {
    if (y < 0) throw ParameterError("fit_direction_classifier: negative cluster label");
    k = std::max(k, y + 1);
  }
  std::vector<Index> counts(static_cast<std::size_t>(k), 0);
  for (int y : cluster_labels) ++counts[static_cast<std::size_t>(y)];
  for (int j = 0; j < k; ++j) {
    if (counts[static_cast<std::size_t>(j)] == 0) {
      throw ParameterError("fit_direction_classifier: cluster " + std::to_string(j) + " is empty");
    }
  }
  const Index d = codes.rows();
  const Index n = codes.cols();

  Eigen::MatrixXd aug(d + 1, n);
  aug.topRows(d) = codes;
  aug.row(d).setOnes();
  const Eigen::MatrixXd second_moment = aug * aug.transpose() / static_cast<double>(n);
  const double lambda_max = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(second_moment, Eigen::EigenvaluesOnly)
                                .eigenvalues()
                                .maxCoeff();
  const double step = 1.0 / (0.5 * lambda_max);

  Rng rng(derive_seed(seed, "direction-init"));
  Eigen::VectorXd params(k * d + k);
  for (Index i = 0; i < params.size(); ++i) params[i] = rng.uniform(-1e-3, 1e-3);

  DirectionSet ds;
  Eigen::VectorXd grad;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    direction_loss(params, codes, cluster_labels, k, &grad);
    ds.final_gradient_norm = grad.norm();
    if (ds.final_gradient_norm < options.gradient_tolerance) break;
    params -= step * grad;
    ds.iterations = iter + 1;
  }
  if (!params.allFinite()) throw NumericError("fit_direction_classifier: diverged");
  ds.weights.resize(k, d);
  for (Index r = 0; r < k; ++r) ds.weights.row(r) = params.segment(r * d, d).transpose();
  ds.biases = params.tail(k);
  ds.weights = ds.weights.cast<float>().cast<double>();
  ds.biases = ds.biases.cast<float>().cast<double>();
  normalize_directions(ds);
  return ds;
}

int direction_predict(const DirectionSet& ds, const Eigen::Ref<const Eigen::VectorXd>& z) {
  if (z.size() != ds.dim()) throw ShapeError("direction_predict: code length mismatch");
  const Eigen::VectorXd logits = ds.weights * z + ds.biases;
  Index best = 0;
  logits.maxCoeff(&best);
  return static_cast<int>(best);
}

Eigen::VectorXd direction_for_cluster(const DirectionSet& ds, int j) {
  if (j < 0 || j >= ds.k()) throw ParameterError("direction_for_cluster: cluster " + std::to_string(j) + " out of range");
  return ds.normalized_directions.col(j);
}

}  // namespace difclue
