#pragma once
// Evaluation of counterfactual sets: realism (Frechet distance in feature
// space), substitutability, importance, distinctness, and class conversion.

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "difclue/classifier.hpp"
#include "difclue/counterfactual.hpp"
#include "difclue/synth_data.hpp"

namespace difclue {

struct GaussianFit {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

// Sample mean and unbiased covariance of the columns.
GaussianFit fit_gaussian(const Eigen::MatrixXd& features);

// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)). The trace of the root
// is taken from the symmetric form S_a^(1/2) S_b S_a^(1/2), which has the same
// spectrum as S_a S_b; negative eigenvalues are clamped to 0.
double frechet_distance(const GaussianFit& a, const GaussianFit& b);

// Symmetric PSD square root by eigendecomposition of (M + M^T) / 2.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m);

// Both return 0 when either input is constant.
double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);
// 1-based ranks with ties sharing their average rank.
std::vector<double> average_ranks(std::span<const double> v);

struct ImportanceReport {
  double R = 0.0;
  double rho = 0.0;
  double KL = 0.0;
  double MSE = 0.0;
  std::size_t trajectories = 0;
};

// Linear ramp (alpha - alpha_min) / (alpha_max - alpha_min).
std::vector<double> alpha_ramp(std::span<const SweepPoint> trajectory);
// KL(profile || ramp) where both are normalized to sum 1 and then smoothed by
// (p + 1e-6) / (1 + n 1e-6). An all-zero profile is treated as uniform.
double ramp_kl(std::span<const SweepPoint> trajectory);
// Mean squared difference between min-max rescaled probabilities and the
// ramp; a constant trajectory rescales to zeros.
double ramp_mse(std::span<const SweepPoint> trajectory);

ImportanceReport importance_eval(const std::vector<std::vector<SweepPoint>>& trajectories);

// Held-out report of a fresh binary classifier separating the two sets
// (columns are samples), 70/30 stratified split. Exact duplicates are kept
// in the same fold.
ClassifierReport distinctness_eval(const Eigen::MatrixXd& set_1, const Eigen::MatrixXd& set_2, std::uint64_t seed);

// Column-major samples with integer labels.
struct LabeledSet {
  Eigen::MatrixXd samples;
  std::vector<int> labels;
};

// Oracle-architecture classifier trained on synthetic only, evaluated on real.
// per_class follows the sorted distinct labels.
ClassifierReport substitutability_eval(const LabeledSet& synthetic, const LabeledSet& real, std::uint64_t seed);

struct ConversionRate {
  int class_label = 0;
  std::int64_t converted = 0;
  std::int64_t total = 0;
  double rate() const { return total > 0 ? static_cast<double>(converted) / static_cast<double>(total) : 0.0; }
};

// For each class in the map, the fraction of records aimed at its cluster that
// the oracle assigns to that class. Ordered by class label.
std::vector<ConversionRate> alignment_eval(std::span<const CounterfactualRecord> records,
                                           const OracleClassifier& oracle,
                                           const std::map<int, int>& class_of_cluster);

double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

}  // namespace difclue
