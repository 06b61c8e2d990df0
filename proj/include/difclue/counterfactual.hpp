#pragma once
// Counterfactuals by shifting a sample's semantic code along a cluster
// direction and decoding with the sample's own stochastic subcode.

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "difclue/diffusion_ae.hpp"
#include "difclue/mode_discovery.hpp"
#include "difclue/synth_data.hpp"

namespace difclue {

struct PerturbationSpec {
  int target_cluster = 0;
  double alpha = 3.0;
  int steps = 20;
};

struct CounterfactualRecord {
  std::int64_t source_id = 0;
  SemanticCode original;
  SemanticCode perturbed;
  StochasticCode x_T;
  Eigen::VectorXd decoded;
  int target_cluster = 0;
  double alpha = 0.0;
  Eigen::VectorXd oracle_probabilities;

  bool operator==(const CounterfactualRecord& o) const;
};

// z + alpha * w
SemanticCode perturb(const SemanticCode& z, const Eigen::Ref<const Eigen::VectorXd>& w, double alpha);

// encode_semantic -> ddim_invert -> perturb -> ddim_decode, then the oracle.
CounterfactualRecord generate_counterfactual(const DiffusionAutoencoder& model, const DirectionSet& directions,
                                             const OracleClassifier& oracle, std::int64_t source_id,
                                             const Eigen::Ref<const Eigen::VectorXd>& sample,
                                             const PerturbationSpec& spec);

struct SweepPoint {
  double alpha = 0.0;
  double probability = 0.0;
  bool operator==(const SweepPoint&) const = default;
};

// Oracle probability of target_class on the decoded perturbation for each alpha
// (strictly ascending). The subcode is inverted once and reused.
std::vector<SweepPoint> alpha_sweep(const DiffusionAutoencoder& model, const DirectionSet& directions,
                                    const OracleClassifier& oracle, const Eigen::Ref<const Eigen::VectorXd>& sample,
                                    int target_cluster, int target_class, std::span<const double> alphas, int steps);

// 0, 0.5, ..., 5
std::vector<double> default_alpha_grid();

}  // namespace difclue
