#include "difclue/counterfactual.hpp"

#include <cmath>
#include <string>

namespace difclue {

namespace {

bool same(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return a.size() == b.size() && a == b; }

}  // namespace

bool CounterfactualRecord::operator==(const CounterfactualRecord& o) const {
  return source_id == o.source_id && original == o.original && perturbed == o.perturbed && x_T == o.x_T &&
         same(decoded, o.decoded) && target_cluster == o.target_cluster && alpha == o.alpha &&
         same(oracle_probabilities, o.oracle_probabilities);
}

SemanticCode perturb(const SemanticCode& z, const Eigen::Ref<const Eigen::VectorXd>& w, double alpha) {
  if (z.z.size() != w.size()) throw ShapeError("perturb: code and direction lengths differ");
  if (!std::isfinite(alpha)) throw NumericError("perturb: non-finite alpha");
  return {z.z + alpha * w};
}

CounterfactualRecord generate_counterfactual(const DiffusionAutoencoder& model, const DirectionSet& directions,
                                             const OracleClassifier& oracle, std::int64_t source_id,
                                             const Eigen::Ref<const Eigen::VectorXd>& sample,
                                             const PerturbationSpec& spec) {
  if (spec.steps < 1) throw ParameterError("generate_counterfactual: steps must be >= 1");
  CounterfactualRecord rec;
  rec.source_id = source_id;
  rec.target_cluster = spec.target_cluster;
  rec.alpha = spec.alpha;
  rec.original = encode_semantic(model, sample);
  rec.x_T = ddim_invert(model, sample, rec.original, spec.steps);
  rec.perturbed = perturb(rec.original, direction_for_cluster(directions, spec.target_cluster), spec.alpha);
  rec.decoded = ddim_decode(model, rec.perturbed, rec.x_T, spec.steps);
  rec.oracle_probabilities = oracle.probabilities(rec.decoded);
  return rec;
}

std::vector<SweepPoint> alpha_sweep(const DiffusionAutoencoder& model, const DirectionSet& directions,
                                    const OracleClassifier& oracle, const Eigen::Ref<const Eigen::VectorXd>& sample,
                                    int target_cluster, int target_class, std::span<const double> alphas, int steps) {
  if (alphas.empty()) throw ParameterError("alpha_sweep: empty alpha list");
  for (std::size_t i = 1; i < alphas.size(); ++i) {
    if (!(alphas[i] > alphas[i - 1])) throw ParameterError("alpha_sweep: alphas must be strictly ascending");
  }
  const Eigen::VectorXd w = direction_for_cluster(directions, target_cluster);
  const SemanticCode z = encode_semantic(model, sample);
  const StochasticCode x_T = ddim_invert(model, sample, z, steps);
  std::vector<SweepPoint> out;
  out.reserve(alphas.size());
  for (double a : alphas) {
    const Eigen::VectorXd decoded = ddim_decode(model, perturb(z, w, a), x_T, steps);
    const Eigen::VectorXd p = oracle.probabilities(decoded);
    if (target_class < 0 || target_class >= p.size()) throw ParameterError("alpha_sweep: target class out of range");
    out.push_back({a, p[target_class]});
  }
  return out;
}

std::vector<double> default_alpha_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 10; ++i) g.push_back(0.5 * i);
  return g;
}

}  // namespace difclue
