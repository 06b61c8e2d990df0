#pragma once
// End-to-end experiment: generate -> mix -> oracle -> autoencoder -> cluster
// -> directions -> counterfactuals -> evaluation -> report files.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "difclue/counterfactual.hpp"
#include "difclue/diffusion_ae.hpp"
#include "difclue/metrics.hpp"
#include "difclue/mode_discovery.hpp"
#include "difclue/synth_data.hpp"

namespace difclue {

struct ExperimentConfig {
  DatasetSpec data;  // data.seed is ignored; the dataset uses `seed`
  int mix_a = 0;
  int mix_b = 1;
  AutoencoderConfig dae;
  int k = 2;
  int kmeans_max_iterations = 300;
  int kmeans_restarts = 10;
  double alpha = 3.0;
  std::vector<double> alphas = default_alpha_grid();
  int negatives = 50;  // negatives explained toward every cluster
  int pgm_pairs = 8;   // shapes-16 only
  std::uint64_t seed = 7;
  std::string out = "results";
};

// Domain-tuned defaults (shapes-16 trains longer, with more noise at T and a
// tighter latent).
ExperimentConfig default_config(DomainKind kind);

// Flat `key = value` lines; `#` starts a comment. Keys: seed, out, data.*,
// dae.*, cluster.*, cf.* (see configs/default.cfg). data.kind selects the
// defaults the remaining keys override. Throws ParameterError.
ExperimentConfig parse_config(std::istream& is);
ExperimentConfig load_config(const std::string& path);
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
std::string format_config(const ExperimentConfig& cfg);
void validate(const ExperimentConfig& cfg);

struct MetricRow {
  std::string metric;
  std::string key;
  double value = 0.0;
};

// `metric,key,value` with values at 6 significant digits.
void write_metrics_csv(std::ostream& os, const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_metrics_csv(std::istream& is);
std::string format_value(double v);

// Positive samples and their cluster assignments.
struct ModeModel {
  ClusterModel clusters;
  DirectionSet directions;
  std::vector<Index> positives;  // dataset indices
  std::vector<int> assignments;
};

struct Trajectory {
  std::int64_t source_id = 0;
  int target_cluster = 0;
  int target_class = 0;
  std::vector<SweepPoint> points;
};

struct RealismScore {
  int cluster = 0;
  int target_class = 0;
  double fd_same = 0.0;      // vs real samples of the target class
  double fd_opposite = 0.0;  // vs real samples of the other mixed class
};

struct Evaluation {
  std::map<int, int> class_of_cluster;  // majority ground-truth class
  double ari = 0.0;
  double reconstruction_mse = 0.0;
  std::vector<RealismScore> realism;
  ClassifierReport distinctness;
  ClassifierReport substitutability;  // per_class ordered by class label
  std::vector<int> substitutability_classes;
  ImportanceReport importance;
  std::vector<Trajectory> trajectories;
  std::vector<ConversionRate> alignment;
  std::vector<MetricRow> rows;
};

Dataset stage_generate(const ExperimentConfig& cfg);
Dataset stage_mix(const ExperimentConfig& cfg, const Dataset& raw);
OracleClassifier stage_oracle(const ExperimentConfig& cfg, const Dataset& raw);
TrainedAutoencoder stage_autoencoder(const ExperimentConfig& cfg, const Dataset& mixed);
ModeModel stage_cluster(const ExperimentConfig& cfg, const Dataset& mixed, const DiffusionAutoencoder& model);
// Seeded choice of cfg.negatives negative samples (dataset indices).
std::vector<Index> explained_negatives(const ExperimentConfig& cfg, const Dataset& mixed);
// One record per (explained negative, cluster), negatives outer.
std::vector<CounterfactualRecord> stage_explain(const ExperimentConfig& cfg, const Dataset& mixed,
                                                const DiffusionAutoencoder& model, const DirectionSet& directions,
                                                const OracleClassifier& oracle);
Evaluation stage_evaluate(const ExperimentConfig& cfg, const Dataset& mixed, const OracleClassifier& oracle,
                          const DiffusionAutoencoder& model, const ModeModel& modes,
                          const std::vector<CounterfactualRecord>& records);

// Counterfactual sets persisted in the dataset text format: id = source id,
// y = target class, m = target cluster, values = decoded sample.
Dataset records_to_dataset(const std::vector<CounterfactualRecord>& records, const Dataset& mixed,
                           const std::map<int, int>& class_of_cluster);
std::vector<CounterfactualRecord> records_from_dataset(const Dataset& cf, double alpha);
std::map<int, int> majority_classes(const Dataset& mixed, const ModeModel& modes);

// Markdown summary of metrics.csv rows next to the published reference values.
std::string render_report(const std::vector<MetricRow>& rows);

struct ExperimentResult {
  Dataset raw;
  Dataset mixed;
  OracleClassifier oracle;
  TrainedAutoencoder autoencoder;
  ModeModel modes;
  std::vector<CounterfactualRecord> records;
  Evaluation evaluation;
};

// Runs every stage and writes config.cfg, dataset.txt, checkpoints,
// counterfactuals.txt, metrics.csv, trajectories.csv, records.csv, report.md
// and (shapes-16) pgm/ under cfg.out. Failures are rethrown as StageError after
// a FAILED file with the message is written.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Writes the evaluation files for an already computed result.
void write_evaluation(const std::string& dir, const ExperimentConfig& cfg, const Dataset& mixed,
                      const std::vector<CounterfactualRecord>& records, const Evaluation& ev);

}  // namespace difclue
