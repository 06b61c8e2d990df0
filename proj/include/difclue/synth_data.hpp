#pragma once
// Synthetic corpora with known sub-populations, class mixing, and the oracle
// classifier used to judge generated samples.

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "difclue/classifier.hpp"

namespace difclue {

enum class DomainKind { GaussMix, Shapes16 };

std::string to_string(DomainKind kind);
DomainKind parse_domain(const std::string& name);

// Every (class, mode) pair is one sub-population. The last pair is the plain
// base population; every other pair adds its own feature on top of it
// (an orthogonal offset for gauss-mix, a bright shape for shapes-16).
struct DatasetSpec {
  DomainKind kind = DomainKind::GaussMix;
  Index dim = 8;              // forced to 256 for shapes-16
  int classes = 3;
  int modes_per_class = 1;
  int samples_per_mode = 200;
  double separation = 6.0;    // gauss-mix: feature offset, in units of noise
  double noise = 0.3;         // gauss-mix: isotropic std; shapes-16: pixel noise std
  double shape_intensity = 0.8;
  int shape_size = 5;         // square side / disc diameter in pixels
  std::uint64_t seed = 7;
};

// Per-domain defaults (shapes-16: d = 256, pixel noise 0.05, 150 per mode).
DatasetSpec default_spec(DomainKind kind);

void validate(const DatasetSpec& spec);

struct Sample {
  std::int64_t id = 0;
  Eigen::VectorXd values;
  int label = 0;
  int mode = 0;
};

// Column i of values is sample i. mode is a global sub-population id
// (class * modes_per_class + mode); after mix_classes it holds the original
// class label.
struct Dataset {
  DomainKind kind = DomainKind::GaussMix;
  int classes = 0;
  int modes_per_class = 1;
  Eigen::MatrixXd values;
  std::vector<int> labels;
  std::vector<int> modes;
  std::vector<std::int64_t> ids;

  Index size() const { return values.cols(); }
  Index dim() const { return values.rows(); }
  Sample sample(Index i) const;
  std::vector<Index> indices_with_label(int label) const;
  bool operator==(const Dataset& o) const {
    return kind == o.kind && classes == o.classes && modes_per_class == o.modes_per_class &&
           values.rows() == o.values.rows() && values.cols() == o.values.cols() && values == o.values &&
           labels == o.labels && modes == o.modes && ids == o.ids;
  }
};

Dataset generate_dataset(const DatasetSpec& spec);

constexpr int kNegativeLabel = 0;
constexpr int kPositiveLabel = 1;

// Samples of class_a and class_b become positive, all others negative; modes
// receive the original class labels.
Dataset mix_classes(const Dataset& dataset, int class_a, int class_b);

struct OracleClassifier {
  SoftmaxClassifier classifier;
  ClassifierReport heldout;

  Eigen::VectorXd probabilities(const Eigen::Ref<const Eigen::VectorXd>& x) const { return classifier.probabilities(x); }
  int predict(const Eigen::Ref<const Eigen::VectorXd>& x) const { return classifier.predict(x); }
  Eigen::VectorXd features(const Eigen::Ref<const Eigen::VectorXd>& x) const { return classifier.features(x); }
};

ClassifierConfig oracle_classifier_config();

// Trains on the dataset's own labels with a stratified 80/20 split.
OracleClassifier train_oracle(const Dataset& dataset, std::uint64_t seed);

// Text format: header `difclue-dataset v1, kind, d, n, M, count`, then one
// line per sample `id, y, m, v1, ..., vd`.
void write_dataset(std::ostream& os, const Dataset& dataset);
Dataset read_dataset(std::istream& is);
void save_dataset(const std::string& path, const Dataset& dataset);
Dataset load_dataset(const std::string& path);

// Binary PGM (P5), 16x16, maxval 255, value round(clamp(pixel, 0, 1) * 255).
void write_pgm(std::ostream& os, const Eigen::Ref<const Eigen::VectorXd>& pixels, int width = 16, int height = 16);
void save_pgm(const std::string& path, const Eigen::Ref<const Eigen::VectorXd>& pixels, int width = 16, int height = 16);

}  // namespace difclue
