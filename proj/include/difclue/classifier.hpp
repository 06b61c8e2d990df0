#pragma once
// Softmax MLP classifiers shared by the oracle and the evaluation suite.

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

#include "difclue/tensor_nn.hpp"

namespace difclue {

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  std::int64_t support = 0;  // true members in the evaluated set

  bool operator==(const ClassScores&) const = default;
};

struct ClassifierReport {
  double accuracy = 0.0;
  double precision_micro = 0.0;
  double precision_macro = 0.0;
  double recall_micro = 0.0;
  double recall_macro = 0.0;
  std::vector<ClassScores> per_class;

  bool operator==(const ClassifierReport&) const = default;
};

// Report from confusion counts. Classes with no predictions get precision 0;
// macro averages run over classes with nonzero support.
ClassifierReport classification_report(std::span<const int> truth, std::span<const int> predicted, int num_classes);

struct ClassifierConfig {
  std::vector<Index> hidden = {32};
  int epochs = 60;
  Index batch_size = 32;
  double learning_rate = 1e-2;
};

struct SoftmaxClassifier {
  Mlp net;
  int num_classes = 0;

  Eigen::VectorXd probabilities(const Eigen::Ref<const Eigen::VectorXd>& x) const { return mlp_apply(net, x); }
  int predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  // Activation of the last hidden layer (the input itself when there is none).
  Eigen::VectorXd features(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  std::vector<int> predict_all(const Eigen::MatrixXd& samples) const;
};

// Mean cross-entropy over the columns of samples; fills grad when non-null.
double softmax_cross_entropy(const Mlp& net, const Eigen::MatrixXd& samples, std::span<const int> labels,
                             Mlp* grad = nullptr);

// Minibatch Adam on mean cross-entropy. Parameters are rounded to binary32
// on return.
SoftmaxClassifier train_softmax_classifier(const Eigen::MatrixXd& samples, std::span<const int> labels,
                                           int num_classes, const ClassifierConfig& config, std::uint64_t seed);

struct Split {
  std::vector<Index> train;
  std::vector<Index> test;
};

// Per-class shuffled split; each class contributes round(train_fraction * size)
// samples to train. Throws if any class would leave either side empty.
Split stratified_split(std::span<const int> labels, double train_fraction, std::uint64_t seed);

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& m, std::span<const Index> cols);
std::vector<int> select(std::span<const int> v, std::span<const Index> idx);

}  // namespace difclue
