#include "difclue/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace difclue {

ClassifierReport classification_report(std::span<const int> truth, std::span<const int> predicted, int num_classes) {
  if (truth.size() != predicted.size()) throw ShapeError("classification_report: length mismatch");
  if (truth.empty()) throw ParameterError("classification_report: empty evaluation set");
  if (num_classes < 1) throw ParameterError("classification_report: num_classes must be positive");
  const auto k = static_cast<std::size_t>(num_classes);
  std::vector<std::int64_t> tp(k, 0), fp(k, 0), fn(k, 0), support(k, 0);
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i];
    const int p = predicted[i];
    if (t < 0 || t >= num_classes || p < 0 || p >= num_classes) {
      throw ParameterError("classification_report: label out of range");
    }
    ++support[t];
    if (t == p) {
      ++tp[t];
      ++correct;
    } else {
      ++fp[p];
      ++fn[t];
    }
  }
  ClassifierReport r;
  const auto n = static_cast<double>(truth.size());
  r.accuracy = static_cast<double>(correct) / n;
  std::int64_t tp_sum = 0, fp_sum = 0, fn_sum = 0;
  double prec_sum = 0.0, rec_sum = 0.0;
  int present = 0;
  for (std::size_t c = 0; c < k; ++c) {
    ClassScores s;
    s.support = support[c];
    s.precision = (tp[c] + fp[c]) > 0 ? static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fp[c]) : 0.0;
    s.recall = support[c] > 0 ? static_cast<double>(tp[c]) / static_cast<double>(support[c]) : 0.0;
    r.per_class.push_back(s);
    tp_sum += tp[c];
    fp_sum += fp[c];
    fn_sum += fn[c];
    if (support[c] > 0) {
      prec_sum += s.precision;
      rec_sum += s.recall;
      ++present;
    }
  }
  r.precision_micro = static_cast<double>(tp_sum) / static_cast<double>(tp_sum + fp_sum);
  r.recall_micro = static_cast<double>(tp_sum) / static_cast<double>(tp_sum + fn_sum);
  r.precision_macro = prec_sum / present;
  r.recall_macro = rec_sum / present;
  return r;
}

int SoftmaxClassifier::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Index best = 0;
  probabilities(x).maxCoeff(&best);
  return static_cast<int>(best);
}

Eigen::VectorXd SoftmaxClassifier::features(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (net.layers.size() < 2) return x;
  auto outs = mlp_layer_outputs(net, x);
  return outs[outs.size() - 2];
}

std::vector<int> SoftmaxClassifier::predict_all(const Eigen::MatrixXd& samples) const {
  std::vector<int> out(static_cast<std::size_t>(samples.cols()));
  for (Index i = 0; i < samples.cols(); ++i) out[static_cast<std::size_t>(i)] = predict(samples.col(i));
  return out;
}

double softmax_cross_entropy(const Mlp& net, const Eigen::MatrixXd& samples, std::span<const int> labels, Mlp* grad) {
  if (static_cast<Index>(labels.size()) != samples.cols()) throw ShapeError("softmax_cross_entropy: label count mismatch");
  if (net.layers.empty() || net.layers.back().activation != Activation::Softmax) {
    throw ParameterError("softmax_cross_entropy: network must end in softmax");
  }
  const Index n = samples.cols();
  const Index k = net.output_dim();
  auto fp = mlp_forward(net, samples);
  Eigen::MatrixXd target = Eigen::MatrixXd::Zero(k, n);
  double loss = 0.0;
  for (Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) throw ParameterError("softmax_cross_entropy: label out of range");
    target(y, i) = 1.0;
    loss -= std::log(std::max(fp.output(y, i), 1e-300));
  }
  loss /= static_cast<double>(n);
  if (grad != nullptr) {
    const Eigen::MatrixXd dlogits = (fp.output - target) / static_cast<double>(n);
    *grad = mlp_backward(net, fp.cache, dlogits, GradAt::OutputPreactivation).params;
  }
  return loss;
}

SoftmaxClassifier train_softmax_classifier(const Eigen::MatrixXd& samples, std::span<const int> labels,
                                           int num_classes, const ClassifierConfig& config, std::uint64_t seed) {
  if (samples.cols() == 0) throw ParameterError("train_softmax_classifier: empty training set");
  if (num_classes < 2) throw ParameterError("train_softmax_classifier: need at least two classes");
  if (config.epochs < 1 || config.batch_size < 1) throw ParameterError("train_softmax_classifier: bad schedule");
  Rng rng(derive_seed(seed, "classifier-init"));
  std::vector<Index> sizes;
  sizes.push_back(samples.rows());
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(num_classes);
  SoftmaxClassifier clf;
  clf.num_classes = num_classes;
  clf.net = make_mlp<double>(std::span<const Index>(sizes), Activation::Tanh, Activation::Softmax, rng);
  AdamConfig adam_cfg;
  adam_cfg.learning_rate = config.learning_rate;
  auto adam = make_adam(clf.net, adam_cfg);

  Rng order_rng(derive_seed(seed, "classifier-order"));
  std::vector<Index> order(static_cast<std::size_t>(samples.cols()));
  std::iota(order.begin(), order.end(), Index{0});
  Mlp grad;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    order_rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const std::span<const Index> idx(order.data() + start, end - start);
      const Eigen::MatrixXd batch = select_columns(samples, idx);
      const std::vector<int> y = select(labels, idx);
      softmax_cross_entropy(clf.net, batch, y, &grad);
      adam_step(adam, clf.net, grad);
    }
  }
  round_to_binary32(clf.net);
  return clf;
}

Split stratified_split(std::span<const int> labels, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ParameterError("stratified_split: fraction must be in (0,1)");
  std::map<int, std::vector<Index>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(static_cast<Index>(i));
  Split s;
  for (auto& [label, members] : by_class) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(label)));
    rng.shuffle(members.begin(), members.end());
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(members.size())));
    if (n_train == 0 || n_train == members.size()) {
      throw ParameterError("stratified_split: class " + std::to_string(label) + " too small to split");
    }
    s.train.insert(s.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.insert(s.test.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train), members.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& m, std::span<const Index> cols) {
  Eigen::MatrixXd out(m.rows(), static_cast<Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) out.col(static_cast<Index>(i)) = m.col(cols[i]);
  return out;
}

std::vector<int> select(std::span<const int> v, std::span<const Index> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (Index i : idx) out.push_back(v[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace difclue
