#include "difclue/metrics.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>

namespace difclue {

GaussianFit fit_gaussian(const Eigen::MatrixXd& features) {
  const Index n = features.cols();
  if (n < 2) throw ParameterError("fit_gaussian: need at least two vectors");
  if (!features.allFinite()) throw NumericError("fit_gaussian: non-finite feature");
  GaussianFit g;
  g.mean = features.rowwise().mean();
  const Eigen::MatrixXd centered = features.colwise() - g.mean;
  g.covariance = centered * centered.transpose() / static_cast<double>(n - 1);
  g.covariance = 0.5 * (g.covariance + g.covariance.transpose()).eval();
  return g;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw ShapeError("psd_sqrt: matrix not square");
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw NumericError("psd_sqrt: eigendecomposition failed");
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

double frechet_distance(const GaussianFit& a, const GaussianFit& b) {
  const Index d = a.mean.size();
  if (b.mean.size() != d || a.covariance.rows() != d || a.covariance.cols() != d || b.covariance.rows() != d ||
      b.covariance.cols() != d) {
    throw ShapeError("frechet_distance: dimension mismatch");
  }
  const Eigen::MatrixXd ra = psd_sqrt(a.covariance);
  const Eigen::MatrixXd inner = ra * b.covariance * ra;
  const Eigen::VectorXd ev =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly)
          .eigenvalues();
  const double tr_root = ev.cwiseMax(0.0).cwiseSqrt().sum();
  const double fd = (a.mean - b.mean).squaredNorm() + a.covariance.trace() + b.covariance.trace() - 2.0 * tr_root;
  return std::max(fd, 0.0);
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("pearson: length mismatch");
  if (x.size() < 2) throw ParameterError("pearson: need at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("spearman: length mismatch");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

namespace {

void check_trajectory(std::span<const SweepPoint> t) {
  if (t.size() < 3) throw ParameterError("importance: trajectory needs at least 3 points");
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (!(t[i].alpha > t[i - 1].alpha)) throw ParameterError("importance: alphas must be strictly ascending");
  }
  for (const auto& p : t) {
    if (!std::isfinite(p.probability) || p.probability < 0.0) {
      throw NumericError("importance: probabilities must be finite and non-negative");
    }
  }
}

std::vector<double> smoothed_profile(std::vector<double> v) {
  constexpr double kSmooth = 1e-6;
  const double sum = std::accumulate(v.begin(), v.end(), 0.0);
  const double n = static_cast<double>(v.size());
  for (double& x : v) {
    x = sum > 0.0 ? x / sum : 1.0 / n;
    x = (x + kSmooth) / (1.0 + n * kSmooth);
  }
  return v;
}

}  // namespace

std::vector<double> alpha_ramp(std::span<const SweepPoint> t) {
  check_trajectory(t);
  const double lo = t.front().alpha;
  const double span = t.back().alpha - lo;
  std::vector<double> r(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) r[i] = (t[i].alpha - lo) / span;
  return r;
}

double ramp_kl(std::span<const SweepPoint> t) {
  const auto q = smoothed_profile(alpha_ramp(t));
  std::vector<double> raw(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) raw[i] = t[i].probability;
  const auto p = smoothed_profile(std::move(raw));
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) kl += p[i] * std::log(p[i] / q[i]);
  return std::max(kl, 0.0);
}

double ramp_mse(std::span<const SweepPoint> t) {
  const auto ramp = alpha_ramp(t);
  double lo = t.front().probability, hi = lo;
  for (const auto& p : t) {
    lo = std::min(lo, p.probability);
    hi = std::max(hi, p.probability);
  }
  double mse = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double scaled = hi > lo ? (t[i].probability - lo) / (hi - lo) : 0.0;
    mse += (scaled - ramp[i]) * (scaled - ramp[i]);
  }
  return mse / static_cast<double>(t.size());
}

ImportanceReport importance_eval(const std::vector<std::vector<SweepPoint>>& trajectories) {
  if (trajectories.empty()) throw ParameterError("importance_eval: no trajectories");
  ImportanceReport r;
  for (const auto& t : trajectories) {
    check_trajectory(t);
    std::vector<double> a(t.size()), p(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
      a[i] = t[i].alpha;
      p[i] = t[i].probability;
    }
    r.R += pearson(a, p);
    r.rho += spearman(a, p);
    r.KL += ramp_kl(t);
    r.MSE += ramp_mse(t);
  }
  const double n = static_cast<double>(trajectories.size());
  r.R /= n;
  r.rho /= n;
  r.KL /= n;
  r.MSE /= n;
  r.trajectories = trajectories.size();
  return r;
}

ClassifierReport distinctness_eval(const Eigen::MatrixXd& set_1, const Eigen::MatrixXd& set_2, std::uint64_t seed) {
  if (set_1.cols() < 4 || set_2.cols() < 4) throw ParameterError("distinctness_eval: each set needs at least 4 samples");
  if (set_1.rows() != set_2.rows()) throw ShapeError("distinctness_eval: sample dimensions differ");
  Eigen::MatrixXd all(set_1.rows(), set_1.cols() + set_2.cols());
  all << set_1, set_2;
  std::vector<int> labels(static_cast<std::size_t>(all.cols()), 0);
  std::fill(labels.begin() + set_1.cols(), labels.end(), 1);
  // Identical samples stay on one side of the split; otherwise a duplicate in
  // the training fold leaks its (opposite) label into the test fold.
  std::map<std::vector<double>, std::size_t> group_of;
  std::vector<std::vector<Index>> groups;
  std::vector<int> group_labels;
  for (Index i = 0; i < all.cols(); ++i) {
    std::vector<double> key(all.col(i).data(), all.col(i).data() + all.rows());
    const auto [it, fresh] = group_of.emplace(std::move(key), groups.size());
    if (fresh) {
      groups.emplace_back();
      group_labels.push_back(labels[static_cast<std::size_t>(i)]);
    }
    groups[it->second].push_back(i);
  }
  const Split by_group = stratified_split(group_labels, 0.7, derive_seed(seed, "distinctness-split"));
  Split split;
  for (Index g : by_group.train) split.train.insert(split.train.end(), groups[g].begin(), groups[g].end());
  for (Index g : by_group.test) split.test.insert(split.test.end(), groups[g].begin(), groups[g].end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  const auto train_y = select(labels, split.train);
  const auto test_y = select(labels, split.test);
  const auto clf = train_softmax_classifier(select_columns(all, split.train), train_y, 2, ClassifierConfig{},
                                            derive_seed(seed, "distinctness-train"));
  const auto pred = clf.predict_all(select_columns(all, split.test));
  return classification_report(test_y, pred, 2);
}

ClassifierReport substitutability_eval(const LabeledSet& synthetic, const LabeledSet& real, std::uint64_t seed) {
  if (static_cast<Index>(synthetic.labels.size()) != synthetic.samples.cols() ||
      static_cast<Index>(real.labels.size()) != real.samples.cols()) {
    throw ShapeError("substitutability_eval: label count mismatch");
  }
  if (synthetic.samples.rows() != real.samples.rows()) throw ShapeError("substitutability_eval: dimensions differ");
  const std::set<int> syn_set(synthetic.labels.begin(), synthetic.labels.end());
  const std::set<int> real_set(real.labels.begin(), real.labels.end());
  if (syn_set != real_set) throw ParameterError("substitutability_eval: label sets differ");
  if (syn_set.size() < 2) throw ParameterError("substitutability_eval: need at least two labels");
  const std::vector<int> classes(syn_set.begin(), syn_set.end());
  auto index_of = [&](const std::vector<int>& ys) {
    std::vector<int> out(ys.size());
    for (std::size_t i = 0; i < ys.size(); ++i) {
      out[i] = static_cast<int>(std::lower_bound(classes.begin(), classes.end(), ys[i]) - classes.begin());
    }
    return out;
  };
  const int k = static_cast<int>(classes.size());
  const auto clf = train_softmax_classifier(synthetic.samples, index_of(synthetic.labels), k,
                                            oracle_classifier_config(), derive_seed(seed, "substitutability"));
  return classification_report(index_of(real.labels), clf.predict_all(real.samples), k);
}

std::vector<ConversionRate> alignment_eval(std::span<const CounterfactualRecord> records,
                                           const OracleClassifier& oracle,
                                           const std::map<int, int>& class_of_cluster) {
  std::map<int, ConversionRate> by_class;
  for (const auto& [cluster, cls] : class_of_cluster) by_class[cls].class_label = cls;
  for (const auto& r : records) {
    const auto it = class_of_cluster.find(r.target_cluster);
    if (it == class_of_cluster.end()) {
      throw ParameterError("alignment_eval: cluster " + std::to_string(r.target_cluster) + " has no class");
    }
    auto& rate = by_class[it->second];
    ++rate.total;
    if (oracle.predict(r.decoded) == it->second) ++rate.converted;
  }
  std::vector<ConversionRate> out;
  for (const auto& [cls, rate] : by_class) out.push_back(rate);
  return out;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw ShapeError("adjusted_rand_index: length mismatch");
  if (a.empty()) throw ParameterError("adjusted_rand_index: empty labeling");
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> ca, cb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0;
    ca[a[i]] += 1.0;
    cb[b[i]] += 1.0;
  }
  auto c2 = [](double n) { return 0.5 * n * (n - 1.0); };
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [key, n] : joint) index += c2(n);
  for (const auto& [key, n] : ca) sa += c2(n);
  for (const auto& [key, n] : cb) sb += c2(n);
  const double total = c2(static_cast<double>(a.size()));
  const double expected = total > 0.0 ? sa * sb / total : 0.0;
  const double max_index = 0.5 * (sa + sb);
  // Both labelings trivial (one cluster, or all singletons): identical partitions score 1.
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

}  // namespace difclue
