#include "difclue/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <type_traits>
#include <sstream>
#include <utility>

#include "difclue/checkpoint.hpp"
#include "difclue/error.hpp"
#include "difclue/parallel.hpp"
#include "difclue/rng.hpp"

namespace difclue {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

template <class T>
T parse_value(const std::string& key, const std::string& s) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParameterError("config: bad value '" + s + "' for " + key);
  }
  return v;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& s) {
  std::vector<T> out;
  for (const auto& item : split_list(s)) out.push_back(parse_value<T>(key, item));
  return out;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ParameterError("config: bad boolean '" + s + "' for " + key);
}

std::string exact(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_floating_point_v<T>) {
      out += exact(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

template <class Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

Eigen::MatrixXd columns_of(const std::vector<Eigen::VectorXd>& cols, Index rows) {
  Eigen::MatrixXd m(rows, static_cast<Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) m.col(static_cast<Index>(i)) = cols[i];
  return m;
}

Eigen::MatrixXd oracle_features(const OracleClassifier& oracle, const Eigen::MatrixXd& samples) {
  std::vector<Eigen::VectorXd> f(static_cast<std::size_t>(samples.cols()));
  parallel_for(f.size(), [&](std::size_t i) { f[i] = oracle.features(samples.col(static_cast<Index>(i))); });
  return columns_of(f, f.empty() ? 0 : f.front().size());
}

void ensure_writable(std::ostream& os, const std::string& path) {
  if (!os) throw Error("cannot write " + path);
}

}  // namespace

ExperimentConfig default_config(DomainKind kind) {
  ExperimentConfig cfg;
  cfg.data = default_spec(kind);
  if (kind == DomainKind::Shapes16) {
    cfg.dae.beta_max = 0.1;
    cfg.dae.epochs = 300;
    cfg.dae.latent_variance = 1.5;
  }
  return cfg;
}

void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& v) {
  auto i = [&] { return parse_value<int>(key, v); };
  auto r = [&] { return parse_value<double>(key, v); };
  auto n = [&] { return parse_value<Index>(key, v); };
  if (key == "seed") {
    c.seed = parse_value<std::uint64_t>(key, v);
  } else if (key == "out") {
    if (v.empty()) throw ParameterError("config: empty output directory");
    c.out = v;
  } else if (key == "data.kind") {
    try {
      c.data.kind = parse_domain(v);
    } catch (const Error& e) {
      throw ParameterError(std::string("config: ") + e.what());
    }
  } else if (key == "data.dim") {
    c.data.dim = n();
  } else if (key == "data.classes") {
    c.data.classes = i();
  } else if (key == "data.modes_per_class") {
    c.data.modes_per_class = i();
  } else if (key == "data.samples_per_mode") {
    c.data.samples_per_mode = i();
  } else if (key == "data.separation") {
    c.data.separation = r();
  } else if (key == "data.noise") {
    c.data.noise = r();
  } else if (key == "data.shape_intensity") {
    c.data.shape_intensity = r();
  } else if (key == "data.shape_size") {
    c.data.shape_size = i();
  } else if (key == "data.mix") {
    const auto m = parse_list<int>(key, v);
    if (m.size() != 2) throw ParameterError("config: data.mix needs two class labels");
    c.mix_a = m[0];
    c.mix_b = m[1];
  } else if (key == "dae.latent_dim") {
    c.dae.latent_dim = n();
  } else if (key == "dae.timesteps") {
    c.dae.timesteps = i();
  } else if (key == "dae.beta_min") {
    c.dae.beta_min = r();
  } else if (key == "dae.beta_max") {
    c.dae.beta_max = r();
  } else if (key == "dae.ddim_steps") {
    c.dae.ddim_steps = i();
  } else if (key == "dae.epochs") {
    c.dae.epochs = i();
  } else if (key == "dae.batch_size") {
    c.dae.batch_size = n();
  } else if (key == "dae.learning_rate") {
    c.dae.learning_rate = r();
  } else if (key == "dae.encoder_hidden") {
    c.dae.encoder_hidden = parse_list<Index>(key, v);
  } else if (key == "dae.denoiser_hidden") {
    c.dae.denoiser_hidden = parse_list<Index>(key, v);
  } else if (key == "dae.time_embedding_dim") {
    c.dae.time_embedding_dim = n();
  } else if (key == "dae.noise_skip") {
    c.dae.noise_skip = parse_bool(key, v);
  } else if (key == "dae.latent_variance") {
    c.dae.latent_variance = r();
  } else if (key == "cluster.k") {
    c.k = i();
  } else if (key == "cluster.max_iterations") {
    c.kmeans_max_iterations = i();
  } else if (key == "cluster.restarts") {
    c.kmeans_restarts = i();
  } else if (key == "cf.alpha") {
    c.alpha = r();
  } else if (key == "cf.alphas") {
    c.alphas = parse_list<double>(key, v);
  } else if (key == "cf.negatives") {
    c.negatives = i();
  } else if (key == "cf.pgm_pairs") {
    c.pgm_pairs = i();
  } else {
    throw ParameterError("config: unknown key '" + key + "'");
  }
}

ExperimentConfig parse_config(std::istream& is) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParameterError("config: line " + std::to_string(lineno) + " has no '='");
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParameterError("config: line " + std::to_string(lineno) + " has an empty key");
    if (!seen.insert(key).second) throw ParameterError("config: duplicate key '" + key + "'");
    entries.emplace_back(std::move(key), trim(line.substr(eq + 1)));
  }
  ExperimentConfig probe;
  for (const auto& [k, v] : entries) {
    if (k == "data.kind") set_config_value(probe, k, v);
  }
  ExperimentConfig cfg = default_config(probe.data.kind);
  for (const auto& [k, v] : entries) set_config_value(cfg, k, v);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("config: cannot read " + path);
  return parse_config(in);
}

std::string format_config(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "seed = " << c.seed << "\n";
  o << "out = " << c.out << "\n";
  o << "data.kind = " << to_string(c.data.kind) << "\n";
  o << "data.dim = " << c.data.dim << "\n";
  o << "data.classes = " << c.data.classes << "\n";
  o << "data.modes_per_class = " << c.data.modes_per_class << "\n";
  o << "data.samples_per_mode = " << c.data.samples_per_mode << "\n";
  o << "data.separation = " << exact(c.data.separation) << "\n";
  o << "data.noise = " << exact(c.data.noise) << "\n";
  o << "data.shape_intensity = " << exact(c.data.shape_intensity) << "\n";
  o << "data.shape_size = " << c.data.shape_size << "\n";
  o << "data.mix = " << c.mix_a << ", " << c.mix_b << "\n";
  o << "dae.latent_dim = " << c.dae.latent_dim << "\n";
  o << "dae.timesteps = " << c.dae.timesteps << "\n";
  o << "dae.beta_min = " << exact(c.dae.beta_min) << "\n";
  o << "dae.beta_max = " << exact(c.dae.beta_max) << "\n";
  o << "dae.ddim_steps = " << c.dae.ddim_steps << "\n";
  o << "dae.epochs = " << c.dae.epochs << "\n";
  o << "dae.batch_size = " << c.dae.batch_size << "\n";
  o << "dae.learning_rate = " << exact(c.dae.learning_rate) << "\n";
  o << "dae.encoder_hidden = " << join(c.dae.encoder_hidden) << "\n";
  o << "dae.denoiser_hidden = " << join(c.dae.denoiser_hidden) << "\n";
  o << "dae.time_embedding_dim = " << c.dae.time_embedding_dim << "\n";
  o << "dae.noise_skip = " << (c.dae.noise_skip ? "true" : "false") << "\n";
  o << "dae.latent_variance = " << exact(c.dae.latent_variance) << "\n";
  o << "cluster.k = " << c.k << "\n";
  o << "cluster.max_iterations = " << c.kmeans_max_iterations << "\n";
  o << "cluster.restarts = " << c.kmeans_restarts << "\n";
  o << "cf.alpha = " << exact(c.alpha) << "\n";
  o << "cf.alphas = " << join(c.alphas) << "\n";
  o << "cf.negatives = " << c.negatives << "\n";
  o << "cf.pgm_pairs = " << c.pgm_pairs << "\n";
  return o.str();
}

void validate(const ExperimentConfig& c) {
  validate(c.data);
  for (int cls : {c.mix_a, c.mix_b}) {
    if (cls < 0 || cls >= c.data.classes) {
      throw ParameterError("config: mixed class " + std::to_string(cls) + " does not exist (classes = " +
                           std::to_string(c.data.classes) + ")");
    }
  }
  if (c.mix_a == c.mix_b && c.data.classes < 2) throw ParameterError("config: no negative class left");
  if (c.k < 1) throw ParameterError("config: cluster.k must be >= 1");
  if (c.kmeans_max_iterations < 1) throw ParameterError("config: cluster.max_iterations must be >= 1");
  if (c.kmeans_restarts < 1) throw ParameterError("config: cluster.restarts must be >= 1");
  if (c.alphas.size() < 3) throw ParameterError("config: cf.alphas needs at least 3 values");
  for (std::size_t i = 1; i < c.alphas.size(); ++i) {
    if (!(c.alphas[i] > c.alphas[i - 1])) throw ParameterError("config: cf.alphas must be strictly ascending");
  }
  if (!std::isfinite(c.alpha)) throw ParameterError("config: cf.alpha must be finite");
  if (c.negatives < 4) throw ParameterError("config: cf.negatives must be >= 4");
  if (c.pgm_pairs < 0) throw ParameterError("config: cf.pgm_pairs must be >= 0");
  if (c.dae.epochs < 1 || c.dae.batch_size < 1 || !(c.dae.learning_rate > 0.0)) {
    throw ParameterError("config: dae.epochs, dae.batch_size and dae.learning_rate must be positive");
  }
  if (c.dae.latent_dim < 1 || c.dae.time_embedding_dim < 0) throw ParameterError("config: bad dae dimensions");
  make_schedule(c.dae.timesteps, c.dae.beta_min, c.dae.beta_max);
  if (c.dae.ddim_steps < 1 || c.dae.ddim_steps > c.dae.timesteps || c.dae.timesteps % c.dae.ddim_steps != 0) {
    throw ParameterError("config: dae.ddim_steps must divide dae.timesteps");
  }
}

std::string format_value(double v) {
  if (v == 0.0) v = 0.0;  // no "-0"
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_metrics_csv(std::ostream& os, const std::vector<MetricRow>& rows) {
  os << "metric,key,value\n";
  for (const auto& r : rows) os << r.metric << ',' << r.key << ',' << format_value(r.value) << '\n';
}

std::vector<MetricRow> read_metrics_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || trim(line) != "metric,key,value") throw FormatError("metrics: bad header");
  std::vector<MetricRow> rows;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    const auto f = split_list(line);
    if (f.size() != 3) throw FormatError("metrics: bad row '" + line + "'");
    char* end = nullptr;
    const double v = std::strtod(f[2].c_str(), &end);
    if (end == f[2].c_str() || *end != '\0') throw FormatError("metrics: bad value '" + f[2] + "'");
    rows.push_back({f[0], f[1], v});
  }
  return rows;
}

Dataset stage_generate(const ExperimentConfig& cfg) {
  DatasetSpec spec = cfg.data;
  spec.seed = cfg.seed;
  return generate_dataset(spec);
}

Dataset stage_mix(const ExperimentConfig& cfg, const Dataset& raw) { return mix_classes(raw, cfg.mix_a, cfg.mix_b); }

OracleClassifier stage_oracle(const ExperimentConfig& cfg, const Dataset& raw) {
  return train_oracle(raw, derive_seed(cfg.seed, "oracle"));
}

TrainedAutoencoder stage_autoencoder(const ExperimentConfig& cfg, const Dataset& mixed) {
  return train_autoencoder(mixed.values, cfg.dae, derive_seed(cfg.seed, "autoencoder"));
}

ModeModel stage_cluster(const ExperimentConfig& cfg, const Dataset& mixed, const DiffusionAutoencoder& model) {
  ModeModel mm;
  mm.positives = mixed.indices_with_label(kPositiveLabel);
  if (mm.positives.empty()) throw ParameterError("cluster: no positive samples");
  std::vector<Eigen::VectorXd> codes(mm.positives.size());
  parallel_for(codes.size(), [&](std::size_t i) { codes[i] = encode_semantic(model, mixed.values.col(mm.positives[i])).z; });
  const Eigen::MatrixXd z = columns_of(codes, model.latent_dim);
  KMeansOptions opts;
  opts.max_iterations = cfg.kmeans_max_iterations;
  opts.restarts = cfg.kmeans_restarts;
  mm.clusters = kmeans_fit(z, cfg.k, derive_seed(cfg.seed, "kmeans"), opts);
  mm.assignments = kmeans_assign_all(mm.clusters, z);
  mm.directions = fit_direction_classifier(z, mm.assignments, derive_seed(cfg.seed, "directions"));
  return mm;
}

std::vector<Index> explained_negatives(const ExperimentConfig& cfg, const Dataset& mixed) {
  auto neg = mixed.indices_with_label(kNegativeLabel);
  if (static_cast<int>(neg.size()) < 4) throw ParameterError("explain: fewer than 4 negative samples");
  Rng rng(derive_seed(cfg.seed, "negatives"));
  rng.shuffle(neg.begin(), neg.end());
  neg.resize(std::min(neg.size(), static_cast<std::size_t>(cfg.negatives)));
  std::sort(neg.begin(), neg.end());
  return neg;
}

std::vector<CounterfactualRecord> stage_explain(const ExperimentConfig& cfg, const Dataset& mixed,
                                                const DiffusionAutoencoder& model, const DirectionSet& directions,
                                                const OracleClassifier& oracle) {
  const auto neg = explained_negatives(cfg, mixed);
  const auto k = static_cast<std::size_t>(directions.k());
  std::vector<CounterfactualRecord> records(neg.size() * k);
  parallel_for(records.size(), [&](std::size_t r) {
    const Index idx = neg[r / k];
    PerturbationSpec spec;
    spec.target_cluster = static_cast<int>(r % k);
    spec.alpha = cfg.alpha;
    spec.steps = cfg.dae.ddim_steps;
    records[r] = generate_counterfactual(model, directions, oracle, mixed.ids[static_cast<std::size_t>(idx)],
                                         mixed.values.col(idx), spec);
  });
  return records;
}

std::map<int, int> majority_classes(const Dataset& mixed, const ModeModel& mm) {
  std::map<int, std::map<int, int>> votes;
  for (std::size_t i = 0; i < mm.positives.size(); ++i) {
    ++votes[mm.assignments[i]][mixed.modes[static_cast<std::size_t>(mm.positives[i])]];
  }
  std::map<int, int> out;
  for (int j = 0; j < mm.clusters.k(); ++j) {
    int best = -1, best_n = -1;
    for (const auto& [cls, n] : votes[j]) {
      if (n > best_n) {
        best = cls;
        best_n = n;
      }
    }
    if (best < 0) throw ParameterError("evaluate: cluster " + std::to_string(j) + " has no members");
    out[j] = best;
  }
  return out;
}

Evaluation stage_evaluate(const ExperimentConfig& cfg, const Dataset& mixed, const OracleClassifier& oracle,
                          const DiffusionAutoencoder& model, const ModeModel& mm,
                          const std::vector<CounterfactualRecord>& records) {
  Evaluation ev;
  auto row = [&](std::string metric, std::string key, double v) { ev.rows.push_back({std::move(metric), std::move(key), v}); };
  ev.class_of_cluster = majority_classes(mixed, mm);
  const int k = mm.clusters.k();

  std::vector<int> truth;
  for (Index idx : mm.positives) truth.push_back(mixed.modes[static_cast<std::size_t>(idx)]);
  ev.ari = adjusted_rand_index(mm.assignments, truth);

  const auto neg = explained_negatives(cfg, mixed);
  std::vector<double> sq(neg.size());
  parallel_for(neg.size(), [&](std::size_t i) {
    const auto x = mixed.values.col(neg[i]);
    sq[i] = (reconstruct(model, x, cfg.dae.ddim_steps) - x).squaredNorm() / static_cast<double>(x.size());
  });
  for (double v : sq) ev.reconstruction_mse += v / static_cast<double>(sq.size());

  ev.trajectories.resize(neg.size() * static_cast<std::size_t>(k));
  parallel_for(ev.trajectories.size(), [&](std::size_t r) {
    const Index idx = neg[r / static_cast<std::size_t>(k)];
    auto& t = ev.trajectories[r];
    t.source_id = mixed.ids[static_cast<std::size_t>(idx)];
    t.target_cluster = static_cast<int>(r % static_cast<std::size_t>(k));
    t.target_class = ev.class_of_cluster.at(t.target_cluster);
    t.points = alpha_sweep(model, mm.directions, oracle, mixed.values.col(idx), t.target_cluster, t.target_class,
                           cfg.alphas, cfg.dae.ddim_steps);
  });
  std::vector<std::vector<SweepPoint>> sweeps;
  for (const auto& t : ev.trajectories) sweeps.push_back(t.points);
  ev.importance = importance_eval(sweeps);

  ev.alignment = alignment_eval(records, oracle, ev.class_of_cluster);

  std::vector<std::vector<Eigen::VectorXd>> by_cluster(static_cast<std::size_t>(k));
  for (const auto& r : records) by_cluster[static_cast<std::size_t>(r.target_cluster)].push_back(r.decoded);
  auto real_of_class = [&](int cls) {
    std::vector<Eigen::VectorXd> v;
    for (Index idx : mm.positives) {
      if (mixed.modes[static_cast<std::size_t>(idx)] == cls) v.push_back(mixed.values.col(idx));
    }
    return columns_of(v, mixed.dim());
  };
  for (int j = 0; j < k; ++j) {
    RealismScore s;
    s.cluster = j;
    s.target_class = ev.class_of_cluster.at(j);
    const int other = s.target_class == cfg.mix_a ? cfg.mix_b : cfg.mix_a;
    const auto cf = fit_gaussian(oracle_features(oracle, columns_of(by_cluster[static_cast<std::size_t>(j)], mixed.dim())));
    s.fd_same = frechet_distance(cf, fit_gaussian(oracle_features(oracle, real_of_class(s.target_class))));
    s.fd_opposite = other == s.target_class
                        ? s.fd_same
                        : frechet_distance(cf, fit_gaussian(oracle_features(oracle, real_of_class(other))));
    ev.realism.push_back(s);
  }

  if (k >= 2) {
    ev.distinctness = distinctness_eval(columns_of(by_cluster[0], mixed.dim()), columns_of(by_cluster[1], mixed.dim()),
                                        derive_seed(cfg.seed, "distinctness"));
  }

  LabeledSet synthetic, real;
  std::vector<Eigen::VectorXd> syn_cols;
  for (const auto& r : records) {
    syn_cols.push_back(r.decoded);
    synthetic.labels.push_back(ev.class_of_cluster.at(r.target_cluster));
  }
  synthetic.samples = columns_of(syn_cols, mixed.dim());
  real.samples = select_columns(mixed.values, mm.positives);
  real.labels = truth;
  ev.substitutability = substitutability_eval(synthetic, real, derive_seed(cfg.seed, "substitutability"));
  const std::set<int> classes(truth.begin(), truth.end());
  ev.substitutability_classes.assign(classes.begin(), classes.end());

  row("oracle", "heldout_accuracy", oracle.heldout.accuracy);
  row("autoencoder", "reconstruction_mse", ev.reconstruction_mse);
  row("clustering", "ari", ev.ari);
  row("clustering", "inertia", mm.clusters.inertia);
  for (const auto& [j, cls] : ev.class_of_cluster) row("clustering", "class_of_cluster_" + std::to_string(j), cls);
  for (const auto& s : ev.realism) {
    row("realism", "fd_same_cluster_" + std::to_string(s.cluster), s.fd_same);
    row("realism", "fd_opposite_cluster_" + std::to_string(s.cluster), s.fd_opposite);
  }
  if (k >= 2) {
    const auto& d = ev.distinctness;
    row("distinctness", "accuracy", d.accuracy);
    row("distinctness", "precision_micro", d.precision_micro);
    row("distinctness", "precision_macro", d.precision_macro);
    row("distinctness", "recall_micro", d.recall_micro);
    row("distinctness", "recall_macro", d.recall_macro);
  }
  const auto& s = ev.substitutability;
  row("substitutability", "accuracy", s.accuracy);
  row("substitutability", "precision_macro", s.precision_macro);
  row("substitutability", "recall_macro", s.recall_macro);
  for (std::size_t c = 0; c < s.per_class.size(); ++c) {
    row("substitutability", "recall_class_" + std::to_string(ev.substitutability_classes[c]), s.per_class[c].recall);
  }
  row("importance", "R", ev.importance.R);
  row("importance", "rho", ev.importance.rho);
  row("importance", "KL", ev.importance.KL);
  row("importance", "MSE", ev.importance.MSE);
  row("importance", "trajectories", static_cast<double>(ev.importance.trajectories));
  double mean = 0.0;
  for (const auto& a : ev.alignment) {
    row("alignment", "conversion_class_" + std::to_string(a.class_label), a.rate());
    mean += a.rate() / static_cast<double>(ev.alignment.size());
  }
  row("alignment", "mean_conversion", mean);
  return ev;
}

Dataset records_to_dataset(const std::vector<CounterfactualRecord>& records, const Dataset& mixed,
                           const std::map<int, int>& class_of_cluster) {
  Dataset cf;
  cf.kind = mixed.kind;
  cf.classes = std::max(mixed.classes, 1);
  cf.modes_per_class = 1;
  cf.values.resize(mixed.dim(), static_cast<Index>(records.size()));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    cf.values.col(static_cast<Index>(i)) = r.decoded;
    cf.ids.push_back(r.source_id);
    const auto it = class_of_cluster.find(r.target_cluster);
    cf.labels.push_back(it == class_of_cluster.end() ? -1 : it->second);
    cf.modes.push_back(r.target_cluster);
  }
  return cf;
}

std::vector<CounterfactualRecord> records_from_dataset(const Dataset& cf, double alpha) {
  std::vector<CounterfactualRecord> out(static_cast<std::size_t>(cf.size()));
  for (Index i = 0; i < cf.size(); ++i) {
    auto& r = out[static_cast<std::size_t>(i)];
    r.source_id = cf.ids[static_cast<std::size_t>(i)];
    r.target_cluster = cf.modes[static_cast<std::size_t>(i)];
    r.alpha = alpha;
    r.decoded = cf.values.col(i);
  }
  return out;
}

std::string render_report(const std::vector<MetricRow>& rows) {
  auto get = [&](const std::string& m, const std::string& k) -> std::string {
    for (const auto& r : rows) {
      if (r.metric == m && r.key == k) return format_value(r.value);
    }
    return "n/a";
  };
  auto keys = [&](const std::string& m, const std::string& prefix) {
    std::vector<std::string> out;
    for (const auto& r : rows) {
      if (r.metric == m && r.key.rfind(prefix, 0) == 0) out.push_back(r.key);
    }
    return out;
  };
  std::ostringstream o;
  o << "# DifCluE desk-scale report\n\n";
  o << "Desk-scale values come from this run's metrics.csv. The right-hand column lists the published\n"
       "CelebA-scale numbers (DifCluE, with the DISSECT baseline in parentheses). They are a\n"
       "reference (not reproduced): different data, oracle, and feature extractor.\n\n";
  o << "| property | metric | desk-scale | reference (not reproduced) |\n";
  o << "|---|---|---|---|\n";
  o << "| oracle | held-out accuracy | " << get("oracle", "heldout_accuracy") << " | attribute F1 0.808 to 0.941 |\n";
  o << "| autoencoder | round-trip MSE | " << get("autoencoder", "reconstruction_mse") << " | n/a |\n";
  o << "| mode recovery | adjusted Rand index | " << get("clustering", "ari") << " | n/a |\n";
  for (const auto& key : keys("realism", "fd_same_cluster_")) {
    const std::string j = key.substr(std::string("fd_same_cluster_").size());
    o << "| realism | FD cluster " << j << " vs own mode / other mode | " << get("realism", key) << " / "
      << get("realism", "fd_opposite_cluster_" + j) << " | FID 9.26 (11.0) |\n";
  }
  o << "| distinctness | accuracy | " << get("distinctness", "accuracy") << " | 0.93 (0.95) |\n";
  o << "| distinctness | precision micro / macro | " << get("distinctness", "precision_micro") << " / "
    << get("distinctness", "precision_macro") << " | 0.953 / 0.951 (0.98 / 0.98) |\n";
  o << "| distinctness | recall micro / macro | " << get("distinctness", "recall_micro") << " / "
    << get("distinctness", "recall_macro") << " | 0.963 / 0.964 (0.96 / 0.961) |\n";
  o << "| substitutability | accuracy | " << get("substitutability", "accuracy") << " | 0.881 (0.919) |\n";
  o << "| substitutability | precision / recall (macro) | " << get("substitutability", "precision_macro") << " / "
    << get("substitutability", "recall_macro") << " | 0.904 / 0.865 (0.969 / 0.876) |\n";
  for (const auto& key : keys("substitutability", "recall_class_")) {
    o << "| substitutability | recall, class " << key.substr(std::string("recall_class_").size()) << " | "
      << get("substitutability", key) << " | n/a |\n";
  }
  o << "| importance | R / rho | " << get("importance", "R") << " / " << get("importance", "rho")
    << " | 0.85 / 0.90 (0.84 / 0.88) |\n";
  o << "| importance | KL / MSE | " << get("importance", "KL") << " / " << get("importance", "MSE")
    << " | 0.22 / 0.091 (0.19 / 0.047) |\n";
  for (const auto& key : keys("alignment", "conversion_class_")) {
    o << "| alignment | conversion, class " << key.substr(std::string("conversion_class_").size()) << " | "
      << get("alignment", key) << " | per attribute 0.73 to 0.88 |\n";
  }
  o << "| alignment | mean conversion | " << get("alignment", "mean_conversion") << " | 0.83 (0.53) |\n";
  return o.str();
}

void write_evaluation(const std::string& dir, const ExperimentConfig& cfg, const Dataset& mixed,
                      const std::vector<CounterfactualRecord>& records, const Evaluation& ev) {
  fs::create_directories(dir);
  {
    const auto path = (fs::path(dir) / "metrics.csv").string();
    std::ofstream o(path);
    write_metrics_csv(o, ev.rows);
    ensure_writable(o, path);
  }
  {
    const auto path = (fs::path(dir) / "trajectories.csv").string();
    std::ofstream o(path);
    o << "source_id,target_cluster,target_class,alpha,probability\n";
    for (const auto& t : ev.trajectories) {
      for (const auto& p : t.points) {
        o << t.source_id << ',' << t.target_cluster << ',' << t.target_class << ',' << format_value(p.alpha) << ','
          << format_value(p.probability) << '\n';
      }
    }
    ensure_writable(o, path);
  }
  {
    const auto path = (fs::path(dir) / "records.csv").string();
    std::ofstream o(path);
    o << "source_id,target_cluster,target_class,alpha,predicted_class,target_probability\n";
    for (const auto& r : records) {
      const int cls = ev.class_of_cluster.at(r.target_cluster);
      Index pred = 0;
      const Eigen::VectorXd p = r.oracle_probabilities.size() > 0 ? r.oracle_probabilities : Eigen::VectorXd();
      if (p.size() > 0) p.maxCoeff(&pred);
      const double tp = p.size() > cls ? p[cls] : 0.0;
      o << r.source_id << ',' << r.target_cluster << ',' << cls << ',' << format_value(r.alpha) << ','
        << (p.size() > 0 ? std::to_string(pred) : std::string("-1")) << ',' << format_value(tp) << '\n';
    }
    ensure_writable(o, path);
  }
  save_dataset((fs::path(dir) / "counterfactuals.txt").string(), records_to_dataset(records, mixed, ev.class_of_cluster));
  {
    const auto path = (fs::path(dir) / "report.md").string();
    std::ofstream o(path);
    o << render_report(ev.rows);
    ensure_writable(o, path);
  }
  if (mixed.kind == DomainKind::Shapes16 && cfg.pgm_pairs > 0) {
    const fs::path pgm = fs::path(dir) / "pgm";
    fs::create_directories(pgm);
    std::map<std::int64_t, Index> index_of;
    for (Index i = 0; i < mixed.size(); ++i) index_of[mixed.ids[static_cast<std::size_t>(i)]] = i;
    std::set<std::int64_t> dumped;
    for (const auto& r : records) {
      if (!dumped.count(r.source_id)) {
        if (static_cast<int>(dumped.size()) >= cfg.pgm_pairs) continue;
        dumped.insert(r.source_id);
        save_pgm((pgm / (std::to_string(r.source_id) + "_source.pgm")).string(),
                 mixed.values.col(index_of.at(r.source_id)));
      }
      save_pgm((pgm / (std::to_string(r.source_id) + "_cluster" + std::to_string(r.target_cluster) + ".pgm")).string(),
               r.decoded);
    }
  }
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  const fs::path out(cfg.out);
  const fs::path failed = out / "FAILED";
  try {
    stage("config", [&] {
      fs::create_directories(out);
      fs::remove(failed);
      validate(cfg);
      std::ofstream o(out / "config.cfg");
      o << format_config(cfg);
      ensure_writable(o, (out / "config.cfg").string());
      return 0;
    });
    ExperimentResult r;
    r.raw = stage("data", [&] {
      auto raw = stage_generate(cfg);
      save_dataset((out / "dataset.txt").string(), raw);
      return raw;
    });
    r.mixed = stage("data", [&] { return stage_mix(cfg, r.raw); });
    r.oracle = stage("oracle", [&] {
      auto o = stage_oracle(cfg, r.raw);
      save_checkpoint((out / "oracle.ckpt").string(), o);
      return o;
    });
    r.autoencoder = stage("train", [&] {
      auto ae = stage_autoencoder(cfg, r.mixed);
      save_checkpoint((out / "autoencoder.ckpt").string(), ae.model);
      std::ofstream o(out / "loss.csv");
      o << "epoch,loss\n";
      for (std::size_t e = 0; e < ae.loss_history.size(); ++e) o << e << ',' << format_value(ae.loss_history[e]) << '\n';
      ensure_writable(o, (out / "loss.csv").string());
      return ae;
    });
    r.modes = stage("cluster", [&] {
      auto mm = stage_cluster(cfg, r.mixed, r.autoencoder.model);
      save_checkpoint((out / "clusters.ckpt").string(), mm.clusters);
      save_checkpoint((out / "directions.ckpt").string(), mm.directions);
      return mm;
    });
    r.records = stage("explain", [&] {
      return stage_explain(cfg, r.mixed, r.autoencoder.model, r.modes.directions, r.oracle);
    });
    r.evaluation = stage("evaluate", [&] {
      return stage_evaluate(cfg, r.mixed, r.oracle, r.autoencoder.model, r.modes, r.records);
    });
    stage("report", [&] {
      write_evaluation(out.string(), cfg, r.mixed, r.records, r.evaluation);
      return 0;
    });
    return r;
  } catch (const StageError& e) {
    std::error_code ec;
    fs::create_directories(out, ec);
    std::ofstream f(failed);
    f << e.what() << '\n';
    throw;
  }
}

}  // namespace difclue
