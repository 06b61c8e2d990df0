#include "difclue/synth_data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace difclue {

std::string to_string(DomainKind kind) { return kind == DomainKind::GaussMix ? "gauss-mix" : "shapes-16"; }

DomainKind parse_domain(const std::string& name) {
  if (name == "gauss-mix") return DomainKind::GaussMix;
  if (name == "shapes-16") return DomainKind::Shapes16;
  throw ParameterError("unknown domain kind '" + name + "'");
}

namespace {

constexpr int kSide = 16;

struct ShapeFeature {
  bool disc;
  int row;
  int col;
};

// Feature catalog for shapes-16, one entry per non-base sub-population.
constexpr std::array<ShapeFeature, 6> kShapeCatalog{{
    {false, 1, 1},    // square, top-left
    {true, 10, 10},   // disc, bottom-right
    {false, 1, 10},   // square, top-right
    {true, 10, 1},    // disc, bottom-left
    {false, 10, 10},  // square, bottom-right
    {true, 1, 1},     // disc, top-left
}};

constexpr double kBackground = 0.1;

int group_count(const DatasetSpec& s) { return s.classes * s.modes_per_class; }

void paint(Eigen::VectorXd& img, const ShapeFeature& f, int size, double intensity, int dr, int dc) {
  const double radius = 0.5 * size;
  const double cy = f.row + dr + radius;
  const double cx = f.col + dc + radius;
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const int pr = f.row + dr + r;
      const int pc = f.col + dc + c;
      if (pr < 0 || pr >= kSide || pc < 0 || pc >= kSide) continue;
      if (f.disc) {
        const double y = pr + 0.5 - cy;
        const double x = pc + 0.5 - cx;
        if (y * y + x * x > radius * radius) continue;
      }
      img[pr * kSide + pc] += intensity;
    }
  }
}

}  // namespace

DatasetSpec default_spec(DomainKind kind) {
  DatasetSpec s;
  s.kind = kind;
  if (kind == DomainKind::Shapes16) {
    s.dim = 256;
    s.noise = 0.05;
    s.samples_per_mode = 150;
  }
  return s;
}

void validate(const DatasetSpec& s) {
  if (s.classes < 2) throw ParameterError("dataset: need at least two classes");
  if (s.modes_per_class < 1) throw ParameterError("dataset: need at least one mode per class");
  if (s.samples_per_mode < 1) throw ParameterError("dataset: need at least one sample per mode");
  if (!(s.noise >= 0.0) || !std::isfinite(s.noise)) throw ParameterError("dataset: noise scale must be >= 0");
  if (s.kind == DomainKind::GaussMix) {
    if (!(s.separation > 0.0) || !std::isfinite(s.separation)) throw ParameterError("dataset: separation must be > 0");
    if (s.dim < 1) throw ParameterError("dataset: dimension must be positive");
    if (group_count(s) - 1 > s.dim) {
      throw ParameterError("dataset: gauss-mix needs classes * modes - 1 <= dim");
    }
  } else {
    if (s.dim != kSide * kSide) throw ParameterError("dataset: shapes-16 requires dim = 256");
    if (group_count(s) - 1 > static_cast<int>(kShapeCatalog.size())) {
      throw ParameterError("dataset: shapes-16 supports at most 7 sub-populations");
    }
    if (s.shape_size < 2 || s.shape_size > 6) throw ParameterError("dataset: shape size must be in [2, 6]");
    if (!(s.shape_intensity > 0.0)) throw ParameterError("dataset: shape intensity must be > 0");
  }
}

Sample Dataset::sample(Index i) const {
  const auto k = static_cast<std::size_t>(i);
  return {ids.at(k), values.col(i), labels.at(k), modes.at(k)};
}

std::vector<Index> Dataset::indices_with_label(int label) const {
  std::vector<Index> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) out.push_back(static_cast<Index>(i));
  }
  return out;
}

Dataset generate_dataset(const DatasetSpec& spec) {
  validate(spec);
  const int groups = group_count(spec);
  const Index d = spec.dim;
  const Index n = static_cast<Index>(groups) * spec.samples_per_mode;

  Dataset ds;
  ds.kind = spec.kind;
  ds.classes = spec.classes;
  ds.modes_per_class = spec.modes_per_class;
  ds.values.resize(d, n);
  ds.labels.reserve(static_cast<std::size_t>(n));
  ds.modes.reserve(static_cast<std::size_t>(n));
  ds.ids.reserve(static_cast<std::size_t>(n));

  Eigen::MatrixXd centers(d, groups);
  if (spec.kind == DomainKind::GaussMix) {
    Rng rng(derive_seed(spec.seed, "gauss-mix-centers"));
    Eigen::VectorXd base(d);
    for (Index i = 0; i < d; ++i) base[i] = rng.uniform(-1.0, 1.0);
    Eigen::MatrixXd gauss(d, d);
    for (Index c = 0; c < d; ++c) {
      for (Index r = 0; r < d; ++r) gauss(r, c) = rng.normal();
    }
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(gauss).householderQ();
    const double offset = spec.separation * spec.noise;
    for (int g = 0; g < groups; ++g) {
      centers.col(g) = base;
      if (g + 1 < groups) centers.col(g) += offset * q.col(g);
    }
  }

  std::int64_t id = 0;
  for (int g = 0; g < groups; ++g) {
    for (int j = 0; j < spec.samples_per_mode; ++j, ++id) {
      Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(id)));
      Eigen::VectorXd v(d);
      if (spec.kind == DomainKind::GaussMix) {
        for (Index i = 0; i < d; ++i) v[i] = centers(i, g) + spec.noise * rng.normal();
      } else {
        v.setConstant(kBackground);
        if (g + 1 < groups) {
          const int dr = static_cast<int>(rng.below(3)) - 1;
          const int dc = static_cast<int>(rng.below(3)) - 1;
          paint(v, kShapeCatalog[static_cast<std::size_t>(g)], spec.shape_size, spec.shape_intensity, dr, dc);
        }
        for (Index i = 0; i < d; ++i) v[i] = std::clamp(v[i] + spec.noise * rng.normal(), 0.0, 1.0);
      }
      ds.values.col(static_cast<Index>(id)) = v;
      ds.labels.push_back(g / spec.modes_per_class);
      ds.modes.push_back(g);
      ds.ids.push_back(id);
    }
  }
  return ds;
}

Dataset mix_classes(const Dataset& dataset, int class_a, int class_b) {
  auto present = [&](int c) { return std::find(dataset.labels.begin(), dataset.labels.end(), c) != dataset.labels.end(); };
  if (!present(class_a)) throw ParameterError("mix_classes: unknown class " + std::to_string(class_a));
  if (!present(class_b)) throw ParameterError("mix_classes: unknown class " + std::to_string(class_b));
  Dataset out = dataset;
  out.classes = 2;
  out.modes_per_class = 1;
  for (std::size_t i = 0; i < out.labels.size(); ++i) {
    const int original = dataset.labels[i];
    out.modes[i] = original;
    out.labels[i] = (original == class_a || original == class_b) ? kPositiveLabel : kNegativeLabel;
  }
  return out;
}

ClassifierConfig oracle_classifier_config() {
  ClassifierConfig c;
  c.hidden = {32};
  c.epochs = 40;
  c.batch_size = 32;
  c.learning_rate = 5e-3;
  return c;
}

OracleClassifier train_oracle(const Dataset& dataset, std::uint64_t seed) {
  if (dataset.classes < 2) throw ParameterError("train_oracle: need at least two classes");
  const Split split = stratified_split(dataset.labels, 0.8, derive_seed(seed, "oracle-split"));
  const Eigen::MatrixXd train_x = select_columns(dataset.values, split.train);
  const std::vector<int> train_y = select(dataset.labels, split.train);
  OracleClassifier oracle;
  oracle.classifier =
      train_softmax_classifier(train_x, train_y, dataset.classes, oracle_classifier_config(), derive_seed(seed, "oracle"));
  const Eigen::MatrixXd test_x = select_columns(dataset.values, split.test);
  const std::vector<int> test_y = select(dataset.labels, split.test);
  oracle.heldout = classification_report(test_y, oracle.classifier.predict_all(test_x), dataset.classes);
  return oracle;
}

void write_dataset(std::ostream& os, const Dataset& ds) {
  os << "difclue-dataset v1, " << to_string(ds.kind) << ", " << ds.dim() << ", " << ds.classes << ", "
     << ds.modes_per_class << ", " << ds.size() << "\n";
  char buf[32];
  for (Index i = 0; i < ds.size(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    os << ds.ids[k] << ", " << ds.labels[k] << ", " << ds.modes[k];
    for (Index r = 0; r < ds.dim(); ++r) {
      const auto res = std::to_chars(buf, buf + sizeof buf, ds.values(r, i));
      os << ", " << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    os << "\n";
  }
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
  }
  return out;
}

template <typename T>
T parse_number(const std::string& s, const char* what) {
  T value{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError(std::string("dataset: bad ") + what + " '" + s + "'");
  }
  return value;
}

}  // namespace

Dataset read_dataset(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("dataset: missing header");
  const auto header = split_fields(line);
  if (header.size() != 6 || header[0] != "difclue-dataset v1") throw FormatError("dataset: bad header");
  Dataset ds;
  ds.kind = parse_domain(header[1]);
  const auto d = parse_number<Index>(header[2], "dimension");
  ds.classes = parse_number<int>(header[3], "class count");
  ds.modes_per_class = parse_number<int>(header[4], "mode count");
  const auto count = parse_number<Index>(header[5], "record count");
  if (d < 1 || count < 0) throw FormatError("dataset: bad header dimensions");
  ds.values.resize(d, count);
  for (Index i = 0; i < count; ++i) {
    if (!std::getline(is, line)) throw FormatError("dataset: truncated, expected " + std::to_string(count) + " records");
    const auto f = split_fields(line);
    if (static_cast<Index>(f.size()) != d + 3) throw FormatError("dataset: record " + std::to_string(i) + " has wrong length");
    ds.ids.push_back(parse_number<std::int64_t>(f[0], "id"));
    ds.labels.push_back(parse_number<int>(f[1], "label"));
    ds.modes.push_back(parse_number<int>(f[2], "mode"));
    for (Index r = 0; r < d; ++r) ds.values(r, i) = parse_number<double>(f[static_cast<std::size_t>(r + 3)], "value");
  }
  return ds;
}

void save_dataset(const std::string& path, const Dataset& dataset) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  write_dataset(os, dataset);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path);
  return read_dataset(is);
}

void write_pgm(std::ostream& os, const Eigen::Ref<const Eigen::VectorXd>& pixels, int width, int height) {
  if (pixels.size() != static_cast<Index>(width) * height) throw ShapeError("write_pgm: pixel count mismatch");
  os << "P5\n" << width << " " << height << "\n255\n";
  for (Index i = 0; i < pixels.size(); ++i) {
    const double v = std::clamp(pixels[i], 0.0, 1.0);
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  }
}

void save_pgm(const std::string& path, const Eigen::Ref<const Eigen::VectorXd>& pixels, int width, int height) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path);
  write_pgm(os, pixels, width, height);
}

}  // namespace difclue
