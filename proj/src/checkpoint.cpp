#include "difclue/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <limits>
#include <ostream>
#include <string_view>
#include <vector>

#include "difclue/error.hpp"
#include "difclue/rng.hpp"

namespace difclue {

namespace {

constexpr std::string_view kMagic = "DIFCLUE1";
constexpr std::uint64_t kMaxWords = std::uint64_t{1} << 32;

std::uint64_t bits_of(double v) { return std::bit_cast<std::uint64_t>(v); }
double double_of(std::uint64_t v) { return std::bit_cast<double>(v); }

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

struct Blob {
  CheckpointKind kind{};
  std::vector<std::uint64_t> header;
  std::vector<float> payload;

  void word(std::uint64_t v) { header.push_back(v); }
  void real(double v) { header.push_back(bits_of(v)); }
  void values(const Eigen::Ref<const Eigen::MatrixXd>& m) {
    // column-major for matrices, which is also the natural order for vectors
    for (Index c = 0; c < m.cols(); ++c)
      for (Index r = 0; r < m.rows(); ++r) payload.push_back(static_cast<float>(m(r, c)));
  }
};

void write_blob(std::ostream& os, const Blob& b) {
  std::string out(kMagic);
  put_le(out, kCheckpointVersion, 4);
  put_le(out, static_cast<std::uint32_t>(b.kind), 4);
  put_le(out, b.header.size(), 4);
  for (auto w : b.header) put_le(out, w, 8);
  put_le(out, b.payload.size(), 8);
  const std::size_t payload_start = out.size();
  for (float f : b.payload) put_le(out, std::bit_cast<std::uint32_t>(f), 4);
  const std::string_view payload_bytes(out.data() + payload_start, out.size() - payload_start);
  put_le(out, fnv1a64(payload_bytes), 8);
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os) throw FormatError("checkpoint: write failed");
}

Blob read_blob(std::istream& is, CheckpointKind expected) {
  const std::string data((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(data.data());
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (data.size() - pos < n) throw FormatError("checkpoint: truncated");
  };
  need(kMagic.size());
  if (std::string_view(data.data(), kMagic.size()) != kMagic) throw FormatError("checkpoint: bad magic");
  pos += kMagic.size();
  need(12);
  const auto version = get_le(p + pos, 4);
  const auto kind = get_le(p + pos + 4, 4);
  const auto words = get_le(p + pos + 8, 4);
  pos += 12;
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  if (kind != static_cast<std::uint32_t>(expected)) {
    throw FormatError("checkpoint: expected kind " + to_string(expected) + ", found tag " + std::to_string(kind));
  }
  Blob b;
  b.kind = expected;
  need(words * 8);
  for (std::uint64_t i = 0; i < words; ++i, pos += 8) b.header.push_back(get_le(p + pos, 8));
  need(8);
  const auto count = get_le(p + pos, 8);
  pos += 8;
  if (count >= kMaxWords || data.size() - pos < count * 4) throw FormatError("checkpoint: truncated");
  const std::string_view payload_bytes(data.data() + pos, count * 4);
  b.payload.resize(count);
  for (std::uint64_t i = 0; i < count; ++i, pos += 4) {
    b.payload[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(p + pos, 4)));
  }
  need(8);
  const auto checksum = get_le(p + pos, 8);
  pos += 8;
  if (pos != data.size()) throw FormatError("checkpoint: trailing bytes");
  if (checksum != fnv1a64(payload_bytes)) throw FormatError("checkpoint: checksum mismatch");
  return b;
}

// Sequential consumer of a blob; every shortfall or leftover is a format error.
class Cursor {
 public:
  explicit Cursor(const Blob& b) : b_(b) {}

  std::uint64_t word() {
    if (h_ >= b_.header.size()) throw FormatError("checkpoint: header too short");
    return b_.header[h_++];
  }
  Index dim(std::uint64_t limit = std::uint64_t{1} << 24) {
    const auto v = word();
    if (v > limit) throw FormatError("checkpoint: implausible dimension " + std::to_string(v));
    return static_cast<Index>(v);
  }
  double real() { return double_of(word()); }

  Eigen::MatrixXd values(Index rows, Index cols) {
    const auto n = static_cast<std::size_t>(rows * cols);
    if (b_.payload.size() - p_ < n) throw FormatError("checkpoint: payload shorter than header dimensions");
    Eigen::MatrixXd m(rows, cols);
    for (Index c = 0; c < cols; ++c)
      for (Index r = 0; r < rows; ++r) m(r, c) = static_cast<double>(b_.payload[p_++]);
    return m;
  }

  void finish() const {
    if (h_ != b_.header.size() || p_ != b_.payload.size()) {
      throw FormatError("checkpoint: dimensions do not match payload length");
    }
  }

 private:
  const Blob& b_;
  std::size_t h_ = 0;
  std::size_t p_ = 0;
};

void put_mlp_shape(Blob& b, const Mlp& net) {
  b.word(net.layers.size());
  for (const auto& l : net.layers) {
    b.word(static_cast<std::uint64_t>(l.weight.cols()));
    b.word(static_cast<std::uint64_t>(l.weight.rows()));
    b.word(static_cast<std::uint64_t>(l.activation));
  }
}

void put_mlp_values(Blob& b, const Mlp& net) {
  for (const auto& l : net.layers) {
    b.values(l.weight);
    b.values(l.bias);
  }
}

Mlp take_mlp_shape(Cursor& c) {
  const Index layers = c.dim(64);
  if (layers < 1) throw FormatError("checkpoint: network without layers");
  Mlp net;
  Index prev = -1;
  for (Index i = 0; i < layers; ++i) {
    const Index in = c.dim();
    const Index out = c.dim();
    const auto act = c.word();
    if (in < 1 || out < 1 || (prev >= 0 && in != prev)) throw FormatError("checkpoint: inconsistent layer sizes");
    if (act > static_cast<std::uint64_t>(Activation::Softmax)) throw FormatError("checkpoint: unknown activation");
    net.layers.push_back({Eigen::MatrixXd(out, in), Eigen::VectorXd(out), static_cast<Activation>(act)});
    prev = out;
  }
  return net;
}

void take_mlp_values(Cursor& c, Mlp& net) {
  for (auto& l : net.layers) {
    l.weight = c.values(l.weight.rows(), l.weight.cols());
    l.bias = c.values(l.bias.size(), 1);
  }
}

template <class Model, class Reader>
Model load_file(const std::string& path, Reader reader) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("checkpoint: cannot open " + path);
  return reader(in);
}

}  // namespace

std::string to_string(CheckpointKind kind) {
  switch (kind) {
    case CheckpointKind::Classifier: return "classifier";
    case CheckpointKind::Autoencoder: return "autoencoder";
    case CheckpointKind::Clusters: return "clusters";
    case CheckpointKind::Directions: return "directions";
  }
  return "unknown";
}

void write_checkpoint(std::ostream& os, const OracleClassifier& oracle) {
  Blob b;
  b.kind = CheckpointKind::Classifier;
  b.word(static_cast<std::uint64_t>(oracle.classifier.num_classes));
  const auto& r = oracle.heldout;
  b.real(r.accuracy);
  b.real(r.precision_micro);
  b.real(r.precision_macro);
  b.real(r.recall_micro);
  b.real(r.recall_macro);
  b.word(r.per_class.size());
  for (const auto& s : r.per_class) {
    b.real(s.precision);
    b.real(s.recall);
    b.word(static_cast<std::uint64_t>(s.support));
  }
  put_mlp_shape(b, oracle.classifier.net);
  put_mlp_values(b, oracle.classifier.net);
  write_blob(os, b);
}

OracleClassifier read_classifier(std::istream& is) {
  const Blob b = read_blob(is, CheckpointKind::Classifier);
  Cursor c(b);
  OracleClassifier o;
  o.classifier.num_classes = static_cast<int>(c.dim(1 << 16));
  auto& r = o.heldout;
  r.accuracy = c.real();
  r.precision_micro = c.real();
  r.precision_macro = c.real();
  r.recall_micro = c.real();
  r.recall_macro = c.real();
  r.per_class.resize(static_cast<std::size_t>(c.dim(1 << 16)));
  for (auto& s : r.per_class) {
    s.precision = c.real();
    s.recall = c.real();
    s.support = static_cast<std::int64_t>(c.word());
  }
  o.classifier.net = take_mlp_shape(c);
  if (o.classifier.net.output_dim() != o.classifier.num_classes) {
    throw FormatError("checkpoint: classifier output does not match class count");
  }
  take_mlp_values(c, o.classifier.net);
  c.finish();
  return o;
}

void write_checkpoint(std::ostream& os, const DiffusionAutoencoder& m) {
  Blob b;
  b.kind = CheckpointKind::Autoencoder;
  b.word(static_cast<std::uint64_t>(m.sample_dim));
  b.word(static_cast<std::uint64_t>(m.latent_dim));
  b.word(static_cast<std::uint64_t>(m.time_embedding_dim));
  b.word(static_cast<std::uint64_t>(m.schedule.timesteps));
  b.real(m.schedule.beta_min);
  b.real(m.schedule.beta_max);
  b.real(m.input_scale);
  b.word(m.noise_skip ? 1 : 0);
  put_mlp_shape(b, m.sem_encoder);
  put_mlp_shape(b, m.denoiser);
  b.values(m.input_shift);
  put_mlp_values(b, m.sem_encoder);
  put_mlp_values(b, m.denoiser);
  write_blob(os, b);
}

DiffusionAutoencoder read_autoencoder(std::istream& is) {
  const Blob b = read_blob(is, CheckpointKind::Autoencoder);
  Cursor c(b);
  DiffusionAutoencoder m;
  m.sample_dim = c.dim();
  m.latent_dim = c.dim();
  m.time_embedding_dim = c.dim();
  const auto T = static_cast<int>(c.dim(1 << 20));
  const double beta_min = c.real();
  const double beta_max = c.real();
  try {
    m.schedule = make_schedule(T, beta_min, beta_max);
  } catch (const ParameterError& e) {
    throw FormatError(std::string("checkpoint: bad schedule: ") + e.what());
  }
  m.input_scale = c.real();
  const auto skip = c.word();
  if (skip > 1) throw FormatError("checkpoint: bad flag");
  m.noise_skip = skip == 1;
  m.sem_encoder = take_mlp_shape(c);
  m.denoiser = take_mlp_shape(c);
  if (m.sem_encoder.input_dim() != m.sample_dim || m.sem_encoder.output_dim() != m.latent_dim ||
      m.denoiser.input_dim() != m.sample_dim + m.latent_dim + m.time_embedding_dim ||
      m.denoiser.output_dim() != m.sample_dim) {
    throw FormatError("checkpoint: network shapes do not match autoencoder dimensions");
  }
  m.input_shift = c.values(m.sample_dim, 1);
  take_mlp_values(c, m.sem_encoder);
  take_mlp_values(c, m.denoiser);
  c.finish();
  return m;
}

void write_checkpoint(std::ostream& os, const ClusterModel& km) {
  Blob b;
  b.kind = CheckpointKind::Clusters;
  b.word(static_cast<std::uint64_t>(km.dim()));
  b.word(static_cast<std::uint64_t>(km.k()));
  b.real(km.inertia);
  b.word(static_cast<std::uint64_t>(km.iterations));
  b.values(km.centroids);
  write_blob(os, b);
}

ClusterModel read_clusters(std::istream& is) {
  const Blob b = read_blob(is, CheckpointKind::Clusters);
  Cursor c(b);
  ClusterModel km;
  const Index d = c.dim();
  const Index k = c.dim();
  km.inertia = c.real();
  km.iterations = static_cast<int>(c.dim(std::numeric_limits<int>::max()));
  km.centroids = c.values(d, k);
  c.finish();
  return km;
}

void write_checkpoint(std::ostream& os, const DirectionSet& ds) {
  Blob b;
  b.kind = CheckpointKind::Directions;
  b.word(static_cast<std::uint64_t>(ds.k()));
  b.word(static_cast<std::uint64_t>(ds.dim()));
  b.word(static_cast<std::uint64_t>(ds.iterations));
  b.real(ds.final_gradient_norm);
  b.values(ds.weights);
  b.values(ds.biases);
  write_blob(os, b);
}

DirectionSet read_directions(std::istream& is) {
  const Blob b = read_blob(is, CheckpointKind::Directions);
  Cursor c(b);
  DirectionSet ds;
  const Index k = c.dim();
  const Index d = c.dim();
  ds.iterations = static_cast<int>(c.dim(std::numeric_limits<int>::max()));
  ds.final_gradient_norm = c.real();
  ds.weights = c.values(k, d);
  ds.biases = c.values(k, 1);
  c.finish();
  try {
    normalize_directions(ds);
  } catch (const NumericError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  return ds;
}

template <class Model>
void save_checkpoint(const std::string& path, const Model& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("checkpoint: cannot write " + path);
  write_checkpoint(out, model);
}

template void save_checkpoint<OracleClassifier>(const std::string&, const OracleClassifier&);
template void save_checkpoint<DiffusionAutoencoder>(const std::string&, const DiffusionAutoencoder&);
template void save_checkpoint<ClusterModel>(const std::string&, const ClusterModel&);
template void save_checkpoint<DirectionSet>(const std::string&, const DirectionSet&);

OracleClassifier load_classifier(const std::string& path) {
  return load_file<OracleClassifier>(path, [](std::istream& is) { return read_classifier(is); });
}
DiffusionAutoencoder load_autoencoder(const std::string& path) {
  return load_file<DiffusionAutoencoder>(path, [](std::istream& is) { return read_autoencoder(is); });
}
ClusterModel load_clusters(const std::string& path) {
  return load_file<ClusterModel>(path, [](std::istream& is) { return read_clusters(is); });
}
DirectionSet load_directions(const std::string& path) {
  return load_file<DirectionSet>(path, [](std::istream& is) { return read_directions(is); });
}

}  // namespace difclue
