#pragma once
// Binary checkpoints. Layout, all integers little-endian:
//   "DIFCLUE1" | u32 version | u32 kind | u32 header words | u64 header[...]
//   | u64 payload count | f32 payload[...] | u64 FNV-1a of the payload bytes
// The header holds dimensions and any exact double scalars (bit-cast); the
// payload holds parameters, which training already rounds to binary32.

#include <cstdint>
#include <iosfwd>
#include <string>

#include "difclue/diffusion_ae.hpp"
#include "difclue/mode_discovery.hpp"
#include "difclue/synth_data.hpp"

namespace difclue {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointKind : std::uint32_t { Classifier = 1, Autoencoder = 2, Clusters = 3, Directions = 4 };

std::string to_string(CheckpointKind kind);

void write_checkpoint(std::ostream& os, const OracleClassifier& oracle);
void write_checkpoint(std::ostream& os, const DiffusionAutoencoder& model);
void write_checkpoint(std::ostream& os, const ClusterModel& clusters);
void write_checkpoint(std::ostream& os, const DirectionSet& directions);

// All readers throw FormatError on bad magic, version or kind mismatch,
// truncation, trailing bytes, checksum failure, or inconsistent dimensions.
OracleClassifier read_classifier(std::istream& is);
DiffusionAutoencoder read_autoencoder(std::istream& is);
// The inertia history is not persisted.
ClusterModel read_clusters(std::istream& is);
DirectionSet read_directions(std::istream& is);

template <class Model>
void save_checkpoint(const std::string& path, const Model& model);

OracleClassifier load_classifier(const std::string& path);
DiffusionAutoencoder load_autoencoder(const std::string& path);
ClusterModel load_clusters(const std::string& path);
DirectionSet load_directions(const std::string& path);

}  // namespace difclue
