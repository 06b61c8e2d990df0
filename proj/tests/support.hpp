#pragma once
// Shared fixtures: one small trained gauss-mix pipeline per test binary.

#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>

#include "difclue/experiment.hpp"

namespace difclue::testing {

struct GaussPipeline {
  ExperimentConfig cfg;
  Dataset raw;
  Dataset mixed;
  OracleClassifier oracle;
  TrainedAutoencoder ae;
  ModeModel modes;
};

// Default gauss-mix configuration, seed 7, trained once and cached.
inline const GaussPipeline& gauss_pipeline() {
  static const GaussPipeline p = [] {
    GaussPipeline g;
    g.cfg = default_config(DomainKind::GaussMix);
    g.cfg.seed = 7;
    g.raw = stage_generate(g.cfg);
    g.mixed = stage_mix(g.cfg, g.raw);
    g.oracle = stage_oracle(g.cfg, g.raw);
    g.ae = stage_autoencoder(g.cfg, g.mixed);
    g.modes = stage_cluster(g.cfg, g.mixed, g.ae.model);
    return g;
  }();
  return p;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("difclue_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Relative path -> bytes for every regular file under dir.
inline std::map<std::string, std::string> snapshot(const std::filesystem::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[std::filesystem::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return files;
}

}  // namespace difclue::testing
