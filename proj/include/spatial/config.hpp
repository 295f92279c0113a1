#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "spatial/encoder.hpp"
#include "spatial/scenario.hpp"
#include "spatial/store.hpp"
#include "spatial/trainer.hpp"

namespace spatial {

inline constexpr int kConfigVersion = 1;

/// Everything a run needs besides its inputs. Loaded from YAML; any key left
/// out keeps the built-in value.
struct BenchConfig {
  std::uint64_t seed = 0;
  std::vector<CategorySpec> categories;
  std::vector<EnvConfig> environments;
  std::vector<TripleSpec> triples;
  SplitFractions split;
  TrainingSettings training;
  OracleSpec encoder;

  /// Throws InvalidParameter naming the known environments.
  const EnvConfig& find_env(std::string_view name) const;
  bool has_env(std::string_view name) const;
  std::vector<std::string> env_names() const;
  CategoryId category_id(std::string_view name) const;
  /// "source,target,viewpoint" by category name.
  TripleSpec parse_triple(std::string_view text) const;
  void validate() const;
};

/// Built-ins: the flat reference environment, a rolling-hills heightfield,
/// and three human-viewpoint triples.
BenchConfig default_config();

BenchConfig parse_config(std::string_view yaml_text);
BenchConfig load_config(const std::filesystem::path& path);

/// Environment variable holding the default config path.
inline constexpr const char* kConfigEnvVar = "SPATIALBENCH_CONFIG";

/// Rolling sinusoidal hills over a square grid; deterministic.
Terrain hills_terrain(double amplitude, double wavelength, double half_size, double spacing);

}  // namespace spatial
