#pragma once

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "spatial/encoder.hpp"
#include "spatial/record.hpp"
#include "spatial/scenario.hpp"
#include "spatial/store.hpp"
#include "spatial/trainer.hpp"

namespace spatial::test {

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("spatialbench-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline TripleSpec tree_car_human(const EnvConfig& env) {
  return {env.category_id("tree"), env.category_id("car"), env.category_id("human")};
}

inline std::vector<SampleRecord> small_dataset(std::size_t n, std::uint64_t seed = 3) {
  const EnvConfig env = reference_flat_env();
  GenerateOptions opt;
  opt.n_valid = n;
  opt.global_seed = seed;
  return generate_dataset(env, tree_car_human(env), opt).records;
}

inline Manifest manifest_of(std::vector<SampleRecord> records) {
  Manifest m;
  m.categories = default_categories();
  m.records = std::move(records);
  return m;
}

/// Random row-stochastic attention tensor.
inline AttentionTensor random_attention(std::uint32_t layers, std::uint32_t heads, std::uint32_t tokens,
                                        std::mt19937_64& gen) {
  AttentionTensor a{layers, heads, tokens, std::vector<float>(std::size_t{layers} * heads * tokens * tokens)};
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (std::size_t row = 0; row < std::size_t{layers} * heads * tokens; ++row) {
    std::vector<double> v(tokens);
    double sum = 0.0;
    for (auto& x : v) sum += (x = u(gen));
    for (std::uint32_t j = 0; j < tokens; ++j) a.values[row * tokens + j] = static_cast<float>(v[j] / sum);
  }
  return a;
}

}  // namespace spatial::test
