#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spatial/camera.hpp"
#include "spatial/record.hpp"
#include "spatial/scenario.hpp"

namespace spatial {

inline constexpr std::uint32_t kManifestVersion = 1;
inline constexpr std::uint32_t kTensorVersion = 1;
inline constexpr std::uint32_t kCategoryMapVersion = 1;

/// A dataset manifest: the category table and patch grid the records were
/// produced with, plus the records themselves.
struct Manifest {
  std::vector<CategorySpec> categories;
  int grid_rows = 14;
  int grid_cols = 14;
  double ambiguity_half_width = kDefaultAmbiguityHalfWidth;
  std::vector<SampleRecord> records;

  std::string category_name(CategoryId id) const;
  CategoryId category_id(std::string_view name) const;

  bool operator==(const Manifest&) const = default;
};

// Text manifest layout (one line each, tab separated):
//   #spatialbench-manifest  version=1
//   #grid  rows=R  cols=C  ambiguity=H
//   #category  id  name  hx  hy  hz  offset        (one per category)
//   #columns  <column names>
//   <record rows>
//   #checksum  sha256=<hex of every preceding byte>
std::string serialize_manifest(const Manifest& manifest);
Manifest parse_manifest(std::string_view text);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

/// Recomputed-vs-stored label mismatches (sample ids); empty when consistent.
std::vector<std::string> verify_manifest_labels(const Manifest& manifest);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

/// Seeded shuffle, then floor-sized val/test folds; the remainder goes to train.
std::vector<SampleRecord> split_dataset(std::vector<SampleRecord> records, SplitFractions fractions,
                                        std::uint64_t seed);
/// split_dataset applied to each (environment, triple) group on its own, so
/// every group gets the requested fractions. Group k uses seed derive_key(seed, k),
/// groups numbered by first appearance.
std::vector<SampleRecord> split_by_group(std::vector<SampleRecord> records, SplitFractions fractions,
                                         std::uint64_t seed);

/// Token-major f32 embeddings of one image at one layer.
struct FeatureTensor {
  std::uint32_t n_tokens = 0;
  std::uint32_t dim = 0;
  std::uint32_t layer_id = 0;
  std::vector<float> values;

  float at(std::size_t token, std::size_t d) const { return values[token * dim + d]; }
  bool operator==(const FeatureTensor&) const = default;
};

/// Row-stochastic attention per (layer, head), stored layer-major.
struct AttentionTensor {
  std::uint32_t n_layers = 0;
  std::uint32_t n_heads = 0;
  std::uint32_t n_tokens = 0;
  std::vector<float> values;

  std::size_t offset(std::size_t layer, std::size_t head) const {
    return (layer * n_heads + head) * static_cast<std::size_t>(n_tokens) * n_tokens;
  }
  float at(std::size_t layer, std::size_t head, std::size_t row, std::size_t col) const {
    return values[offset(layer, head) + row * n_tokens + col];
  }
  bool operator==(const AttentionTensor&) const = default;
};

inline constexpr double kAttentionRowTolerance = 1e-4;

struct FeatureShape {
  std::uint32_t n_tokens = 0;
  std::uint32_t dim = 0;
};

std::string encode_features(const FeatureTensor& tensor);
FeatureTensor decode_features(std::string_view bytes, std::optional<FeatureShape> expected = std::nullopt);
void write_features(const std::filesystem::path& path, const FeatureTensor& tensor);
FeatureTensor read_features(const std::filesystem::path& path, std::optional<FeatureShape> expected = std::nullopt);

std::string encode_attention(const AttentionTensor& tensor);
AttentionTensor decode_attention(std::string_view bytes);
void write_attention(const std::filesystem::path& path, const AttentionTensor& tensor);
AttentionTensor read_attention(const std::filesystem::path& path);
/// Throws ShapeMismatch when a row is negative or does not sum to 1.
void validate_attention(const AttentionTensor& tensor);

std::string encode_category_map(const TokenCategoryMap& map);
TokenCategoryMap decode_category_map(std::string_view bytes);
void write_category_map(const std::filesystem::path& path, const TokenCategoryMap& map);
TokenCategoryMap read_category_map(const std::filesystem::path& path);

std::string read_file_bytes(const std::filesystem::path& path);
/// Writes via a temporary sibling and renames, so readers never see partial files.
void write_file_bytes(const std::filesystem::path& path, std::string_view bytes);

/// Shortest round-trip decimal text; parse_double throws CorruptFile on junk.
std::string format_double(double value);
double parse_double(std::string_view text);

std::string sha256_hex(std::string_view bytes);
/// SHA-1 over "blob <size>\0<content>", as git computes object ids.
std::string git_blob_hash(std::string_view bytes);

}  // namespace spatial
