#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "spatial/camera.hpp"
#include "spatial/scene.hpp"
#include "spatial/store.hpp"

namespace spatial {

/// Synthetic token features built straight from scene geometry.
///
/// Patch token layout: [0, K) one-hot category (K = n_categories, background
/// included), K and K+1 normalized column/row, K+2 depth / depth_scale
/// (0 on background), remaining dims Gaussian noise. One CLS-like special
/// token follows the patches and carries only noise.
struct OracleSpec {
  int dim = 32;
  int n_categories = 8;
  bool category_onehot = true;
  bool token_xy = true;
  bool depth = true;
  bool noise = true;
  double noise_sigma = 0.1;
  double depth_scale = 50.0;
  /// Categories whose tokens are encoded exactly like background.
  std::vector<CategoryId> erased_categories;

  int first_noise_dim() const { return n_categories + 3; }
  void validate() const;
};

FeatureTensor encode_scene(const SceneLayout& layout, const Pose6DoF& camera, const CameraIntrinsics& intrinsics,
                           const OracleSpec& spec, std::uint64_t rng_seed);

/// Per-sample encoder seed, so feature noise does not depend on generation order.
std::uint64_t encoder_seed(std::uint64_t global_seed, std::uint64_t scene_index) noexcept;

/// Label recomputed from bearings and explicit open arcs, independent of the
/// frame construction in geometry. nullopt inside an ambiguity zone.
std::optional<SpatialLabel> brute_force_label_oracle(const SceneLayout& layout, TaskVariant variant,
                                                     double ambiguity_half_width = kDefaultAmbiguityHalfWidth);

}  // namespace spatial
