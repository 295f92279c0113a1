#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "spatial/camera.hpp"
#include "spatial/geometry.hpp"
#include "spatial/scene.hpp"

namespace spatial {

struct SampleRecord;

struct Box2 {
  Vec2 min;
  Vec2 max;

  bool contains(double x, double y) const { return x >= min.x && x <= max.x && y >= min.y && y <= max.y; }
};

/// Terrain surface queried by vertical line trace. Either a constant plane or
/// a bilinearly interpolated height grid with nodes at origin + (i, j) * spacing.
class Terrain {
 public:
  static Terrain flat(double height, Box2 extent);
  static Terrain grid(Vec2 origin, double spacing, int nx, int ny, std::vector<double> heights);

  /// Throws OutOfBounds outside the terrain extent.
  double height(double x, double y) const;
  bool contains(double x, double y) const { return extent_.contains(x, y); }
  const Box2& extent() const { return extent_; }
  bool is_flat() const { return heights_.empty(); }

 private:
  Box2 extent_;
  double flat_height_ = 0.0;
  Vec2 origin_;
  double spacing_ = 1.0;
  int nx_ = 0;
  int ny_ = 0;
  std::vector<double> heights_;  // row-major, heights_[j * nx + i]
};

struct CategorySpec {
  CategoryId id = kBackground;
  std::string name;
  Vec3 half_extents;
  double ground_offset = 0.0;  // z of the object center above the terrain

  bool operator==(const CategorySpec&) const = default;
};

/// Placement defaults are not taken from any published setup; they are chosen
/// so task objects are resolvable on a 14x14 patch grid.
struct EnvConfig {
  std::string name = "flat";
  Terrain terrain = Terrain::flat(0.0, {{-500.0, -500.0}, {500.0, 500.0}});
  Box2 placement_center_region{{-20.0, -20.0}, {20.0, 20.0}};
  double placement_sigma = 4.0;
  double camera_r_min = 8.0;
  double camera_r_max = 20.0;
  double camera_height_min = 1.2;
  double camera_height_max = 6.0;
  double min_pair_distance = 2.0;
  double max_spread = 15.0;
  double visibility_margin_deg = 2.0;
  double ambiguity_half_width = kDefaultAmbiguityHalfWidth;
  CameraIntrinsics intrinsics;
  std::vector<CategorySpec> categories;
  int distractor_count = 0;
  std::vector<CategoryId> distractor_categories;

  void validate() const;
  const CategorySpec& category(CategoryId id) const;
  CategoryId category_id(std::string_view name) const;
};

/// Built-in category table shared by the reference environments.
std::vector<CategorySpec> default_categories();
EnvConfig reference_flat_env();

struct TripleSpec {
  CategoryId source = kBackground;
  CategoryId target = kBackground;
  CategoryId viewpoint = kBackground;

  bool operator==(const TripleSpec&) const = default;
};

enum class RejectionReason : std::uint8_t { Ambiguous, OutOfFrustum, Collision, TooClustered, TooSpread, Degenerate };
inline constexpr std::size_t kNumRejectionReasons = 6;
std::string_view to_string(RejectionReason reason) noexcept;

struct RejectionStats {
  std::array<std::uint64_t, kNumRejectionReasons> counts{};
  std::uint64_t accepted = 0;
  std::uint64_t attempts = 0;

  void record_rejection(RejectionReason reason) {
    ++counts[static_cast<std::size_t>(reason)];
    ++attempts;
  }
  void record_acceptance() {
    ++accepted;
    ++attempts;
  }
  std::uint64_t count(RejectionReason reason) const { return counts[static_cast<std::size_t>(reason)]; }
  RejectionStats& merge(const RejectionStats& other);
  bool consistent() const;
};

double ground_height(const EnvConfig& env, double x, double y);

/// Touching faces count as overlap.
bool check_aabb_overlap(const Aabb& a, const Aabb& b);

/// True iff every point is in front of the camera and its horizontal angular
/// offset from the optical axis is at most hfov/2 - margin.
bool check_visibility(const Pose6DoF& camera, std::span<const Vec3> points, double hfov_deg, double margin_deg);

/// AABB of a category's box rotated by `yaw_deg` about +z and centred at `center`.
Aabb object_box(const CategorySpec& category, const Vec3& center, double yaw_deg);

using SampleOutcome = std::variant<SceneLayout, RejectionReason>;

/// One rejection-sampling attempt. The attempt is a pure function of
/// (env, triple, global_seed, scene_index).
SampleOutcome sample_scene(const EnvConfig& env, const TripleSpec& triple, std::uint64_t global_seed,
                           std::uint64_t scene_index);

/// Validation chain applied to a candidate layout, in order; exposed so that
/// independent reference samplers can reuse individual predicates.
std::optional<RejectionReason> validate_layout(const EnvConfig& env, const SceneLayout& layout);

std::size_t default_dataset_size(TaskVariant variant) noexcept;

struct GenerateOptions {
  std::size_t n_valid = 0;
  std::uint64_t global_seed = 0;
  std::size_t max_attempts = 0;  // 0 means 100 x n_valid
  unsigned jobs = 1;
};

struct GeneratedDataset {
  std::vector<SampleRecord> records;
  RejectionStats stats;
};

GeneratedDataset generate_dataset(const EnvConfig& env, const TripleSpec& triple, const GenerateOptions& options);

std::string make_sample_id(std::string_view environment, std::uint64_t scene_index);

}  // namespace spatial
