#pragma once

#include <optional>
#include <span>
#include <vector>

#include "spatial/geometry.hpp"
#include "spatial/scene.hpp"

namespace spatial {

/// Pinhole camera with square pixels. The patch grid tiles the image exactly.
struct CameraIntrinsics {
  double focal_mm = 50.0;
  double sensor_width_mm = 50.0;
  int width_px = 224;
  int height_px = 224;
  int grid_rows = 14;
  int grid_cols = 14;

  void validate() const;
  double hfov_deg() const;
  double focal_px() const { return focal_mm / sensor_width_mm * width_px; }
  double patch_width() const { return static_cast<double>(width_px) / grid_cols; }
  double patch_height() const { return static_cast<double>(height_px) / grid_rows; }
  int cells() const { return grid_rows * grid_cols; }
};

double hfov_from_lens(double focal_mm, double sensor_width_mm);

/// Orthonormal camera axes in world coordinates.
struct CameraBasis {
  Vec3 forward;
  Vec3 right;
  Vec3 up;
};

CameraBasis camera_basis(const Pose6DoF& camera);

/// World point expressed along the camera axes (x right, y up, z forward).
Vec3 to_camera_frame(const Pose6DoF& camera, const Vec3& world);

struct PixelProjection {
  double u = 0.0;  // column, 0 at the left image edge
  double v = 0.0;  // row, 0 at the top image edge
  double depth = 0.0;
};

std::optional<PixelProjection> project_point(const Pose6DoF& camera, const CameraIntrinsics& intrinsics,
                                             const Vec3& world);

/// Patch-grid category assignment (row-major). Non-patch tokens are listed
/// separately and follow the patches in flattened token order.
struct TokenCategoryMap {
  int rows = 0;
  int cols = 0;
  std::vector<CategoryId> cells;
  std::vector<CategoryId> special;

  CategoryId at(int row, int col) const { return cells[static_cast<std::size_t>(row * cols + col)]; }
  std::size_t n_tokens() const { return cells.size() + special.size(); }
  std::vector<CategoryId> flattened() const;

  bool operator==(const TokenCategoryMap&) const = default;
};

struct TokenOccupancy {
  TokenCategoryMap map;
  std::vector<double> depth;  // per patch cell, 0 for background
};

inline constexpr double kNearPlane = 0.05;

inline constexpr CategoryId kDefaultSpecialIds[] = {kClsToken};
inline constexpr std::span<const CategoryId> kDefaultSpecial{kDefaultSpecialIds};

/// Screen-space bounding rectangle of an object's AABB; nullopt when every
/// corner lies behind the near plane.
struct ProjectedRect {
  double u_min, u_max, v_min, v_max, depth;
};
std::optional<ProjectedRect> project_box(const Pose6DoF& camera, const CameraIntrinsics& intrinsics,
                                         const Aabb& box);

/// Assigns each patch cell to the nearest object whose projected rectangle
/// contains the cell center. Objects too small to cover any center claim the
/// cell under their rectangle center, still subject to depth order.
TokenOccupancy token_occupancy(const Pose6DoF& camera, const CameraIntrinsics& intrinsics,
                               const SceneLayout& layout,
                               std::span<const CategoryId> special_tokens = kDefaultSpecial);

/// Index into layout.objects owning each patch cell (-1 for background),
/// with the same assignment rule as token_occupancy.
std::vector<int> token_owners(const Pose6DoF& camera, const CameraIntrinsics& intrinsics,
                              const SceneLayout& layout);

}  // namespace spatial
