#include "spatial/camera.hpp"

#include <algorithm>
#include <limits>

#include "spatial/error.hpp"

namespace spatial {

void CameraIntrinsics::validate() const {
  if (!(focal_mm > 0.0) || !(sensor_width_mm > 0.0)) {
    throw Error(ErrorCode::InvalidParameter, "focal length and sensor width must be positive");
  }
  if (width_px <= 0 || height_px <= 0 || grid_rows <= 0 || grid_cols <= 0) {
    throw Error(ErrorCode::InvalidParameter, "image and patch grid sizes must be positive");
  }
  if (width_px % grid_cols != 0 || height_px % grid_rows != 0) {
    throw Error(ErrorCode::InvalidParameter, "image size must be divisible by the patch grid");
  }
}

double CameraIntrinsics::hfov_deg() const { return hfov_from_lens(focal_mm, sensor_width_mm); }

double hfov_from_lens(double focal_mm, double sensor_width_mm) {
  if (!(focal_mm > 0.0) || !(sensor_width_mm > 0.0)) {
    throw Error(ErrorCode::InvalidParameter, "focal length and sensor width must be positive");
  }
  return rad2deg(2.0 * std::atan(sensor_width_mm / (2.0 * focal_mm)));
}

CameraBasis camera_basis(const Pose6DoF& camera) {
  const double yaw = deg2rad(camera.yaw);
  const double pitch = deg2rad(camera.pitch);
  const double roll = deg2rad(camera.roll);
  const Vec3 forward{std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw), std::sin(pitch)};
  const Vec3 right0{std::sin(yaw), -std::cos(yaw), 0.0};
  const Vec3 up0 = cross(right0, forward);
  const double cr = std::cos(roll);
  const double sr = std::sin(roll);
  return {forward, cr * right0 + sr * up0, cr * up0 - sr * right0};
}

Vec3 to_camera_frame(const Pose6DoF& camera, const Vec3& world) {
  const CameraBasis basis = camera_basis(camera);
  const Vec3 rel = world - camera.position;
  return {dot(rel, basis.right), dot(rel, basis.up), dot(rel, basis.forward)};
}

std::optional<PixelProjection> project_point(const Pose6DoF& camera, const CameraIntrinsics& intrinsics,
                                             const Vec3& world) {
  const Vec3 p = to_camera_frame(camera, world);
  if (!(p.z > 0.0)) return std::nullopt;
  const double f = intrinsics.focal_px();
  return PixelProjection{0.5 * intrinsics.width_px + f * p.x / p.z,
                         0.5 * intrinsics.height_px - f * p.y / p.z, p.z};
}

std::vector<CategoryId> TokenCategoryMap::flattened() const {
  std::vector<CategoryId> out(cells);
  out.insert(out.end(), special.begin(), special.end());
  return out;
}

std::optional<ProjectedRect> project_box(const Pose6DoF& camera, const CameraIntrinsics& intrinsics,
                                         const Aabb& box) {
  const CameraBasis basis = camera_basis(camera);
  const double f = intrinsics.focal_px();
  ProjectedRect rect{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
                     std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
                     std::numeric_limits<double>::infinity()};
  bool any = false;
  for (int corner = 0; corner < 8; ++corner) {
    const Vec3 w{(corner & 1) ? box.max.x : box.min.x, (corner & 2) ? box.max.y : box.min.y,
                 (corner & 4) ? box.max.z : box.min.z};
    const Vec3 rel = w - camera.position;
    const double z = dot(rel, basis.forward);
    if (z <= kNearPlane) continue;
    const double u = 0.5 * intrinsics.width_px + f * dot(rel, basis.right) / z;
    const double v = 0.5 * intrinsics.height_px - f * dot(rel, basis.up) / z;
    rect.u_min = std::min(rect.u_min, u);
    rect.u_max = std::max(rect.u_max, u);
    rect.v_min = std::min(rect.v_min, v);
    rect.v_max = std::max(rect.v_max, v);
    rect.depth = std::min(rect.depth, z);
    any = true;
  }
  if (!any) return std::nullopt;
  const double center_depth = dot(box.center() - camera.position, basis.forward);
  if (center_depth > kNearPlane) rect.depth = center_depth;
  return rect;
}

namespace {

struct CellAssignment {
  std::vector<int> owner;
  std::vector<double> depth;
};

CellAssignment assign_cells(const Pose6DoF& camera, const CameraIntrinsics& intrinsics,
                            const SceneLayout& layout) {
  intrinsics.validate();
  const int rows = intrinsics.grid_rows;
  const int cols = intrinsics.grid_cols;
  const double pw = intrinsics.patch_width();
  const double ph = intrinsics.patch_height();
  const auto n_cells = static_cast<std::size_t>(rows * cols);

  CellAssignment out{std::vector<int>(n_cells, -1),
                     std::vector<double>(n_cells, std::numeric_limits<double>::infinity())};
  auto claim = [&](std::size_t cell, int index, double depth) {
    if (depth < out.depth[cell]) {
      out.depth[cell] = depth;
      out.owner[cell] = index;
    }
  };

  for (std::size_t i = 0; i < layout.objects.size(); ++i) {
    const int index = static_cast<int>(i);
    const auto rect = project_box(camera, intrinsics, layout.objects[i].box);
    if (!rect) continue;
    bool covered = false;
    for (int r = 0; r < rows; ++r) {
      const double vc = (r + 0.5) * ph;
      if (vc < rect->v_min || vc > rect->v_max) continue;
      for (int c = 0; c < cols; ++c) {
        const double uc = (c + 0.5) * pw;
        if (uc < rect->u_min || uc > rect->u_max) continue;
        claim(static_cast<std::size_t>(r * cols + c), index, rect->depth);
        covered = true;
      }
    }
    if (covered) continue;
    const bool overlaps_image = rect->u_max >= 0.0 && rect->u_min <= intrinsics.width_px &&
                                rect->v_max >= 0.0 && rect->v_min <= intrinsics.height_px;
    if (!overlaps_image) continue;
    const double uc = std::clamp(0.5 * (rect->u_min + rect->u_max), 0.0, intrinsics.width_px - 1e-9);
    const double vc = std::clamp(0.5 * (rect->v_min + rect->v_max), 0.0, intrinsics.height_px - 1e-9);
    const int c = std::min(cols - 1, static_cast<int>(uc / pw));
    const int r = std::min(rows - 1, static_cast<int>(vc / ph));
    claim(static_cast<std::size_t>(r * cols + c), index, rect->depth);
  }
  return out;
}

}  // namespace

std::vector<int> token_owners(const Pose6DoF& camera, const CameraIntrinsics& intrinsics,
                              const SceneLayout& layout) {
  return assign_cells(camera, intrinsics, layout).owner;
}

TokenOccupancy token_occupancy(const Pose6DoF& camera, const CameraIntrinsics& intrinsics,
                               const SceneLayout& layout, std::span<const CategoryId> special_tokens) {
  const CellAssignment cells = assign_cells(camera, intrinsics, layout);
  TokenOccupancy out;
  out.map.rows = intrinsics.grid_rows;
  out.map.cols = intrinsics.grid_cols;
  out.map.cells.assign(cells.owner.size(), kBackground);
  out.map.special.assign(special_tokens.begin(), special_tokens.end());
  out.depth.assign(cells.owner.size(), 0.0);
  for (std::size_t i = 0; i < cells.owner.size(); ++i) {
    if (cells.owner[i] < 0) continue;
    out.map.cells[i] = layout.objects[static_cast<std::size_t>(cells.owner[i])].category;
    out.depth[i] = cells.depth[i];
  }
  return out;
}

}  // namespace spatial
