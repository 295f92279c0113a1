#include "spatial/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "spatial/error.hpp"
#include "spatial/rng.hpp"

namespace spatial {

namespace {

constexpr std::uint64_t kEncoderStream = 4;

double bearing_deg(Vec2 v) { return rad2deg(std::atan2(v.y, v.x)); }

}  // namespace

void OracleSpec::validate() const {
  if (n_categories < 1) throw Error(ErrorCode::InvalidParameter, "encoder needs at least one category");
  if (dim < n_categories + 5) {
    throw Error(ErrorCode::InvalidParameter, "encoder dim " + std::to_string(dim) + " is below categories + 5 = " +
                                                 std::to_string(n_categories + 5));
  }
  if (!(noise_sigma >= 0.0) || !(depth_scale > 0.0)) {
    throw Error(ErrorCode::InvalidParameter, "noise sigma must be >= 0 and depth scale > 0");
  }
}

std::uint64_t encoder_seed(std::uint64_t global_seed, std::uint64_t scene_index) noexcept {
  return CounterRng::derive_key(global_seed ^ 0x0e4c0de5ull, scene_index);
}

FeatureTensor encode_scene(const SceneLayout& layout, const Pose6DoF& camera, const CameraIntrinsics& intrinsics,
                           const OracleSpec& spec, std::uint64_t rng_seed) {
  spec.validate();
  for (const auto& obj : layout.objects) {
    if (obj.category >= spec.n_categories) {
      throw Error(ErrorCode::InvalidParameter, "object category " + std::to_string(obj.category) +
                                                   " exceeds encoder category count");
    }
  }
  const TokenOccupancy occ = token_occupancy(camera, intrinsics, layout);
  const std::size_t n_cells = occ.map.cells.size();
  const std::size_t n_tokens = n_cells + occ.map.special.size();
  const auto dim = static_cast<std::size_t>(spec.dim);
  const int k = spec.n_categories;

  FeatureTensor out;
  out.n_tokens = static_cast<std::uint32_t>(n_tokens);
  out.dim = static_cast<std::uint32_t>(dim);
  out.values.assign(n_tokens * dim, 0.0f);

  const int rows = occ.map.rows;
  const int cols = occ.map.cols;
  for (std::size_t t = 0; t < n_cells; ++t) {
    float* row = out.values.data() + t * dim;
    CategoryId cat = occ.map.cells[t];
    double depth = occ.depth[t];
    if (std::find(spec.erased_categories.begin(), spec.erased_categories.end(), cat) != spec.erased_categories.end()) {
      cat = kBackground;
      depth = 0.0;
    }
    if (spec.category_onehot) row[cat] = 1.0f;
    if (spec.token_xy) {
      const int r = static_cast<int>(t) / cols;
      const int c = static_cast<int>(t) % cols;
      row[k] = cols > 1 ? static_cast<float>(static_cast<double>(c) / (cols - 1)) : 0.0f;
      row[k + 1] = rows > 1 ? static_cast<float>(static_cast<double>(r) / (rows - 1)) : 0.0f;
    }
    if (spec.depth && cat != kBackground) row[k + 2] = static_cast<float>(depth / spec.depth_scale);
  }

  if (spec.noise && spec.noise_sigma > 0.0) {
    CounterRng rng(rng_seed, kEncoderStream);
    for (std::size_t t = 0; t < n_tokens; ++t) {
      float* row = out.values.data() + t * dim;
      for (std::size_t d = static_cast<std::size_t>(spec.first_noise_dim()); d < dim; ++d) {
        row[d] = static_cast<float>(rng.normal(0.0, spec.noise_sigma));
      }
    }
  }
  return out;
}

std::optional<SpatialLabel> brute_force_label_oracle(const SceneLayout& layout, TaskVariant variant,
                                                     double ambiguity_half_width) {
  const SceneObject* source = layout.find(ObjectRole::Source);
  const SceneObject* target = layout.find(ObjectRole::Target);
  const SceneObject* human = layout.find(ObjectRole::Viewpoint);
  if (source == nullptr || target == nullptr || (variant == TaskVariant::Allo && human == nullptr)) {
    throw Error(ErrorCode::MissingObject, "layout lacks a task object");
  }
  const Vec3 viewer = variant == TaskVariant::Ego ? layout.camera.position : human->pose.position;
  const Vec2 s = ground(source->pose.position);
  const Vec2 t = ground(target->pose.position);
  const Vec2 v = ground(viewer);
  if (norm(s - v) <= kEpsilonLength) throw Error(ErrorCode::DegenerateFrame, "viewer coincides with source");
  if (norm(t - s) <= kEpsilonLength) throw Error(ErrorCode::DegenerateTarget, "target coincides with source");

  // Clockwise turn from the facing direction to the source->target direction.
  double turn = bearing_deg(s - v) - bearing_deg(t - s);
  while (turn > 180.0) turn -= 360.0;
  while (turn <= -180.0) turn += 360.0;

  const double hw = ambiguity_half_width;
  struct Arc {
    double lo;
    double hi;
    SpatialLabel label;
  };
  const Arc arcs[] = {
      {-45.0 + hw, 45.0 - hw, SpatialLabel::Front},  {45.0 + hw, 135.0 - hw, SpatialLabel::Right},
      {135.0 + hw, 180.0, SpatialLabel::Back},       {-180.0, -135.0 - hw, SpatialLabel::Back},
      {-135.0 + hw, -45.0 - hw, SpatialLabel::Left},
  };
  for (const Arc& arc : arcs) {
    const bool above = arc.lo == -180.0 ? turn >= arc.lo : turn > arc.lo;
    const bool below = arc.hi == 180.0 ? turn <= arc.hi : turn < arc.hi;
    if (above && below) return arc.label;
  }
  return std::nullopt;
}

}  // namespace spatial
