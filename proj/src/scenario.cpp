#include "spatial/scenario.hpp"

#include <algorithm>
#include <cstdio>

#include "spatial/error.hpp"
#include "spatial/parallel.hpp"
#include "spatial/record.hpp"
#include "spatial/rng.hpp"

namespace spatial {

namespace {

// Stream ids within one attempt's key.
constexpr std::uint64_t kStreamCenter = 0;
constexpr std::uint64_t kStreamObjects = 1;
constexpr std::uint64_t kStreamCamera = 2;
constexpr std::uint64_t kStreamDistractors = 3;

constexpr double kCameraClearance = 0.1;

}  // namespace

Terrain Terrain::flat(double height, Box2 extent) {
  Terrain t;
  t.extent_ = extent;
  t.flat_height_ = height;
  return t;
}

Terrain Terrain::grid(Vec2 origin, double spacing, int nx, int ny, std::vector<double> heights) {
  if (nx < 2 || ny < 2 || !(spacing > 0.0) || heights.size() != static_cast<std::size_t>(nx * ny)) {
    throw Error(ErrorCode::InvalidParameter, "height grid needs nx, ny >= 2, spacing > 0 and nx*ny samples");
  }
  Terrain t;
  t.origin_ = origin;
  t.spacing_ = spacing;
  t.nx_ = nx;
  t.ny_ = ny;
  t.heights_ = std::move(heights);
  t.extent_ = {origin, {origin.x + spacing * (nx - 1), origin.y + spacing * (ny - 1)}};
  return t;
}

double Terrain::height(double x, double y) const {
  if (!contains(x, y)) {
    throw Error(ErrorCode::OutOfBounds, "query (" + std::to_string(x) + ", " + std::to_string(y) +
                                            ") lies outside the terrain");
  }
  if (heights_.empty()) return flat_height_;
  const double gx = (x - origin_.x) / spacing_;
  const double gy = (y - origin_.y) / spacing_;
  const int i = std::min(nx_ - 2, static_cast<int>(gx));
  const int j = std::min(ny_ - 2, static_cast<int>(gy));
  const double fx = gx - i;
  const double fy = gy - j;
  auto h = [&](int a, int b) { return heights_[static_cast<std::size_t>(b * nx_ + a)]; };
  return (1 - fx) * (1 - fy) * h(i, j) + fx * (1 - fy) * h(i + 1, j) + (1 - fx) * fy * h(i, j + 1) +
         fx * fy * h(i + 1, j + 1);
}

void EnvConfig::validate() const {
  auto fail = [&](const std::string& why) {
    throw Error(ErrorCode::InvalidParameter, "environment '" + name + "': " + why);
  };
  if (!(camera_r_min < camera_r_max)) fail("camera annulus needs r_min < r_max");
  if (!(placement_sigma > 0.0)) fail("placement sigma must be positive");
  if (!(min_pair_distance > 0.0)) fail("min_pair_distance must be positive");
  if (!(max_spread > min_pair_distance)) fail("max_spread must exceed min_pair_distance");
  if (!(camera_height_min <= camera_height_max)) fail("camera height range is inverted");
  if (!(ambiguity_half_width >= 0.0 && ambiguity_half_width < 45.0)) fail("ambiguity half-width outside [0, 45)");
  intrinsics.validate();
  for (std::size_t i = 0; i < categories.size(); ++i) {
    const auto& c = categories[i];
    if (c.id != i) fail("category ids must be dense and ordered from 0");
    if (c.id != kBackground &&
        !(c.half_extents.x > 0.0 && c.half_extents.y > 0.0 && c.half_extents.z > 0.0)) {
      fail("category '" + c.name + "' needs positive extents");
    }
  }
  if (categories.empty() || categories.front().id != kBackground) fail("category 0 must be background");
  if (distractor_count < 0) fail("distractor count must be non-negative");
  if (distractor_count > 0 && distractor_categories.empty()) fail("distractors need at least one category");
}

const CategorySpec& EnvConfig::category(CategoryId id) const {
  if (id >= categories.size()) {
    throw Error(ErrorCode::InvalidParameter, "unknown category id " + std::to_string(id));
  }
  return categories[id];
}

CategoryId EnvConfig::category_id(std::string_view wanted) const {
  for (const auto& c : categories) {
    if (c.name == wanted) return c.id;
  }
  throw Error(ErrorCode::InvalidParameter, "unknown category '" + std::string(wanted) + "'");
}

std::vector<CategorySpec> default_categories() {
  return {
      {0, "background", {0, 0, 0}, 0.0},
      {1, "human", {0.3, 0.3, 0.9}, 0.9},
      {2, "tree", {0.6, 0.6, 3.0}, 3.0},
      {3, "car", {2.2, 0.9, 0.75}, 0.75},
      {4, "rock", {0.8, 0.7, 0.5}, 0.5},
      {5, "traffic_cone", {0.25, 0.25, 0.4}, 0.4},
      {6, "barrel", {0.4, 0.4, 0.5}, 0.5},
      {7, "bear", {1.0, 0.5, 0.7}, 0.7},
  };
}

EnvConfig reference_flat_env() {
  EnvConfig env;
  env.categories = default_categories();
  return env;
}

std::string_view to_string(RejectionReason reason) noexcept {
  switch (reason) {
    case RejectionReason::Ambiguous: return "ambiguous";
    case RejectionReason::OutOfFrustum: return "out_of_frustum";
    case RejectionReason::Collision: return "collision";
    case RejectionReason::TooClustered: return "too_clustered";
    case RejectionReason::TooSpread: return "too_spread";
    case RejectionReason::Degenerate: return "degenerate";
  }
  return "?";
}

RejectionStats& RejectionStats::merge(const RejectionStats& other) {
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  accepted += other.accepted;
  attempts += other.attempts;
  return *this;
}

bool RejectionStats::consistent() const {
  std::uint64_t total = accepted;
  for (auto c : counts) total += c;
  return total == attempts;
}

double ground_height(const EnvConfig& env, double x, double y) { return env.terrain.height(x, y); }

bool check_aabb_overlap(const Aabb& a, const Aabb& b) {
  return a.min.x <= b.max.x && b.min.x <= a.max.x && a.min.y <= b.max.y && b.min.y <= a.max.y &&
         a.min.z <= b.max.z && b.min.z <= a.max.z;
}

bool check_visibility(const Pose6DoF& camera, std::span<const Vec3> points, double hfov_deg, double margin_deg) {
  if (!(hfov_deg > 0.0 && hfov_deg < 180.0)) {
    throw Error(ErrorCode::InvalidParameter, "horizontal field of view must lie in (0, 180)");
  }
  if (points.empty()) throw Error(ErrorCode::InvalidParameter, "visibility check needs at least one point");
  // Slack absorbs atan/atan2 rounding when a point sits exactly on the boundary.
  const double limit = 0.5 * hfov_deg - margin_deg + 1e-9;
  for (const Vec3& p : points) {
    const Vec3 c = to_camera_frame(camera, p);
    if (!(c.z > 0.0)) return false;
    if (rad2deg(std::atan2(std::abs(c.x), c.z)) > limit) return false;
  }
  return true;
}

Aabb object_box(const CategorySpec& category, const Vec3& center, double yaw_deg) {
  const double cy = std::abs(std::cos(deg2rad(yaw_deg)));
  const double sy = std::abs(std::sin(deg2rad(yaw_deg)));
  const Vec3& h = category.half_extents;
  return Aabb::centered(center, {cy * h.x + sy * h.y, sy * h.x + cy * h.y, h.z});
}

std::optional<RejectionReason> validate_layout(const EnvConfig& env, const SceneLayout& layout) {
  const SceneObject* source = layout.find(ObjectRole::Source);
  const SceneObject* target = layout.find(ObjectRole::Target);
  const SceneObject* human = layout.find(ObjectRole::Viewpoint);
  if (source == nullptr || target == nullptr || human == nullptr) return RejectionReason::Degenerate;

  const std::array<const SceneObject*, 3> task{source, target, human};
  if (norm(ground(layout.camera.position) - ground(source->pose.position)) <= kEpsilonLength) {
    return RejectionReason::Degenerate;
  }

  double spread = 0.0;
  for (std::size_t i = 0; i < task.size(); ++i) {
    for (std::size_t j = i + 1; j < task.size(); ++j) {
      const double d = norm(ground(task[i]->pose.position) - ground(task[j]->pose.position));
      if (d < env.min_pair_distance) return RejectionReason::TooClustered;
      spread = std::max(spread, d);
    }
  }
  if (spread > env.max_spread) return RejectionReason::TooSpread;

  for (std::size_t i = 0; i < layout.objects.size(); ++i) {
    for (std::size_t j = i + 1; j < layout.objects.size(); ++j) {
      if (check_aabb_overlap(layout.objects[i].box, layout.objects[j].box)) return RejectionReason::Collision;
    }
  }

  std::vector<Vec3> corners;
  corners.reserve(24);
  for (const SceneObject* obj : task) {
    for (int c = 0; c < 8; ++c) {
      corners.push_back({(c & 1) ? obj->box.max.x : obj->box.min.x, (c & 2) ? obj->box.max.y : obj->box.min.y,
                         (c & 4) ? obj->box.max.z : obj->box.min.z});
    }
  }
  if (!check_visibility(layout.camera, corners, env.intrinsics.hfov_deg(), env.visibility_margin_deg)) {
    return RejectionReason::OutOfFrustum;
  }
  // Every task object must own at least one patch token after depth ordering.
  const std::vector<int> owners = token_owners(layout.camera, env.intrinsics, layout);
  for (std::size_t i = 0; i < layout.objects.size(); ++i) {
    if (layout.objects[i].role == ObjectRole::Distractor) continue;
    if (std::find(owners.begin(), owners.end(), static_cast<int>(i)) == owners.end()) {
      return RejectionReason::OutOfFrustum;
    }
  }

  try {
    if (!label_sample(layout, TaskVariant::Ego, env.ambiguity_half_width) ||
        !label_sample(layout, TaskVariant::Allo, env.ambiguity_half_width)) {
      return RejectionReason::Ambiguous;
    }
  } catch (const Error&) {
    return RejectionReason::Degenerate;
  }
  return std::nullopt;
}

SampleOutcome sample_scene(const EnvConfig& env, const TripleSpec& triple, std::uint64_t global_seed,
                           std::uint64_t scene_index) {
  const std::uint64_t key = CounterRng::derive_key(global_seed, scene_index);
  SceneLayout layout;
  layout.environment = env.name;
  layout.scene_index = scene_index;

  CounterRng center_rng(key, kStreamCenter);
  const Box2& region = env.placement_center_region;
  const Vec2 center{center_rng.uniform(region.min.x, region.max.x), center_rng.uniform(region.min.y, region.max.y)};

  auto place = [&](CounterRng& rng, CategoryId category, ObjectRole role) -> bool {
    const CategorySpec& spec = env.category(category);
    const double x = rng.normal(center.x, env.placement_sigma);
    const double y = rng.normal(center.y, env.placement_sigma);
    const double yaw = wrap_degrees(rng.uniform(-180.0, 180.0));
    if (!env.terrain.contains(x, y)) return false;
    const Vec3 position{x, y, ground_height(env, x, y) + spec.ground_offset};
    layout.objects.push_back({category, role, {position, yaw, 0.0, 0.0}, object_box(spec, position, yaw)});
    return true;
  };

  CounterRng object_rng(key, kStreamObjects);
  bool inside = place(object_rng, triple.source, ObjectRole::Source);
  inside = place(object_rng, triple.target, ObjectRole::Target) && inside;
  inside = place(object_rng, triple.viewpoint, ObjectRole::Viewpoint) && inside;

  CounterRng distractor_rng(key, kStreamDistractors);
  for (int i = 0; i < env.distractor_count; ++i) {
    const auto pick = distractor_rng.below(env.distractor_categories.size());
    inside = place(distractor_rng, env.distractor_categories[pick], ObjectRole::Distractor) && inside;
  }
  if (!inside) return RejectionReason::Degenerate;

  Vec3 centroid{};
  double mean_ground = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const Vec3& p = layout.objects[i].pose.position;
    centroid = centroid + (1.0 / 3.0) * p;
    mean_ground += ground_height(env, p.x, p.y) / 3.0;
  }

  CounterRng camera_rng(key, kStreamCamera);
  const double radius = std::sqrt(camera_rng.uniform(env.camera_r_min * env.camera_r_min,
                                                     env.camera_r_max * env.camera_r_max));
  const double angle = camera_rng.uniform(0.0, 2.0 * kPi);
  const double height = camera_rng.uniform(env.camera_height_min, env.camera_height_max);
  const double cx = centroid.x + radius * std::cos(angle);
  const double cy = centroid.y + radius * std::sin(angle);
  if (!env.terrain.contains(cx, cy)) return RejectionReason::Degenerate;
  const double cz = mean_ground + height;
  if (cz < ground_height(env, cx, cy) + kCameraClearance) return RejectionReason::Degenerate;

  const Vec3 look = centroid - Vec3{cx, cy, cz};
  const double horizontal = std::hypot(look.x, look.y);
  if (horizontal <= kEpsilonLength) return RejectionReason::Degenerate;
  layout.camera.position = {cx, cy, cz};
  layout.camera.yaw = wrap_degrees(rad2deg(std::atan2(look.y, look.x)));
  layout.camera.pitch = rad2deg(std::atan2(look.z, horizontal));
  layout.camera.roll = 0.0;

  if (auto reason = validate_layout(env, layout)) return *reason;
  return layout;
}

std::size_t default_dataset_size(TaskVariant variant) noexcept {
  return variant == TaskVariant::Ego ? 5000 : 10000;
}

std::string make_sample_id(std::string_view environment, std::uint64_t scene_index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%08llu", static_cast<unsigned long long>(scene_index));
  return std::string(environment) + "-" + buf;
}

GeneratedDataset generate_dataset(const EnvConfig& env, const TripleSpec& triple, const GenerateOptions& options) {
  if (options.n_valid == 0) throw Error(ErrorCode::InvalidParameter, "n_valid must be positive");
  env.validate();
  const std::size_t cap = options.max_attempts > 0 ? options.max_attempts : 100 * options.n_valid;
  const std::size_t chunk = std::max<std::size_t>(256, 64 * std::max(1u, options.jobs));

  GeneratedDataset out;
  out.records.reserve(options.n_valid);
  std::vector<SampleOutcome> outcomes;
  std::uint64_t next_index = 0;
  while (out.records.size() < options.n_valid) {
    if (next_index >= cap) {
      throw Error(ErrorCode::BudgetExhausted, "accepted " + std::to_string(out.records.size()) + " of " +
                                                  std::to_string(options.n_valid) + " samples in " +
                                                  std::to_string(cap) + " attempts");
    }
    const std::size_t count = std::min<std::size_t>(chunk, cap - next_index);
    outcomes.assign(count, RejectionReason::Degenerate);
    parallel_for(count, options.jobs, [&](std::size_t i) {
      outcomes[i] = sample_scene(env, triple, options.global_seed, next_index + i);
    });
    for (std::size_t i = 0; i < count && out.records.size() < options.n_valid; ++i) {
      if (const auto* reason = std::get_if<RejectionReason>(&outcomes[i])) {
        out.stats.record_rejection(*reason);
        continue;
      }
      out.stats.record_acceptance();
      SampleRecord rec;
      rec.layout = std::move(std::get<SceneLayout>(outcomes[i]));
      rec.environment = env.name;
      rec.triple = triple;
      rec.global_seed = options.global_seed;
      rec.scene_index = next_index + i;
      rec.sample_id = make_sample_id(env.name, rec.scene_index);
      rec.theta_ego = sample_angle(rec.layout, TaskVariant::Ego).degrees;
      rec.theta_allo = sample_angle(rec.layout, TaskVariant::Allo).degrees;
      rec.label_ego = *classify_direction({rec.theta_ego}, env.ambiguity_half_width);
      rec.label_allo = *classify_direction({rec.theta_allo}, env.ambiguity_half_width);
      out.records.push_back(std::move(rec));
    }
    next_index += count;
  }
  return out;
}

}  // namespace spatial
