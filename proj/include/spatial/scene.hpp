#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spatial/geometry.hpp"

namespace spatial {

using CategoryId = std::uint16_t;

inline constexpr CategoryId kBackground = 0;
// Reserved ids for non-patch tokens in flattened token-category lists.
inline constexpr CategoryId kClsToken = 0xFFFE;
inline constexpr CategoryId kRegisterToken = 0xFFFD;

struct Aabb {
  Vec3 min;
  Vec3 max;

  static Aabb centered(const Vec3& center, const Vec3& half_extents) {
    return {center - half_extents, center + half_extents};
  }
  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 half_extents() const { return 0.5 * (max - min); }

  bool operator==(const Aabb&) const = default;
};

enum class ObjectRole : std::uint8_t { Source, Target, Viewpoint, Distractor };

std::string_view to_string(ObjectRole role) noexcept;
ObjectRole parse_role(std::string_view text);

struct SceneObject {
  CategoryId category = kBackground;
  ObjectRole role = ObjectRole::Distractor;
  Pose6DoF pose;
  Aabb box;

  bool operator==(const SceneObject&) const = default;
};

struct SceneLayout {
  Pose6DoF camera;
  std::vector<SceneObject> objects;
  std::string environment;
  std::uint64_t scene_index = 0;

  const SceneObject* find(ObjectRole role) const;

  bool operator==(const SceneLayout&) const = default;
};

/// Label of the source->target relation seen from the camera (Ego) or the
/// viewpoint object (Allo). Viewpoint orientation never enters the label.
std::optional<SpatialLabel> label_sample(const SceneLayout& layout, TaskVariant variant,
                                         double ambiguity_half_width = kDefaultAmbiguityHalfWidth);

/// Raw bearing behind label_sample.
RelativeAngle sample_angle(const SceneLayout& layout, TaskVariant variant);

}  // namespace spatial
