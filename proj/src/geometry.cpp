#include "spatial/geometry.hpp"

#include <array>
#include <string>

#include "spatial/error.hpp"
#include "spatial/scene.hpp"

namespace spatial {

std::string_view to_string(SpatialLabel label) noexcept {
  switch (label) {
    case SpatialLabel::Front: return "front";
    case SpatialLabel::Back: return "back";
    case SpatialLabel::Left: return "left";
    case SpatialLabel::Right: return "right";
  }
  return "?";
}

SpatialLabel parse_label(std::string_view text) {
  if (text == "front") return SpatialLabel::Front;
  if (text == "back") return SpatialLabel::Back;
  if (text == "left") return SpatialLabel::Left;
  if (text == "right") return SpatialLabel::Right;
  throw Error(ErrorCode::InvalidParameter, "unknown spatial label '" + std::string(text) + "'");
}

std::string_view to_string(TaskVariant variant) noexcept {
  return variant == TaskVariant::Ego ? "ego" : "allo";
}

TaskVariant parse_variant(std::string_view text) {
  if (text == "ego") return TaskVariant::Ego;
  if (text == "allo") return TaskVariant::Allo;
  throw Error(ErrorCode::InvalidParameter, "unknown task variant '" + std::string(text) + "'");
}

std::string_view to_string(ObjectRole role) noexcept {
  switch (role) {
    case ObjectRole::Source: return "source";
    case ObjectRole::Target: return "target";
    case ObjectRole::Viewpoint: return "viewpoint";
    case ObjectRole::Distractor: return "distractor";
  }
  return "?";
}

ObjectRole parse_role(std::string_view text) {
  if (text == "source") return ObjectRole::Source;
  if (text == "target") return ObjectRole::Target;
  if (text == "viewpoint") return ObjectRole::Viewpoint;
  if (text == "distractor") return ObjectRole::Distractor;
  throw Error(ErrorCode::InvalidParameter, "unknown object role '" + std::string(text) + "'");
}

double wrap_degrees(double deg) {
  double r = std::fmod(deg, 360.0);
  if (r <= -180.0) r += 360.0;
  if (r > 180.0) r -= 360.0;
  return r;
}

GroundFrame forward_frame(const Vec3& viewpoint, const Vec3& source, double epsilon_len) {
  const Vec2 offset = ground(source) - ground(viewpoint);
  const double len = norm(offset);
  if (!(len > epsilon_len)) {
    throw Error(ErrorCode::DegenerateFrame, "viewpoint and source coincide in the ground plane");
  }
  const Vec2 forward = (1.0 / len) * offset;
  return {forward, {forward.y, -forward.x}};
}

RelativeAngle relative_angle(const Vec3& viewpoint, const Vec3& source, const Vec3& target,
                             double epsilon_len) {
  const GroundFrame frame = forward_frame(viewpoint, source, epsilon_len);
  const Vec2 offset = ground(target) - ground(source);
  const double len = norm(offset);
  if (!(len > epsilon_len)) {
    throw Error(ErrorCode::DegenerateTarget, "target coincides with source in the ground plane");
  }
  const Vec2 d = (1.0 / len) * offset;
  return {wrap_degrees(rad2deg(std::atan2(dot(d, frame.right), dot(d, frame.forward))))};
}

double distance_to_diagonal(double theta_deg) {
  static constexpr std::array<double, 4> kDiagonals{45.0, 135.0, -45.0, -135.0};
  double best = 360.0;
  for (double diag : kDiagonals) best = std::min(best, std::abs(theta_deg - diag));
  return best;
}

std::optional<SpatialLabel> classify_direction(RelativeAngle theta, double ambiguity_half_width) {
  if (!(ambiguity_half_width >= 0.0 && ambiguity_half_width < 45.0)) {
    throw Error(ErrorCode::InvalidParameter, "ambiguity half-width must lie in [0, 45)");
  }
  const double t = wrap_degrees(theta.degrees);
  if (distance_to_diagonal(t) <= ambiguity_half_width) return std::nullopt;
  const double mag = std::abs(t);
  if (mag < 45.0) return SpatialLabel::Front;
  if (mag > 135.0) return SpatialLabel::Back;
  return t > 0.0 ? SpatialLabel::Right : SpatialLabel::Left;
}

const SceneObject* SceneLayout::find(ObjectRole role) const {
  for (const auto& obj : objects) {
    if (obj.role == role) return &obj;
  }
  return nullptr;
}

RelativeAngle sample_angle(const SceneLayout& layout, TaskVariant variant) {
  const SceneObject* source = layout.find(ObjectRole::Source);
  const SceneObject* target = layout.find(ObjectRole::Target);
  if (source == nullptr || target == nullptr) {
    throw Error(ErrorCode::MissingObject, "layout lacks a source or target object");
  }
  Vec3 viewpoint = layout.camera.position;
  if (variant == TaskVariant::Allo) {
    const SceneObject* human = layout.find(ObjectRole::Viewpoint);
    if (human == nullptr) {
      throw Error(ErrorCode::MissingObject, "allocentric label requires a viewpoint object");
    }
    viewpoint = human->pose.position;
  }
  return relative_angle(viewpoint, source->pose.position, target->pose.position);
}

std::optional<SpatialLabel> label_sample(const SceneLayout& layout, TaskVariant variant,
                                         double ambiguity_half_width) {
  return classify_direction(sample_angle(layout, variant), ambiguity_half_width);
}

}  // namespace spatial
