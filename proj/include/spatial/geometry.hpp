#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string_view>

namespace spatial {

// World frame: right-handed, meters, +z up.

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  bool operator==(const Vec3&) const = default;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a.x, s * a.y, s * a.z}; }
inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec2 ground(const Vec3& a) { return {a.x, a.y}; }
inline bool is_finite(const Vec3& a) {
  return std::isfinite(a.x) && std::isfinite(a.y) && std::isfinite(a.z);
}

/// Position plus yaw/pitch/roll in degrees. Yaw is measured counter-clockwise
/// about +z from +x, pitch is positive looking up, roll turns about the
/// optical (forward) axis.
struct Pose6DoF {
  Vec3 position;
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;

  bool operator==(const Pose6DoF&) const = default;
};

enum class SpatialLabel : std::uint8_t { Front, Back, Left, Right };
enum class TaskVariant : std::uint8_t { Ego, Allo };

inline constexpr int kNumLabels = 4;

std::string_view to_string(SpatialLabel label) noexcept;
SpatialLabel parse_label(std::string_view text);
std::string_view to_string(TaskVariant variant) noexcept;
TaskVariant parse_variant(std::string_view text);
inline int label_index(SpatialLabel label) { return static_cast<int>(label); }

inline constexpr double kEpsilonLength = 1e-6;
inline constexpr double kDefaultAmbiguityHalfWidth = 15.0;
inline constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double deg) { return deg * (kPi / 180.0); }
inline double rad2deg(double rad) { return rad * (180.0 / kPi); }

/// Maps any angle in degrees into (-180, 180].
double wrap_degrees(double deg);

/// Bearing of the source->target direction in the viewpoint frame, in
/// degrees within (-180, 180]; positive values lie toward the right-hand
/// vector.
struct RelativeAngle {
  double degrees = 0.0;
};

/// Planar frame anchored at a viewpoint: forward points at the source,
/// right = forward x up.
struct GroundFrame {
  Vec2 forward;
  Vec2 right;
};

GroundFrame forward_frame(const Vec3& viewpoint, const Vec3& source,
                          double epsilon_len = kEpsilonLength);

RelativeAngle relative_angle(const Vec3& viewpoint, const Vec3& source, const Vec3& target,
                             double epsilon_len = kEpsilonLength);

/// Four-way class of a bearing, or nullopt when the bearing lies within
/// `ambiguity_half_width` of a diagonal (boundary inclusive).
std::optional<SpatialLabel> classify_direction(RelativeAngle theta,
                                               double ambiguity_half_width = kDefaultAmbiguityHalfWidth);

/// Angular distance from a bearing to the nearest of the +-45/+-135 diagonals.
double distance_to_diagonal(double theta_deg);

}  // namespace spatial
