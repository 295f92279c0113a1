#pragma once

#include <cstdint>
#include <string>

#include "spatial/geometry.hpp"
#include "spatial/scenario.hpp"
#include "spatial/scene.hpp"

namespace spatial {

enum class Split : std::uint8_t { Unassigned, Train, Val, Test };

std::string_view to_string(Split split) noexcept;
Split parse_split(std::string_view text);

/// One benchmark item. Optional file references are relative to the
/// manifest's directory; `features_ref` may contain a `{layer}` placeholder.
struct SampleRecord {
  std::string sample_id;
  std::string environment;
  TripleSpec triple;
  std::uint64_t global_seed = 0;
  std::uint64_t scene_index = 0;
  SceneLayout layout;
  double theta_ego = 0.0;
  double theta_allo = 0.0;
  SpatialLabel label_ego = SpatialLabel::Front;
  SpatialLabel label_allo = SpatialLabel::Front;
  Split split = Split::Unassigned;
  std::string features_ref;
  std::string attention_ref;
  std::string catmap_ref;

  SpatialLabel label(TaskVariant variant) const {
    return variant == TaskVariant::Ego ? label_ego : label_allo;
  }
  double theta(TaskVariant variant) const { return variant == TaskVariant::Ego ? theta_ego : theta_allo; }

  bool operator==(const SampleRecord&) const = default;
};

}  // namespace spatial
