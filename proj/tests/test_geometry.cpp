#include <doctest.h>

#include <cmath>
#include <random>

#include "spatial/encoder.hpp"
#include "spatial/error.hpp"
#include "spatial/geometry.hpp"
#include "spatial/scene.hpp"
#include "support.hpp"

using namespace spatial;

namespace {

SceneLayout layout_with(Vec3 camera, Vec3 source, Vec3 target, Vec3 human) {
  SceneLayout l;
  l.camera.position = camera;
  l.objects.push_back({2, ObjectRole::Source, {source}, Aabb::centered(source, {0.5, 0.5, 0.5})});
  l.objects.push_back({3, ObjectRole::Target, {target}, Aabb::centered(target, {0.5, 0.5, 0.5})});
  l.objects.push_back({1, ObjectRole::Viewpoint, {human}, Aabb::centered(human, {0.3, 0.3, 0.9})});
  return l;
}

}  // namespace

TEST_CASE("wrap_degrees maps into (-180, 180]") {
  CHECK(wrap_degrees(180.0) == 180.0);
  CHECK(wrap_degrees(-180.0) == 180.0);
  CHECK(wrap_degrees(540.0) == doctest::Approx(180.0));
  CHECK(wrap_degrees(-190.0) == doctest::Approx(170.0));
  CHECK(wrap_degrees(725.0) == doctest::Approx(5.0));
  CHECK(wrap_degrees(0.0) == 0.0);
}

TEST_CASE("relative_angle follows the right-hand convention") {
  const Vec3 v{0, 0, 0};
  const Vec3 s{0, 10, 0};
  CHECK(relative_angle(v, s, {0, 20, 0}).degrees == doctest::Approx(0.0));
  CHECK(relative_angle(v, s, {5, 10, 0}).degrees == doctest::Approx(90.0));   // east of a northward view
  CHECK(relative_angle(v, s, {-5, 10, 0}).degrees == doctest::Approx(-90.0));
  CHECK(relative_angle(v, s, {0, 3, 0}).degrees == doctest::Approx(180.0));
  // Height differences never enter the planar bearing.
  CHECK(relative_angle({0, 0, 7}, {0, 10, -2}, {5, 10, 30}).degrees == doctest::Approx(90.0));
}

TEST_CASE("forward_frame is orthonormal") {
  const GroundFrame f = forward_frame({1, 2, 0}, {4, 6, 1});
  CHECK(f.forward.x == doctest::Approx(0.6));
  CHECK(f.forward.y == doctest::Approx(0.8));
  CHECK(dot(f.forward, f.right) == doctest::Approx(0.0));
  CHECK(f.right.x == doctest::Approx(0.8));
  CHECK(f.right.y == doctest::Approx(-0.6));
}

TEST_CASE("degenerate frames raise") {
  CHECK_THROWS_AS(forward_frame({1, 1, 0}, {1, 1, 5}), Error);
  try {
    relative_angle({0, 0, 0}, {0, 5, 0}, {0, 5, 3});
    FAIL("expected DegenerateTarget");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateTarget);
  }
  try {
    forward_frame({0, 0, 0}, {0, 0, 0});
    FAIL("expected DegenerateFrame");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateFrame);
  }
}

TEST_CASE("classify_direction uses inclusive ambiguity boundaries") {
  CHECK(classify_direction({0.0}) == SpatialLabel::Front);
  CHECK(classify_direction({90.0}) == SpatialLabel::Right);
  CHECK(classify_direction({-90.0}) == SpatialLabel::Left);
  CHECK(classify_direction({180.0}) == SpatialLabel::Back);
  CHECK(classify_direction({29.999}) == SpatialLabel::Front);
  CHECK_FALSE(classify_direction({30.0}).has_value());
  CHECK_FALSE(classify_direction({45.0}).has_value());
  CHECK_FALSE(classify_direction({60.0}).has_value());
  CHECK(classify_direction({60.001}) == SpatialLabel::Right);
  CHECK_FALSE(classify_direction({-150.0}).has_value());
  CHECK(classify_direction({-150.001}) == SpatialLabel::Back);
  CHECK(classify_direction({44.0}, 0.0) == SpatialLabel::Front);
  CHECK_FALSE(classify_direction({45.0}, 0.0).has_value());
  CHECK_THROWS_AS(classify_direction({0.0}, 45.0), Error);
}

TEST_CASE("distance_to_diagonal") {
  CHECK(distance_to_diagonal(45.0) == doctest::Approx(0.0));
  CHECK(distance_to_diagonal(0.0) == doctest::Approx(45.0));
  CHECK(distance_to_diagonal(180.0) == doctest::Approx(45.0));
  CHECK(distance_to_diagonal(-130.0) == doctest::Approx(5.0));
}

TEST_CASE("uniform bearings are accepted two thirds of the time") {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(-180.0, 180.0);
  int accepted = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) accepted += classify_direction({u(gen)}).has_value();
  CHECK(std::abs(accepted / double(n) - 2.0 / 3.0) < 0.015);
}

TEST_CASE("label_sample ego and allo frames") {
  // Camera south of the source looking north; target east of the source.
  const SceneLayout l = layout_with({0, -10, 2}, {0, 0, 0}, {5, 0, 0}, {0, 10, 0});
  CHECK(label_sample(l, TaskVariant::Ego) == SpatialLabel::Right);
  // The human stands north of the source looking south, so east is on its left.
  CHECK(label_sample(l, TaskVariant::Allo) == SpatialLabel::Left);
  CHECK(brute_force_label_oracle(l, TaskVariant::Ego) == SpatialLabel::Right);
  CHECK(brute_force_label_oracle(l, TaskVariant::Allo) == SpatialLabel::Left);
}

TEST_CASE("allo labels ignore camera and viewpoint orientation") {
  SceneLayout l = layout_with({3, -12, 2}, {0, 0, 0}, {-4, 6, 0}, {8, 1, 0});
  const auto label = label_sample(l, TaskVariant::Allo);
  REQUIRE(label.has_value());
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int i = 0; i < 200; ++i) {
    l.camera.position = {u(gen), u(gen), std::abs(u(gen))};
    l.camera.yaw = u(gen);
    l.objects[2].pose.yaw = 3.0 * u(gen);
    CHECK(label_sample(l, TaskVariant::Allo) == label);
  }
}

TEST_CASE("missing objects raise") {
  SceneLayout l = layout_with({0, -10, 2}, {0, 0, 0}, {5, 0, 0}, {0, 10, 0});
  l.objects.pop_back();
  CHECK(label_sample(l, TaskVariant::Ego).has_value());
  CHECK_THROWS_AS(label_sample(l, TaskVariant::Allo), Error);
}

TEST_CASE("label_sample agrees with the arc oracle on generated layouts") {
  for (const auto& r : test::small_dataset(300, 21)) {
    for (TaskVariant v : {TaskVariant::Ego, TaskVariant::Allo}) {
      CHECK(label_sample(r.layout, v) == brute_force_label_oracle(r.layout, v));
      CHECK(distance_to_diagonal(r.theta(v)) > kDefaultAmbiguityHalfWidth);
    }
  }
}

TEST_CASE("text forms round-trip") {
  for (auto l : {SpatialLabel::Front, SpatialLabel::Back, SpatialLabel::Left, SpatialLabel::Right}) {
    CHECK(parse_label(to_string(l)) == l);
  }
  CHECK(parse_variant("ego") == TaskVariant::Ego);
  CHECK(parse_variant("allo") == TaskVariant::Allo);
  CHECK_THROWS_AS(parse_variant("both"), Error);
  for (auto r : {ObjectRole::Source, ObjectRole::Target, ObjectRole::Viewpoint, ObjectRole::Distractor}) {
    CHECK(parse_role(to_string(r)) == r);
  }
}
