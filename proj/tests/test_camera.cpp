#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "spatial/camera.hpp"
#include "spatial/error.hpp"
#include "support.hpp"

using namespace spatial;

namespace {

// Look-at pinhole built from the forward vector alone (roll 0): right is
// forward x z, up completes the frame.
struct LookAt {
  Vec3 eye, f, r, u;
  explicit LookAt(const Pose6DoF& p) : eye(p.position) {
    const double cy = std::cos(p.yaw * kPi / 180), sy = std::sin(p.yaw * kPi / 180);
    const double cp = std::cos(p.pitch * kPi / 180), sp = std::sin(p.pitch * kPi / 180);
    f = {cp * cy, cp * sy, sp};
    const Vec3 z{0, 0, 1};
    r = cross(f, z);
    r = (1.0 / norm(r)) * r;
    u = cross(r, f);
  }
};

// Cell-centre rasterizer: every cell centre is tested against every object's
// projected corner rectangle; nearest centre depth wins. Objects that cover no
// centre claim the cell under their rectangle midpoint.
std::vector<int> raster_owners(const Pose6DoF& cam, const CameraIntrinsics& k, const SceneLayout& layout) {
  const LookAt la(cam);
  const double f = k.focal_mm / k.sensor_width_mm * k.width_px;
  const int rows = k.grid_rows, cols = k.grid_cols;
  std::vector<int> owner(static_cast<std::size_t>(rows * cols), -1);
  std::vector<double> best(owner.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < layout.objects.size(); ++i) {
    const Aabb& b = layout.objects[i].box;
    double u0 = 1e300, u1 = -1e300, v0 = 1e300, v1 = -1e300, dmin = 1e300;
    bool any = false;
    for (double x : {b.min.x, b.max.x}) {
      for (double y : {b.min.y, b.max.y}) {
        for (double z : {b.min.z, b.max.z}) {
          const Vec3 d = Vec3{x, y, z} - la.eye;
          const double depth = dot(d, la.f);
          if (depth <= kNearPlane) continue;
          any = true;
          const double u = k.width_px / 2.0 + f * dot(d, la.r) / depth;
          const double v = k.height_px / 2.0 - f * dot(d, la.u) / depth;
          u0 = std::min(u0, u), u1 = std::max(u1, u), v0 = std::min(v0, v), v1 = std::max(v1, v);
          dmin = std::min(dmin, depth);
        }
      }
    }
    if (!any) continue;
    const double cd = dot(b.center() - la.eye, la.f);
    const double depth = cd > kNearPlane ? cd : dmin;
    bool covered = false;
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const double uc = (c + 0.5) * k.width_px / cols, vc = (r + 0.5) * k.height_px / rows;
        if (uc < u0 || uc > u1 || vc < v0 || vc > v1) continue;
        covered = true;
        const auto cell = static_cast<std::size_t>(r * cols + c);
        if (depth < best[cell]) best[cell] = depth, owner[cell] = static_cast<int>(i);
      }
    }
    if (covered || u1 < 0 || u0 > k.width_px || v1 < 0 || v0 > k.height_px) continue;
    const double um = std::clamp((u0 + u1) / 2, 0.0, k.width_px - 1e-9);
    const double vm = std::clamp((v0 + v1) / 2, 0.0, k.height_px - 1e-9);
    const int c = std::min(cols - 1, static_cast<int>(um / (double(k.width_px) / cols)));
    const int r = std::min(rows - 1, static_cast<int>(vm / (double(k.height_px) / rows)));
    const auto cell = static_cast<std::size_t>(r * cols + c);
    if (depth < best[cell]) best[cell] = depth, owner[cell] = static_cast<int>(i);
  }
  return owner;
}

}  // namespace

TEST_CASE("horizontal field of view from the lens") {
  CHECK(hfov_from_lens(50.0, 50.0) == doctest::Approx(2.0 * std::atan(0.5) * 180.0 / kPi));
  CHECK(hfov_from_lens(18.0, 36.0) == doctest::Approx(90.0));
  CHECK(CameraIntrinsics{}.hfov_deg() == doctest::Approx(53.130102354));
  CHECK_THROWS_AS(hfov_from_lens(0.0, 36.0), Error);
}

TEST_CASE("intrinsics validation") {
  CameraIntrinsics k;
  CHECK_NOTHROW(k.validate());
  k.grid_cols = 15;
  CHECK_THROWS_AS(k.validate(), Error);
  k = {};
  k.width_px = 0;
  CHECK_THROWS_AS(k.validate(), Error);
}

TEST_CASE("camera basis is right-handed and orthonormal") {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> ang(-170.0, 170.0), pitch(-80.0, 80.0);
  for (int i = 0; i < 100; ++i) {
    const CameraBasis b = camera_basis({{}, ang(gen), pitch(gen), ang(gen)});
    CHECK(norm(b.forward) == doctest::Approx(1.0));
    CHECK(norm(b.right) == doctest::Approx(1.0));
    CHECK(norm(b.up) == doctest::Approx(1.0));
    CHECK(dot(b.forward, b.right) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(dot(b.forward, b.up) == doctest::Approx(0.0).epsilon(1e-12));
    const Vec3 c = cross(b.right, b.forward);
    CHECK(c.x == doctest::Approx(b.up.x));
    CHECK(c.y == doctest::Approx(b.up.y));
    CHECK(c.z == doctest::Approx(b.up.z));
  }
}

TEST_CASE("project_point centre and sides") {
  const Pose6DoF cam{{0, 0, 0}, 90.0, 0.0, 0.0};  // looking along +y
  const CameraIntrinsics k;
  const auto centre = project_point(cam, k, {0, 10, 0});
  REQUIRE(centre.has_value());
  CHECK(centre->u == doctest::Approx(112.0));
  CHECK(centre->v == doctest::Approx(112.0));
  CHECK(centre->depth == doctest::Approx(10.0));
  const auto east = project_point(cam, k, {1, 10, 0});
  CHECK(east->u == doctest::Approx(112.0 + 224.0 * 0.1));
  const auto up = project_point(cam, k, {0, 10, 1});
  CHECK(up->v < 112.0);
  CHECK_FALSE(project_point(cam, k, {0, -5, 0}).has_value());
}

TEST_CASE("token occupancy matches a brute-force rasterizer") {
  const CameraIntrinsics k;
  for (const auto& r : test::small_dataset(150, 5)) {
    CHECK(token_owners(r.layout.camera, k, r.layout) == raster_owners(r.layout.camera, k, r.layout));
    const TokenOccupancy occ = token_occupancy(r.layout.camera, k, r.layout);
    CHECK(occ.map.cells.size() == 196);
    CHECK(occ.map.special == std::vector<CategoryId>{kClsToken});
    CHECK(occ.map.n_tokens() == 197);
    for (std::size_t i = 0; i < occ.map.cells.size(); ++i) CHECK((occ.depth[i] > 0.0) == (occ.map.cells[i] != 0));
  }
}

TEST_CASE("nearer objects occlude farther ones") {
  SceneLayout l;
  l.camera = {{0, 0, 1}, 90.0, 0.0, 0.0};
  const Vec3 near{0, 5, 1}, far{0, 12, 1};
  l.objects.push_back({2, ObjectRole::Source, {far}, Aabb::centered(far, {2, 2, 2})});
  l.objects.push_back({3, ObjectRole::Target, {near}, Aabb::centered(near, {0.5, 0.5, 0.5})});
  const TokenOccupancy occ = token_occupancy(l.camera, CameraIntrinsics{}, l);
  CHECK(occ.map.at(7, 7) == 3);
  CHECK(occ.map.at(7, 4) == 2);
  CHECK(occ.map.at(0, 0) == 0);
}

TEST_CASE("objects smaller than a patch still claim a cell") {
  SceneLayout l;
  l.camera = {{0, 0, 1}, 90.0, 0.0, 0.0};
  const Vec3 p{0.3, 40, 1.2};
  l.objects.push_back({5, ObjectRole::Source, {p}, Aabb::centered(p, {0.05, 0.05, 0.05})});
  const TokenOccupancy occ = token_occupancy(l.camera, CameraIntrinsics{}, l);
  CHECK(std::count(occ.map.cells.begin(), occ.map.cells.end(), CategoryId{5}) == 1);
}
