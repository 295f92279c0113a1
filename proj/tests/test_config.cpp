#include <doctest.h>

#include "spatial/config.hpp"
#include "spatial/error.hpp"

using namespace spatial;

namespace {

const std::filesystem::path kConfigs = std::filesystem::path(SPATIALBENCH_SOURCE_DIR) / "configs";

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("built-in defaults") {
  const BenchConfig c = default_config();
  CHECK_NOTHROW(c.validate());
  CHECK(c.env_names() == std::vector<std::string>{"flat", "hills"});
  CHECK(c.triples.size() == 3);
  CHECK(c.encoder.n_categories == static_cast<int>(c.categories.size()));
  CHECK(c.training.linear == HeadSchedule{1000, 200});
  CHECK(c.split.train == 0.8);
}

TEST_CASE("shipped config files load") {
  const BenchConfig full = load_config(kConfigs / "default.yaml");
  CHECK(full.env_names() == std::vector<std::string>{"flat", "hills", "cluttered"});
  CHECK(full.find_env("cluttered").distractor_count == 3);
  CHECK(full.categories.size() == 8);
  const BenchConfig desk = load_config(kConfigs / "desk.yaml");
  CHECK(desk.training.abmilp_hidden == 32);
  CHECK(desk.training.linear == HeadSchedule{200, 40});
  CHECK(desk.training.efficient == HeadSchedule{100, 20});
  CHECK(desk.env_names() == default_config().env_names());
}

TEST_CASE("empty document keeps defaults") {
  const BenchConfig c = parse_config("version: 1\n");
  CHECK(c.env_names() == default_config().env_names());
  CHECK(parse_config("").triples.size() == 3);
}

TEST_CASE("config errors") {
  CHECK(code_of([] { parse_config("version: 2\n"); }) == ErrorCode::SchemaMismatch);
  CHECK(code_of([] { parse_config("version: 1\nsed: 4\n"); }) == ErrorCode::InvalidParameter);
  CHECK(code_of([] { parse_config("version: 1\ntraining: {epochs: 4}\n"); }) == ErrorCode::InvalidParameter);
  CHECK(code_of([] { parse_config("version: 1\nsplit: {train: 0.5, val: 0.1, test: 0.1}\n"); }) ==
        ErrorCode::InvalidParameter);
  CHECK(code_of([] { parse_config("version: [\n"); }) != ErrorCode::Io);
  CHECK(code_of([] { load_config("/nonexistent/config.yaml"); }) == ErrorCode::Io);
  try {
    parse_config("version: 1\nbogus: 1\n");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("training") != std::string::npos);
  }
}

TEST_CASE("custom environments and triples") {
  const BenchConfig c = parse_config(R"(version: 1
seed: 42
environments:
  - name: slope
    terrain: {kind: grid, origin: [-100, -100], spacing: 100, nx: 3, ny: 3,
              heights: [0, 1, 2, 0, 1, 2, 0, 1, 2]}
    camera: {r_min: 8, r_max: 20}
triples:
  - {source: car, target: tree, viewpoint: human}
)");
  CHECK(c.seed == 42);
  REQUIRE(c.env_names() == std::vector<std::string>{"slope"});
  CHECK(c.find_env("slope").terrain.height(0.0, 0.0) == doctest::Approx(1.0));
  CHECK(c.find_env("slope").camera_r_max == 20.0);
  REQUIRE(c.triples.size() == 1);
  CHECK(c.triples[0].source == c.category_id("car"));
}

TEST_CASE("lookups") {
  const BenchConfig c = default_config();
  try {
    c.find_env("moon");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidParameter);
    CHECK(std::string(e.what()).find("flat") != std::string::npos);
    CHECK(std::string(e.what()).find("hills") != std::string::npos);
  }
  const TripleSpec t = c.parse_triple("tree,car,human");
  CHECK(t.source == c.category_id("tree"));
  CHECK(t.viewpoint == c.category_id("human"));
  CHECK_THROWS_AS(c.parse_triple("tree,car"), Error);
  CHECK_THROWS_AS(c.parse_triple("tree,car,ghost"), Error);
  CHECK_THROWS_AS(c.parse_triple("tree,tree,human"), Error);
}
