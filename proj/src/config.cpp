#include "spatial/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <initializer_list>

#include "spatial/error.hpp"

namespace spatial {

namespace {

[[noreturn]] void bad(const std::string& where, const std::string& why) {
  throw Error(ErrorCode::InvalidParameter, "config " + where + ": " + why);
}

void check_keys(const YAML::Node& node, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!node.IsMap()) bad(where, "expected a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      std::string known;
      for (auto a : allowed) known += (known.empty() ? "" : ", ") + std::string(a);
      bad(where, "unknown key '" + key + "' (known: " + known + ")");
    }
  }
}

template <typename T>
void read(const YAML::Node& node, const char* key, T& out, const std::string& where) {
  const YAML::Node v = node[key];
  if (!v) return;
  try {
    out = v.as<T>();
  } catch (const YAML::Exception&) {
    bad(where + "." + key, "wrong type");
  }
}

Vec2 read_vec2(const YAML::Node& n, const std::string& where) {
  if (!n.IsSequence() || n.size() != 2) bad(where, "expected [x, y]");
  return {n[0].as<double>(), n[1].as<double>()};
}

Box2 read_box(const YAML::Node& n, const std::string& where) {
  if (!n.IsSequence() || n.size() != 2) bad(where, "expected [[xmin, ymin], [xmax, ymax]]");
  return {read_vec2(n[0], where), read_vec2(n[1], where)};
}

std::vector<CategorySpec> read_categories(const YAML::Node& n) {
  if (!n.IsSequence()) bad("categories", "expected a list");
  std::vector<CategorySpec> out;
  for (std::size_t i = 0; i < n.size(); ++i) {
    const std::string where = "categories[" + std::to_string(i) + "]";
    check_keys(n[i], {"name", "half_extents", "ground_offset"}, where);
    CategorySpec c;
    c.id = static_cast<CategoryId>(i);
    read(n[i], "name", c.name, where);
    if (c.name.empty()) bad(where, "needs a name");
    if (const auto h = n[i]["half_extents"]) {
      if (!h.IsSequence() || h.size() != 3) bad(where, "half_extents needs three numbers");
      c.half_extents = {h[0].as<double>(), h[1].as<double>(), h[2].as<double>()};
    }
    read(n[i], "ground_offset", c.ground_offset, where);
    out.push_back(c);
  }
  return out;
}

Terrain read_terrain(const YAML::Node& n, const std::string& where) {
  check_keys(n, {"kind", "height", "extent", "origin", "spacing", "nx", "ny", "heights", "amplitude", "wavelength",
                 "half_size"},
             where);
  std::string kind = "flat";
  read(n, "kind", kind, where);
  if (kind == "flat") {
    double height = 0.0;
    read(n, "height", height, where);
    Box2 extent{{-500.0, -500.0}, {500.0, 500.0}};
    if (n["extent"]) extent = read_box(n["extent"], where + ".extent");
    return Terrain::flat(height, extent);
  }
  if (kind == "grid") {
    if (!n["origin"] || !n["heights"]) bad(where, "grid terrain needs origin and heights");
    double spacing = 1.0;
    int nx = 0, ny = 0;
    std::vector<double> heights;
    read(n, "spacing", spacing, where);
    read(n, "nx", nx, where);
    read(n, "ny", ny, where);
    read(n, "heights", heights, where);
    return Terrain::grid(read_vec2(n["origin"], where + ".origin"), spacing, nx, ny, std::move(heights));
  }
  if (kind == "hills") {
    double amplitude = 1.5, wavelength = 40.0, half_size = 120.0, spacing = 2.0;
    read(n, "amplitude", amplitude, where);
    read(n, "wavelength", wavelength, where);
    read(n, "half_size", half_size, where);
    read(n, "spacing", spacing, where);
    return hills_terrain(amplitude, wavelength, half_size, spacing);
  }
  bad(where, "terrain kind must be flat, grid or hills");
}

EnvConfig read_env(const YAML::Node& n, const std::vector<CategorySpec>& categories, std::size_t index) {
  std::string where = "environments[" + std::to_string(index) + "]";
  check_keys(n, {"name", "terrain", "placement", "camera", "distractors", "ambiguity_half_width"}, where);
  EnvConfig env;
  env.categories = categories;
  read(n, "name", env.name, where);
  if (env.name.empty()) bad(where, "needs a name");
  where = "environment '" + env.name + "'";
  if (const auto t = n["terrain"]) env.terrain = read_terrain(t, where + ".terrain");
  if (const auto p = n["placement"]) {
    const std::string w = where + ".placement";
    check_keys(p, {"center_region", "sigma", "min_pair_distance", "max_spread"}, w);
    if (p["center_region"]) env.placement_center_region = read_box(p["center_region"], w + ".center_region");
    read(p, "sigma", env.placement_sigma, w);
    read(p, "min_pair_distance", env.min_pair_distance, w);
    read(p, "max_spread", env.max_spread, w);
  }
  if (const auto c = n["camera"]) {
    const std::string w = where + ".camera";
    check_keys(c, {"r_min", "r_max", "height_min", "height_max", "visibility_margin_deg", "focal_mm", "sensor_width_mm",
                   "width_px", "height_px", "grid_rows", "grid_cols"},
               w);
    read(c, "r_min", env.camera_r_min, w);
    read(c, "r_max", env.camera_r_max, w);
    read(c, "height_min", env.camera_height_min, w);
    read(c, "height_max", env.camera_height_max, w);
    read(c, "visibility_margin_deg", env.visibility_margin_deg, w);
    read(c, "focal_mm", env.intrinsics.focal_mm, w);
    read(c, "sensor_width_mm", env.intrinsics.sensor_width_mm, w);
    read(c, "width_px", env.intrinsics.width_px, w);
    read(c, "height_px", env.intrinsics.height_px, w);
    read(c, "grid_rows", env.intrinsics.grid_rows, w);
    read(c, "grid_cols", env.intrinsics.grid_cols, w);
  }
  if (const auto d = n["distractors"]) {
    const std::string w = where + ".distractors";
    check_keys(d, {"count", "categories"}, w);
    read(d, "count", env.distractor_count, w);
    std::vector<std::string> names;
    read(d, "categories", names, w);
    env.distractor_categories.clear();
    for (const auto& name : names) env.distractor_categories.push_back(env.category_id(name));
  }
  read(n, "ambiguity_half_width", env.ambiguity_half_width, where);
  return env;
}

void read_schedule(const YAML::Node& n, const char* key, HeadSchedule& s, const std::string& where) {
  const YAML::Node h = n[key];
  if (!h) return;
  const std::string w = where + "." + key;
  check_keys(h, {"epochs", "warmup_epochs"}, w);
  read(h, "epochs", s.epochs, w);
  read(h, "warmup_epochs", s.warmup_epochs, w);
}

void read_training(const YAML::Node& n, TrainingSettings& t) {
  const std::string where = "training";
  check_keys(n, {"lrs", "dropouts", "weight_decay", "batch_size", "seeds", "abmilp_hidden", "n_queries", "linear",
                 "abmilp", "efficient"},
             where);
  read(n, "lrs", t.grid.lrs, where);
  read(n, "dropouts", t.grid.dropouts, where);
  read(n, "weight_decay", t.weight_decay, where);
  read(n, "batch_size", t.batch_size, where);
  read(n, "seeds", t.seeds, where);
  read(n, "abmilp_hidden", t.abmilp_hidden, where);
  read(n, "n_queries", t.n_queries, where);
  read_schedule(n, "linear", t.linear, where);
  read_schedule(n, "abmilp", t.abmilp, where);
  read_schedule(n, "efficient", t.efficient, where);
}

void read_encoder(const YAML::Node& n, OracleSpec& spec, const BenchConfig& cfg) {
  const std::string where = "encoder";
  check_keys(n, {"dim", "noise_sigma", "depth_scale", "category_onehot", "token_xy", "depth", "noise",
                 "erased_categories"},
             where);
  read(n, "dim", spec.dim, where);
  read(n, "noise_sigma", spec.noise_sigma, where);
  read(n, "depth_scale", spec.depth_scale, where);
  read(n, "category_onehot", spec.category_onehot, where);
  read(n, "token_xy", spec.token_xy, where);
  read(n, "depth", spec.depth, where);
  read(n, "noise", spec.noise, where);
  std::vector<std::string> erased;
  read(n, "erased_categories", erased, where);
  for (const auto& name : erased) spec.erased_categories.push_back(cfg.category_id(name));
}

}  // namespace

Terrain hills_terrain(double amplitude, double wavelength, double half_size, double spacing) {
  if (!(wavelength > 0.0) || !(half_size > 0.0) || !(spacing > 0.0)) {
    throw Error(ErrorCode::InvalidParameter, "hills need positive wavelength, half_size and spacing");
  }
  const int n = static_cast<int>(std::floor(2.0 * half_size / spacing)) + 1;
  const double k = 2.0 * kPi / wavelength;
  std::vector<double> heights(static_cast<std::size_t>(n) * n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const double x = -half_size + i * spacing;
      const double y = -half_size + j * spacing;
      heights[static_cast<std::size_t>(j * n + i)] = amplitude * std::sin(k * x) * std::cos(0.7 * k * y);
    }
  }
  return Terrain::grid({-half_size, -half_size}, spacing, n, n, std::move(heights));
}

BenchConfig default_config() {
  BenchConfig cfg;
  cfg.categories = default_categories();
  EnvConfig flat = reference_flat_env();
  EnvConfig hills = reference_flat_env();
  hills.name = "hills";
  hills.terrain = hills_terrain(1.5, 40.0, 120.0, 2.0);
  cfg.environments = {flat, hills};
  const CategoryId human = cfg.category_id("human");
  cfg.triples = {
      {cfg.category_id("tree"), cfg.category_id("car"), human},
      {cfg.category_id("car"), cfg.category_id("rock"), human},
      {cfg.category_id("barrel"), cfg.category_id("tree"), human},
  };
  cfg.encoder.n_categories = static_cast<int>(cfg.categories.size());
  return cfg;
}

const EnvConfig& BenchConfig::find_env(std::string_view name) const {
  for (const auto& e : environments) {
    if (e.name == name) return e;
  }
  std::string known;
  for (const auto& n : env_names()) known += (known.empty() ? "" : ", ") + n;
  throw Error(ErrorCode::InvalidParameter, "unknown environment '" + std::string(name) + "' (known: " + known + ")");
}

bool BenchConfig::has_env(std::string_view name) const {
  return std::any_of(environments.begin(), environments.end(), [&](const EnvConfig& e) { return e.name == name; });
}

std::vector<std::string> BenchConfig::env_names() const {
  std::vector<std::string> out;
  for (const auto& e : environments) out.push_back(e.name);
  return out;
}

CategoryId BenchConfig::category_id(std::string_view name) const {
  for (const auto& c : categories) {
    if (c.name == name) return c.id;
  }
  throw Error(ErrorCode::InvalidParameter, "unknown category '" + std::string(name) + "'");
}

TripleSpec BenchConfig::parse_triple(std::string_view text) const {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(',', start);
    parts.emplace_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  if (parts.size() != 3) {
    throw Error(ErrorCode::InvalidParameter, "triple '" + std::string(text) + "' must be source,target,viewpoint");
  }
  const TripleSpec t{category_id(parts[0]), category_id(parts[1]), category_id(parts[2])};
  if (t.source == t.target || t.source == t.viewpoint || t.target == t.viewpoint) {
    throw Error(ErrorCode::InvalidParameter, "triple '" + std::string(text) + "' needs three distinct categories");
  }
  return t;
}

void BenchConfig::validate() const {
  if (environments.empty()) throw Error(ErrorCode::InvalidParameter, "config defines no environment");
  for (std::size_t i = 0; i < environments.size(); ++i) {
    environments[i].validate();
    for (std::size_t j = 0; j < i; ++j) {
      if (environments[j].name == environments[i].name) {
        throw Error(ErrorCode::InvalidParameter, "environment '" + environments[i].name + "' is defined twice");
      }
    }
  }
  for (const auto& t : triples) {
    for (CategoryId c : {t.source, t.target, t.viewpoint}) {
      if (c == kBackground || c >= categories.size()) {
        throw Error(ErrorCode::InvalidParameter, "triple names an invalid category id " + std::to_string(c));
      }
    }
    if (t.source == t.target || t.source == t.viewpoint || t.target == t.viewpoint) {
      throw Error(ErrorCode::InvalidParameter, "triple needs three distinct categories");
    }
  }
  if (!(split.train > 0.0 && split.val > 0.0 && split.test > 0.0) ||
      std::abs(split.train + split.val + split.test - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidParameter, "split fractions must be positive and sum to 1");
  }
  if (training.grid.lrs.empty() || training.grid.dropouts.empty() || training.seeds.empty()) {
    throw Error(ErrorCode::InvalidParameter, "training needs at least one lr, dropout and seed");
  }
  for (HeadKind k : {HeadKind::LinearGap, HeadKind::Abmilp, HeadKind::Efficient}) {
    training.make(k, encoder.dim, 0).validate();
  }
  encoder.validate();
  if (encoder.n_categories != static_cast<int>(categories.size())) {
    throw Error(ErrorCode::InvalidParameter, "encoder category count differs from the category table");
  }
}

BenchConfig parse_config(std::string_view text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::InvalidParameter, std::string("config is not valid YAML: ") + e.what());
  }
  BenchConfig cfg = default_config();
  if (!root || root.IsNull()) return cfg;
  check_keys(root, {"version", "seed", "categories", "environments", "triples", "split", "training", "encoder"}, "root");
  int version = -1;
  read(root, "version", version, "root");
  if (version != kConfigVersion) {
    throw Error(ErrorCode::SchemaMismatch, "config version " + std::to_string(version) + " is not supported (expected " +
                                               std::to_string(kConfigVersion) + ")");
  }
  try {
    read(root, "seed", cfg.seed, "root");
    if (const auto c = root["categories"]) {
      cfg.categories = read_categories(c);
      for (auto& env : cfg.environments) env.categories = cfg.categories;
      cfg.encoder.n_categories = static_cast<int>(cfg.categories.size());
      cfg.triples.clear();
    }
    if (const auto e = root["environments"]) {
      if (!e.IsSequence()) bad("environments", "expected a list");
      cfg.environments.clear();
      for (std::size_t i = 0; i < e.size(); ++i) cfg.environments.push_back(read_env(e[i], cfg.categories, i));
    }
    if (const auto t = root["triples"]) {
      if (!t.IsSequence()) bad("triples", "expected a list");
      cfg.triples.clear();
      for (std::size_t i = 0; i < t.size(); ++i) {
        const std::string where = "triples[" + std::to_string(i) + "]";
        check_keys(t[i], {"source", "target", "viewpoint"}, where);
        std::string s, g, v;
        read(t[i], "source", s, where);
        read(t[i], "target", g, where);
        read(t[i], "viewpoint", v, where);
        cfg.triples.push_back({cfg.category_id(s), cfg.category_id(g), cfg.category_id(v)});
      }
    }
    if (const auto s = root["split"]) {
      check_keys(s, {"train", "val", "test"}, "split");
      read(s, "train", cfg.split.train, "split");
      read(s, "val", cfg.split.val, "split");
      read(s, "test", cfg.split.test, "split");
    }
    if (const auto t = root["training"]) read_training(t, cfg.training);
    if (const auto e = root["encoder"]) read_encoder(e, cfg.encoder, cfg);
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::InvalidParameter, std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

BenchConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::Io, "config file " + path.string() + " not found");
  return parse_config(read_file_bytes(path));
}

}  // namespace spatial
