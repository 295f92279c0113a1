#include "spatial/store.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "spatial/error.hpp"
#include "spatial/rng.hpp"

namespace spatial {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kManifestMagic = "#spatialbench-manifest";
constexpr char kFeatureMagic[4] = {'S', 'P', 'R', 'T'};
constexpr char kAttentionMagic[4] = {'S', 'P', 'A', 'T'};
constexpr char kCategoryMagic[4] = {'S', 'P', 'C', 'M'};

constexpr std::string_view kColumns[] = {
    "sample_id", "environment", "scene_index", "global_seed", "source",   "target",    "viewpoint",
    "split",     "theta_ego",   "theta_allo",  "label_ego",   "label_allo", "camera",  "objects",
    "features",  "attention",   "catmap"};

[[noreturn]] void corrupt(const std::string& why) { throw Error(ErrorCode::CorruptFile, why); }

std::uint64_t parse_u64(std::string_view s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) corrupt("bad integer '" + std::string(s) + "'");
  return v;
}

std::vector<std::string_view> split_view(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string join_doubles(std::initializer_list<double> values) {
  std::string out;
  for (double v : values) {
    if (!out.empty()) out += ',';
    out += format_double(v);
  }
  return out;
}

std::vector<double> parse_doubles(std::string_view s, std::size_t expected) {
  std::vector<double> out;
  for (auto part : split_view(s, ',')) out.push_back(parse_double(part));
  if (out.size() != expected) corrupt("expected " + std::to_string(expected) + " numbers in '" + std::string(s) + "'");
  return out;
}

std::string ref_or_dash(const std::string& ref) { return ref.empty() ? "-" : ref; }
std::string dash_to_empty(std::string_view s) { return s == "-" ? std::string() : std::string(s); }

std::string digest_hex(const EVP_MD* md, std::string_view bytes) {
  unsigned char out[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out, &len, md, nullptr) != 1) {
    throw Error(ErrorCode::Io, "digest computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned i = 0; i < len; ++i) {
    hex += kHex[out[i] >> 4];
    hex += kHex[out[i] & 15];
  }
  return hex;
}

// Little-endian primitives.
void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xFF);
}
void put_u16(std::string& out, std::uint16_t v) {
  out += static_cast<char>(v & 0xFF);
  out += static_cast<char>(v >> 8);
}
void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) corrupt("file truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint16_t u16() {
    need(2);
    const auto lo = static_cast<unsigned char>(bytes_[pos_]);
    const auto hi = static_cast<unsigned char>(bytes_[pos_ + 1]);
    pos_ += 2;
    return static_cast<std::uint16_t>(lo | (hi << 8));
  }
  float f32() { return std::bit_cast<float>(u32()); }
  void magic(const char (&expected)[4]) {
    need(4);
    if (std::memcmp(bytes_.data() + pos_, expected, 4) != 0) {
      corrupt("bad magic, expected '" + std::string(expected, 4) + "'");
    }
    pos_ += 4;
  }
  void finish() const {
    if (pos_ != bytes_.size()) corrupt("trailing bytes after payload");
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::string serialize_record(const Manifest& m, const SampleRecord& r) {
  std::string line;
  auto field = [&](const std::string& s) {
    if (!line.empty()) line += '\t';
    line += s;
  };
  const Pose6DoF& cam = r.layout.camera;
  field(r.sample_id);
  field(r.environment);
  field(std::to_string(r.scene_index));
  field(std::to_string(r.global_seed));
  field(m.category_name(r.triple.source));
  field(m.category_name(r.triple.target));
  field(m.category_name(r.triple.viewpoint));
  field(std::string(to_string(r.split)));
  field(format_double(r.theta_ego));
  field(format_double(r.theta_allo));
  field(std::string(to_string(r.label_ego)));
  field(std::string(to_string(r.label_allo)));
  field(join_doubles({cam.position.x, cam.position.y, cam.position.z, cam.yaw, cam.pitch, cam.roll}));
  std::string objects;
  for (const SceneObject& o : r.layout.objects) {
    if (!objects.empty()) objects += ';';
    objects += std::to_string(o.category) + '|' + std::string(to_string(o.role)) + '|' +
               join_doubles({o.pose.position.x, o.pose.position.y, o.pose.position.z, o.pose.yaw, o.pose.pitch,
                             o.pose.roll}) +
               '|' + join_doubles({o.box.min.x, o.box.min.y, o.box.min.z, o.box.max.x, o.box.max.y, o.box.max.z});
  }
  field(objects.empty() ? "-" : objects);
  field(ref_or_dash(r.features_ref));
  field(ref_or_dash(r.attention_ref));
  field(ref_or_dash(r.catmap_ref));
  return line;
}

Pose6DoF parse_pose(std::string_view s) {
  const auto v = parse_doubles(s, 6);
  return {{v[0], v[1], v[2]}, v[3], v[4], v[5]};
}

SampleRecord parse_record(const Manifest& m, std::string_view line) {
  const auto f = split_view(line, '\t');
  if (f.size() != std::size(kColumns)) corrupt("record has " + std::to_string(f.size()) + " fields");
  SampleRecord r;
  try {
    r.sample_id = std::string(f[0]);
    r.environment = std::string(f[1]);
    r.scene_index = parse_u64(f[2]);
    r.global_seed = parse_u64(f[3]);
    r.triple = {m.category_id(f[4]), m.category_id(f[5]), m.category_id(f[6])};
    r.split = parse_split(f[7]);
    r.theta_ego = parse_double(f[8]);
    r.theta_allo = parse_double(f[9]);
    r.label_ego = parse_label(f[10]);
    r.label_allo = parse_label(f[11]);
    r.layout.camera = parse_pose(f[12]);
    if (f[13] != "-") {
      for (auto obj : split_view(f[13], ';')) {
        const auto parts = split_view(obj, '|');
        if (parts.size() != 4) corrupt("bad object entry '" + std::string(obj) + "'");
        SceneObject o;
        const auto id = parse_u64(parts[0]);
        if (id >= m.categories.size()) corrupt("object category out of range");
        o.category = static_cast<CategoryId>(id);
        o.role = parse_role(parts[1]);
        o.pose = parse_pose(parts[2]);
        const auto b = parse_doubles(parts[3], 6);
        o.box = {{b[0], b[1], b[2]}, {b[3], b[4], b[5]}};
        r.layout.objects.push_back(o);
      }
    }
    r.features_ref = dash_to_empty(f[14]);
    r.attention_ref = dash_to_empty(f[15]);
    r.catmap_ref = dash_to_empty(f[16]);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::CorruptFile) throw;
    corrupt(std::string("record '") + std::string(f[0]) + "': " + e.what());
  }
  r.layout.environment = r.environment;
  r.layout.scene_index = r.scene_index;
  return r;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) corrupt("bad number '" + std::string(s) + "'");
  return v;
}

std::string_view to_string(Split split) noexcept {
  switch (split) {
    case Split::Unassigned: return "-";
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view text) {
  if (text == "-") return Split::Unassigned;
  if (text == "train") return Split::Train;
  if (text == "val") return Split::Val;
  if (text == "test") return Split::Test;
  throw Error(ErrorCode::InvalidParameter, "unknown split '" + std::string(text) + "'");
}

std::string Manifest::category_name(CategoryId id) const {
  if (id >= categories.size()) throw Error(ErrorCode::InvalidParameter, "unknown category id " + std::to_string(id));
  return categories[id].name;
}

CategoryId Manifest::category_id(std::string_view name) const {
  for (const auto& c : categories) {
    if (c.name == name) return c.id;
  }
  throw Error(ErrorCode::InvalidParameter, "unknown category '" + std::string(name) + "'");
}

std::string serialize_manifest(const Manifest& m) {
  std::string out;
  out += std::string(kManifestMagic) + "\tversion=" + std::to_string(kManifestVersion) + "\n";
  out += "#grid\trows=" + std::to_string(m.grid_rows) + "\tcols=" + std::to_string(m.grid_cols) +
         "\tambiguity=" + format_double(m.ambiguity_half_width) + "\n";
  for (const auto& c : m.categories) {
    out += "#category\t" + std::to_string(c.id) + "\t" + c.name + "\t" + format_double(c.half_extents.x) + "\t" +
           format_double(c.half_extents.y) + "\t" + format_double(c.half_extents.z) + "\t" +
           format_double(c.ground_offset) + "\n";
  }
  out += "#columns";
  for (auto col : kColumns) out += "\t" + std::string(col);
  out += "\n";
  for (const auto& r : m.records) out += serialize_record(m, r) + "\n";
  out += "#checksum\tsha256=" + sha256_hex(out) + "\n";
  return out;
}

Manifest parse_manifest(std::string_view text) {
  const std::size_t first_nl = text.find('\n');
  if (first_nl == std::string_view::npos) corrupt("manifest has no header line");
  const auto header = split_view(text.substr(0, first_nl), '\t');
  if (header.size() != 2 || header[0] != kManifestMagic || !header[1].starts_with("version=")) {
    corrupt("not a spatialbench manifest");
  }
  const auto version = parse_u64(header[1].substr(8));
  if (version != kManifestVersion) {
    throw Error(ErrorCode::SchemaMismatch, "manifest version " + std::to_string(version) + " is not supported (expected " +
                                               std::to_string(kManifestVersion) + ")");
  }

  if (!text.ends_with('\n')) corrupt("manifest truncated");
  const std::size_t last_start = text.rfind('\n', text.size() - 2);
  if (last_start == std::string_view::npos) corrupt("manifest truncated");
  const std::string_view body = text.substr(0, last_start + 1);
  const std::string_view trailer = text.substr(last_start + 1, text.size() - last_start - 2);
  if (!trailer.starts_with("#checksum\tsha256=")) corrupt("manifest truncated (no checksum line)");
  if (trailer.substr(17) != sha256_hex(body)) corrupt("manifest checksum mismatch");

  Manifest m;
  m.categories.clear();
  bool have_grid = false;
  bool have_columns = false;
  std::size_t pos = first_nl + 1;
  while (pos < body.size()) {
    const std::size_t nl = body.find('\n', pos);
    const std::string_view line = body.substr(pos, nl - pos);
    pos = nl + 1;
    const auto f = split_view(line, '\t');
    if (f[0] == "#grid") {
      if (f.size() != 4) corrupt("bad #grid line");
      m.grid_rows = static_cast<int>(parse_u64(f[1].substr(5)));
      m.grid_cols = static_cast<int>(parse_u64(f[2].substr(5)));
      m.ambiguity_half_width = parse_double(f[3].substr(10));
      have_grid = true;
    } else if (f[0] == "#category") {
      if (f.size() != 7) corrupt("bad #category line");
      CategorySpec c;
      c.id = static_cast<CategoryId>(parse_u64(f[1]));
      c.name = std::string(f[2]);
      c.half_extents = {parse_double(f[3]), parse_double(f[4]), parse_double(f[5])};
      c.ground_offset = parse_double(f[6]);
      if (c.id != m.categories.size()) corrupt("category ids must be dense");
      m.categories.push_back(c);
    } else if (f[0] == "#columns") {
      if (f.size() != std::size(kColumns) + 1) {
        throw Error(ErrorCode::SchemaMismatch, "manifest column set differs from version " + std::to_string(kManifestVersion));
      }
      for (std::size_t i = 0; i < std::size(kColumns); ++i) {
        if (f[i + 1] != kColumns[i]) throw Error(ErrorCode::SchemaMismatch, "unexpected column '" + std::string(f[i + 1]) + "'");
      }
      have_columns = true;
    } else if (line.starts_with("#")) {
      corrupt("unknown directive '" + std::string(f[0]) + "'");
    } else {
      if (!have_columns) corrupt("record before #columns");
      m.records.push_back(parse_record(m, line));
    }
  }
  if (!have_grid || !have_columns) corrupt("manifest header incomplete");
  return m;
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
  write_file_bytes(path, serialize_manifest(manifest));
}

Manifest read_manifest(const fs::path& path) { return parse_manifest(read_file_bytes(path)); }

std::vector<std::string> verify_manifest_labels(const Manifest& manifest) {
  std::vector<std::string> bad;
  for (const auto& r : manifest.records) {
    try {
      const auto ego = label_sample(r.layout, TaskVariant::Ego, manifest.ambiguity_half_width);
      const auto allo = label_sample(r.layout, TaskVariant::Allo, manifest.ambiguity_half_width);
      if (!ego || !allo || *ego != r.label_ego || *allo != r.label_allo) bad.push_back(r.sample_id);
    } catch (const Error&) {
      bad.push_back(r.sample_id);
    }
  }
  return bad;
}

std::vector<SampleRecord> split_dataset(std::vector<SampleRecord> records, SplitFractions fr, std::uint64_t seed) {
  const bool valid = fr.train >= 0.0 && fr.val >= 0.0 && fr.test >= 0.0 &&
                     std::abs(fr.train + fr.val + fr.test - 1.0) < 1e-9;
  if (!valid) throw Error(ErrorCode::InvalidParameter, "split fractions must be non-negative and sum to 1");
  const std::size_t n = records.size();
  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * fr.val + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * fr.test + 1e-9));
  const std::size_t n_train = n - n_val - n_test;

  CounterRng rng(CounterRng::derive_key(seed, 0x5e1173ull), 0);
  const auto order = shuffled_indices(n, rng);
  for (std::size_t k = 0; k < n; ++k) {
    records[order[k]].split = k < n_train ? Split::Train : (k < n_train + n_val ? Split::Val : Split::Test);
  }
  return records;
}

std::vector<SampleRecord> split_by_group(std::vector<SampleRecord> records, SplitFractions fr, std::uint64_t seed) {
  std::vector<std::pair<std::string, TripleSpec>> keys;
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::pair<std::string, TripleSpec> key{records[i].environment, records[i].triple};
    auto it = std::find(keys.begin(), keys.end(), key);
    if (it == keys.end()) {
      keys.push_back(key);
      members.emplace_back();
      it = keys.end() - 1;
    }
    members[static_cast<std::size_t>(it - keys.begin())].push_back(i);
  }
  for (std::size_t g = 0; g < keys.size(); ++g) {
    std::vector<SampleRecord> group;
    for (std::size_t i : members[g]) group.push_back(records[i]);
    group = split_dataset(std::move(group), fr, CounterRng::derive_key(seed, g));
    for (std::size_t k = 0; k < members[g].size(); ++k) records[members[g][k]].split = group[k].split;
  }
  return records;
}

std::string encode_features(const FeatureTensor& t) {
  if (t.values.size() != static_cast<std::size_t>(t.n_tokens) * t.dim) {
    throw Error(ErrorCode::ShapeMismatch, "feature payload does not match n_tokens x dim");
  }
  std::string out(kFeatureMagic, 4);
  put_u32(out, kTensorVersion);
  put_u32(out, t.n_tokens);
  put_u32(out, t.dim);
  put_u32(out, t.layer_id);
  out.reserve(out.size() + 4 * t.values.size());
  for (float v : t.values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidParameter, "feature values must be finite");
    put_f32(out, v);
  }
  return out;
}

FeatureTensor decode_features(std::string_view bytes, std::optional<FeatureShape> expected) {
  Reader in(bytes);
  in.magic(kFeatureMagic);
  const auto version = in.u32();
  if (version != kTensorVersion) throw Error(ErrorCode::SchemaMismatch, "feature file version " + std::to_string(version));
  FeatureTensor t;
  t.n_tokens = in.u32();
  t.dim = in.u32();
  t.layer_id = in.u32();
  const std::size_t count = static_cast<std::size_t>(t.n_tokens) * t.dim;
  in.need(4 * count);
  t.values.resize(count);
  for (auto& v : t.values) {
    v = in.f32();
    if (!std::isfinite(v)) corrupt("non-finite feature value");
  }
  in.finish();
  if (expected && (expected->n_tokens != t.n_tokens || expected->dim != t.dim)) {
    throw Error(ErrorCode::ShapeMismatch, "feature tensor is " + std::to_string(t.n_tokens) + "x" + std::to_string(t.dim) +
                                              ", expected " + std::to_string(expected->n_tokens) + "x" +
                                              std::to_string(expected->dim));
  }
  return t;
}

void write_features(const fs::path& path, const FeatureTensor& tensor) { write_file_bytes(path, encode_features(tensor)); }

FeatureTensor read_features(const fs::path& path, std::optional<FeatureShape> expected) {
  return decode_features(read_file_bytes(path), expected);
}

void validate_attention(const AttentionTensor& t) {
  const std::size_t n = t.n_tokens;
  for (std::size_t l = 0; l < t.n_layers; ++l) {
    for (std::size_t h = 0; h < t.n_heads; ++h) {
      const float* block = t.values.data() + t.offset(l, h);
      for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const float v = block[i * n + j];
          if (!(v >= 0.0f)) {
            throw Error(ErrorCode::ShapeMismatch, "negative or non-finite attention at layer " + std::to_string(l));
          }
          sum += v;
        }
        if (std::abs(sum - 1.0) > kAttentionRowTolerance) {
          throw Error(ErrorCode::ShapeMismatch, "attention row " + std::to_string(i) + " (layer " + std::to_string(l) +
                                                    ", head " + std::to_string(h) + ") sums to " + std::to_string(sum));
        }
      }
    }
  }
}

std::string encode_attention(const AttentionTensor& t) {
  const std::size_t count = static_cast<std::size_t>(t.n_layers) * t.n_heads * t.n_tokens * t.n_tokens;
  if (t.values.size() != count) throw Error(ErrorCode::ShapeMismatch, "attention payload does not match its header");
  validate_attention(t);
  std::string out(kAttentionMagic, 4);
  put_u32(out, kTensorVersion);
  put_u32(out, t.n_layers);
  put_u32(out, t.n_heads);
  put_u32(out, t.n_tokens);
  out.reserve(out.size() + 4 * count);
  for (float v : t.values) put_f32(out, v);
  return out;
}

AttentionTensor decode_attention(std::string_view bytes) {
  Reader in(bytes);
  in.magic(kAttentionMagic);
  const auto version = in.u32();
  if (version != kTensorVersion) throw Error(ErrorCode::SchemaMismatch, "attention file version " + std::to_string(version));
  AttentionTensor t;
  t.n_layers = in.u32();
  t.n_heads = in.u32();
  t.n_tokens = in.u32();
  const std::size_t count = static_cast<std::size_t>(t.n_layers) * t.n_heads * t.n_tokens * t.n_tokens;
  in.need(4 * count);
  t.values.resize(count);
  for (auto& v : t.values) v = in.f32();
  in.finish();
  validate_attention(t);
  return t;
}

void write_attention(const fs::path& path, const AttentionTensor& tensor) { write_file_bytes(path, encode_attention(tensor)); }

AttentionTensor read_attention(const fs::path& path) { return decode_attention(read_file_bytes(path)); }

std::string encode_category_map(const TokenCategoryMap& map) {
  if (map.rows <= 0 || map.cols <= 0 || map.cells.size() != static_cast<std::size_t>(map.rows * map.cols)) {
    throw Error(ErrorCode::ShapeMismatch, "category map cells do not match rows x cols");
  }
  std::string out(kCategoryMagic, 4);
  put_u32(out, kCategoryMapVersion);
  put_u32(out, static_cast<std::uint32_t>(map.rows));
  put_u32(out, static_cast<std::uint32_t>(map.cols));
  put_u32(out, static_cast<std::uint32_t>(map.special.size()));
  for (CategoryId id : map.cells) put_u16(out, id);
  for (CategoryId id : map.special) put_u16(out, id);
  return out;
}

TokenCategoryMap decode_category_map(std::string_view bytes) {
  Reader in(bytes);
  in.magic(kCategoryMagic);
  const auto version = in.u32();
  if (version != kCategoryMapVersion) throw Error(ErrorCode::SchemaMismatch, "category map version " + std::to_string(version));
  TokenCategoryMap map;
  map.rows = static_cast<int>(in.u32());
  map.cols = static_cast<int>(in.u32());
  const auto n_special = in.u32();
  const std::size_t cells = static_cast<std::size_t>(map.rows) * static_cast<std::size_t>(map.cols);
  in.need(2 * (cells + n_special));
  map.cells.resize(cells);
  for (auto& id : map.cells) id = in.u16();
  map.special.resize(n_special);
  for (auto& id : map.special) id = in.u16();
  in.finish();
  return map;
}

void write_category_map(const fs::path& path, const TokenCategoryMap& map) { write_file_bytes(path, encode_category_map(map)); }

TokenCategoryMap read_category_map(const fs::path& path) { return decode_category_map(read_file_bytes(path)); }

std::string read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file_bytes(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "short write to '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

std::string sha256_hex(std::string_view bytes) { return digest_hex(EVP_sha256(), bytes); }

std::string git_blob_hash(std::string_view bytes) {
  std::string blob = "blob " + std::to_string(bytes.size());
  blob += '\0';
  blob.append(bytes);
  return digest_hex(EVP_sha1(), blob);
}

}  // namespace spatial
