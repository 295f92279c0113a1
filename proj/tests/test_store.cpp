#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "spatial/error.hpp"
#include "spatial/store.hpp"
#include "support.hpp"

using namespace spatial;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Io;
}

std::string replace_first(std::string s, const std::string& from, const std::string& to) {
  const auto pos = s.find(from);
  REQUIRE(pos != std::string::npos);
  return s.replace(pos, from.size(), to);
}

// Re-seals a manifest body after an edit, so only the edited field is wrong.
std::string reseal(std::string text) {
  const auto pos = text.rfind("#checksum\t");
  REQUIRE(pos != std::string::npos);
  text.resize(pos);
  return text + "#checksum\tsha256=" + sha256_hex(text) + "\n";
}

}  // namespace

TEST_CASE("hash vectors") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  // `printf 'hello\n' | git hash-object --stdin`
  CHECK(git_blob_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(git_blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST_CASE("format_double round-trips") {
  for (double v : {0.0, 1.0, -2.5, 0.1, 1e-300, 123456789.123456789, 1.0 / 3.0, -0.0}) {
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK(format_double(0.5) == "0.5");
  CHECK(code_of([] { parse_double("1.5x"); }) == ErrorCode::CorruptFile);
  CHECK(code_of([] { parse_double(""); }) == ErrorCode::CorruptFile);
}

TEST_CASE("manifest round-trip") {
  Manifest m = test::manifest_of(test::small_dataset(40));
  m.records = split_dataset(m.records, {}, 4);
  m.records[0].features_ref = "features/{layer}/a.sprt";
  m.records[1].attention_ref = "attn/b.spat";
  m.records[2].catmap_ref = "maps/c.spcm";
  const std::string text = serialize_manifest(m);
  const Manifest back = parse_manifest(text);
  CHECK(back == m);
  CHECK(serialize_manifest(back) == text);
  CHECK(verify_manifest_labels(back).empty());

  test::TempDir dir("manifest");
  write_manifest(dir / "m.tsv", m);
  CHECK(read_manifest(dir / "m.tsv") == m);
  CHECK(read_file_bytes(dir / "m.tsv") == text);
}

TEST_CASE("manifest corruption is detected") {
  const Manifest m = test::manifest_of(test::small_dataset(10));
  const std::string text = serialize_manifest(m);

  SUBCASE("truncation") {
    CHECK(code_of([&] { parse_manifest(text.substr(0, text.size() / 2)); }) == ErrorCode::CorruptFile);
    CHECK(code_of([&] { parse_manifest(text.substr(0, text.size() - 3)); }) == ErrorCode::CorruptFile);
  }
  SUBCASE("tampered body") {
    std::string bad = text;
    bad[bad.find("flat-")] = 'F';
    CHECK(code_of([&] { parse_manifest(bad); }) == ErrorCode::CorruptFile);
  }
  SUBCASE("bumped version") {
    const std::string bumped = reseal(replace_first(text, "version=1", "version=2"));
    CHECK(code_of([&] { parse_manifest(bumped); }) == ErrorCode::SchemaMismatch);
  }
  SUBCASE("different columns") {
    const std::string renamed = reseal(replace_first(text, "\tcatmap", "\tcategory_map"));
    CHECK(code_of([&] { parse_manifest(renamed); }) == ErrorCode::SchemaMismatch);
  }
  SUBCASE("not a manifest") {
    CHECK(code_of([&] { parse_manifest("hello\n"); }) == ErrorCode::CorruptFile);
    CHECK(code_of([&] { parse_manifest(""); }) == ErrorCode::CorruptFile);
  }
  SUBCASE("stored label disagrees with geometry") {
    Manifest edited = m;
    edited.records[3].label_ego = edited.records[3].label_ego == SpatialLabel::Front ? SpatialLabel::Back
                                                                                      : SpatialLabel::Front;
    const auto bad = verify_manifest_labels(parse_manifest(serialize_manifest(edited)));
    REQUIRE(bad.size() == 1);
    CHECK(bad[0] == m.records[3].sample_id);
  }
}

TEST_CASE("split sizes and determinism") {
  auto records = test::small_dataset(101);
  const auto a = split_dataset(records, {0.8, 0.1, 0.1}, 9);
  const auto b = split_dataset(records, {0.8, 0.1, 0.1}, 9);
  const auto c = split_dataset(records, {0.8, 0.1, 0.1}, 10);
  CHECK(a == b);
  CHECK(a != c);
  std::array<int, 4> counts{};
  for (const auto& r : a) ++counts[static_cast<int>(r.split)];
  CHECK(counts[0] == 0);
  CHECK(counts[2] == 10);
  CHECK(counts[3] == 10);
  CHECK(counts[1] == 81);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].sample_id == records[i].sample_id);
  CHECK_THROWS_AS(split_dataset(records, {0.5, 0.1, 0.1}, 1), Error);
}

TEST_CASE("split_by_group balances every group") {
  auto first = test::small_dataset(50, 1);
  auto second = test::small_dataset(30, 2);
  for (auto& r : second) {
    r.environment = "other";
    r.sample_id = make_sample_id("other", r.scene_index);
  }
  first.insert(first.end(), second.begin(), second.end());
  const auto out = split_by_group(first, {0.8, 0.1, 0.1}, 3);
  int other_test = 0, flat_test = 0;
  for (const auto& r : out) {
    CHECK(r.split != Split::Unassigned);
    if (r.split == Split::Test) (r.environment == "other" ? other_test : flat_test)++;
  }
  CHECK(flat_test == 5);
  CHECK(other_test == 3);
  CHECK(split_by_group(first, {0.8, 0.1, 0.1}, 3) == out);
}

TEST_CASE("SPRT features") {
  std::mt19937_64 gen(3);
  std::normal_distribution<float> n;
  FeatureTensor t{5, 3, 11, {}};
  for (int i = 0; i < 15; ++i) t.values.push_back(n(gen));
  const std::string bytes = encode_features(t);
  CHECK(bytes.substr(0, 4) == "SPRT");
  CHECK(bytes.size() == 20 + 4 * 15);
  CHECK(decode_features(bytes) == t);
  CHECK(decode_features(bytes, FeatureShape{5, 3}) == t);
  CHECK(code_of([&] { decode_features(bytes, FeatureShape{5, 4}); }) == ErrorCode::ShapeMismatch);
  CHECK(code_of([&] { decode_features(bytes.substr(0, bytes.size() - 1)); }) == ErrorCode::CorruptFile);
  CHECK(code_of([&] { decode_features(bytes + "x"); }) == ErrorCode::CorruptFile);
  CHECK(code_of([&] { decode_features("SPRX" + bytes.substr(4)); }) == ErrorCode::CorruptFile);
  std::string bumped = bytes;
  bumped[4] = 2;
  CHECK(code_of([&] { decode_features(bumped); }) == ErrorCode::SchemaMismatch);

  FeatureTensor bad = t;
  bad.values[4] = std::numeric_limits<float>::quiet_NaN();
  CHECK(code_of([&] { encode_features(bad); }) == ErrorCode::InvalidParameter);
  bad.values.pop_back();
  CHECK(code_of([&] { encode_features(bad); }) == ErrorCode::ShapeMismatch);

  test::TempDir dir("sprt");
  write_features(dir / "f.sprt", t);
  CHECK(read_features(dir / "f.sprt") == t);
  CHECK(code_of([&] { read_features(dir / "missing.sprt"); }) == ErrorCode::Io);
}

TEST_CASE("SPRT little-endian layout") {
  FeatureTensor t{1, 1, 2, {1.0f}};
  const std::string b = encode_features(t);
  const std::string expected_header = std::string("SPRT") + std::string("\x01\x00\x00\x00", 4) +
                                      std::string("\x01\x00\x00\x00", 4) + std::string("\x01\x00\x00\x00", 4) +
                                      std::string("\x02\x00\x00\x00", 4);
  CHECK(b.substr(0, 20) == expected_header);
  CHECK(b.substr(20) == std::string("\x00\x00\x80\x3f", 4));
}

TEST_CASE("SPAT attention") {
  std::mt19937_64 gen(5);
  const AttentionTensor a = test::random_attention(3, 2, 6, gen);
  CHECK_NOTHROW(validate_attention(a));
  const std::string bytes = encode_attention(a);
  CHECK(bytes.substr(0, 4) == "SPAT");
  CHECK(decode_attention(bytes) == a);
  CHECK(code_of([&] { decode_attention(bytes.substr(0, 30)); }) == ErrorCode::CorruptFile);

  AttentionTensor skewed = a;
  skewed.values[0] += 0.01f;
  CHECK(code_of([&] { validate_attention(skewed); }) == ErrorCode::ShapeMismatch);
  AttentionTensor negative = a;
  negative.values[0] = -negative.values[0];
  negative.values[1] += 2 * a.values[0];
  CHECK(code_of([&] { validate_attention(negative); }) == ErrorCode::ShapeMismatch);

  test::TempDir dir("spat");
  write_attention(dir / "a.spat", a);
  CHECK(read_attention(dir / "a.spat") == a);
}

TEST_CASE("SPCM category maps") {
  TokenCategoryMap m{2, 3, {0, 1, 1, 2, 0, 7}, {kClsToken, kRegisterToken, kRegisterToken}};
  const std::string bytes = encode_category_map(m);
  CHECK(bytes.substr(0, 4) == "SPCM");
  CHECK(decode_category_map(bytes) == m);
  CHECK(m.flattened().size() == 9);
  CHECK(m.flattened()[6] == kClsToken);
  CHECK(code_of([&] { decode_category_map(bytes.substr(0, bytes.size() - 2)); }) == ErrorCode::CorruptFile);
  test::TempDir dir("spcm");
  write_category_map(dir / "c.spcm", m);
  CHECK(read_category_map(dir / "c.spcm") == m);
}

TEST_CASE("atomic writes leave no temporaries") {
  test::TempDir dir("atomic");
  write_file_bytes(dir / "x.bin", "one");
  write_file_bytes(dir / "x.bin", "two");
  CHECK(read_file_bytes(dir / "x.bin") == "two");
  int files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path())) ++files;
  CHECK(files == 1);
}

TEST_CASE("split text forms") {
  for (auto s : {Split::Unassigned, Split::Train, Split::Val, Split::Test}) CHECK(parse_split(to_string(s)) == s);
  CHECK_THROWS_AS(parse_split("holdout"), Error);
}
