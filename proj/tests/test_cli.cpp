#include <doctest.h>

#include <map>
#include <random>
#include <sstream>

#include "spatial/cli.hpp"
#include "spatial/eval.hpp"
#include "spatial/probes.hpp"
#include "spatial/store.hpp"
#include "support.hpp"

using namespace spatial;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

// Every regular file under `dir`, relative path to contents, minus run manifests
// (they record the output path).
std::map<std::string, std::string> tree(const std::filesystem::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().filename() == "run_manifest.json") continue;
    files[std::filesystem::relative(e.path(), dir).string()] = read_file_bytes(e.path());
  }
  return files;
}

constexpr const char* kTinyConfig = R"(version: 1
seed: 0
training:
  lrs: [0.01]
  dropouts: [0.1]
  seeds: [0]
  batch_size: 32
  abmilp_hidden: 8
  linear: {epochs: 4, warmup_epochs: 1}
  abmilp: {epochs: 3, warmup_epochs: 1}
  efficient: {epochs: 3, warmup_epochs: 1}
)";

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  CHECK(cli({"generate"}).code == kExitUsage);
  test::TempDir dir("cli-usage");
  const Run bad_env = cli({"generate", "--env", "moon", "--n", "5", "--out", (dir / "g").string()});
  CHECK(bad_env.code == kExitUsage);
  CHECK(bad_env.err.find("flat") != std::string::npos);
  CHECK(bad_env.err.find("hills") != std::string::npos);
  CHECK(cli({"split", "--manifest", (dir / "missing.tsv").string(), "--out", dir.path().string()}).code == kExitUsage);
}

TEST_CASE("runtime failures exit with 1 and name the error code") {
  test::TempDir dir("cli-fail");
  write_file_bytes(dir / "manifest.tsv", "not a manifest\n");
  const Run r = cli({"split", "--manifest", (dir / "manifest.tsv").string(), "--out", (dir / "s").string()});
  CHECK(r.code == kExitFailure);
  CHECK(r.err.find("error: CorruptFile") == 0);
}

TEST_CASE("generate is reproducible") {
  test::TempDir dir("cli-gen");
  const auto a = (dir / "a").string(), b = (dir / "b").string();
  REQUIRE(cli({"generate", "--env", "flat", "--n", "30", "--seed", "5", "--out", a}).code == kExitOk);
  REQUIRE(cli({"--jobs", "4", "generate", "--env", "flat", "--n", "30", "--seed", "5", "--out", b}).code == kExitOk);
  CHECK(tree(a) == tree(b));
  const Manifest m = read_manifest(dir / "a/manifest.tsv");
  CHECK(m.records.size() == 3 * 30);
  CHECK(std::filesystem::exists(dir / "a/rejection_stats.tsv"));
  CHECK(std::filesystem::exists(dir / "a/run_manifest.json"));
  for (const auto& r : m.records) CHECK(std::filesystem::exists(dir / "a" / r.catmap_ref));
}

TEST_CASE("rank and correlate on a hand table") {
  test::TempDir dir("cli-rank");
  write_file_bytes(dir / "t.tsv", "model\tacc\terr\nA\t0.9\t0.1\nB\t0.7\t0.4\nC\t0.8\t0.2\n");
  write_file_bytes(dir / "hand.tsv", "model\tacc\ttie\nA\t0.9\t0.5\nB\t0.7\t0.5\nC\t0.8\t0.1\n");
  const Run r = cli({"rank", "--table", (dir / "hand.tsv").string(), "--out", (dir / "r").string()});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out == "model\tmean_rank\nA\t1.25\nB\t2.25\nC\t2.5\n");
  CHECK(read_file_bytes(dir / "r/ranks.tsv") == r.out);

  const Run c = cli({"correlate", "--table", (dir / "t.tsv").string(), "--x", "acc", "--y", "err", "--invert", "err"});
  REQUIRE(c.code == kExitOk);
  CHECK(c.out.rfind("r\t0.98", 0) == 0);
  const Run plain = cli({"correlate", "--table", (dir / "t.tsv").string(), "--x", "acc", "--y", "err"});
  CHECK(plain.out.rfind("r\t-0.98", 0) == 0);
  CHECK(cli({"correlate", "--table", (dir / "t.tsv").string(), "--x", "acc", "--y", "nope"}).code == kExitUsage);
}

TEST_CASE("attnflow on a single tensor") {
  test::TempDir dir("cli-flow");
  std::mt19937_64 gen(1);
  const AttentionTensor a = test::random_attention(3, 2, 5, gen);
  write_attention(dir / "a.spat", a);
  write_category_map(dir / "c.spcm", TokenCategoryMap{2, 2, {0, 1, 1, 2}, {kClsToken}});
  const Run r = cli({"attnflow", "--attention", (dir / "a.spat").string(), "--catmap", (dir / "c.spcm").string(),
                     "--source", "human", "--out", (dir / "f").string()});
  REQUIRE(r.code == kExitOk);
  CHECK(std::filesystem::exists(dir / "f/flow.tsv"));
  CHECK(std::filesystem::exists(dir / "f/flow.svg"));
}

TEST_CASE("full chain output does not depend on the worker count") {
  test::TempDir dir("cli-chain");
  write_file_bytes(dir / "tiny.yaml", kTinyConfig);
  const std::string cfg = (dir / "tiny.yaml").string();
  const std::string base = dir.path().string();
  REQUIRE(cli({"--config", cfg, "generate", "--env", "flat", "--triple", "tree,car,human", "--n", "60", "--out",
               base + "/gen"})
              .code == kExitOk);
  REQUIRE(cli({"--config", cfg, "split", "--manifest", base + "/gen/manifest.tsv", "--out", base + "/split"}).code ==
          kExitOk);
  for (const char* jobs : {"1", "8"}) {
    const std::string enc = base + "/enc" + jobs, ev = base + "/eval" + jobs;
    REQUIRE(cli({"--config", cfg, "--jobs", jobs, "encode-oracle", "--manifest", base + "/split/manifest.tsv", "--out",
                 enc})
                .code == kExitOk);
    const Run r = cli({"--config", cfg, "eval", "--manifest", enc + "/manifest.tsv", "--variant", "ego", "--jobs", jobs,
                       "--out", ev});
    REQUIRE(r.code == kExitOk);
  }
  CHECK(tree(base + "/enc1") == tree(base + "/enc8"));
  CHECK(tree(base + "/eval1") == tree(base + "/eval8"));
  const EvalReport rep = parse_report_tsv(read_file_bytes(dir / "eval1/report.tsv"));
  CHECK(rep.rows.size() == 3);
  CHECK(std::filesystem::exists(dir / "eval1/report.json"));

  const Run t = cli({"--config", cfg, "train", "--manifest", base + "/enc1/manifest.tsv", "--head", "abmilp", "--out",
                     base + "/train"});
  REQUIRE(t.code == kExitOk);
  CHECK(read_checkpoint(dir / "train/probe.sppb").config().kind == HeadKind::Abmilp);
  const Run refuse = cli({"--config", cfg, "split", "--manifest", base + "/split/manifest.tsv", "--out", base + "/split"});
  CHECK(refuse.code != kExitOk);
}
