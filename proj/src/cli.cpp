#include "spatial/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <ostream>

#include "spatial/config.hpp"
#include "spatial/error.hpp"
#include "spatial/eval.hpp"
#include "spatial/parallel.hpp"
#include "spatial/rng.hpp"

namespace spatial {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Re-throws library validation failures on user-supplied flag values as usage errors.
template <typename Fn>
auto flag_value(Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

struct Options {
  std::string config_path;
  unsigned jobs = 1;
  std::vector<std::string> args;
};

BenchConfig resolve_config(const Options& opt, std::string& used) {
  if (!opt.config_path.empty()) {
    used = opt.config_path;
    return load_config(opt.config_path);
  }
  if (const char* env = std::getenv(kConfigEnvVar); env != nullptr && *env != '\0') {
    used = env;
    return load_config(env);
  }
  used = "builtin";
  return default_config();
}

void write_text(const fs::path& path, std::string_view text) { write_file_bytes(path, text); }

/// Records how an output directory was produced. The input hash is a git-style
/// blob hash over the "<blob hash> <path>" lines of every input file.
void write_run_manifest(const fs::path& out_dir, const std::string& command, const Options& opt,
                        const std::string& config_used, std::uint64_t seed, std::vector<fs::path> inputs) {
  if (config_used != "builtin") inputs.emplace_back(config_used);
  nlohmann::ordered_json files = nlohmann::ordered_json::object();
  std::string listing;
  for (const auto& p : inputs) {
    const std::string h = git_blob_hash(read_file_bytes(p));
    files[p.string()] = h;
    listing += h + " " + p.string() + "\n";
  }
  nlohmann::ordered_json j;
  j["command"] = command;
  j["args"] = opt.args;
  j["config"] = config_used;
  j["global_seed"] = seed;
  j["inputs"] = files;
  j["input_hash"] = git_blob_hash(listing);
  j["output_dir"] = out_dir.string();
  write_text(out_dir / "run_manifest.json", j.dump(2) + "\n");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
}

fs::path manifest_dir(const fs::path& manifest_path) {
  const fs::path parent = manifest_path.parent_path();
  return parent.empty() ? fs::path(".") : parent;
}

/// Rewrites a record ref that was relative to `from` so it resolves from `to`.
std::string rebase(const std::string& ref, const fs::path& from, const fs::path& to) {
  if (ref.empty()) return ref;
  const fs::path abs = fs::weakly_canonical(fs::absolute(from) / ref);
  return fs::relative(abs, fs::weakly_canonical(fs::absolute(to))).generic_string();
}

void rebase_refs(Manifest& m, const fs::path& from, const fs::path& to) {
  for (auto& r : m.records) {
    r.features_ref = rebase(r.features_ref, from, to);
    r.attention_ref = rebase(r.attention_ref, from, to);
    r.catmap_ref = rebase(r.catmap_ref, from, to);
  }
}

void refuse_overwrite(const fs::path& input, const fs::path& output) {
  if (fs::exists(output) && fs::equivalent(input, output)) {
    throw UsageError("output " + output.string() + " would overwrite the input manifest");
  }
}

std::vector<TaskVariant> parse_variants(const std::vector<std::string>& names) {
  std::vector<TaskVariant> out;
  for (const auto& n : names) out.push_back(flag_value([&] { return parse_variant(n); }));
  return out;
}

std::vector<HeadKind> parse_heads(const std::vector<std::string>& names) {
  std::vector<HeadKind> out;
  for (const auto& n : names) out.push_back(flag_value([&] { return parse_head(n); }));
  return out;
}

PoolSource parse_pool(const std::string& text) {
  if (text == "patch") return PoolSource::PatchMean;
  if (text == "cls") return PoolSource::Cls;
  throw UsageError("pool must be patch or cls, got '" + text + "'");
}

TripleSpec manifest_triple(const Manifest& m, const std::string& text) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(',', start);
    parts.push_back(text.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  if (parts.size() != 3) throw UsageError("triple '" + text + "' must be source,target,viewpoint");
  return flag_value([&] {
    return TripleSpec{m.category_id(parts[0]), m.category_id(parts[1]), m.category_id(parts[2])};
  });
}

CategoryId flow_category(const std::vector<CategorySpec>& categories, const std::string& name) {
  if (name == "cls") return kClsToken;
  if (name == "register") return kRegisterToken;
  for (const auto& c : categories) {
    if (c.name == name) return c.id;
  }
  throw UsageError("unknown category '" + name + "' (use a category name, cls or register)");
}

std::string flow_category_name(const std::vector<CategorySpec>& categories, CategoryId id) {
  if (id == kClsToken) return "cls";
  if (id == kRegisterToken) return "register";
  return id < categories.size() ? categories[id].name : std::to_string(id);
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::vector<std::string> envs;
  std::vector<std::string> triples;
  std::string variant = "ego";
  std::size_t n = 0;
  std::optional<std::uint64_t> seed;
  std::size_t max_attempts = 0;
  std::string out;
};

int cmd_generate(const Options& opt, const GenerateArgs& a, std::ostream& out, std::ostream& err) {
  std::string config_used;
  const BenchConfig cfg = resolve_config(opt, config_used);
  std::vector<std::string> envs = a.envs;
  if (envs.empty()) envs.push_back(cfg.environments.front().name);
  for (const auto& e : envs) {
    if (!cfg.has_env(e)) {
      std::string known;
      for (const auto& n : cfg.env_names()) known += (known.empty() ? "" : ", ") + n;
      err << "error: InvalidParameter: unknown environment '" << e << "' (known: " << known << ")\n";
      return kExitUsage;
    }
  }
  std::vector<TripleSpec> triples;
  for (const auto& t : a.triples) triples.push_back(flag_value([&] { return cfg.parse_triple(t); }));
  if (triples.empty()) triples = cfg.triples;
  if (triples.empty()) throw UsageError("no triple given and the config defines none");
  const TaskVariant variant = flag_value([&] { return parse_variant(a.variant); });
  const std::size_t n = a.n > 0 ? a.n : default_dataset_size(variant);
  const std::uint64_t seed = a.seed.value_or(cfg.seed);

  const fs::path out_dir = a.out;
  ensure_dir(out_dir / "catmaps");
  Manifest manifest;
  manifest.categories = cfg.categories;
  const EnvConfig& first = cfg.find_env(envs.front());
  manifest.grid_rows = first.intrinsics.grid_rows;
  manifest.grid_cols = first.intrinsics.grid_cols;
  manifest.ambiguity_half_width = first.ambiguity_half_width;

  std::string stats_tsv = "environment\ttriple\tattempts\taccepted";
  for (std::size_t r = 0; r < kNumRejectionReasons; ++r) {
    stats_tsv += "\t" + std::string(to_string(static_cast<RejectionReason>(r)));
  }
  stats_tsv += "\n";
  for (const auto& env_name : envs) {
    const EnvConfig& env = cfg.find_env(env_name);
    if (env.intrinsics.grid_rows != manifest.grid_rows || env.intrinsics.grid_cols != manifest.grid_cols ||
        env.ambiguity_half_width != manifest.ambiguity_half_width) {
      throw UsageError("environments in one dataset must share the patch grid and ambiguity width");
    }
    for (std::size_t k = 0; k < triples.size(); ++k) {
      GenerateOptions go;
      go.n_valid = n;
      go.global_seed = k == 0 ? seed : CounterRng::derive_key(seed, k);
      go.max_attempts = a.max_attempts;
      go.jobs = opt.jobs;
      GeneratedDataset ds = generate_dataset(env, triples[k], go);
      const std::string label = triple_label(manifest, triples[k]);
      stats_tsv += env.name + "\t" + label + "\t" + std::to_string(ds.stats.attempts) + "\t" +
                   std::to_string(ds.stats.accepted);
      for (auto c : ds.stats.counts) stats_tsv += "\t" + std::to_string(c);
      stats_tsv += "\n";
      out << env.name << " " << label << ": accepted " << ds.stats.accepted << " of " << ds.stats.attempts
          << " attempts";
      for (std::size_t r = 0; r < kNumRejectionReasons; ++r) {
        out << ", " << to_string(static_cast<RejectionReason>(r)) << " " << ds.stats.counts[r];
      }
      out << "\n";
      if (k > 0) {
        for (auto& rec : ds.records) rec.sample_id += "-t" + std::to_string(k);
      }
      parallel_for(ds.records.size(), opt.jobs, [&](std::size_t i) {
        auto& rec = ds.records[i];
        rec.catmap_ref = "catmaps/" + rec.sample_id + ".spcm";
        write_category_map(out_dir / rec.catmap_ref, token_occupancy(rec.layout.camera, env.intrinsics, rec.layout).map);
      });
      manifest.records.insert(manifest.records.end(), std::make_move_iterator(ds.records.begin()),
                              std::make_move_iterator(ds.records.end()));
    }
  }
  write_manifest(out_dir / "manifest.tsv", manifest);
  write_text(out_dir / "rejection_stats.tsv", stats_tsv);
  write_run_manifest(out_dir, "generate", opt, config_used, seed, {});
  out << "wrote " << manifest.records.size() << " records to " << (out_dir / "manifest.tsv").string() << "\n";
  return kExitOk;
}

struct SplitArgs {
  std::string manifest;
  std::optional<std::uint64_t> seed;
  std::optional<double> train, val, test;
  std::string out;
};

int cmd_split(const Options& opt, const SplitArgs& a, std::ostream& out) {
  std::string config_used;
  const BenchConfig cfg = resolve_config(opt, config_used);
  const fs::path out_dir = a.out;
  ensure_dir(out_dir);
  refuse_overwrite(a.manifest, out_dir / "manifest.tsv");
  Manifest m = read_manifest(a.manifest);
  SplitFractions fr = cfg.split;
  if (a.train) fr.train = *a.train;
  if (a.val) fr.val = *a.val;
  if (a.test) fr.test = *a.test;
  const std::uint64_t seed = a.seed.value_or(cfg.seed);
  m.records = flag_value([&] { return split_by_group(std::move(m.records), fr, seed); });
  rebase_refs(m, manifest_dir(a.manifest), out_dir);
  write_manifest(out_dir / "manifest.tsv", m);
  write_run_manifest(out_dir, "split", opt, config_used, seed, {a.manifest});
  std::size_t counts[4] = {0, 0, 0, 0};
  for (const auto& r : m.records) ++counts[static_cast<int>(r.split)];
  out << "train " << counts[1] << ", val " << counts[2] << ", test " << counts[3] << "\n";
  return kExitOk;
}

struct EncodeArgs {
  std::string manifest;
  std::string out;
  std::vector<std::string> erase;
  std::optional<int> dim;
  std::optional<double> noise_sigma;
};

int cmd_encode(const Options& opt, const EncodeArgs& a, std::ostream& out) {
  std::string config_used;
  const BenchConfig cfg = resolve_config(opt, config_used);
  const fs::path out_dir = a.out;
  ensure_dir(out_dir / "features");
  refuse_overwrite(a.manifest, out_dir / "manifest.tsv");
  Manifest m = read_manifest(a.manifest);
  OracleSpec spec = cfg.encoder;
  spec.n_categories = static_cast<int>(m.categories.size());
  if (a.dim) spec.dim = *a.dim;
  if (a.noise_sigma) spec.noise_sigma = *a.noise_sigma;
  for (const auto& name : a.erase) spec.erased_categories.push_back(flag_value([&] { return m.category_id(name); }));
  flag_value([&] { spec.validate(); return 0; });
  rebase_refs(m, manifest_dir(a.manifest), out_dir);
  parallel_for(m.records.size(), opt.jobs, [&](std::size_t i) {
    auto& r = m.records[i];
    const EnvConfig& env = cfg.find_env(r.environment);
    if (env.intrinsics.grid_rows != m.grid_rows || env.intrinsics.grid_cols != m.grid_cols) {
      throw Error(ErrorCode::ShapeMismatch, "environment '" + env.name + "' grid differs from the manifest grid");
    }
    FeatureTensor t = encode_scene(r.layout, r.layout.camera, env.intrinsics, spec,
                                   encoder_seed(r.global_seed, r.scene_index));
    r.features_ref = "features/" + r.sample_id + ".sprt";
    write_features(out_dir / r.features_ref, t);
  });
  write_manifest(out_dir / "manifest.tsv", m);
  write_run_manifest(out_dir, "encode-oracle", opt, config_used, cfg.seed, {a.manifest});
  out << "encoded " << m.records.size() << " samples (dim " << spec.dim << ")\n";
  return kExitOk;
}

struct ProbeSource {
  bool oracle = false;
  std::optional<int> layer;
};

FeatureProvider make_provider(const BenchConfig& cfg, const Manifest& m, const fs::path& manifest_path,
                              const ProbeSource& src) {
  if (!src.oracle) return file_features(manifest_dir(manifest_path), src.layer);
  if (src.layer) throw UsageError("--layer applies to stored features, not --oracle");
  OracleSpec spec = cfg.encoder;
  spec.n_categories = static_cast<int>(m.categories.size());
  std::map<std::string, FeatureProvider> per_env;
  for (const auto& r : m.records) {
    if (per_env.count(r.environment) == 0) {
      per_env[r.environment] = oracle_features(cfg.find_env(r.environment).intrinsics, spec);
    }
  }
  return [per_env](const SampleRecord& r) { return per_env.at(r.environment)(r); };
}

struct TrainArgs {
  std::string manifest;
  std::string triple;
  std::string variant = "ego";
  std::string head = "efficient";
  std::string pool = "patch";
  std::optional<std::uint64_t> seed;
  std::optional<double> lr, dropout;
  ProbeSource source;
  std::string out;
};

int cmd_train(const Options& opt, const TrainArgs& a, std::ostream& out) {
  std::string config_used;
  const BenchConfig cfg = resolve_config(opt, config_used);
  const Manifest m = read_manifest(a.manifest);
  if (m.records.empty()) throw Error(ErrorCode::EmptyInput, "manifest has no records");
  const TripleSpec triple = a.triple.empty() ? m.records.front().triple : manifest_triple(m, a.triple);
  const TaskVariant variant = flag_value([&] { return parse_variant(a.variant); });
  const HeadKind head = flag_value([&] { return parse_head(a.head); });
  const std::uint64_t seed = a.seed.value_or(cfg.training.seeds.front());

  const ProbeDataset data = build_probe_dataset(m, triple, variant, make_provider(cfg, m, a.manifest, a.source));
  TrainConfig base = cfg.training.make(head, data.dim, seed);
  base.head.pool = parse_pool(a.pool);
  SweepGrid grid = cfg.training.grid;
  if (a.lr) grid.lrs = {*a.lr};
  if (a.dropout) grid.dropouts = {*a.dropout};
  const SweepResult sw = sweep(data, base, grid, opt.jobs);
  const double test_acc = data.test.size() > 0 ? evaluate_accuracy(sw.best.params, data, data.test) : 0.0;

  const fs::path out_dir = a.out;
  ensure_dir(out_dir);
  write_checkpoint(out_dir / "probe.sppb", sw.best.params);
  TrainConfig chosen = base;
  auto j = nlohmann::ordered_json::parse(train_result_json(sw.best, chosen.head));
  j["triple"] = triple_label(m, triple);
  j["variant"] = std::string(to_string(variant));
  j["test_accuracy"] = test_acc;
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  for (const auto& c : sw.cells) {
    cells.push_back({{"lr", c.lr}, {"dropout", c.dropout}, {"best_val_accuracy", c.best_val_accuracy},
                     {"diverged", c.diverged}});
  }
  j["sweep"] = cells;
  write_text(out_dir / "train_result.json", j.dump(2) + "\n");
  write_text(out_dir / "loss.svg", svg_line_chart("training loss", "epoch", {{"train loss", sw.best.train_loss}}, true));
  write_run_manifest(out_dir, "train", opt, config_used, seed, {a.manifest});
  out << to_string(head) << " " << to_string(variant) << ": lr " << sw.best.lr << ", dropout " << sw.best.dropout
      << ", val " << sw.best.best_val_accuracy << ", test " << test_acc << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string manifest;
  std::string model;
  std::vector<std::string> heads;
  std::vector<std::string> variants;
  std::vector<std::string> triples;
  std::vector<std::uint64_t> seeds;
  std::vector<int> layers;
  std::string pool = "patch";
  bool oracle = false;
  bool charts = true;
  std::string out;
};

int cmd_eval(const Options& opt, const EvalArgs& a, std::ostream& out) {
  std::string config_used;
  const BenchConfig cfg = resolve_config(opt, config_used);
  const Manifest m = read_manifest(a.manifest);
  ProtocolSpec spec;
  spec.model = a.model.empty() ? (a.oracle ? "oracle" : "model") : a.model;
  if (!a.heads.empty()) spec.heads = parse_heads(a.heads);
  if (!a.variants.empty()) spec.variants = parse_variants(a.variants);
  for (const auto& t : a.triples) spec.triples.push_back(manifest_triple(m, t));
  spec.training = cfg.training;
  if (!a.seeds.empty()) spec.training.seeds = a.seeds;
  spec.linear_pool = parse_pool(a.pool);
  spec.jobs = opt.jobs;

  std::vector<EvalReport> reports;
  if (a.layers.empty()) {
    reports.push_back(run_protocol(m, make_provider(cfg, m, a.manifest, {a.oracle, std::nullopt}), spec));
  } else {
    for (int layer : a.layers) {
      spec.layer = layer;
      reports.push_back(run_protocol(m, make_provider(cfg, m, a.manifest, {a.oracle, layer}), spec));
    }
  }
  EvalReport report = reports.size() == 1 ? reports.front() : merge_reports(reports);
  if (reports.size() > 1) {
    std::string layers;
    for (int l : a.layers) layers += (layers.empty() ? "" : ",") + std::to_string(l);
    for (auto& kv : report.metadata) {
      if (kv.first == "layer") kv.second = layers;
    }
  }
  report.metadata.emplace_back("config", config_used);

  const fs::path out_dir = a.out;
  ensure_dir(out_dir);
  write_text(out_dir / "report.tsv", report_tsv(report));
  write_text(out_dir / "report.json", report_json(report));
  if (a.charts) {
    std::vector<std::string> heads;
    std::vector<std::string> groups;
    for (const auto& ag : report.aggregates) {
      if (std::find(heads.begin(), heads.end(), ag.head) == heads.end()) heads.push_back(ag.head);
      const std::string g = ag.environment + "/" + ag.variant;
      if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
    }
    if (a.layers.size() <= 1) {
      std::vector<Series> series;
      for (const auto& h : heads) {
        Series s{h, std::vector<double>(groups.size(), 0.0)};
        for (const auto& ag : report.aggregates) {
          if (ag.head != h) continue;
          const auto gi = std::find(groups.begin(), groups.end(), ag.environment + "/" + ag.variant) - groups.begin();
          s.values[static_cast<std::size_t>(gi)] = ag.mean_test_accuracy;
        }
        series.push_back(std::move(s));
      }
      write_text(out_dir / "accuracy.svg", svg_bar_chart(spec.model + " probe accuracy", groups, series));
    } else {
      std::vector<Series> series;
      for (const auto& h : heads) {
        for (const auto& g : groups) {
          Series s{h + " " + g, {}};
          for (int layer : a.layers) {
            for (const auto& ag : report.aggregates) {
              if (ag.head == h && ag.environment + "/" + ag.variant == g && ag.layer == layer) {
                s.values.push_back(ag.mean_test_accuracy);
              }
            }
          }
          series.push_back(std::move(s));
        }
      }
      write_text(out_dir / "layers.svg", svg_line_chart(spec.model + " accuracy by layer", "layer index", series));
    }
  }
  std::uint64_t seed0 = spec.training.seeds.front();
  write_run_manifest(out_dir, "eval", opt, config_used, seed0, {a.manifest});
  for (const auto& ag : report.aggregates) {
    out << ag.model << "\t" << ag.environment << "\t" << ag.head << "\t" << ag.variant;
    if (ag.layer >= 0) out << "\tlayer " << ag.layer;
    out << "\t" << ag.mean_test_accuracy << "\n";
  }
  return kExitOk;
}

struct RankArgs {
  std::string table;
  std::vector<std::string> reports;
  std::string head = "efficient";
  std::string out;
};

int cmd_rank(const Options& opt, const RankArgs& a, std::ostream& out) {
  ScoreTable table;
  std::vector<fs::path> inputs;
  if (!a.table.empty() == !a.reports.empty()) throw UsageError("give exactly one of --table or --report");
  if (!a.table.empty()) {
    table = parse_table_tsv(read_file_bytes(a.table));
    inputs.emplace_back(a.table);
  } else {
    std::vector<EvalReport> reports;
    for (const auto& r : a.reports) {
      reports.push_back(parse_report_tsv(read_file_bytes(r)));
      inputs.emplace_back(r);
    }
    table = accuracy_table(merge_reports(reports), a.head);
  }
  const auto ranks = mean_rank(table.values);
  std::string tsv = "model\tmean_rank\n";
  for (std::size_t i = 0; i < table.rows.size(); ++i) tsv += table.rows[i] + "\t" + format_double(ranks[i]) + "\n";
  out << tsv;
  if (!a.out.empty()) {
    const fs::path out_dir = a.out;
    ensure_dir(out_dir);
    write_text(out_dir / "ranks.tsv", tsv);
    write_run_manifest(out_dir, "rank", opt, "builtin", 0, inputs);
  }
  return kExitOk;
}

struct CorrelateArgs {
  std::string table;
  std::string x;
  std::string y;
  std::vector<std::string> invert;
  std::string out;
};

int cmd_correlate(const Options& opt, const CorrelateArgs& a, std::ostream& out) {
  const ScoreTable t = parse_table_tsv(read_file_bytes(a.table));
  const std::size_t xi = flag_value([&] { return t.column_index(a.x); });
  const std::size_t yi = flag_value([&] { return t.column_index(a.y); });
  for (const auto& c : a.invert) flag_value([&] { return t.column_index(c); });
  auto inverted = [&](const std::string& c) { return std::find(a.invert.begin(), a.invert.end(), c) != a.invert.end(); };
  std::vector<double> xs, ys;
  for (const auto& row : t.values) {
    xs.push_back(inverted(a.x) ? -row[xi] : row[xi]);
    ys.push_back(inverted(a.y) ? -row[yi] : row[yi]);
  }
  const double r = pearson_r(xs, ys);
  out << "r\t" << format_double(r) << "\nr2\t" << format_double(r * r) << "\n";
  if (!a.out.empty()) {
    const fs::path out_dir = a.out;
    ensure_dir(out_dir);
    nlohmann::ordered_json j;
    j["x"] = a.x;
    j["y"] = a.y;
    j["inverted"] = a.invert;
    j["n"] = xs.size();
    j["r"] = r;
    j["r_squared"] = r * r;
    write_text(out_dir / "correlation.json", j.dump(2) + "\n");
    const std::string xl = inverted(a.x) ? "-" + a.x : a.x;
    const std::string yl = inverted(a.y) ? "-" + a.y : a.y;
    write_text(out_dir / "scatter.svg", svg_scatter("r = " + format_double(std::round(r * 1e4) / 1e4), xl, yl, xs, ys, t.rows));
    write_run_manifest(out_dir, "correlate", opt, "builtin", 0, {a.table});
  }
  return kExitOk;
}

struct FlowArgs {
  std::string manifest;
  std::string attention;
  std::string catmap;
  std::string baseline;
  std::string source;
  std::vector<std::string> dest;
  std::string aggregation = "sum";
  std::string out;
};

struct FlowTable {
  std::vector<CategoryId> dest;
  std::vector<FlowCurve> curves;
  std::size_t samples = 0;
};

FlowTable average_flows(const std::vector<std::pair<AttentionTensor, std::vector<CategoryId>>>& items, CategoryId src,
                        std::vector<CategoryId> dest, FlowAggregation agg) {
  if (dest.empty()) {
    for (const auto& it : items) {
      for (CategoryId c : it.second) {
        if (std::find(dest.begin(), dest.end(), c) == dest.end()) dest.push_back(c);
      }
    }
    std::sort(dest.begin(), dest.end());
  }
  FlowTable table;
  table.dest = dest;
  std::vector<std::size_t> counts(dest.size(), 0);
  table.curves.resize(dest.size());
  for (const auto& [attn, cats] : items) {
    if (std::find(cats.begin(), cats.end(), src) == cats.end()) continue;
    ++table.samples;
    for (std::size_t d = 0; d < dest.size(); ++d) {
      if (agg == FlowAggregation::Mean && std::find(cats.begin(), cats.end(), dest[d]) == cats.end()) continue;
      const FlowCurve c = attention_flow(attn, cats, src, dest[d], agg);
      auto& acc = table.curves[d].values;
      if (acc.empty()) acc.assign(c.values.size(), 0.0);
      if (acc.size() != c.values.size()) throw Error(ErrorCode::ShapeMismatch, "attention files differ in layer count");
      for (std::size_t l = 0; l < acc.size(); ++l) acc[l] += c.values[l];
      ++counts[d];
    }
  }
  if (table.samples == 0) {
    throw Error(ErrorCode::EmptyCategory, "source category " + std::to_string(src) + " owns no tokens in any sample");
  }
  for (std::size_t d = 0; d < dest.size(); ++d) {
    table.curves[d].aggregation = agg;
    for (double& v : table.curves[d].values) v /= static_cast<double>(counts[d]);
  }
  return table;
}

std::vector<std::pair<AttentionTensor, std::vector<CategoryId>>> load_flow_items(const std::string& manifest_path,
                                                                                 const std::string& attention,
                                                                                 const std::string& catmap,
                                                                                 std::vector<CategorySpec>& categories,
                                                                                 std::vector<fs::path>& inputs) {
  std::vector<std::pair<AttentionTensor, std::vector<CategoryId>>> items;
  auto load = [&](const fs::path& attn_path, const fs::path& map_path) {
    AttentionTensor attn = read_attention(attn_path);
    validate_attention(attn);
    items.emplace_back(std::move(attn), read_category_map(map_path).flattened());
  };
  if (!manifest_path.empty()) {
    const Manifest m = read_manifest(manifest_path);
    categories = m.categories;
    const fs::path dir = manifest_dir(manifest_path);
    for (const auto& r : m.records) {
      if (r.attention_ref.empty() || r.catmap_ref.empty()) continue;
      load(dir / r.attention_ref, dir / r.catmap_ref);
    }
    if (items.empty()) throw Error(ErrorCode::MissingFeatures, "no record in " + manifest_path + " has attention and a category map");
    inputs.emplace_back(manifest_path);
  } else {
    load(attention, catmap);
    inputs.emplace_back(attention);
    inputs.emplace_back(catmap);
  }
  return items;
}

int cmd_attnflow(const Options& opt, const FlowArgs& a, std::ostream& out) {
  if (a.manifest.empty() == (a.attention.empty() || a.catmap.empty())) {
    throw UsageError("give either --manifest or both --attention and --catmap");
  }
  std::string config_used;
  const BenchConfig cfg = resolve_config(opt, config_used);
  std::vector<CategorySpec> categories = cfg.categories;
  std::vector<fs::path> inputs;
  const auto items = load_flow_items(a.manifest, a.attention, a.catmap, categories, inputs);
  const FlowAggregation agg = flag_value([&] { return parse_aggregation(a.aggregation); });
  const CategoryId src = flow_category(categories, a.source);
  std::vector<CategoryId> dest;
  for (const auto& d : a.dest) dest.push_back(flow_category(categories, d));
  const FlowTable table = average_flows(items, src, dest, agg);

  auto to_tsv = [&](const std::vector<FlowCurve>& curves) {
    std::string tsv = "layer";
    for (CategoryId d : table.dest) tsv += "\t" + flow_category_name(categories, d);
    tsv += "\n";
    std::size_t n_layers = 0;
    for (const auto& c : curves) n_layers = std::max(n_layers, c.values.size());
    for (std::size_t l = 0; l < n_layers; ++l) {
      tsv += std::to_string(l);
      for (const auto& c : curves) tsv += "\t" + (l < c.values.size() ? format_double(c.values[l]) : std::string("nan"));
      tsv += "\n";
    }
    return tsv;
  };
  const std::string tsv = to_tsv(table.curves);
  out << tsv;
  std::optional<std::vector<FlowCurve>> diff;
  if (!a.baseline.empty()) {
    std::vector<CategorySpec> base_categories = categories;
    const auto base_items = load_flow_items(a.baseline, "", "", base_categories, inputs);
    const FlowTable base = average_flows(base_items, src, table.dest, agg);
    diff.emplace();
    for (std::size_t d = 0; d < table.dest.size(); ++d) diff->push_back(flow_differential(table.curves[d], base.curves[d]));
  }
  if (!a.out.empty()) {
    const fs::path out_dir = a.out;
    ensure_dir(out_dir);
    write_text(out_dir / "flow.tsv", tsv);
    std::vector<Series> series;
    for (std::size_t d = 0; d < table.dest.size(); ++d) {
      series.push_back({flow_category_name(categories, table.dest[d]), table.curves[d].values});
    }
    const std::string title = "attention flow from " + flow_category_name(categories, src) + " (" +
                              std::string(to_string(agg)) + ")";
    write_text(out_dir / "flow.svg", svg_line_chart(title, "layer", series, true));
    if (diff) {
      write_text(out_dir / "differential.tsv", to_tsv(*diff));
      std::vector<Series> dseries;
      for (std::size_t d = 0; d < table.dest.size(); ++d) {
        dseries.push_back({flow_category_name(categories, table.dest[d]), (*diff)[d].values});
      }
      write_text(out_dir / "differential.svg", svg_line_chart(title + ", differential", "layer", dseries, false));
    }
    write_run_manifest(out_dir, "attnflow", opt, config_used, 0, inputs);
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spatial-relation probing benchmark", "spatialbench"};
  app.require_subcommand(1);
  app.fallthrough();
  Options opt;
  opt.args = args;
  app.add_option("--config", opt.config_path,
                 std::string("YAML config (default: $") + kConfigEnvVar + ", else built-in values)");
  app.add_option("--jobs", opt.jobs, "worker threads")->check(CLI::Range(1u, 1024u));

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "sample scenes and write a manifest plus token category maps");
  g->add_option("--env", gen.envs, "environment name (repeatable)");
  g->add_option("--triple", gen.triples, "source,target,viewpoint category names (repeatable)");
  g->add_option("--variant", gen.variant, "ego or allo; picks the default --n")->capture_default_str();
  g->add_option("--n", gen.n, "accepted samples per environment and triple (default 5000 ego, 10000 allo)");
  g->add_option("--seed", gen.seed, "global seed");
  g->add_option("--max-attempts", gen.max_attempts, "attempt cap per triple (default 100 x n)");
  g->add_option("--out", gen.out, "output directory")->required();

  SplitArgs sp;
  auto* s = app.add_subcommand("split", "assign train/val/test folds per environment and triple");
  s->add_option("--manifest", sp.manifest)->required()->check(CLI::ExistingFile);
  s->add_option("--seed", sp.seed);
  s->add_option("--train", sp.train);
  s->add_option("--val", sp.val);
  s->add_option("--test", sp.test);
  s->add_option("--out", sp.out, "output directory")->required();

  EncodeArgs enc;
  auto* e = app.add_subcommand("encode-oracle", "write oracle token features for every record");
  e->add_option("--manifest", enc.manifest)->required()->check(CLI::ExistingFile);
  e->add_option("--out", enc.out)->required();
  e->add_option("--erase", enc.erase, "category encoded as background (repeatable)");
  e->add_option("--dim", enc.dim);
  e->add_option("--noise-sigma", enc.noise_sigma);

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "sweep one probe on one triple and variant");
  t->add_option("--manifest", tr.manifest)->required()->check(CLI::ExistingFile);
  t->add_option("--triple", tr.triple);
  t->add_option("--variant", tr.variant)->capture_default_str();
  t->add_option("--head", tr.head, "linear, abmilp or efficient")->capture_default_str();
  t->add_option("--pool", tr.pool, "linear head input: patch or cls")->capture_default_str();
  t->add_option("--seed", tr.seed);
  t->add_option("--lr", tr.lr, "fix the learning rate instead of sweeping it");
  t->add_option("--dropout", tr.dropout, "fix the dropout instead of sweeping it");
  t->add_flag("--oracle", tr.source.oracle, "encode oracle features on the fly");
  t->add_option("--layer", tr.source.layer, "substituted for {layer} in feature refs");
  t->add_option("--out", tr.out)->required();

  EvalArgs ev;
  auto* v = app.add_subcommand("eval", "run the probing protocol and write reports");
  v->add_option("--manifest", ev.manifest)->required()->check(CLI::ExistingFile);
  v->add_option("--model", ev.model, "model name recorded in the report");
  v->add_option("--head", ev.heads, "repeatable (default: all)");
  v->add_option("--variant", ev.variants, "repeatable (default: ego and allo)");
  v->add_option("--triple", ev.triples, "repeatable (default: every triple in the manifest)");
  v->add_option("--seed", ev.seeds, "repeatable (default: config seeds)");
  v->add_option("--layer", ev.layers, "repeatable; one protocol run per layer");
  v->add_option("--pool", ev.pool, "linear head input: patch or cls")->capture_default_str();
  v->add_flag("--oracle", ev.oracle, "encode oracle features on the fly");
  v->add_flag("!--no-charts", ev.charts, "skip SVG output");
  v->add_option("--out", ev.out)->required();

  RankArgs rk;
  auto* r = app.add_subcommand("rank", "mean rank of models over accuracy columns");
  r->add_option("--table", rk.table, "TSV: model column, then one column per metric")->check(CLI::ExistingFile);
  r->add_option("--report", rk.reports, "eval report.tsv (repeatable)")->check(CLI::ExistingFile);
  r->add_option("--head", rk.head, "head whose accuracies are ranked (with --report)")->capture_default_str();
  r->add_option("--out", rk.out);

  CorrelateArgs co;
  auto* c = app.add_subcommand("correlate", "Pearson r and R^2 between two table columns");
  c->add_option("--table", co.table)->required()->check(CLI::ExistingFile);
  c->add_option("--x", co.x)->required();
  c->add_option("--y", co.y)->required();
  c->add_option("--invert", co.invert, "negate this column first (error metrics; repeatable)");
  c->add_option("--out", co.out);

  FlowArgs fl;
  auto* f = app.add_subcommand("attnflow", "per-layer attention flow between token categories");
  f->add_option("--manifest", fl.manifest, "average over records with attention and category maps")
      ->check(CLI::ExistingFile);
  f->add_option("--attention", fl.attention, "single SPAT file")->check(CLI::ExistingFile);
  f->add_option("--catmap", fl.catmap, "single SPCM file")->check(CLI::ExistingFile);
  f->add_option("--baseline", fl.baseline, "second manifest; writes the differential")->check(CLI::ExistingFile);
  f->add_option("--source", fl.source, "source category name")->required();
  f->add_option("--dest", fl.dest, "destination categories (default: all present, incl. cls/register)");
  f->add_option("--aggregation", fl.aggregation, "sum or mean over destination tokens")->capture_default_str();
  f->add_option("--out", fl.out);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (g->parsed()) return cmd_generate(opt, gen, out, err);
    if (s->parsed()) return cmd_split(opt, sp, out);
    if (e->parsed()) return cmd_encode(opt, enc, out);
    if (t->parsed()) return cmd_train(opt, tr, out);
    if (v->parsed()) return cmd_eval(opt, ev, out);
    if (r->parsed()) return cmd_rank(opt, rk, out);
    if (c->parsed()) return cmd_correlate(opt, co, out);
    if (f->parsed()) return cmd_attnflow(opt, fl, out);
  } catch (const UsageError& ue) {
    err << "error: usage: " << ue.what() << "\n";
    return kExitUsage;
  } catch (const Error& er) {
    err << "error: " << to_string(er.code()) << ": " << er.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& ex) {
    err << "error: internal: " << ex.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace spatial
