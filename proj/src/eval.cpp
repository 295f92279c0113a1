#include "spatial/eval.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <map>
#include <sstream>

#include "spatial/error.hpp"

namespace spatial {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kReportMagic = "#spatialbench-report";
constexpr std::string_view kReportColumns =
    "model\tenvironment\ttriple\thead\tseed\tvariant\tlayer\tlr\tdropout\tbest_epoch\tval_accuracy\ttest_accuracy";

std::vector<std::string> split_fields(std::string_view line, char sep = '\t') {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) out.push_back(line);
    start = nl + 1;
  }
  return out;
}

long long parse_int(const std::string& s) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::CorruptFile, "bad integer '" + s + "'");
  }
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += sep;
    out += parts[i];
  }
  return out;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed(double v, int digits) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(digits);
  ss << v;
  return ss.str();
}

}  // namespace

std::string resolve_layer(std::string_view ref, std::optional<int> layer) {
  constexpr std::string_view kPlaceholder = "{layer}";
  const std::size_t pos = ref.find(kPlaceholder);
  if (pos == std::string_view::npos) {
    if (layer) throw Error(ErrorCode::MissingFeatures, "features_ref '" + std::string(ref) + "' has no {layer} placeholder");
    return std::string(ref);
  }
  if (!layer) throw Error(ErrorCode::InvalidParameter, "features_ref '" + std::string(ref) + "' needs a layer");
  return std::string(ref.substr(0, pos)) + std::to_string(*layer) + std::string(ref.substr(pos + kPlaceholder.size()));
}

FeatureProvider file_features(fs::path base_dir, std::optional<int> layer) {
  return [base_dir = std::move(base_dir), layer](const SampleRecord& r) {
    if (r.features_ref.empty()) throw Error(ErrorCode::MissingFeatures, "record " + r.sample_id + " has no features");
    const fs::path path = base_dir / resolve_layer(r.features_ref, layer);
    if (!fs::exists(path)) {
      throw Error(ErrorCode::MissingFeatures, "features for " + r.sample_id + " not found at " + path.string());
    }
    return read_features(path);
  };
}

FeatureProvider oracle_features(CameraIntrinsics intrinsics, OracleSpec spec) {
  spec.validate();
  return [intrinsics, spec = std::move(spec)](const SampleRecord& r) {
    return encode_scene(r.layout, r.layout.camera, intrinsics, spec, encoder_seed(r.global_seed, r.scene_index));
  };
}

ProbeDataset build_probe_dataset(const Manifest& manifest, const TripleSpec& triple, TaskVariant variant,
                                 const FeatureProvider& features) {
  ProbeDataset d;
  d.n_patches = manifest.grid_rows * manifest.grid_cols;
  std::optional<FeatureShape> shape;
  for (const auto& r : manifest.records) {
    if (!(r.triple == triple)) continue;
    Fold* fold = nullptr;
    switch (r.split) {
      case Split::Train: fold = &d.train; break;
      case Split::Val: fold = &d.val; break;
      case Split::Test: fold = &d.test; break;
      case Split::Unassigned: continue;
    }
    const FeatureTensor t = features(r);
    if (!shape) {
      if (t.n_tokens < static_cast<std::uint32_t>(d.n_patches)) {
        throw Error(ErrorCode::ShapeMismatch, "feature tensor has " + std::to_string(t.n_tokens) + " tokens but the grid has " +
                                                  std::to_string(d.n_patches) + " patches");
      }
      shape = FeatureShape{t.n_tokens, t.dim};
      d.n_tokens = static_cast<int>(t.n_tokens);
      d.dim = static_cast<int>(t.dim);
    } else if (t.n_tokens != shape->n_tokens || t.dim != shape->dim) {
      throw Error(ErrorCode::ShapeMismatch, "features of " + r.sample_id + " differ in shape from earlier records");
    }
    d.add(*fold, t.values, label_index(r.label(variant)));
  }
  return d;
}

std::string triple_label(const Manifest& manifest, const TripleSpec& t) {
  return manifest.category_name(t.source) + ">" + manifest.category_name(t.target) + "@" +
         manifest.category_name(t.viewpoint);
}

EvalReport run_protocol(const Manifest& manifest, const FeatureProvider& features, const ProtocolSpec& spec) {
  if (spec.heads.empty() || spec.variants.empty() || spec.training.seeds.empty()) {
    throw Error(ErrorCode::InvalidParameter, "protocol needs at least one head, variant and seed");
  }
  std::vector<std::string> environments;
  std::vector<TripleSpec> triples = spec.triples;
  const bool all_triples = triples.empty();
  for (const auto& r : manifest.records) {
    if (std::find(environments.begin(), environments.end(), r.environment) == environments.end()) {
      environments.push_back(r.environment);
    }
    if (all_triples && std::find(triples.begin(), triples.end(), r.triple) == triples.end()) triples.push_back(r.triple);
  }
  if (environments.empty()) throw Error(ErrorCode::EmptyInput, "manifest has no records");

  EvalReport report;
  for (const auto& env : environments) {
    Manifest subset = manifest;
    subset.records.clear();
    for (const auto& r : manifest.records) {
      if (r.environment == env) subset.records.push_back(r);
    }
    for (const auto& triple : triples) {
      for (TaskVariant variant : spec.variants) {
        const ProbeDataset data = build_probe_dataset(subset, triple, variant, features);
        if (data.train.size() == 0 && data.val.size() == 0 && data.test.size() == 0) {
          throw Error(ErrorCode::EmptyFold, "no records for triple " + triple_label(manifest, triple) + " in " + env);
        }
        if (data.test.size() == 0) throw Error(ErrorCode::EmptyFold, "test fold is empty for " + env);
        for (HeadKind head : spec.heads) {
          for (std::uint64_t seed : spec.training.seeds) {
            TrainConfig base = spec.training.make(head, data.dim, seed);
            if (head == HeadKind::LinearGap) base.head.pool = spec.linear_pool;
            const SweepResult sw = sweep(data, base, spec.training.grid, spec.jobs);
            EvalRow row;
            row.model = spec.model;
            row.environment = env;
            row.triple = triple_label(manifest, triple);
            row.head = std::string(to_string(head));
            if (head == HeadKind::LinearGap && spec.linear_pool == PoolSource::Cls) row.head = "linear_cls";
            row.seed = seed;
            row.variant = std::string(to_string(variant));
            row.layer = spec.layer.value_or(-1);
            row.lr = sw.best.lr;
            row.dropout = sw.best.dropout;
            row.best_epoch = sw.best.best_epoch;
            row.val_accuracy = sw.best.best_val_accuracy;
            row.test_accuracy = evaluate_accuracy(sw.best.params, data, data.test);
            report.rows.push_back(row);
          }
        }
      }
    }
  }
  report.aggregates = aggregate(report.rows);

  auto join_num = [](const auto& xs) {
    std::vector<std::string> parts;
    for (auto x : xs) parts.push_back(format_double(static_cast<double>(x)));
    return join(parts, ",");
  };
  std::vector<std::string> head_names;
  for (HeadKind h : spec.heads) head_names.emplace_back(to_string(h));
  report.metadata = {
      {"model", spec.model},
      {"heads", join(head_names, ",")},
      {"seeds", join_num(spec.training.seeds)},
      {"lr_grid", join_num(spec.training.grid.lrs)},
      {"dropout_grid", join_num(spec.training.grid.dropouts)},
      {"weight_decay", format_double(spec.training.weight_decay)},
      {"batch_size", std::to_string(spec.training.batch_size)},
      {"epochs", join_num(std::vector<int>{spec.training.linear.epochs, spec.training.abmilp.epochs,
                                           spec.training.efficient.epochs})},
      {"warmup_epochs", join_num(std::vector<int>{spec.training.linear.warmup_epochs, spec.training.abmilp.warmup_epochs,
                                                  spec.training.efficient.warmup_epochs})},
      {"abmilp_hidden", std::to_string(spec.training.abmilp_hidden)},
      {"layer", spec.layer ? std::to_string(*spec.layer) : "-"},
  };
  return report;
}

std::vector<AggregateRow> aggregate(const std::vector<EvalRow>& rows) {
  std::vector<AggregateRow> out;
  std::vector<double> sums;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const AggregateRow& a) {
      return a.model == r.model && a.environment == r.environment && a.head == r.head && a.variant == r.variant &&
             a.layer == r.layer;
    });
    if (it == out.end()) {
      out.push_back({r.model, r.environment, r.head, r.variant, r.layer, 0.0, 0});
      sums.push_back(0.0);
      it = out.end() - 1;
    }
    sums[static_cast<std::size_t>(it - out.begin())] += r.test_accuracy;
    ++it->n;
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].mean_test_accuracy = sums[i] / static_cast<double>(out[i].n);
  return out;
}

EvalReport merge_reports(const std::vector<EvalReport>& reports) {
  EvalReport out;
  for (const auto& r : reports) {
    out.rows.insert(out.rows.end(), r.rows.begin(), r.rows.end());
    for (const auto& kv : r.metadata) {
      if (std::find(out.metadata.begin(), out.metadata.end(), kv) == out.metadata.end()) out.metadata.push_back(kv);
    }
  }
  out.aggregates = aggregate(out.rows);
  return out;
}

std::string report_tsv(const EvalReport& report) {
  std::string out = std::string(kReportMagic) + "\tversion=1\n";
  for (const auto& [k, v] : report.metadata) out += "#meta\t" + k + "\t" + v + "\n";
  out += std::string(kReportColumns) + "\n";
  for (const auto& r : report.rows) {
    out += join({r.model, r.environment, r.triple, r.head, std::to_string(r.seed), r.variant, std::to_string(r.layer),
                 format_double(r.lr), format_double(r.dropout), std::to_string(r.best_epoch),
                 format_double(r.val_accuracy), format_double(r.test_accuracy)},
                "\t") +
           "\n";
  }
  return out;
}

EvalReport parse_report_tsv(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.empty() || !lines[0].starts_with(kReportMagic)) throw Error(ErrorCode::CorruptFile, "not an eval report");
  if (lines[0] != std::string(kReportMagic) + "\tversion=1") throw Error(ErrorCode::SchemaMismatch, "unsupported report version");
  EvalReport report;
  bool header_seen = false;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_fields(lines[i]);
    if (f[0] == "#meta") {
      if (f.size() != 3) throw Error(ErrorCode::CorruptFile, "bad #meta line");
      report.metadata.emplace_back(f[1], f[2]);
    } else if (lines[i] == kReportColumns) {
      header_seen = true;
    } else {
      if (!header_seen || f.size() != 12) throw Error(ErrorCode::CorruptFile, "bad report row " + std::to_string(i + 1));
      EvalRow r;
      r.model = f[0];
      r.environment = f[1];
      r.triple = f[2];
      r.head = f[3];
      r.seed = static_cast<std::uint64_t>(parse_int(f[4]));
      r.variant = f[5];
      r.layer = static_cast<int>(parse_int(f[6]));
      r.lr = parse_double(f[7]);
      r.dropout = parse_double(f[8]);
      r.best_epoch = static_cast<int>(parse_int(f[9]));
      r.val_accuracy = parse_double(f[10]);
      r.test_accuracy = parse_double(f[11]);
      report.rows.push_back(r);
    }
  }
  report.aggregates = aggregate(report.rows);
  return report;
}

std::string report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
  for (const auto& [k, v] : report.metadata) meta[k] = v;
  j["metadata"] = meta;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"model", r.model},
                    {"environment", r.environment},
                    {"triple", r.triple},
                    {"head", r.head},
                    {"seed", r.seed},
                    {"variant", r.variant},
                    {"layer", r.layer},
                    {"lr", r.lr},
                    {"dropout", r.dropout},
                    {"best_epoch", r.best_epoch},
                    {"val_accuracy", r.val_accuracy},
                    {"test_accuracy", r.test_accuracy}});
  }
  j["rows"] = rows;
  nlohmann::ordered_json aggs = nlohmann::ordered_json::array();
  for (const auto& a : report.aggregates) {
    aggs.push_back({{"model", a.model},
                    {"environment", a.environment},
                    {"head", a.head},
                    {"variant", a.variant},
                    {"layer", a.layer},
                    {"mean_test_accuracy", a.mean_test_accuracy},
                    {"n", a.n}});
  }
  j["aggregates"] = aggs;

  // Peak layer per (model, environment, head, variant) when several layers were evaluated.
  nlohmann::ordered_json peaks = nlohmann::ordered_json::array();
  std::vector<const AggregateRow*> best;
  for (const auto& a : report.aggregates) {
    if (a.layer < 0) continue;
    auto it = std::find_if(best.begin(), best.end(), [&](const AggregateRow* b) {
      return b->model == a.model && b->environment == a.environment && b->head == a.head && b->variant == a.variant;
    });
    if (it == best.end()) {
      best.push_back(&a);
    } else if (a.mean_test_accuracy > (*it)->mean_test_accuracy) {
      *it = &a;
    }
  }
  for (const auto* b : best) {
    peaks.push_back({{"model", b->model},
                     {"environment", b->environment},
                     {"head", b->head},
                     {"variant", b->variant},
                     {"peak_layer", b->layer},
                     {"accuracy", b->mean_test_accuracy}});
  }
  if (!peaks.empty()) j["peak_layers"] = peaks;

  // Mean rank per head once more than one model is present.
  std::vector<std::string> models;
  for (const auto& a : report.aggregates) {
    if (std::find(models.begin(), models.end(), a.model) == models.end()) models.push_back(a.model);
  }
  if (models.size() >= 2) {
    nlohmann::ordered_json ranks = nlohmann::ordered_json::object();
    std::vector<std::string> heads;
    for (const auto& a : report.aggregates) {
      if (std::find(heads.begin(), heads.end(), a.head) == heads.end()) heads.push_back(a.head);
    }
    for (const auto& h : heads) {
      try {
        const ScoreTable t = accuracy_table(report, h);
        const auto mr = mean_rank(t.values);
        nlohmann::ordered_json per_model = nlohmann::ordered_json::object();
        for (std::size_t i = 0; i < t.rows.size(); ++i) per_model[t.rows[i]] = mr[i];
        ranks[h] = per_model;
      } catch (const Error&) {
        // Incomplete tables (a model missing a column) carry no rank.
      }
    }
    j["mean_rank"] = ranks;
  }
  return j.dump(2) + "\n";
}

std::size_t ScoreTable::column_index(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return i;
  }
  throw Error(ErrorCode::InvalidParameter, "no column '" + std::string(name) + "' (have: " + join(columns, ", ") + ")");
}

std::string table_tsv(const ScoreTable& t) {
  std::string out = "model";
  for (const auto& c : t.columns) out += "\t" + c;
  out += "\n";
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    out += t.rows[i];
    for (double v : t.values[i]) out += "\t" + format_double(v);
    out += "\n";
  }
  return out;
}

ScoreTable parse_table_tsv(std::string_view text) {
  std::vector<std::string_view> lines;
  for (auto line : lines_of(text)) {
    if (!line.starts_with("#")) lines.push_back(line);
  }
  if (lines.empty()) throw Error(ErrorCode::EmptyInput, "score table is empty");
  ScoreTable t;
  auto header = split_fields(lines[0]);
  if (header.size() < 2) throw Error(ErrorCode::CorruptFile, "score table needs a name column and at least one metric");
  t.columns.assign(header.begin() + 1, header.end());
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_fields(lines[i]);
    if (f.size() != header.size()) {
      throw Error(ErrorCode::CorruptFile, "score table row " + std::to_string(i + 1) + " has " + std::to_string(f.size()) +
                                              " fields, expected " + std::to_string(header.size()));
    }
    t.rows.push_back(f[0]);
    std::vector<double> values;
    for (std::size_t c = 1; c < f.size(); ++c) values.push_back(parse_double(f[c]));
    t.values.push_back(std::move(values));
  }
  return t;
}

ScoreTable accuracy_table(const EvalReport& report, std::string_view head) {
  ScoreTable t;
  std::map<std::pair<std::string, std::string>, double> cells;
  for (const auto& a : report.aggregates) {
    if (a.head != head) continue;
    std::string column = a.environment + "/" + a.variant;
    if (a.layer >= 0) column += "@" + std::to_string(a.layer);
    if (std::find(t.rows.begin(), t.rows.end(), a.model) == t.rows.end()) t.rows.push_back(a.model);
    if (std::find(t.columns.begin(), t.columns.end(), column) == t.columns.end()) t.columns.push_back(column);
    cells[{a.model, column}] = a.mean_test_accuracy;
  }
  if (t.rows.empty()) throw Error(ErrorCode::EmptyInput, "report has no rows for head '" + std::string(head) + "'");
  for (const auto& m : t.rows) {
    std::vector<double> row;
    for (const auto& c : t.columns) {
      const auto it = cells.find({m, c});
      if (it == cells.end()) throw Error(ErrorCode::InvalidParameter, "model " + m + " has no accuracy for " + c);
      row.push_back(it->second);
    }
    t.values.push_back(std::move(row));
  }
  return t;
}

std::vector<double> column_ranks(std::span<const double> column) {
  std::vector<double> ranks(column.size());
  for (std::size_t i = 0; i < column.size(); ++i) {
    std::size_t greater = 0;
    std::size_t equal = 0;
    for (double v : column) {
      if (v > column[i]) ++greater;
      if (v == column[i]) ++equal;
    }
    ranks[i] = static_cast<double>(greater) + 0.5 * static_cast<double>(equal + 1);
  }
  return ranks;
}

std::vector<double> mean_rank(const std::vector<std::vector<double>>& scores) {
  if (scores.size() < 2) throw Error(ErrorCode::InvalidParameter, "mean rank needs at least two models");
  const std::size_t n_cols = scores.front().size();
  if (n_cols == 0) throw Error(ErrorCode::InvalidParameter, "mean rank needs at least one column");
  for (const auto& row : scores) {
    if (row.size() != n_cols) throw Error(ErrorCode::InvalidParameter, "score table rows differ in length");
    for (double v : row) {
      if (!std::isfinite(v)) throw Error(ErrorCode::InvalidParameter, "score table contains a non-finite value");
    }
  }
  std::vector<double> sums(scores.size(), 0.0);
  std::vector<double> column(scores.size());
  for (std::size_t c = 0; c < n_cols; ++c) {
    for (std::size_t m = 0; m < scores.size(); ++m) column[m] = scores[m][c];
    const auto ranks = column_ranks(column);
    for (std::size_t m = 0; m < scores.size(); ++m) sums[m] += ranks[m];
  }
  for (double& s : sums) s /= static_cast<double>(n_cols);
  return sums;
}

double pearson_r(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw Error(ErrorCode::InvalidParameter, "series lengths differ");
  if (xs.size() < 3) throw Error(ErrorCode::InvalidParameter, "correlation needs at least three points");
  const auto n = static_cast<double>(xs.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw Error(ErrorCode::DegenerateVariance, "a series has zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double r_squared(std::span<const double> xs, std::span<const double> ys) {
  const double r = pearson_r(xs, ys);
  return r * r;
}

std::string_view to_string(FlowAggregation a) noexcept { return a == FlowAggregation::Sum ? "sum" : "mean"; }

FlowAggregation parse_aggregation(std::string_view text) {
  if (text == "sum") return FlowAggregation::Sum;
  if (text == "mean") return FlowAggregation::Mean;
  throw Error(ErrorCode::InvalidParameter, "unknown flow aggregation '" + std::string(text) + "' (sum, mean)");
}

FlowCurve attention_flow(const AttentionTensor& attn, std::span<const CategoryId> token_categories, CategoryId source,
                         CategoryId destination, FlowAggregation aggregation) {
  if (token_categories.size() != attn.n_tokens) {
    throw Error(ErrorCode::ShapeMismatch, "category map lists " + std::to_string(token_categories.size()) +
                                              " tokens, attention has " + std::to_string(attn.n_tokens));
  }
  std::vector<std::size_t> src;
  std::vector<std::size_t> dst;
  for (std::size_t i = 0; i < token_categories.size(); ++i) {
    if (token_categories[i] == source) src.push_back(i);
    if (token_categories[i] == destination) dst.push_back(i);
  }
  if (src.empty()) throw Error(ErrorCode::EmptyCategory, "source category " + std::to_string(source) + " owns no tokens");
  if (dst.empty() && aggregation == FlowAggregation::Mean) {
    throw Error(ErrorCode::EmptyCategory, "destination category " + std::to_string(destination) + " owns no tokens");
  }
  if (attn.n_heads == 0) throw Error(ErrorCode::EmptyInput, "attention has no heads");

  FlowCurve curve;
  curve.aggregation = aggregation;
  const std::size_t n = attn.n_tokens;
  for (std::size_t l = 0; l < attn.n_layers; ++l) {
    double total = 0.0;
    for (std::size_t h = 0; h < attn.n_heads; ++h) {
      const float* block = attn.values.data() + attn.offset(l, h);
      for (std::size_t i : src) {
        double row = 0.0;
        for (std::size_t j : dst) row += block[i * n + j];
        if (aggregation == FlowAggregation::Mean) row /= static_cast<double>(dst.size());
        total += row;
      }
    }
    curve.values.push_back(total / static_cast<double>(attn.n_heads * src.size()));
  }
  return curve;
}

FlowCurve flow_differential(const FlowCurve& a, const FlowCurve& b) {
  if (a.values.size() != b.values.size() || a.aggregation != b.aggregation) {
    throw Error(ErrorCode::ShapeMismatch, "flow curves differ in length or aggregation");
  }
  FlowCurve out;
  out.aggregation = a.aggregation;
  for (std::size_t i = 0; i < a.values.size(); ++i) out.values.push_back(a.values[i] - b.values[i]);
  return out;
}

// Charts ---------------------------------------------------------------------

namespace {

constexpr const char* kPalette[] = {"#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377", "#bbbbbb"};
constexpr double kWidth = 640;
constexpr double kHeight = 400;
constexpr double kLeft = 60;
constexpr double kRight = 150;
constexpr double kTop = 40;
constexpr double kBottom = 50;

std::string svg_open(const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(kWidth, 0) + "\" height=\"" + fixed(kHeight, 0) +
         "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
         "<text x=\"" + fixed(kWidth / 2, 1) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" + xml_escape(title) +
         "</text>\n";
}

std::string legend(const std::vector<Series>& series) {
  std::string out;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = kTop + 10 + 18.0 * static_cast<double>(i);
    out += "<rect x=\"" + fixed(kWidth - kRight + 15, 1) + "\" y=\"" + fixed(y - 9, 1) +
           "\" width=\"12\" height=\"12\" fill=\"" + kPalette[i % std::size(kPalette)] + "\"/>\n";
    out += "<text x=\"" + fixed(kWidth - kRight + 32, 1) + "\" y=\"" + fixed(y + 1, 1) + "\">" +
           xml_escape(series[i].name) + "</text>\n";
  }
  return out;
}

std::string y_axis(double lo, double hi, int ticks, bool log_y) {
  std::string out;
  const double plot_h = kHeight - kTop - kBottom;
  for (int t = 0; t <= ticks; ++t) {
    const double frac = static_cast<double>(t) / ticks;
    const double y = kHeight - kBottom - frac * plot_h;
    const double v = log_y ? std::pow(10.0, lo + frac * (hi - lo)) : lo + frac * (hi - lo);
    out += "<line x1=\"" + fixed(kLeft, 1) + "\" x2=\"" + fixed(kWidth - kRight, 1) + "\" y1=\"" + fixed(y, 1) +
           "\" y2=\"" + fixed(y, 1) + "\" stroke=\"#dddddd\"/>\n";
    std::ostringstream label;
    label.precision(3);
    label << v;
    out += "<text x=\"" + fixed(kLeft - 6, 1) + "\" y=\"" + fixed(y + 4, 1) + "\" text-anchor=\"end\">" + label.str() +
           "</text>\n";
  }
  return out;
}

}  // namespace

std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& categories,
                          const std::vector<Series>& series, double y_max) {
  std::string out = svg_open(title) + y_axis(0.0, y_max, 4, false);
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  const double group_w = plot_w / static_cast<double>(std::max<std::size_t>(1, categories.size()));
  const double bar_w = 0.8 * group_w / static_cast<double>(std::max<std::size_t>(1, series.size()));
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const double gx = kLeft + group_w * static_cast<double>(c);
    for (std::size_t s = 0; s < series.size(); ++s) {
      if (c >= series[s].values.size()) continue;
      const double v = std::clamp(series[s].values[c], 0.0, y_max);
      const double h = plot_h * v / y_max;
      out += "<rect x=\"" + fixed(gx + 0.1 * group_w + bar_w * static_cast<double>(s), 1) + "\" y=\"" +
             fixed(kHeight - kBottom - h, 1) + "\" width=\"" + fixed(bar_w, 1) + "\" height=\"" + fixed(h, 1) +
             "\" fill=\"" + kPalette[s % std::size(kPalette)] + "\"/>\n";
    }
    out += "<text x=\"" + fixed(gx + group_w / 2, 1) + "\" y=\"" + fixed(kHeight - kBottom + 18, 1) +
           "\" text-anchor=\"middle\">" + xml_escape(categories[c]) + "</text>\n";
  }
  return out + legend(series) + "</svg>\n";
}

std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::vector<Series>& series,
                           bool log_y) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  std::size_t n = 0;
  for (const auto& s : series) {
    n = std::max(n, s.values.size());
    for (double v : s.values) {
      const double t = log_y ? std::log10(std::max(v, 1e-12)) : v;
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
  }
  if (!std::isfinite(lo)) {
    lo = 0.0;
    hi = 1.0;
  }
  if (!log_y) lo = std::min(lo, 0.0);
  if (hi - lo < 1e-12) hi = lo + 1.0;
  std::string out = svg_open(title) + y_axis(lo, hi, 4, log_y);
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](std::size_t i) {
    return kLeft + (n > 1 ? plot_w * static_cast<double>(i) / static_cast<double>(n - 1) : plot_w / 2);
  };
  for (std::size_t s = 0; s < series.size(); ++s) {
    std::string points;
    for (std::size_t i = 0; i < series[s].values.size(); ++i) {
      const double v = log_y ? std::log10(std::max(series[s].values[i], 1e-12)) : series[s].values[i];
      const double y = kHeight - kBottom - plot_h * (v - lo) / (hi - lo);
      points += fixed(px(i), 1) + "," + fixed(y, 1) + " ";
    }
    out += "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" + std::string(kPalette[s % std::size(kPalette)]) +
           "\" points=\"" + points + "\"/>\n";
  }
  for (std::size_t i = 0; i < n; ++i) {
    out += "<text x=\"" + fixed(px(i), 1) + "\" y=\"" + fixed(kHeight - kBottom + 16, 1) + "\" text-anchor=\"middle\">" +
           std::to_string(i) + "</text>\n";
  }
  out += "<text x=\"" + fixed(kLeft + plot_w / 2, 1) + "\" y=\"" + fixed(kHeight - 10, 1) + "\" text-anchor=\"middle\">" +
         xml_escape(x_label) + "</text>\n";
  return out + legend(series) + "</svg>\n";
}

std::string svg_scatter(const std::string& title, const std::string& x_label, const std::string& y_label,
                        std::span<const double> xs, std::span<const double> ys, const std::vector<std::string>& labels) {
  if (xs.size() != ys.size() || xs.empty()) throw Error(ErrorCode::InvalidParameter, "scatter needs equal, non-empty series");
  const auto [xmin_it, xmax_it] = std::minmax_element(xs.begin(), xs.end());
  const auto [ymin_it, ymax_it] = std::minmax_element(ys.begin(), ys.end());
  double x0 = *xmin_it, x1 = *xmax_it, y0 = *ymin_it, y1 = *ymax_it;
  if (x1 - x0 < 1e-12) x1 = x0 + 1.0;
  if (y1 - y0 < 1e-12) y1 = y0 + 1.0;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + plot_w * (x - x0) / (x1 - x0); };
  auto py = [&](double y) { return kHeight - kBottom - plot_h * (y - y0) / (y1 - y0); };
  std::string out = svg_open(title) + y_axis(y0, y1, 4, false);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out += "<circle cx=\"" + fixed(px(xs[i]), 1) + "\" cy=\"" + fixed(py(ys[i]), 1) + "\" r=\"4\" fill=\"" + kPalette[0] +
           "\"/>\n";
    if (i < labels.size()) {
      out += "<text x=\"" + fixed(px(xs[i]) + 6, 1) + "\" y=\"" + fixed(py(ys[i]) - 6, 1) + "\" font-size=\"10\">" +
             xml_escape(labels[i]) + "</text>\n";
    }
  }
  // Least-squares line over the plotted range.
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(xs.size());
  my /= static_cast<double>(xs.size());
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx > 0) {
    const double slope = sxy / sxx;
    out += "<line x1=\"" + fixed(px(x0), 1) + "\" y1=\"" + fixed(py(my + slope * (x0 - mx)), 1) + "\" x2=\"" +
           fixed(px(x1), 1) + "\" y2=\"" + fixed(py(my + slope * (x1 - mx)), 1) + "\" stroke=\"" + kPalette[1] +
           "\" stroke-dasharray=\"4 3\"/>\n";
  }
  out += "<text x=\"" + fixed(kLeft + plot_w / 2, 1) + "\" y=\"" + fixed(kHeight - 10, 1) + "\" text-anchor=\"middle\">" +
         xml_escape(x_label) + "</text>\n";
  out += "<text x=\"14\" y=\"" + fixed(kTop + plot_h / 2, 1) + "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
         fixed(kTop + plot_h / 2, 1) + ")\">" + xml_escape(y_label) + "</text>\n";
  return out + "</svg>\n";
}

}  // namespace spatial
