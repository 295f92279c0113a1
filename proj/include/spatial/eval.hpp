#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spatial/encoder.hpp"
#include "spatial/probes.hpp"
#include "spatial/store.hpp"
#include "spatial/trainer.hpp"

namespace spatial {

/// Supplies the feature tensor of one record. Throws MissingFeatures when
/// the record has none.
using FeatureProvider = std::function<FeatureTensor(const SampleRecord&)>;

/// Reads `features_ref` relative to `base_dir`, substituting `{layer}` when a
/// layer is given.
FeatureProvider file_features(std::filesystem::path base_dir, std::optional<int> layer = std::nullopt);
/// Encodes features on the fly from the stored layout.
FeatureProvider oracle_features(CameraIntrinsics intrinsics, OracleSpec spec);

std::string resolve_layer(std::string_view ref, std::optional<int> layer);

/// Folds for one (triple, variant) from the records' split assignment.
ProbeDataset build_probe_dataset(const Manifest& manifest, const TripleSpec& triple, TaskVariant variant,
                                 const FeatureProvider& features);

struct ProtocolSpec {
  std::string model = "oracle";
  std::vector<HeadKind> heads{HeadKind::LinearGap, HeadKind::Abmilp, HeadKind::Efficient};
  std::vector<TaskVariant> variants{TaskVariant::Ego, TaskVariant::Allo};
  std::vector<TripleSpec> triples;  // empty: every triple present in the manifest
  TrainingSettings training;
  PoolSource linear_pool = PoolSource::PatchMean;
  std::optional<int> layer;
  unsigned jobs = 1;
};

struct EvalRow {
  std::string model;
  std::string environment;
  std::string triple;
  std::string head;
  std::uint64_t seed = 0;
  std::string variant;
  int layer = -1;
  double lr = 0.0;
  double dropout = 0.0;
  int best_epoch = -1;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;

  bool operator==(const EvalRow&) const = default;
};

/// Mean test accuracy over triples and seeds.
struct AggregateRow {
  std::string model;
  std::string environment;
  std::string head;
  std::string variant;
  int layer = -1;
  double mean_test_accuracy = 0.0;
  std::size_t n = 0;

  bool operator==(const AggregateRow&) const = default;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<AggregateRow> aggregates;
  std::vector<std::pair<std::string, std::string>> metadata;

  bool operator==(const EvalReport&) const = default;
};

std::string triple_label(const Manifest& manifest, const TripleSpec& triple);

/// For each (environment, triple, head, seed, variant): sweep on train/val,
/// score the selected parameters on test.
EvalReport run_protocol(const Manifest& manifest, const FeatureProvider& features, const ProtocolSpec& spec);

/// Recomputes aggregates from rows (grouped by model, environment, head, variant, layer).
std::vector<AggregateRow> aggregate(const std::vector<EvalRow>& rows);
EvalReport merge_reports(const std::vector<EvalReport>& reports);

std::string report_tsv(const EvalReport& report);
EvalReport parse_report_tsv(std::string_view text);
std::string report_json(const EvalReport& report);

/// A named numeric table: one row per model, one column per metric.
struct ScoreTable {
  std::vector<std::string> columns;
  std::vector<std::string> rows;
  std::vector<std::vector<double>> values;  // rows x columns

  std::size_t column_index(std::string_view name) const;
  bool operator==(const ScoreTable&) const = default;
};

std::string table_tsv(const ScoreTable& table);
ScoreTable parse_table_tsv(std::string_view text);

/// Model x (environment/variant) accuracy table for one head.
ScoreTable accuracy_table(const EvalReport& report, std::string_view head);

/// Per column rank 1 = highest; ties share the average rank; returns the mean over columns per row.
std::vector<double> mean_rank(const std::vector<std::vector<double>>& scores);
/// Per-column ranks with the same convention.
std::vector<double> column_ranks(std::span<const double> column);

double pearson_r(std::span<const double> xs, std::span<const double> ys);
double r_squared(std::span<const double> xs, std::span<const double> ys);

enum class FlowAggregation : std::uint8_t { Sum, Mean };
std::string_view to_string(FlowAggregation aggregation) noexcept;
FlowAggregation parse_aggregation(std::string_view text);

struct FlowCurve {
  std::vector<double> values;  // per layer
  FlowAggregation aggregation = FlowAggregation::Sum;

  bool operator==(const FlowCurve&) const = default;
};

/// Per layer: mean over heads and over source-category rows of the sum (or
/// mean) of attention into destination-category columns. `token_categories`
/// lists every token's category in token order (patches, then specials).
FlowCurve attention_flow(const AttentionTensor& attention, std::span<const CategoryId> token_categories,
                         CategoryId source, CategoryId destination, FlowAggregation aggregation = FlowAggregation::Sum);

FlowCurve flow_differential(const FlowCurve& a, const FlowCurve& b);

struct Series {
  std::string name;
  std::vector<double> values;
};

std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& categories,
                          const std::vector<Series>& series, double y_max = 1.0);
std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::vector<Series>& series,
                           bool log_y = false);
std::string svg_scatter(const std::string& title, const std::string& x_label, const std::string& y_label,
                        std::span<const double> xs, std::span<const double> ys, const std::vector<std::string>& labels);

}  // namespace spatial
