#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spatial/probes.hpp"

namespace spatial {

/// Learning rate at optimizer step `step` (0-based): linear ramp from 0 over
/// `warmup` steps, then half-cosine decay to 0 at `total`.
double cosine_lr(std::int64_t step, std::int64_t warmup, std::int64_t total, double base_lr);

template <typename S>
struct AdamState {
  Vector<S> m;
  Vector<S> v;
  std::uint64_t t = 0;
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// AdamW with decoupled decay: p <- p(1 - lr wd), then the bias-corrected Adam step.
template <typename S>
void adamw_step(ProbeParams<S>& params, const Vector<S>& grads, AdamState<S>& state, double lr, double weight_decay,
                AdamHyper hyper = {});

/// Flattened token tensors of one fold, sample-major.
struct Fold {
  std::vector<float> tokens;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

struct ProbeDataset {
  int n_tokens = 0;   // rows per sample
  int n_patches = 0;  // leading patch rows
  int dim = 0;
  Fold train;
  Fold val;
  Fold test;

  TokenInput<float> input(const Fold& fold, std::size_t i) const;
  void add(Fold& fold, const std::vector<float>& values, int label) const;
};

/// Replaces every sample by its pooled vector (one row, one "patch"), which
/// is all a linear head ever reads.
ProbeDataset pre_pool(const ProbeDataset& dataset, PoolSource source);

struct HeadSchedule {
  int epochs = 500;
  int warmup_epochs = 100;
  bool operator==(const HeadSchedule&) const = default;
};

struct TrainConfig {
  HeadConfig head;
  double lr = 1e-3;
  double dropout = 0.2;
  double weight_decay = 1e-3;
  int batch_size = 256;
  HeadSchedule schedule;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainResult {
  ProbeParams<float> params;
  std::vector<double> train_loss;    // mean loss per epoch
  std::vector<double> val_accuracy;  // per epoch
  int best_epoch = -1;
  double best_val_accuracy = 0.0;
  double lr = 0.0;
  double dropout = 0.0;
  std::uint64_t seed = 0;
  bool diverged = false;
  double wall_clock_s = 0.0;  // not part of equality or serialization

  bool same_outcome(const TrainResult& other) const;
};

TrainResult train_probe(const ProbeDataset& dataset, const TrainConfig& config);

double evaluate_accuracy(const ProbeParams<float>& params, const ProbeDataset& dataset, const Fold& fold);

struct SweepGrid {
  std::vector<double> lrs{1e-2, 1e-3, 1e-4};
  std::vector<double> dropouts{0.2, 0.4, 0.6};
};

struct SweepCell {
  double lr = 0.0;
  double dropout = 0.0;
  double best_val_accuracy = 0.0;
  bool diverged = false;
};

struct SweepResult {
  TrainResult best;
  std::vector<SweepCell> cells;  // lr-major grid order
};

/// Trains every (lr, dropout) cell and keeps the highest validation accuracy;
/// ties go to the lower lr, then the lower dropout. Diverged cells only win
/// when every cell diverged.
SweepResult sweep(const ProbeDataset& dataset, const TrainConfig& base, const SweepGrid& grid, unsigned jobs = 1);

/// The hyperparameter table: per-head schedules plus the shared sweep grid.
struct TrainingSettings {
  SweepGrid grid;
  double weight_decay = 1e-3;
  int batch_size = 256;
  HeadSchedule linear{1000, 200};
  HeadSchedule abmilp{500, 100};
  HeadSchedule efficient{500, 100};
  int abmilp_hidden = 128;
  int n_queries = 4;
  std::vector<std::uint64_t> seeds{0, 1};

  const HeadSchedule& schedule(HeadKind kind) const;
  /// Base config for one head; lr and dropout are filled in by the sweep.
  TrainConfig make(HeadKind kind, int input_dim, std::uint64_t seed) const;
};

std::string train_result_json(const TrainResult& result, const HeadConfig& head);

}  // namespace spatial
