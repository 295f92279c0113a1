#include "spatial/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <json.hpp>

#include "spatial/error.hpp"
#include "spatial/geometry.hpp"
#include "spatial/parallel.hpp"
#include "spatial/rng.hpp"

namespace spatial {

namespace {

constexpr std::uint64_t kShuffleStream = 6;
constexpr std::uint64_t kDropoutStream = 7;

bool all_finite(const Vector<float>& v) { return v.allFinite(); }

}  // namespace

double cosine_lr(std::int64_t step, std::int64_t warmup, std::int64_t total, double base_lr) {
  if (total <= 0 || warmup < 0 || warmup >= total || step < 0 || step > total || !(base_lr >= 0.0)) {
    throw Error(ErrorCode::InvalidParameter, "cosine_lr needs 0 <= step <= total and 0 <= warmup < total");
  }
  if (step < warmup) return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  return base_lr * 0.5 * (1.0 + std::cos(kPi * progress));
}

template <typename S>
void adamw_step(ProbeParams<S>& params, const Vector<S>& grads, AdamState<S>& state, double lr, double weight_decay,
                AdamHyper hyper) {
  const Eigen::Index n = params.values().size();
  if (grads.size() != n) throw Error(ErrorCode::ShapeMismatch, "gradient length does not match parameters");
  if (state.m.size() == 0) {
    state.m = Vector<S>::Zero(n);
    state.v = Vector<S>::Zero(n);
  }
  if (state.m.size() != n || state.v.size() != n) throw Error(ErrorCode::ShapeMismatch, "optimizer state shape mismatch");
  ++state.t;
  const S b1 = static_cast<S>(hyper.beta1);
  const S b2 = static_cast<S>(hyper.beta2);
  state.m = b1 * state.m + (S(1) - b1) * grads;
  state.v = b2 * state.v + (S(1) - b2) * grads.cwiseProduct(grads);
  const S c1 = S(1) - static_cast<S>(std::pow(hyper.beta1, static_cast<double>(state.t)));
  const S c2 = S(1) - static_cast<S>(std::pow(hyper.beta2, static_cast<double>(state.t)));
  const S step = static_cast<S>(lr);
  const S decay = S(1) - static_cast<S>(lr * weight_decay);
  const S eps = static_cast<S>(hyper.eps);
  Vector<S>& p = params.mutable_values();
  p *= decay;
  p.array() -= step * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + eps);
}

template void adamw_step<float>(ProbeParams<float>&, const Vector<float>&, AdamState<float>&, double, double, AdamHyper);
template void adamw_step<double>(ProbeParams<double>&, const Vector<double>&, AdamState<double>&, double, double,
                                 AdamHyper);

TokenInput<float> ProbeDataset::input(const Fold& fold, std::size_t i) const {
  const float* base = fold.tokens.data() + i * static_cast<std::size_t>(n_tokens) * static_cast<std::size_t>(dim);
  return {Eigen::Map<const Matrix<float>>(base, n_tokens, dim), n_patches};
}

void ProbeDataset::add(Fold& fold, const std::vector<float>& values, int label) const {
  if (values.size() != static_cast<std::size_t>(n_tokens) * static_cast<std::size_t>(dim)) {
    throw Error(ErrorCode::ShapeMismatch, "sample has " + std::to_string(values.size()) + " values, expected " +
                                              std::to_string(n_tokens) + " x " + std::to_string(dim));
  }
  fold.tokens.insert(fold.tokens.end(), values.begin(), values.end());
  fold.labels.push_back(label);
}

ProbeDataset pre_pool(const ProbeDataset& d, PoolSource source) {
  ProbeDataset out;
  out.n_tokens = 1;
  out.n_patches = 1;
  out.dim = d.dim;
  auto convert = [&](const Fold& in, Fold& dst) {
    dst.labels = in.labels;
    dst.tokens.resize(in.size() * static_cast<std::size_t>(d.dim));
    for (std::size_t i = 0; i < in.size(); ++i) {
      const auto x = d.input(in, i);
      Matrix<float> rows;
      if (source == PoolSource::Cls) {
        if (x.tokens.rows() <= x.n_patches) throw Error(ErrorCode::EmptyInput, "CLS pooling needs a special token");
        rows = x.tokens.row(x.n_patches);
      } else {
        rows = x.tokens.topRows(x.n_patches);
      }
      const Vector<float> w = Vector<float>::Constant(rows.rows(), 1.0f / static_cast<float>(rows.rows()));
      const Vector<float> z = weighted_pool<float>(rows, w);
      std::copy(z.data(), z.data() + d.dim, dst.tokens.begin() + static_cast<std::ptrdiff_t>(i * d.dim));
    }
  };
  convert(d.train, out.train);
  convert(d.val, out.val);
  convert(d.test, out.test);
  return out;
}

void TrainConfig::validate() const {
  head.validate();
  if (!(lr > 0.0) || !(dropout >= 0.0 && dropout < 1.0) || !(weight_decay >= 0.0) || batch_size <= 0 ||
      schedule.epochs <= 0 || schedule.warmup_epochs < 0 || schedule.warmup_epochs >= schedule.epochs) {
    throw Error(ErrorCode::InvalidParameter, "training config out of range (lr > 0, dropout in [0,1), 0 <= warmup < epochs)");
  }
}

bool TrainResult::same_outcome(const TrainResult& o) const {
  return params.same_values(o.params) && train_loss == o.train_loss && val_accuracy == o.val_accuracy &&
         best_epoch == o.best_epoch && best_val_accuracy == o.best_val_accuracy && lr == o.lr && dropout == o.dropout &&
         seed == o.seed && diverged == o.diverged;
}

double evaluate_accuracy(const ProbeParams<float>& params, const ProbeDataset& dataset, const Fold& fold) {
  if (fold.size() == 0) throw Error(ErrorCode::EmptyFold, "cannot evaluate on an empty fold");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < fold.size(); ++i) {
    const auto r = forward<float>(params, dataset.input(fold, i));
    if (argmax({r.logits.data(), static_cast<std::size_t>(r.logits.size())}) == fold.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(fold.size());
}

namespace {

TrainResult train_prepared(const ProbeDataset& data, const TrainConfig& cfg, PoolSource original_pool) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n = data.train.size();
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  const auto steps_per_epoch = static_cast<std::int64_t>((n + batch - 1) / batch);
  const std::int64_t total = steps_per_epoch * cfg.schedule.epochs;
  const std::int64_t warmup = steps_per_epoch * cfg.schedule.warmup_epochs;

  HeadConfig head = cfg.head;
  if (data.n_tokens == 1) head.pool = PoolSource::PatchMean;
  ProbeParams<float> params = ProbeParams<float>::init(head, cfg.seed);
  AdamState<float> adam;

  TrainResult result;
  result.lr = cfg.lr;
  result.dropout = cfg.dropout;
  result.seed = cfg.seed;
  result.params = params;

  const auto pooled_dim = static_cast<std::size_t>(head.pooled_dim());
  const float keep_scale = 1.0f / static_cast<float>(1.0 - cfg.dropout);
  std::vector<float> mask(pooled_dim);
  ForwardCache<float> cache;
  Vector<float> dlogits;
  Vector<float> grad_sum = Vector<float>::Zero(params.values().size());
  std::int64_t step = 0;

  for (int epoch = 0; epoch < cfg.schedule.epochs; ++epoch) {
    CounterRng shuffle_rng(CounterRng::derive_key(cfg.seed, static_cast<std::uint64_t>(epoch)), kShuffleStream);
    CounterRng dropout_rng(CounterRng::derive_key(cfg.seed, static_cast<std::uint64_t>(epoch)), kDropoutStream);
    const auto order = shuffled_indices(n, shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      grad_sum.setZero();
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t i = order[k];
        std::span<const float> m;
        if (cfg.dropout > 0.0) {
          for (auto& v : mask) v = dropout_rng.uniform() < cfg.dropout ? 0.0f : keep_scale;
          m = mask;
        }
        const auto r = forward<float>(params, data.input(data.train, i), m, &cache);
        loss_sum += cross_entropy<float>(r.logits, data.train.labels[i], &dlogits);
        grad_sum += backward<float>(params, cache, dlogits, false).params;
      }
      grad_sum /= static_cast<float>(stop - start);
      adamw_step<float>(params, grad_sum, adam, cosine_lr(step, warmup, total, cfg.lr), cfg.weight_decay);
      ++step;
    }
    const double mean_loss = loss_sum / static_cast<double>(n);
    result.train_loss.push_back(mean_loss);
    if (!std::isfinite(mean_loss) || !all_finite(params.values())) {
      result.diverged = true;
      break;
    }
    const double acc = evaluate_accuracy(params, data, data.val);
    result.val_accuracy.push_back(acc);
    if (acc > result.best_val_accuracy || result.best_epoch < 0) {
      result.best_val_accuracy = acc;
      result.best_epoch = epoch;
      result.params = params;
    }
  }
  HeadConfig out_head = result.params.config();
  out_head.pool = original_pool;
  result.params = ProbeParams<float>::from_values(out_head, result.params.values());
  result.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

void require_folds(const ProbeDataset& d) {
  if (d.train.size() == 0) throw Error(ErrorCode::EmptyFold, "training fold is empty");
  if (d.val.size() == 0) throw Error(ErrorCode::EmptyFold, "validation fold is empty");
}

}  // namespace

TrainResult train_probe(const ProbeDataset& dataset, const TrainConfig& config) {
  config.validate();
  require_folds(dataset);
  if (config.head.input_dim != dataset.dim) throw Error(ErrorCode::ShapeMismatch, "probe input dim differs from features");
  if (config.head.kind == HeadKind::LinearGap && dataset.n_tokens != 1) {
    return train_prepared(pre_pool(dataset, config.head.pool), config, config.head.pool);
  }
  return train_prepared(dataset, config, config.head.pool);
}

SweepResult sweep(const ProbeDataset& dataset, const TrainConfig& base, const SweepGrid& grid, unsigned jobs) {
  if (grid.lrs.empty() || grid.dropouts.empty()) throw Error(ErrorCode::InvalidParameter, "sweep grids must be non-empty");
  base.validate();
  require_folds(dataset);
  if (base.head.input_dim != dataset.dim) throw Error(ErrorCode::ShapeMismatch, "probe input dim differs from features");
  const bool pool_first = base.head.kind == HeadKind::LinearGap && dataset.n_tokens != 1;
  ProbeDataset pooled;
  if (pool_first) pooled = pre_pool(dataset, base.head.pool);
  const ProbeDataset& data = pool_first ? pooled : dataset;

  const std::size_t n_cells = grid.lrs.size() * grid.dropouts.size();
  std::vector<TrainResult> results(n_cells);
  parallel_for(n_cells, jobs, [&](std::size_t cell) {
    TrainConfig cfg = base;
    cfg.lr = grid.lrs[cell / grid.dropouts.size()];
    cfg.dropout = grid.dropouts[cell % grid.dropouts.size()];
    cfg.validate();
    results[cell] = train_prepared(data, cfg, base.head.pool);
  });

  SweepResult out;
  std::size_t best = 0;
  auto better = [&](const TrainResult& a, const TrainResult& b) {
    if (a.diverged != b.diverged) return !a.diverged;
    if (a.best_val_accuracy != b.best_val_accuracy) return a.best_val_accuracy > b.best_val_accuracy;
    if (a.lr != b.lr) return a.lr < b.lr;
    return a.dropout < b.dropout;
  };
  for (std::size_t cell = 0; cell < n_cells; ++cell) {
    out.cells.push_back({results[cell].lr, results[cell].dropout, results[cell].best_val_accuracy, results[cell].diverged});
    if (cell > 0 && better(results[cell], results[best])) best = cell;
  }
  out.best = std::move(results[best]);
  return out;
}

const HeadSchedule& TrainingSettings::schedule(HeadKind kind) const {
  switch (kind) {
    case HeadKind::LinearGap: return linear;
    case HeadKind::Abmilp: return abmilp;
    case HeadKind::Efficient: return efficient;
  }
  return linear;
}

TrainConfig TrainingSettings::make(HeadKind kind, int input_dim, std::uint64_t seed) const {
  TrainConfig c;
  c.head.kind = kind;
  c.head.input_dim = input_dim;
  c.head.hidden = abmilp_hidden;
  c.head.n_queries = n_queries;
  c.lr = grid.lrs.empty() ? 1e-3 : grid.lrs.front();
  c.dropout = grid.dropouts.empty() ? 0.0 : grid.dropouts.front();
  c.weight_decay = weight_decay;
  c.batch_size = batch_size;
  c.schedule = schedule(kind);
  c.seed = seed;
  return c;
}

std::string train_result_json(const TrainResult& r, const HeadConfig& head) {
  nlohmann::ordered_json j;
  j["head"] = std::string(to_string(head.kind));
  j["pool"] = head.pool == PoolSource::Cls ? "cls" : "patch_mean";
  j["input_dim"] = head.input_dim;
  if (head.kind == HeadKind::Abmilp) j["hidden"] = head.hidden;
  if (head.kind == HeadKind::Efficient) j["n_queries"] = head.n_queries;
  j["lr"] = r.lr;
  j["dropout"] = r.dropout;
  j["seed"] = r.seed;
  j["diverged"] = r.diverged;
  j["best_epoch"] = r.best_epoch;
  j["best_val_accuracy"] = r.best_val_accuracy;
  j["train_loss"] = r.train_loss;
  j["val_accuracy"] = r.val_accuracy;
  return j.dump(2) + "\n";
}

}  // namespace spatial
