#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace spatial {

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using TokenRef = Eigen::Ref<const Matrix<S>>;

enum class HeadKind : std::uint8_t { LinearGap, Abmilp, Efficient };
inline constexpr HeadKind kAllHeads[] = {HeadKind::LinearGap, HeadKind::Abmilp, HeadKind::Efficient};
std::string_view to_string(HeadKind kind) noexcept;
HeadKind parse_head(std::string_view text);

/// Which tokens the linear head reads: mean of patches, or the first special token.
enum class PoolSource : std::uint8_t { PatchMean, Cls };

struct HeadConfig {
  HeadKind kind = HeadKind::LinearGap;
  int input_dim = 0;
  int hidden = 128;    // AbMILP attention MLP width
  int n_queries = 4;   // efficient probing
  int n_classes = 4;
  PoolSource pool = PoolSource::PatchMean;

  int output_dim() const { return input_dim / 8; }
  /// Length of the vector the classifier (and dropout) sees.
  int pooled_dim() const { return kind == HeadKind::Efficient ? n_queries * output_dim() : input_dim; }
  void validate() const;
  bool operator==(const HeadConfig&) const = default;
};

struct ParamGroup {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;

  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
  bool operator==(const ParamGroup&) const = default;
};

/// Group table per head, in storage order:
///   LinearGap: W (C x D), b (C)
///   Abmilp:    V (H x D), w (H), W (C x D), b (C)
///   Efficient: Q (Nq x Do), Wk (Do x D), Wv (Do x D), W (C x Nq*Do), b (C)
std::vector<ParamGroup> param_layout(const HeadConfig& config);

/// Flat parameter storage. Every mutable access stamps a fresh generation id,
/// so caches taken before a mutation are detected as stale.
template <typename S>
class ProbeParams {
 public:
  ProbeParams() = default;
  static ProbeParams zeros(const HeadConfig& config);
  /// Classifier and AbMILP scoring vector start at zero; projections and
  /// queries are uniform in +-1/sqrt(fan_in).
  static ProbeParams init(const HeadConfig& config, std::uint64_t seed);

  const HeadConfig& config() const { return config_; }
  const std::vector<ParamGroup>& groups() const { return groups_; }
  const ParamGroup& group(std::string_view name) const;
  std::uint64_t generation() const { return generation_; }

  const Vector<S>& values() const { return values_; }
  Vector<S>& mutable_values();

  Eigen::Map<const Matrix<S>> view(std::string_view name) const;
  Eigen::Map<Matrix<S>> mutable_view(std::string_view name);

  template <typename T>
  ProbeParams<T> cast() const {
    return ProbeParams<T>::from_values(config_, values_.template cast<T>());
  }
  static ProbeParams from_values(const HeadConfig& config, Vector<S> values);

  bool same_values(const ProbeParams& other) const {
    return config_ == other.config_ && values_.size() == other.values_.size() && values_ == other.values_;
  }

 private:
  HeadConfig config_;
  std::vector<ParamGroup> groups_;
  Vector<S> values_;
  std::uint64_t generation_ = 0;
};

/// Tokens of one image: patch rows first, special rows after.
template <typename S>
struct TokenInput {
  TokenRef<S> tokens;
  int n_patches;
};

template <typename S>
struct ForwardCache {
  std::uint64_t generation = 0;
  HeadKind kind = HeadKind::LinearGap;
  Matrix<S> inputs;  // rows actually pooled
  Vector<S> pooled;  // before dropout
  Vector<S> mask;    // dropout multipliers; empty when no dropout
  Vector<S> classifier_input;
  Vector<S> weights;  // AbMILP token weights
  Matrix<S> hidden;   // AbMILP tanh activations
  Matrix<S> keys;     // efficient probing
  Matrix<S> values;
  Matrix<S> attention;
  bool valid = false;
};

template <typename S>
struct ForwardResult {
  Vector<S> logits;
  /// AbMILP: 1 x T token weights; efficient: Nq x T maps; linear: empty.
  Matrix<S> attention;
};

template <typename S>
struct Gradients {
  Vector<S> params;  // same layout as ProbeParams::values
  Matrix<S> inputs;  // gradient w.r.t. the pooled token rows
};

/// `mask` holds inverted-dropout multipliers over the pooled vector (0 or
/// 1/(1-p)); pass an empty span for inference.
template <typename S>
ForwardResult<S> forward(const ProbeParams<S>& params, const TokenInput<S>& input, std::span<const S> mask = {},
                         ForwardCache<S>* cache = nullptr);

/// Exact gradients of a scalar loss given d(loss)/d(logits). Throws
/// StaleCache if the parameters changed since the cached forward pass.
/// Input gradients are skipped (left empty) when not requested.
template <typename S>
Gradients<S> backward(const ProbeParams<S>& params, const ForwardCache<S>& cache, const Vector<S>& dlogits,
                      bool input_gradients = true);

/// Mean cross-entropy pieces for one example: loss and d(loss)/d(logits).
template <typename S>
S cross_entropy(const Vector<S>& logits, int label, Vector<S>* dlogits = nullptr);

/// Numerically stable softmax of a vector.
template <typename S>
Vector<S> softmax(const Vector<S>& x);

/// Weighted sum of token rows, accumulated in row order. Shared by GAP and
/// AbMILP so uniform weights give identical pooled vectors.
template <typename S>
Vector<S> weighted_pool(const TokenRef<S>& tokens, const Vector<S>& weights);

int argmax(std::span<const float> logits);

/// Checkpoint: "SPPB", version, head config, group shape table, f32 payload.
std::string encode_checkpoint(const ProbeParams<float>& params);
ProbeParams<float> decode_checkpoint(std::string_view bytes);
void write_checkpoint(const std::filesystem::path& path, const ProbeParams<float>& params);
ProbeParams<float> read_checkpoint(const std::filesystem::path& path);

}  // namespace spatial
