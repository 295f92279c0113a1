#include "spatial/probes.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>

#include "spatial/error.hpp"
#include "spatial/rng.hpp"
#include "spatial/store.hpp"

namespace spatial {

namespace {

constexpr char kCheckpointMagic[4] = {'S', 'P', 'P', 'B'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::atomic<std::uint64_t> g_generation{1};
std::uint64_t next_generation() { return g_generation.fetch_add(1, std::memory_order_relaxed); }

template <typename S>
Vector<S> as_vector(std::span<const S> s) {
  return Eigen::Map<const Vector<S>>(s.data(), static_cast<Eigen::Index>(s.size()));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xFF);
}

std::uint32_t get_u32(std::string_view bytes, std::size_t& pos) {
  if (bytes.size() - pos < 4) throw Error(ErrorCode::CorruptFile, "checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  pos += 4;
  return v;
}

}  // namespace

std::string_view to_string(HeadKind kind) noexcept {
  switch (kind) {
    case HeadKind::LinearGap: return "linear";
    case HeadKind::Abmilp: return "abmilp";
    case HeadKind::Efficient: return "efficient";
  }
  return "?";
}

HeadKind parse_head(std::string_view text) {
  for (HeadKind k : kAllHeads) {
    if (text == to_string(k)) return k;
  }
  throw Error(ErrorCode::InvalidParameter, "unknown probe head '" + std::string(text) + "' (linear, abmilp, efficient)");
}

void HeadConfig::validate() const {
  if (input_dim <= 0 || n_classes <= 1) throw Error(ErrorCode::InvalidParameter, "probe needs input_dim > 0 and >= 2 classes");
  if (kind == HeadKind::Abmilp && hidden <= 0) throw Error(ErrorCode::InvalidParameter, "AbMILP hidden width must be positive");
  if (kind == HeadKind::Efficient) {
    if (input_dim % 8 != 0) {
      throw Error(ErrorCode::ShapeMismatch, "efficient probing needs input_dim divisible by 8, got " + std::to_string(input_dim));
    }
    if (n_queries <= 0) throw Error(ErrorCode::InvalidParameter, "efficient probing needs at least one query");
  }
}

std::vector<ParamGroup> param_layout(const HeadConfig& c) {
  c.validate();
  std::vector<ParamGroup> groups;
  auto add = [&](std::string name, int rows, int cols) {
    const std::size_t offset = groups.empty() ? 0 : groups.back().offset + groups.back().size();
    groups.push_back({std::move(name), rows, cols, offset});
  };
  switch (c.kind) {
    case HeadKind::LinearGap:
      break;
    case HeadKind::Abmilp:
      add("V", c.hidden, c.input_dim);
      add("w", c.hidden, 1);
      break;
    case HeadKind::Efficient:
      add("Q", c.n_queries, c.output_dim());
      add("Wk", c.output_dim(), c.input_dim);
      add("Wv", c.output_dim(), c.input_dim);
      break;
  }
  add("W", c.n_classes, c.pooled_dim());
  add("b", c.n_classes, 1);
  return groups;
}

template <typename S>
ProbeParams<S> ProbeParams<S>::zeros(const HeadConfig& config) {
  ProbeParams p;
  p.config_ = config;
  p.groups_ = param_layout(config);
  const auto& last = p.groups_.back();
  p.values_ = Vector<S>::Zero(static_cast<Eigen::Index>(last.offset + last.size()));
  p.generation_ = next_generation();
  return p;
}

template <typename S>
ProbeParams<S> ProbeParams<S>::init(const HeadConfig& config, std::uint64_t seed) {
  ProbeParams p = zeros(config);
  CounterRng rng(CounterRng::derive_key(seed, static_cast<std::uint64_t>(config.kind)), 5);
  for (const auto& g : p.groups_) {
    if (g.name != "V" && g.name != "Q" && g.name != "Wk" && g.name != "Wv") continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(g.cols));
    for (std::size_t i = 0; i < g.size(); ++i) {
      p.values_[static_cast<Eigen::Index>(g.offset + i)] = static_cast<S>(rng.uniform(-bound, bound));
    }
  }
  return p;
}

template <typename S>
ProbeParams<S> ProbeParams<S>::from_values(const HeadConfig& config, Vector<S> values) {
  ProbeParams p = zeros(config);
  if (values.size() != p.values_.size()) {
    throw Error(ErrorCode::ShapeMismatch, "parameter vector has " + std::to_string(values.size()) + " entries, expected " +
                                              std::to_string(p.values_.size()));
  }
  p.values_ = std::move(values);
  return p;
}

template <typename S>
const ParamGroup& ProbeParams<S>::group(std::string_view name) const {
  for (const auto& g : groups_) {
    if (g.name == name) return g;
  }
  throw Error(ErrorCode::InvalidParameter, "no parameter group '" + std::string(name) + "'");
}

template <typename S>
Vector<S>& ProbeParams<S>::mutable_values() {
  generation_ = next_generation();
  return values_;
}

template <typename S>
Eigen::Map<const Matrix<S>> ProbeParams<S>::view(std::string_view name) const {
  const ParamGroup& g = group(name);
  return {values_.data() + g.offset, g.rows, g.cols};
}

template <typename S>
Eigen::Map<Matrix<S>> ProbeParams<S>::mutable_view(std::string_view name) {
  const ParamGroup& g = group(name);
  generation_ = next_generation();
  return {values_.data() + g.offset, g.rows, g.cols};
}

template <typename S>
Vector<S> softmax(const Vector<S>& x) {
  const S m = x.maxCoeff();
  Vector<S> e = (x.array() - m).exp().matrix();
  S sum = 0;
  for (Eigen::Index i = 0; i < e.size(); ++i) sum += e[i];
  return e / sum;
}

template <typename S>
Vector<S> weighted_pool(const TokenRef<S>& tokens, const Vector<S>& weights) {
  Vector<S> z = Vector<S>::Zero(tokens.cols());
  for (Eigen::Index i = 0; i < tokens.rows(); ++i) z.noalias() += weights[i] * tokens.row(i).transpose();
  return z;
}

template <typename S>
S cross_entropy(const Vector<S>& logits, int label, Vector<S>* dlogits) {
  if (label < 0 || label >= logits.size()) throw Error(ErrorCode::InvalidParameter, "label out of range");
  const S m = logits.maxCoeff();
  S sum = 0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) sum += std::exp(logits[i] - m);
  const S log_z = m + std::log(sum);
  if (dlogits != nullptr) {
    *dlogits = (logits.array() - log_z).exp().matrix();
    (*dlogits)[label] -= S(1);
  }
  return log_z - logits[label];
}

template <typename S>
ForwardResult<S> forward(const ProbeParams<S>& params, const TokenInput<S>& input, std::span<const S> mask,
                         ForwardCache<S>* cache) {
  const HeadConfig& c = params.config();
  const auto& tokens = input.tokens;
  if (input.n_patches <= 0 || tokens.rows() < input.n_patches) {
    throw Error(ErrorCode::EmptyInput, "probe input has no patch tokens");
  }
  if (tokens.cols() != c.input_dim) {
    throw Error(ErrorCode::ShapeMismatch, "token dim " + std::to_string(tokens.cols()) + " does not match probe input dim " +
                                              std::to_string(c.input_dim));
  }
  if (!mask.empty() && static_cast<int>(mask.size()) != c.pooled_dim()) {
    throw Error(ErrorCode::ShapeMismatch, "dropout mask length does not match pooled dim");
  }

  ForwardResult<S> result;
  ForwardCache<S> local;
  ForwardCache<S>& k = cache != nullptr ? *cache : local;
  // Buffers are reused across calls; every field a head reads is rewritten below.
  k.valid = false;
  k.kind = c.kind;
  k.generation = params.generation();

  switch (c.kind) {
    case HeadKind::LinearGap: {
      if (c.pool == PoolSource::Cls) {
        if (tokens.rows() <= input.n_patches) throw Error(ErrorCode::EmptyInput, "CLS pooling needs a special token");
        k.inputs = tokens.row(input.n_patches);
      } else {
        k.inputs = tokens.topRows(input.n_patches);
      }
      k.weights = Vector<S>::Constant(k.inputs.rows(), S(1) / static_cast<S>(k.inputs.rows()));
      k.pooled = weighted_pool<S>(k.inputs, k.weights);
      break;
    }
    case HeadKind::Abmilp: {
      k.inputs = tokens.topRows(input.n_patches);
      const auto V = params.view("V");
      const auto w = params.view("w");
      k.hidden.noalias() = k.inputs * V.transpose();
      k.hidden = k.hidden.array().tanh().matrix();
      const Vector<S> scores = k.hidden * w;
      k.weights = softmax<S>(scores);
      k.pooled = weighted_pool<S>(k.inputs, k.weights);
      result.attention = k.weights.transpose();
      break;
    }
    case HeadKind::Efficient: {
      k.inputs = tokens.topRows(input.n_patches);
      const auto Q = params.view("Q");
      const S scale = S(1) / std::sqrt(static_cast<S>(c.output_dim()));
      k.keys = k.inputs * params.view("Wk").transpose();
      k.values = k.inputs * params.view("Wv").transpose();
      const Matrix<S> scores = (Q * k.keys.transpose()) * scale;
      k.attention.resize(scores.rows(), scores.cols());
      for (Eigen::Index q = 0; q < scores.rows(); ++q) {
        k.attention.row(q) = softmax<S>(scores.row(q).transpose()).transpose();
      }
      const Matrix<S> out = k.attention * k.values;  // Nq x Do
      k.pooled = Eigen::Map<const Vector<S>>(out.data(), out.size());
      result.attention = k.attention;
      break;
    }
  }

  if (mask.empty()) {
    k.mask.resize(0);
    k.classifier_input = k.pooled;
  } else {
    k.mask = as_vector(mask);
    k.classifier_input = k.pooled.cwiseProduct(k.mask);
  }
  result.logits = params.view("W") * k.classifier_input + Eigen::Map<const Vector<S>>(params.view("b").data(), c.n_classes);
  k.valid = true;
  return result;
}

template <typename S>
Gradients<S> backward(const ProbeParams<S>& params, const ForwardCache<S>& k, const Vector<S>& g, bool input_gradients) {
  const HeadConfig& c = params.config();
  if (!k.valid || k.generation != params.generation() || k.kind != c.kind) {
    throw Error(ErrorCode::StaleCache, "forward cache does not belong to the current parameters");
  }
  if (g.size() != c.n_classes) throw Error(ErrorCode::ShapeMismatch, "upstream gradient length does not match class count");

  Gradients<S> out;
  out.params = Vector<S>::Zero(params.values().size());
  auto grad_view = [&](std::string_view name) {
    const ParamGroup& grp = params.group(name);
    return Eigen::Map<Matrix<S>>(out.params.data() + grp.offset, grp.rows, grp.cols);
  };

  grad_view("W").noalias() = g * k.classifier_input.transpose();
  grad_view("b") = g;
  Vector<S> dz = params.view("W").transpose() * g;
  if (k.mask.size() > 0) dz = dz.cwiseProduct(k.mask);

  switch (c.kind) {
    case HeadKind::LinearGap: {
      if (input_gradients) out.inputs = k.weights * dz.transpose();
      break;
    }
    case HeadKind::Abmilp: {
      const Vector<S> da = k.inputs * dz;
      const S mean = k.weights.dot(da);
      const Vector<S> ds = k.weights.cwiseProduct((da.array() - mean).matrix());
      const auto w = params.view("w");
      grad_view("w") = k.hidden.transpose() * ds;
      const Matrix<S> dpre = ((ds * w.transpose()).array() * (S(1) - k.hidden.array().square())).matrix();
      grad_view("V").noalias() = dpre.transpose() * k.inputs;
      if (input_gradients) out.inputs = k.weights * dz.transpose() + dpre * params.view("V");
      break;
    }
    case HeadKind::Efficient: {
      const int nq = c.n_queries;
      const int d_o = c.output_dim();
      const S scale = S(1) / std::sqrt(static_cast<S>(d_o));
      const Eigen::Map<const Matrix<S>> d_out(dz.data(), nq, d_o);
      const Matrix<S> d_attn = d_out * k.values.transpose();
      const Matrix<S> d_values = k.attention.transpose() * d_out;
      const Vector<S> row_dot = (d_attn.array() * k.attention.array()).rowwise().sum().matrix();
      const Matrix<S> d_scores =
          (k.attention.array() * (d_attn.colwise() - row_dot).array()).matrix() * scale;
      grad_view("Q").noalias() = d_scores * k.keys;
      const Matrix<S> d_keys = d_scores.transpose() * params.view("Q");
      grad_view("Wk").noalias() = d_keys.transpose() * k.inputs;
      grad_view("Wv").noalias() = d_values.transpose() * k.inputs;
      if (input_gradients) out.inputs = d_keys * params.view("Wk") + d_values * params.view("Wv");
      break;
    }
  }
  return out;
}

int argmax(std::span<const float> logits) {
  int best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

std::string encode_checkpoint(const ProbeParams<float>& params) {
  const HeadConfig& c = params.config();
  std::string out(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(c.kind));
  put_u32(out, static_cast<std::uint32_t>(c.pool));
  put_u32(out, static_cast<std::uint32_t>(c.input_dim));
  put_u32(out, static_cast<std::uint32_t>(c.hidden));
  put_u32(out, static_cast<std::uint32_t>(c.n_queries));
  put_u32(out, static_cast<std::uint32_t>(c.n_classes));
  put_u32(out, static_cast<std::uint32_t>(params.groups().size()));
  for (const auto& g : params.groups()) {
    put_u32(out, static_cast<std::uint32_t>(g.rows));
    put_u32(out, static_cast<std::uint32_t>(g.cols));
  }
  for (Eigen::Index i = 0; i < params.values().size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(params.values()[i]));
  return out;
}

ProbeParams<float> decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw Error(ErrorCode::CorruptFile, "not a probe checkpoint");
  }
  std::size_t pos = 4;
  if (get_u32(bytes, pos) != kCheckpointVersion) throw Error(ErrorCode::SchemaMismatch, "unsupported checkpoint version");
  HeadConfig c;
  const auto kind = get_u32(bytes, pos);
  const auto pool = get_u32(bytes, pos);
  if (kind > 2 || pool > 1) throw Error(ErrorCode::CorruptFile, "checkpoint head kind out of range");
  c.kind = static_cast<HeadKind>(kind);
  c.pool = static_cast<PoolSource>(pool);
  c.input_dim = static_cast<int>(get_u32(bytes, pos));
  c.hidden = static_cast<int>(get_u32(bytes, pos));
  c.n_queries = static_cast<int>(get_u32(bytes, pos));
  c.n_classes = static_cast<int>(get_u32(bytes, pos));
  const auto layout = param_layout(c);
  if (get_u32(bytes, pos) != layout.size()) throw Error(ErrorCode::CorruptFile, "checkpoint group count mismatch");
  for (const auto& g : layout) {
    const auto rows = get_u32(bytes, pos);
    const auto cols = get_u32(bytes, pos);
    if (static_cast<int>(rows) != g.rows || static_cast<int>(cols) != g.cols) {
      throw Error(ErrorCode::CorruptFile, "checkpoint shape table disagrees for group " + g.name);
    }
  }
  const std::size_t n = layout.back().offset + layout.back().size();
  if (bytes.size() - pos != 4 * n) throw Error(ErrorCode::CorruptFile, "checkpoint payload size mismatch");
  Vector<float> values(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) values[static_cast<Eigen::Index>(i)] = std::bit_cast<float>(get_u32(bytes, pos));
  return ProbeParams<float>::from_values(c, std::move(values));
}

void write_checkpoint(const std::filesystem::path& path, const ProbeParams<float>& params) {
  write_file_bytes(path, encode_checkpoint(params));
}

ProbeParams<float> read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

#define SPATIAL_INSTANTIATE(S)                                                                                   \
  template class ProbeParams<S>;                                                                                 \
  template Vector<S> softmax<S>(const Vector<S>&);                                                               \
  template Vector<S> weighted_pool<S>(const TokenRef<S>&, const Vector<S>&);                                     \
  template S cross_entropy<S>(const Vector<S>&, int, Vector<S>*);                                                \
  template ForwardResult<S> forward<S>(const ProbeParams<S>&, const TokenInput<S>&, std::span<const S>,          \
                                       ForwardCache<S>*);                                                        \
  template Gradients<S> backward<S>(const ProbeParams<S>&, const ForwardCache<S>&, const Vector<S>&, bool);

SPATIAL_INSTANTIATE(float)
SPATIAL_INSTANTIATE(double)

}  // namespace spatial
