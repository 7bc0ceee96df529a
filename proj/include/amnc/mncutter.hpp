#pragma once

// The multi-view normalized cutter: multi-view self-attention over the
// feature pyramid (fused features + per-view attention), attention-guided
// affinity fusion, and a small pre-norm transformer head ending in a softmax
// over k clusters.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "amnc/affinity.hpp"
#include "amnc/autodiff.hpp"
#include "amnc/mask.hpp"
#include "amnc/rng.hpp"
#include "amnc/tensor.hpp"

namespace amnc {

struct CutterConfig {
  std::uint32_t levels = 4;    // B
  std::uint32_t height = 0;    // h
  std::uint32_t width = 0;     // w
  std::uint32_t dim = 0;       // d
  std::uint32_t clusters = 10; // k
  std::uint32_t blocks = 3;    // sigma
  std::uint32_t heads = 4;     // n_h

  std::size_t patches() const { return std::size_t(height) * width; }
  std::size_t head_dim() const { return dim / heads; }

  /// Throws ConfigError on an invalid combination.
  void validate() const;

  friend bool operator==(const CutterConfig&, const CutterConfig&) = default;
};

template <class T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;
};

/// Ordered named parameters. Order is the one given by parameter_layout().
template <class T>
class ParameterSet {
 public:
  void add(std::string name, Tensor<T> value) {
    index_[name] = items_.size();
    items_.push_back({std::move(name), std::move(value)});
  }

  std::size_t size() const { return items_.size(); }
  NamedTensor<T>& operator[](std::size_t i) { return items_[i]; }
  const NamedTensor<T>& operator[](std::size_t i) const { return items_[i]; }

  const Tensor<T>& at(const std::string& name) const { return items_[position(name)].value; }
  Tensor<T>& at(const std::string& name) { return items_[position(name)].value; }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t position(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ArgumentError("unknown parameter '" + name + "'");
    return it->second;
  }

  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  template <class U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& p : items_) out.add(p.name, p.value.template cast<U>());
    return out;
  }

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    if (a.items_.size() != b.items_.size()) return false;
    for (std::size_t i = 0; i < a.items_.size(); ++i) {
      if (a.items_[i].name != b.items_[i].name || !(a.items_[i].value == b.items_[i].value)) return false;
    }
    return true;
  }

 private:
  std::vector<NamedTensor<T>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct ParameterSpec {
  std::string name;
  Shape shape;
  bool is_bias;  // zero init
  bool is_gain;  // one init
};

/// The fixed parameter order, also the order of tensors in a checkpoint:
///   mvsa.head{h}.query                 (B*d x d_h)
///   mvsa.head{h}.key.view{v}           (d x d_h)     for v in [0, B)
///   mvsa.head{h}.value.view{v}         (d x d_h)
///   mvsa.out.weight (d x d), mvsa.out.bias (1 x d)
///   block{b}.ln1.gain/bias, block{b}.attn.query/key/value/out.weight (d x d),
///   block{b}.attn.out.bias, block{b}.ln2.gain/bias,
///   block{b}.ffn.fc1.weight (d x 4d), .fc1.bias, .fc2.weight (4d x d), .fc2.bias
///   head.weight (d x k), head.bias (1 x k)
std::vector<ParameterSpec> parameter_layout(const CutterConfig& cfg);

/// Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases, unit gains.
ParameterSet<float> init_parameters(const CutterConfig& cfg, std::uint64_t seed);

/// Parameters registered on a tape, looked up by name.
template <class T>
class BoundParameters {
 public:
  BoundParameters(Tape<T>& tape, const ParameterSet<T>& params) {
    for (const auto& p : params) vars_.emplace(p.name, tape.parameter(p.name, p.value));
  }

  Var<T> operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw ArgumentError("unbound parameter '" + name + "'");
    return it->second;
  }

 private:
  std::unordered_map<std::string, Var<T>> vars_;
};

template <class T>
struct MultiViewOutput {
  Var<T> fused;                   // s x d
  Var<T> alpha;                   // s x B, mean over heads
  std::vector<Var<T>> head_alpha; // n_h entries of s x B
};

template <class T>
struct CutterOutput {
  Var<T> fused_affinity;  // s x s
  Var<T> probabilities;   // s x k
  Var<T> alpha;           // s x B
  Var<T> fused_features;  // s x d
};

/// Multi-view self-attention. For every patch and head the query comes from
/// the view-concatenated feature, keys and values from each view through
/// per-view projections; a softmax over the view axis yields alpha.
template <class T>
MultiViewOutput<T> multi_view_self_attention(const std::vector<Var<T>>& levels,
                                             const BoundParameters<T>& params,
                                             const CutterConfig& cfg) {
  if (levels.size() != cfg.levels) {
    throw ShapeError("multi_view_self_attention: " + std::to_string(levels.size()) +
                     " levels, configured for " + std::to_string(cfg.levels));
  }
  const std::size_t dh = cfg.head_dim();
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  Var<T> stacked = levels.size() == 1 ? levels.front() : concat(levels, 1);

  MultiViewOutput<T> out;
  std::vector<Var<T>> head_values;
  for (std::uint32_t h = 0; h < cfg.heads; ++h) {
    const std::string prefix = "mvsa.head" + std::to_string(h);
    Var<T> query = matmul(stacked, params[prefix + ".query"]);
    std::vector<Var<T>> scores, values;
    for (std::uint32_t v = 0; v < cfg.levels; ++v) {
      const std::string view = ".view" + std::to_string(v);
      Var<T> key = matmul(levels[v], params[prefix + ".key" + view]);
      values.push_back(matmul(levels[v], params[prefix + ".value" + view]));
      scores.push_back(affine(sum(mul(query, key), 1), inv_sqrt, T{0}));
    }
    Var<T> alpha = softmax(scores.size() == 1 ? scores.front() : concat(scores, 1), 1);
    Var<T> fused = mul(values[0], slice(alpha, 1, 0, 1));
    for (std::uint32_t v = 1; v < cfg.levels; ++v)
      fused = add(fused, mul(values[v], slice(alpha, 1, v, v + 1)));
    out.head_alpha.push_back(alpha);
    head_values.push_back(fused);
  }
  Var<T> alpha_sum = out.head_alpha.front();
  for (std::size_t h = 1; h < out.head_alpha.size(); ++h) alpha_sum = add(alpha_sum, out.head_alpha[h]);
  out.alpha = affine(alpha_sum, static_cast<T>(1.0 / cfg.heads), T{0});
  Var<T> heads = head_values.size() == 1 ? head_values.front() : concat(head_values, 1);
  out.fused = add(matmul(heads, params["mvsa.out.weight"]), params["mvsa.out.bias"]);
  return out;
}

/// Multi-head self-attention over patches (rows of x), with output projection.
template <class T>
Var<T> patch_self_attention(Var<T> x, const BoundParameters<T>& params, const std::string& prefix,
                            const CutterConfig& cfg) {
  const std::size_t dh = cfg.head_dim();
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  Var<T> q = matmul(x, params[prefix + ".query"]);
  Var<T> k = matmul(x, params[prefix + ".key"]);
  Var<T> v = matmul(x, params[prefix + ".value"]);
  std::vector<Var<T>> heads;
  for (std::uint32_t h = 0; h < cfg.heads; ++h) {
    const std::size_t lo = h * dh, hi = lo + dh;
    Var<T> qh = slice(q, 1, lo, hi), kh = slice(k, 1, lo, hi), vh = slice(v, 1, lo, hi);
    Var<T> weights = softmax(affine(matmul(qh, transpose(kh)), inv_sqrt, T{0}), 1);
    heads.push_back(matmul(weights, vh));
  }
  Var<T> merged = heads.size() == 1 ? heads.front() : concat(heads, 1);
  return add(matmul(merged, params[prefix + ".out.weight"]), params[prefix + ".out.bias"]);
}

/// Pre-norm block: x + attn(ln1(x)), then + ffn(ln2(x)) with a 4d GELU hidden layer.
template <class T>
Var<T> transformer_block(Var<T> x, const BoundParameters<T>& params, std::uint32_t index,
                         const CutterConfig& cfg) {
  const std::string p = "block" + std::to_string(index);
  Var<T> h = layer_norm(x, params[p + ".ln1.gain"], params[p + ".ln1.bias"]);
  x = add(x, patch_self_attention(h, params, p + ".attn", cfg));
  h = layer_norm(x, params[p + ".ln2.gain"], params[p + ".ln2.bias"]);
  h = gelu(add(matmul(h, params[p + ".ffn.fc1.weight"]), params[p + ".ffn.fc1.bias"]));
  h = add(matmul(h, params[p + ".ffn.fc2.weight"]), params[p + ".ffn.fc2.bias"]);
  return add(x, h);
}

/// Validates a pyramid against a configuration (ShapeError naming both).
void check_pyramid(const FeaturePyramid& pyramid, const CutterConfig& cfg);

/// Full forward pass on `tape`: per-level affinities, multi-view attention,
/// fused affinity and patch-cluster probabilities.
template <class T>
CutterOutput<T> cutter_forward(Tape<T>& tape, const FeaturePyramid& pyramid,
                               const BoundParameters<T>& params, const CutterConfig& cfg) {
  cfg.validate();
  check_pyramid(pyramid, cfg);
  std::vector<Var<T>> levels, affinities;
  for (const auto& level : pyramid.levels) {
    Tensor<T> features = level.template cast<T>();
    affinities.push_back(tape.constant(cosine_affinity(features)));
    levels.push_back(tape.constant(std::move(features)));
  }
  MultiViewOutput<T> mv = multi_view_self_attention(levels, params, cfg);
  CutterOutput<T> out;
  out.alpha = mv.alpha;
  out.fused_features = mv.fused;
  out.fused_affinity = fuse_affinities(affinities, attention_from_alpha(mv.alpha));
  Var<T> x = mv.fused;
  for (std::uint32_t b = 0; b < cfg.blocks; ++b) x = transformer_block(x, params, b, cfg);
  Var<T> logits = add(matmul(x, params["head.weight"]), params["head.bias"]);
  out.probabilities = softmax(logits, 1);
  return out;
}

/// Inference result as plain tensors.
struct Prediction {
  Tensor<float> fused_affinity;  // s x s
  Tensor<float> probabilities;   // s x k
  Tensor<float> alpha;           // s x B
};

Prediction predict(const FeaturePyramid& pyramid, const ParameterSet<float>& params,
                   const CutterConfig& cfg);

/// Bilinear upsampling (half-pixel centres, edge clamped) of each of the k
/// probability channels of an h x w grid to H x W, then per-pixel argmax with
/// ties going to the lowest class.
SegmentationMask resize_to_mask(const Tensor<float>& probabilities, std::uint32_t grid_height,
                                std::uint32_t grid_width, std::uint32_t out_height,
                                std::uint32_t out_width);

// Checkpoint layout (little-endian):
//   "AMNC", u32 version = 1,
//   u32 levels, height, width, dim, clusters, blocks, heads,
//   then every tensor of parameter_layout() in order as
//   u32 name length, name bytes, u32 rank, u32 extents..., f32 payload.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const CutterConfig& cfg,
                     const ParameterSet<float>& params);

struct Checkpoint {
  CutterConfig config;
  ParameterSet<float> params;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace amnc
