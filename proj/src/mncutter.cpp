#include "amnc/mncutter.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "binary.hpp"

namespace amnc {

void CutterConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("cutter config: " + what); };
  if (levels < 1) fail("levels must be >= 1");
  if (height < 1 || width < 1) fail("patch grid must be non-empty");
  if (dim < 1) fail("feature dimension must be >= 1");
  if (clusters < 2) fail("clusters (k) must be >= 2");
  if (blocks < 1) fail("blocks (sigma) must be >= 1");
  if (heads < 1) fail("heads must be >= 1");
  if (dim % heads != 0) {
    fail("feature dimension " + std::to_string(dim) + " is not divisible by " +
         std::to_string(heads) + " heads");
  }
}

std::vector<ParameterSpec> parameter_layout(const CutterConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.dim, dh = cfg.head_dim(), k = cfg.clusters;
  std::vector<ParameterSpec> out;
  auto weight = [&](std::string name, Shape shape) { out.push_back({std::move(name), std::move(shape), false, false}); };
  auto bias = [&](std::string name, std::size_t n) { out.push_back({std::move(name), {1, n}, true, false}); };
  auto gain = [&](std::string name, std::size_t n) { out.push_back({std::move(name), {1, n}, false, true}); };

  for (std::uint32_t h = 0; h < cfg.heads; ++h) {
    const std::string p = "mvsa.head" + std::to_string(h);
    weight(p + ".query", {cfg.levels * d, dh});
    for (std::uint32_t v = 0; v < cfg.levels; ++v) weight(p + ".key.view" + std::to_string(v), {d, dh});
    for (std::uint32_t v = 0; v < cfg.levels; ++v) weight(p + ".value.view" + std::to_string(v), {d, dh});
  }
  weight("mvsa.out.weight", {d, d});
  bias("mvsa.out.bias", d);
  for (std::uint32_t b = 0; b < cfg.blocks; ++b) {
    const std::string p = "block" + std::to_string(b);
    gain(p + ".ln1.gain", d);
    bias(p + ".ln1.bias", d);
    weight(p + ".attn.query", {d, d});
    weight(p + ".attn.key", {d, d});
    weight(p + ".attn.value", {d, d});
    weight(p + ".attn.out.weight", {d, d});
    bias(p + ".attn.out.bias", d);
    gain(p + ".ln2.gain", d);
    bias(p + ".ln2.bias", d);
    weight(p + ".ffn.fc1.weight", {d, 4 * d});
    bias(p + ".ffn.fc1.bias", 4 * d);
    weight(p + ".ffn.fc2.weight", {4 * d, d});
    bias(p + ".ffn.fc2.bias", d);
  }
  weight("head.weight", {d, k});
  bias("head.bias", k);
  return out;
}

ParameterSet<float> init_parameters(const CutterConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  ParameterSet<float> params;
  for (const auto& spec : parameter_layout(cfg)) {
    Tensor<float> t(spec.shape, spec.is_gain ? 1.0f : 0.0f);
    if (!spec.is_bias && !spec.is_gain) {
      const double limit = std::sqrt(6.0 / static_cast<double>(spec.shape[0] + spec.shape[1]));
      for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-limit, limit));
    }
    params.add(spec.name, std::move(t));
  }
  return params;
}

void check_pyramid(const FeaturePyramid& pyramid, const CutterConfig& cfg) {
  pyramid.validate();
  if (pyramid.level_count() != cfg.levels || pyramid.height != cfg.height ||
      pyramid.width != cfg.width || pyramid.dim != cfg.dim) {
    throw ShapeError("pyramid (B=" + std::to_string(pyramid.level_count()) +
                     ", h=" + std::to_string(pyramid.height) + ", w=" + std::to_string(pyramid.width) +
                     ", d=" + std::to_string(pyramid.dim) + ") does not match model (B=" +
                     std::to_string(cfg.levels) + ", h=" + std::to_string(cfg.height) +
                     ", w=" + std::to_string(cfg.width) + ", d=" + std::to_string(cfg.dim) + ")");
  }
}

Prediction predict(const FeaturePyramid& pyramid, const ParameterSet<float>& params,
                   const CutterConfig& cfg) {
  Tape<float> tape;
  BoundParameters<float> bound(tape, params);
  CutterOutput<float> out = cutter_forward(tape, pyramid, bound, cfg);
  return {out.fused_affinity.value(), out.probabilities.value(), out.alpha.value()};
}

SegmentationMask resize_to_mask(const Tensor<float>& probabilities, std::uint32_t grid_height,
                                std::uint32_t grid_width, std::uint32_t out_height,
                                std::uint32_t out_width) {
  if (out_height == 0 || out_width == 0) {
    throw ArgumentError("resize_to_mask: target size must be positive, got " +
                        std::to_string(out_height) + "x" + std::to_string(out_width));
  }
  if (probabilities.rank() != 2 || grid_height == 0 || grid_width == 0 ||
      probabilities.rows() != std::size_t(grid_height) * grid_width) {
    throw ShapeError("resize_to_mask: probabilities " + shape_string(probabilities.shape()) +
                     " for a " + std::to_string(grid_height) + "x" + std::to_string(grid_width) + " grid");
  }
  const std::size_t k = probabilities.cols();
  // Source coordinate of a target pixel centre; clamped to the grid.
  auto source = [](std::uint32_t dst, std::uint32_t dst_size, std::uint32_t src_size, std::uint32_t& lo,
                   std::uint32_t& hi, double& frac) {
    double pos = (dst + 0.5) * static_cast<double>(src_size) / dst_size - 0.5;
    pos = std::clamp(pos, 0.0, static_cast<double>(src_size - 1));
    lo = static_cast<std::uint32_t>(std::floor(pos));
    hi = std::min(lo + 1, src_size - 1);
    frac = pos - lo;
  };
  SegmentationMask mask(out_height, out_width);
  std::vector<double> channel(k);
  for (std::uint32_t y = 0; y < out_height; ++y) {
    std::uint32_t y0, y1;
    double fy;
    source(y, out_height, grid_height, y0, y1, fy);
    for (std::uint32_t x = 0; x < out_width; ++x) {
      std::uint32_t x0, x1;
      double fx;
      source(x, out_width, grid_width, x0, x1, fx);
      const std::size_t p00 = std::size_t(y0) * grid_width + x0, p01 = std::size_t(y0) * grid_width + x1;
      const std::size_t p10 = std::size_t(y1) * grid_width + x0, p11 = std::size_t(y1) * grid_width + x1;
      std::int32_t best = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const double top = (1 - fx) * probabilities(p00, c) + fx * probabilities(p01, c);
        const double bottom = (1 - fx) * probabilities(p10, c) + fx * probabilities(p11, c);
        channel[c] = (1 - fy) * top + fy * bottom;
        if (channel[c] > channel[best]) best = static_cast<std::int32_t>(c);
      }
      mask.at(y, x) = best;
    }
  }
  return mask;
}

void save_checkpoint(const std::filesystem::path& path, const CutterConfig& cfg,
                     const ParameterSet<float>& params) {
  const auto layout = parameter_layout(cfg);
  if (layout.size() != params.size()) {
    throw ArgumentError("save_checkpoint: " + std::to_string(params.size()) +
                        " parameters, layout expects " + std::to_string(layout.size()));
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os.write("AMNC", 4);
  binary::put_u32(os, kCheckpointVersion);
  for (std::uint32_t v : {cfg.levels, cfg.height, cfg.width, cfg.dim, cfg.clusters, cfg.blocks, cfg.heads})
    binary::put_u32(os, v);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& p = params[i];
    if (p.name != layout[i].name || p.value.shape() != layout[i].shape) {
      throw ArgumentError("save_checkpoint: parameter " + std::to_string(i) + " is '" + p.name + "' " +
                          shape_string(p.value.shape()) + ", expected '" + layout[i].name + "' " +
                          shape_string(layout[i].shape));
    }
    binary::put_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    binary::put_u32(os, static_cast<std::uint32_t>(p.value.rank()));
    for (auto e : p.value.shape()) binary::put_u32(os, static_cast<std::uint32_t>(e));
    for (float v : p.value.data()) binary::put_f32(os, v);
  }
  if (!os) throw std::runtime_error("failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  binary::expect_magic(is, "AMNC");
  const std::uint32_t version = binary::get_u32(is, "version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  CutterConfig& cfg = ck.config;
  for (std::uint32_t* field : {&cfg.levels, &cfg.height, &cfg.width, &cfg.dim, &cfg.clusters,
                               &cfg.blocks, &cfg.heads})
    *field = binary::get_u32(is, "hyperparameters");
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  for (const auto& spec : parameter_layout(cfg)) {
    const std::uint32_t name_len = binary::get_u32(is, "name length");
    if (name_len != spec.name.size()) {
      throw FormatError("checkpoint: expected tensor '" + spec.name + "'");
    }
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw LengthError("truncated tensor name");
    if (name != spec.name) throw FormatError("checkpoint: found '" + name + "', expected '" + spec.name + "'");
    const std::uint32_t rank = binary::get_u32(is, "rank");
    if (rank != spec.shape.size()) throw FormatError("checkpoint: bad rank for '" + name + "'");
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(binary::get_u32(is, "extent"));
    if (shape != spec.shape) {
      throw FormatError("checkpoint: '" + name + "' is " + shape_string(shape) + ", expected " +
                        shape_string(spec.shape));
    }
    Tensor<float> t(shape);
    for (auto& v : t.data()) v = binary::get_f32(is, "tensor payload");
    ck.params.add(name, std::move(t));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("checkpoint: trailing bytes");
  return ck;
}

}  // namespace amnc
