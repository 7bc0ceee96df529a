#pragma once

// Feature-pyramid container (MVFP), PGM label masks and the synthetic
// planted-segment generator.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "amnc/affinity.hpp"
#include "amnc/mask.hpp"

namespace amnc {

// MVFP layout, little-endian:
//   "MVFP", u32 version = 1, u32 levels, u32 height, u32 width, u32 dim,
//   then `levels` blocks of height*width*dim f32, index ((y*w + x)*d + c).
inline constexpr std::uint32_t kPyramidVersion = 1;
inline constexpr std::size_t kPyramidHeaderBytes = 24;

void encode_pyramid(const FeaturePyramid& pyramid, std::ostream& os);
FeaturePyramid decode_pyramid(std::istream& is);

void write_pyramid(const FeaturePyramid& pyramid, const std::filesystem::path& path);
FeaturePyramid read_pyramid(const std::filesystem::path& path);

/// Dumps an s x s affinity matrix as a single-level MVFP with h = w = s, d = 1.
void write_affinity(const Tensor<float>& affinity, const std::filesystem::path& path);

/// Binary PGM: "P5\n<width> <height>\n255\n" then one byte per pixel.
void encode_mask(const SegmentationMask& mask, std::ostream& os);
SegmentationMask decode_mask(std::istream& is);

void write_mask(const SegmentationMask& mask, const std::filesystem::path& path);
SegmentationMask read_mask(const std::filesystem::path& path);

struct SynthSpec {
  std::uint32_t height = 16;
  std::uint32_t width = 16;
  std::uint32_t dim = 16;
  std::uint32_t levels = 2;
  std::uint32_t segments = 3;
  std::vector<bool> informative;  // one flag per level; empty means all informative
  double noise = 0.05;
  std::uint64_t seed = 0;          // site layout and noise
  std::uint64_t palette_seed = 0;  // segment centroids, shared by frames of one dataset
};

struct SynthFrame {
  FeaturePyramid pyramid;
  SegmentationMask mask;  // height x width planted labels
};

/// Plants `segments` Voronoi regions around distinct random sites. An
/// informative level gives every patch its segment's unit centroid (drawn from
/// palette_seed) plus N(0, noise^2) per channel; other levels are N(0, 1/d) noise.
SynthFrame synth_pyramid(const SynthSpec& spec);

}  // namespace amnc
