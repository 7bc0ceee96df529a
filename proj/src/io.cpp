#include "amnc/io.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "amnc/rng.hpp"
#include "binary.hpp"

namespace amnc {

void encode_pyramid(const FeaturePyramid& pyramid, std::ostream& os) {
  pyramid.validate();
  os.write("MVFP", 4);
  binary::put_u32(os, kPyramidVersion);
  binary::put_u32(os, static_cast<std::uint32_t>(pyramid.level_count()));
  binary::put_u32(os, pyramid.height);
  binary::put_u32(os, pyramid.width);
  binary::put_u32(os, pyramid.dim);
  for (const auto& level : pyramid.levels)
    for (float v : level.data()) binary::put_f32(os, v);
}

FeaturePyramid decode_pyramid(std::istream& is) {
  binary::expect_magic(is, "MVFP");
  const std::uint32_t version = binary::get_u32(is, "version");
  if (version != kPyramidVersion) throw FormatError("MVFP: unsupported version " + std::to_string(version));
  const std::uint32_t levels = binary::get_u32(is, "levels");
  FeaturePyramid pyr;
  pyr.height = binary::get_u32(is, "height");
  pyr.width = binary::get_u32(is, "width");
  pyr.dim = binary::get_u32(is, "dim");
  if (levels == 0 || pyr.height == 0 || pyr.width == 0 || pyr.dim == 0) {
    throw FormatError("MVFP: zero extent in header");
  }
  const std::uint64_t per_level = std::uint64_t(pyr.height) * pyr.width * pyr.dim;
  if (per_level * levels > (std::uint64_t(1) << 32)) throw FormatError("MVFP: implausibly large payload");
  for (std::uint32_t v = 0; v < levels; ++v) {
    Tensor<float> t({pyr.patches(), pyr.dim});
    for (auto& x : t.data()) x = binary::get_f32(is, "MVFP payload");
    pyr.levels.push_back(std::move(t));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("MVFP: trailing bytes after payload");
  return pyr;
}

void write_pyramid(const FeaturePyramid& pyramid, const std::filesystem::path& path) {
  std::ostringstream buffer(std::ios::binary);
  encode_pyramid(pyramid, buffer);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  const std::string bytes = buffer.str();
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("failed writing '" + path.string() + "'");
}

FeaturePyramid read_pyramid(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path.string() + "'");
  return decode_pyramid(is);
}

void write_affinity(const Tensor<float>& affinity, const std::filesystem::path& path) {
  if (affinity.rank() != 2 || affinity.rows() != affinity.cols()) {
    throw ShapeError("write_affinity: expected a square matrix, got " + shape_string(affinity.shape()));
  }
  FeaturePyramid pyr;
  pyr.height = pyr.width = static_cast<std::uint32_t>(affinity.rows());
  pyr.dim = 1;
  pyr.levels.push_back(Tensor<float>({affinity.size(), 1}, affinity.values()));
  write_pyramid(pyr, path);
}

void encode_mask(const SegmentationMask& mask, std::ostream& os) {
  if (mask.labels.size() != std::size_t(mask.height) * mask.width) {
    throw ShapeError("encode_mask: label count does not match " + std::to_string(mask.height) + "x" +
                     std::to_string(mask.width));
  }
  for (auto v : mask.labels) {
    if (v < 0 || v > 255) throw RangeError("encode_mask: label " + std::to_string(v) + " outside 0..255");
  }
  os << "P5\n" << mask.width << ' ' << mask.height << "\n255\n";
  for (auto v : mask.labels) os.put(static_cast<char>(static_cast<unsigned char>(v)));
}

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& is) {
  std::string tok;
  int ch;
  while ((ch = is.get()) != EOF) {
    if (ch == '#') {
      while ((ch = is.get()) != EOF && ch != '\n') {}
      continue;
    }
    if (!std::isspace(ch)) {
      tok.push_back(static_cast<char>(ch));
      break;
    }
  }
  while ((ch = is.peek()) != EOF && !std::isspace(ch) && ch != '#') tok.push_back(static_cast<char>(is.get()));
  if (tok.empty()) throw FormatError("PGM: truncated header");
  return tok;
}

std::uint32_t header_number(std::istream& is, const char* what) {
  const std::string tok = header_token(is);
  if (tok.size() > 9 || tok.find_first_not_of("0123456789") != std::string::npos) {
    throw FormatError(std::string("PGM: bad ") + what + " '" + tok + "'");
  }
  return static_cast<std::uint32_t>(std::stoul(tok));
}

}  // namespace

SegmentationMask decode_mask(std::istream& is) {
  if (header_token(is) != "P5") throw FormatError("PGM: expected binary 'P5' magic");
  const std::uint32_t width = header_number(is, "width");
  const std::uint32_t height = header_number(is, "height");
  const std::uint32_t maxval = header_number(is, "maxval");
  if (width == 0 || height == 0) throw FormatError("PGM: zero image size");
  if (maxval != 255) throw FormatError("PGM: maxval must be 255, got " + std::to_string(maxval));
  const int sep = is.get();
  if (sep == EOF || !std::isspace(sep)) throw FormatError("PGM: missing whitespace after maxval");
  SegmentationMask mask(height, width);
  std::string bytes(mask.size(), '\0');
  if (!is.read(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
    throw LengthError("PGM: pixel data truncated");
  }
  for (std::size_t i = 0; i < bytes.size(); ++i) mask.labels[i] = static_cast<unsigned char>(bytes[i]);
  return mask;
}

void write_mask(const SegmentationMask& mask, const std::filesystem::path& path) {
  std::ostringstream buffer(std::ios::binary);
  encode_mask(mask, buffer);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  const std::string bytes = buffer.str();
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("failed writing '" + path.string() + "'");
}

SegmentationMask read_mask(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path.string() + "'");
  return decode_mask(is);
}

SynthFrame synth_pyramid(const SynthSpec& spec) {
  const std::size_t s = std::size_t(spec.height) * spec.width;
  if (spec.height == 0 || spec.width == 0 || spec.dim == 0 || spec.levels == 0) {
    throw ArgumentError("synth_pyramid: grid, dim and levels must be positive");
  }
  if (spec.segments < 1 || spec.segments > s) {
    throw ArgumentError("synth_pyramid: segments must be in 1.." + std::to_string(s) + ", got " +
                        std::to_string(spec.segments));
  }
  if (!(spec.noise >= 0.0)) throw ArgumentError("synth_pyramid: noise must be >= 0");
  if (!spec.informative.empty() && spec.informative.size() != spec.levels) {
    throw ArgumentError("synth_pyramid: " + std::to_string(spec.informative.size()) +
                        " informative flags for " + std::to_string(spec.levels) + " levels");
  }
  Rng rng(spec.seed);

  // Distinct sites by partial Fisher-Yates over the grid cells.
  std::vector<std::size_t> cells(s);
  for (std::size_t i = 0; i < s; ++i) cells[i] = i;
  for (std::size_t g = 0; g < spec.segments; ++g) std::swap(cells[g], cells[g + rng.below(s - g)]);

  SynthFrame frame;
  frame.mask = SegmentationMask(spec.height, spec.width);
  for (std::uint32_t y = 0; y < spec.height; ++y) {
    for (std::uint32_t x = 0; x < spec.width; ++x) {
      std::int32_t best = 0;
      long long best_d = std::numeric_limits<long long>::max();
      for (std::uint32_t g = 0; g < spec.segments; ++g) {
        const long long sy = static_cast<long long>(cells[g] / spec.width);
        const long long sx = static_cast<long long>(cells[g] % spec.width);
        const long long d = (sy - y) * (sy - y) + (sx - x) * (sx - x);
        if (d < best_d) {
          best_d = d;
          best = static_cast<std::int32_t>(g);
        }
      }
      frame.mask.at(y, x) = best;
    }
  }

  FeaturePyramid& pyr = frame.pyramid;
  pyr.height = spec.height;
  pyr.width = spec.width;
  pyr.dim = spec.dim;
  const double noise_scale = 1.0 / std::sqrt(static_cast<double>(spec.dim));
  Rng palette(spec.palette_seed);
  for (std::uint32_t level = 0; level < spec.levels; ++level) {
    const bool informative = spec.informative.empty() || spec.informative[level];
    Tensor<float> t({s, spec.dim});
    // Every level draws its centroids so that the palette of a level does not
    // depend on the informative flags of the levels before it.
    std::vector<std::vector<double>> centroids(spec.segments, std::vector<double>(spec.dim));
    for (auto& c : centroids) {
      double norm = 0.0;
      while (norm == 0.0) {
        for (auto& v : c) {
          v = palette.normal();
          norm += v * v;
        }
      }
      norm = std::sqrt(norm);
      for (auto& v : c) v /= norm;
    }
    if (informative) {
      for (std::size_t i = 0; i < s; ++i) {
        const auto& c = centroids[static_cast<std::size_t>(frame.mask.labels[i])];
        for (std::uint32_t ch = 0; ch < spec.dim; ++ch)
          t(i, ch) = static_cast<float>(c[ch] + spec.noise * rng.normal());
      }
    } else {
      for (auto& v : t.data()) v = static_cast<float>(noise_scale * rng.normal());
    }
    pyr.levels.push_back(std::move(t));
  }
  return frame;
}

}  // namespace amnc
