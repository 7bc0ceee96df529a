#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <set>
#include <sstream>

#include "amnc/io.hpp"
#include "support.hpp"

using namespace amnc;

namespace {

std::string encode(const FeaturePyramid& p) {
  std::ostringstream os(std::ios::binary);
  encode_pyramid(p, os);
  return os.str();
}

FeaturePyramid decode(const std::string& bytes) {
  std::istringstream is(bytes, std::ios::binary);
  return decode_pyramid(is);
}

std::string u32(std::uint32_t v) {
  std::string s(4, '\0');
  for (int i = 0; i < 4; ++i) s[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  return s;
}

bool bit_identical(const FeaturePyramid& a, const FeaturePyramid& b) {
  if (a.height != b.height || a.width != b.width || a.dim != b.dim || a.levels.size() != b.levels.size())
    return false;
  for (std::size_t v = 0; v < a.levels.size(); ++v) {
    if (a.levels[v].size() != b.levels[v].size()) return false;
    if (std::memcmp(a.levels[v].data().data(), b.levels[v].data().data(), a.levels[v].size() * sizeof(float)))
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("pyramid round-trip is bit-identical") {
  Rng rng(1);
  FeaturePyramid p{3, 5, 4, {}};
  for (int v = 0; v < 3; ++v) p.levels.push_back(testing::random_matrix<float>(rng, 15, 4, -1e3, 1e3));
  p.levels[1](2, 3) = -0.0f;
  p.levels[2](0, 0) = 1e-40f;  // subnormal
  CHECK(bit_identical(decode(encode(p)), p));
  testing::TempDir dir("mvfp");
  write_pyramid(p, dir / "a.mvfp");
  CHECK(bit_identical(read_pyramid(dir / "a.mvfp"), p));
}

TEST_CASE("hand-encoded single-value pyramid") {
  const FeaturePyramid p{1, 1, 1, {Tensor<float>({1, 1}, 2.5f)}};
  const std::string expected = std::string("MVFP") + u32(1) + u32(1) + u32(1) + u32(1) + u32(1) +
                               std::string("\x00\x00\x20\x40", 4);
  const std::string bytes = encode(p);
  CHECK(bytes.size() == kPyramidHeaderBytes + 4);
  CHECK(bytes == expected);
}

TEST_CASE("malformed pyramid files are rejected") {
  Rng rng(2);
  FeaturePyramid p{2, 2, 2, {testing::random_matrix<float>(rng, 4, 2)}};
  const std::string good = encode(p);
  CHECK_THROWS_AS(decode("XXXX" + good.substr(4)), FormatError);
  CHECK_THROWS_AS(decode(good.substr(0, good.size() - 1)), LengthError);
  CHECK_THROWS_AS(decode(good.substr(0, 10)), LengthError);
  CHECK_THROWS_AS(decode(good + "\x01"), FormatError);
  std::string version = good;
  version[4] = 2;
  CHECK_THROWS_AS(decode(version), FormatError);
  std::string zero = good;
  zero[8] = 0;  // B = 0
  CHECK_THROWS_AS(decode(zero), FormatError);
  CHECK_THROWS(read_pyramid("/nonexistent/path.mvfp"));
  FeaturePyramid ragged{2, 2, 2, {Tensor<float>({4, 2}), Tensor<float>({3, 2})}};
  CHECK_THROWS_AS(encode(ragged), ShapeError);
}

TEST_CASE("affinity dump is a one-level pyramid") {
  testing::TempDir dir("aff");
  const Tensor<float> w = Tensor<float>::matrix(3, 3, {0.5f, 0.1f, 0.2f, 0.1f, 0.5f, 0.3f, 0.2f, 0.3f, 0.5f});
  write_affinity(w, dir / "w.mvfp");
  const FeaturePyramid p = read_pyramid(dir / "w.mvfp");
  CHECK(p.height == 3);
  CHECK(p.width == 3);
  CHECK(p.dim == 1);
  REQUIRE(p.level_count() == 1);
  CHECK(p.levels[0].values() == w.values());
  CHECK_THROWS_AS(write_affinity(Tensor<float>({2, 3}), dir / "x.mvfp"), ShapeError);
}

TEST_CASE("mask encoding examples") {
  SegmentationMask m(2, 2);
  m.labels = {0, 1, 1, 0};
  std::ostringstream os(std::ios::binary);
  encode_mask(m, os);
  CHECK(os.str() == std::string("P5\n2 2\n255\n\x00\x01\x01\x00", 15));

  std::istringstream with_comment(std::string("P5\n# made by hand\n2 1 # trailing\n255\n") + "\x03\x04",
                                  std::ios::binary);
  const SegmentationMask c = decode_mask(with_comment);
  CHECK(c.width == 2);
  CHECK(c.height == 1);
  CHECK(c.labels == std::vector<std::int32_t>{3, 4});
}

TEST_CASE("mask round-trip and rejection") {
  Rng rng(3);
  testing::TempDir dir("pgm");
  for (int trial = 0; trial < 5; ++trial) {
    SegmentationMask m(1 + rng.below(9), 1 + rng.below(9));
    for (auto& v : m.labels) v = static_cast<std::int32_t>(rng.below(256));
    write_mask(m, dir / "m.pgm");
    CHECK(read_mask(dir / "m.pgm") == m);
  }
  auto decode_text = [](const std::string& s) {
    std::istringstream is(s, std::ios::binary);
    return decode_mask(is);
  };
  CHECK_THROWS_AS(decode_text(std::string("P5\n1 1\n65535\n\x00\x00", 15)), FormatError);
  CHECK_THROWS_AS(decode_text("P2\n1 1\n255\n0"), FormatError);
  CHECK_THROWS_AS(decode_text(std::string("P5\n2 2\n255\n\x00", 12)), LengthError);
  SegmentationMask big(1, 1);
  big.labels = {256};
  std::ostringstream os;
  CHECK_THROWS_AS(encode_mask(big, os), RangeError);
}

TEST_CASE("synthetic pyramid properties") {
  SynthSpec spec;
  spec.height = 8;
  spec.width = 9;
  spec.dim = 6;
  spec.levels = 2;
  spec.segments = 4;
  spec.noise = 0.0;
  spec.seed = 5;
  const SynthFrame f = synth_pyramid(spec);
  CHECK(f.pyramid.patches() == 72);
  CHECK(f.mask.height == 8);
  CHECK(f.mask.width == 9);
  std::set<std::int32_t> seen(f.mask.labels.begin(), f.mask.labels.end());
  CHECK(seen == std::set<std::int32_t>{0, 1, 2, 3});
  for (const auto& level : f.pyramid.levels) {
    const Tensor<double> w = cosine_affinity(level.cast<double>());
    for (std::size_t i = 0; i < 72; ++i)
      for (std::size_t j = 0; j < 72; ++j) {
        if (i == j) continue;
        if (f.mask.labels[i] == f.mask.labels[j]) CHECK(w(i, j) == doctest::Approx(1.0).epsilon(1e-6));
        else CHECK(w(i, j) < 1.0 - 1e-6);
      }
  }

  // Determinism, and a shared palette gives identical centroids across layouts.
  const SynthFrame g = synth_pyramid(spec);
  CHECK(g.mask == f.mask);
  CHECK(bit_identical(g.pyramid, f.pyramid));
  SynthSpec other = spec;
  other.seed = 6;
  const SynthFrame h = synth_pyramid(other);
  for (std::size_t i = 0; i < 72; ++i)
    for (std::size_t j = 0; j < 72; ++j)
      if (f.mask.labels[i] == h.mask.labels[j])
        for (std::size_t c = 0; c < spec.dim; ++c) CHECK(f.pyramid.levels[0](i, c) == h.pyramid.levels[0](j, c));

  spec.segments = 1;
  for (auto v : synth_pyramid(spec).mask.labels) CHECK(v == 0);
}

TEST_CASE("synthetic noise levels and validation") {
  SynthSpec spec;
  spec.informative = {false, true};
  const SynthFrame f = synth_pyramid(spec);
  double mean = 0.0, sq = 0.0;
  for (float v : f.pyramid.levels[0].data()) mean += v, sq += double(v) * v;
  const double n = static_cast<double>(f.pyramid.levels[0].size());
  CHECK(std::abs(mean / n) < 0.05);
  CHECK(sq / n == doctest::Approx(1.0 / spec.dim).epsilon(0.2));

  SynthSpec bad;
  bad.segments = 0;
  CHECK_THROWS_AS(synth_pyramid(bad), ArgumentError);
  bad = SynthSpec{};
  bad.segments = 16 * 16 + 1;
  CHECK_THROWS_AS(synth_pyramid(bad), ArgumentError);
  bad = SynthSpec{};
  bad.noise = -1.0;
  CHECK_THROWS_AS(synth_pyramid(bad), ArgumentError);
  bad = SynthSpec{};
  bad.informative = {true};
  CHECK_THROWS_AS(synth_pyramid(bad), ArgumentError);
}

TEST_CASE("synthetic segments are spatially contiguous") {
  SynthSpec spec;
  spec.segments = 5;
  spec.seed = 11;
  const SegmentationMask m = synth_pyramid(spec).mask;
  // Flood fill from the first cell of each label must reach every cell of that label.
  for (std::int32_t label = 0; label < 5; ++label) {
    std::vector<char> seen(m.size(), 0);
    std::vector<std::size_t> stack;
    std::size_t total = 0;
    for (std::size_t i = 0; i < m.size(); ++i) total += m.labels[i] == label;
    for (std::size_t i = 0; i < m.size() && stack.empty(); ++i)
      if (m.labels[i] == label) stack.push_back(i), seen[i] = 1;
    std::size_t reached = 0;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      ++reached;
      const std::size_t y = i / m.width, x = i % m.width;
      const std::size_t nbrs[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
      for (auto [ny, nx] : nbrs) {
        if (ny >= m.height || nx >= m.width) continue;
        const std::size_t j = ny * m.width + nx;
        if (!seen[j] && m.labels[j] == label) seen[j] = 1, stack.push_back(j);
      }
    }
    CHECK(reached == total);
  }
}
