#pragma once

#include <cstdint>
#include <vector>

namespace amnc {

/// Integer label image, row-major.
struct SegmentationMask {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<std::int32_t> labels;

  SegmentationMask() = default;
  SegmentationMask(std::uint32_t h, std::uint32_t w, std::int32_t fill = 0)
      : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill) {}

  std::int32_t& at(std::uint32_t y, std::uint32_t x) { return labels[std::size_t(y) * width + x]; }
  std::int32_t at(std::uint32_t y, std::uint32_t x) const { return labels[std::size_t(y) * width + x]; }
  std::size_t size() const { return labels.size(); }

  friend bool operator==(const SegmentationMask&, const SegmentationMask&) = default;
};

}  // namespace amnc
