#include "amnc/affinity.hpp"

namespace amnc {

void FeaturePyramid::validate() const {
  if (levels.empty()) throw ShapeError("feature pyramid has no levels");
  if (height == 0 || width == 0 || dim == 0) {
    throw ShapeError("feature pyramid has an empty grid: " + std::to_string(height) + "x" +
                     std::to_string(width) + "x" + std::to_string(dim));
  }
  const Shape expected{patches(), dim};
  for (std::size_t v = 0; v < levels.size(); ++v) {
    if (levels[v].shape() != expected) {
      throw ShapeError("feature pyramid level " + std::to_string(v) + " is " +
                       shape_string(levels[v].shape()) + ", expected " + shape_string(expected));
    }
  }
}

}  // namespace amnc
