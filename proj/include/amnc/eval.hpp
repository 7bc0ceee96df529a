#pragma once

// Cluster-to-class label matching and intersection-over-union metrics.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "amnc/mask.hpp"

namespace amnc {

enum class MatchMode {
  Majority,  // many-to-one: each cluster takes the class it overlaps most
  OneToOne,  // Hungarian assignment maximising total overlap
};

MatchMode parse_match_mode(const std::string& name);
std::string to_string(MatchMode mode);

/// Label assigned to predicted clusters left without a class by one-to-one matching.
inline constexpr std::int32_t kUnmatched = -1;

struct LabelMapping {
  MatchMode mode = MatchMode::Majority;
  std::map<std::int32_t, std::int32_t> assignment;  // predicted label -> class

  /// ArgumentError for a label the mapping does not cover.
  std::int32_t operator()(std::int32_t predicted) const;
};

/// Same-size masks only (ShapeError otherwise). Ties go to the lower class.
LabelMapping match_labels(const SegmentationMask& pred, const SegmentationMask& gt,
                          MatchMode mode = MatchMode::Majority);

/// Rectangular weights, rows <= cols after padding internally. Returns the
/// column chosen for each row maximising the total weight.
std::vector<int> hungarian_maximize(const std::vector<std::vector<double>>& weight);

struct IouReport {
  std::vector<double> per_class;  // NaN for classes absent from gt
  double mean = 0.0;              // over classes present in gt
};

IouReport miou(const SegmentationMask& pred, const SegmentationMask& gt, const LabelMapping& mapping,
               std::uint32_t num_classes);

}  // namespace amnc
