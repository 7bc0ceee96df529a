#include "amnc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "amnc/errors.hpp"

namespace amnc {

MatchMode parse_match_mode(const std::string& name) {
  if (name == "majority") return MatchMode::Majority;
  if (name == "hungarian" || name == "one-to-one") return MatchMode::OneToOne;
  throw ArgumentError("unknown matching mode '" + name + "' (expected majority or hungarian)");
}

std::string to_string(MatchMode mode) { return mode == MatchMode::Majority ? "majority" : "hungarian"; }

std::int32_t LabelMapping::operator()(std::int32_t predicted) const {
  auto it = assignment.find(predicted);
  if (it == assignment.end()) throw ArgumentError("label mapping has no entry for " + std::to_string(predicted));
  return it->second;
}

namespace {

void require_same_size(const SegmentationMask& a, const SegmentationMask& b, const char* op) {
  if (a.height != b.height || a.width != b.width || a.size() != b.size()) {
    throw ShapeError(std::string(op) + ": prediction " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                     " vs ground truth " + std::to_string(b.height) + "x" + std::to_string(b.width));
  }
}

}  // namespace

std::vector<int> hungarian_maximize(const std::vector<std::vector<double>>& weight) {
  const std::size_t rows = weight.size();
  if (rows == 0) return {};
  std::size_t cols = 0;
  double wmax = 0.0;
  for (const auto& r : weight) {
    cols = std::max(cols, r.size());
    for (double v : r) wmax = std::max(wmax, v);
  }
  const std::size_t n = std::max(rows, cols);
  // Square minimisation on cost = wmax - weight, zero-weight padding.
  auto cost = [&](std::size_t i, std::size_t j) {
    const double w = (i < rows && j < weight[i].size()) ? weight[i][j] : 0.0;
    return wmax - w;
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(n, -1);
  for (std::size_t j = 1; j <= n; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = static_cast<int>(j - 1);
  row_to_col.resize(rows);
  return row_to_col;
}

LabelMapping match_labels(const SegmentationMask& pred, const SegmentationMask& gt, MatchMode mode) {
  require_same_size(pred, gt, "match_labels");
  std::set<std::int32_t> pred_set(pred.labels.begin(), pred.labels.end());
  std::set<std::int32_t> gt_set(gt.labels.begin(), gt.labels.end());
  const std::vector<std::int32_t> pred_labels(pred_set.begin(), pred_set.end());
  const std::vector<std::int32_t> gt_labels(gt_set.begin(), gt_set.end());
  auto pred_index = [&](std::int32_t l) {
    return static_cast<std::size_t>(std::lower_bound(pred_labels.begin(), pred_labels.end(), l) - pred_labels.begin());
  };
  auto gt_index = [&](std::int32_t l) {
    return static_cast<std::size_t>(std::lower_bound(gt_labels.begin(), gt_labels.end(), l) - gt_labels.begin());
  };
  std::vector<std::vector<double>> overlap(pred_labels.size(), std::vector<double>(gt_labels.size(), 0.0));
  for (std::size_t i = 0; i < pred.size(); ++i) overlap[pred_index(pred.labels[i])][gt_index(gt.labels[i])] += 1.0;

  LabelMapping mapping;
  mapping.mode = mode;
  if (mode == MatchMode::Majority) {
    for (std::size_t r = 0; r < pred_labels.size(); ++r) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < gt_labels.size(); ++c)
        if (overlap[r][c] > overlap[r][best]) best = c;
      mapping.assignment[pred_labels[r]] = gt_labels[best];
    }
    return mapping;
  }
  const std::vector<int> cols = hungarian_maximize(overlap);
  for (std::size_t r = 0; r < pred_labels.size(); ++r) {
    const int c = cols[r];
    mapping.assignment[pred_labels[r]] =
        (c >= 0 && static_cast<std::size_t>(c) < gt_labels.size()) ? gt_labels[static_cast<std::size_t>(c)] : kUnmatched;
  }
  return mapping;
}

IouReport miou(const SegmentationMask& pred, const SegmentationMask& gt, const LabelMapping& mapping,
               std::uint32_t num_classes) {
  require_same_size(pred, gt, "miou");
  std::vector<double> inter(num_classes, 0.0), pred_count(num_classes, 0.0), gt_count(num_classes, 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const std::int32_t g = gt.labels[i];
    if (g < 0 || static_cast<std::uint32_t>(g) >= num_classes) {
      throw ArgumentError("miou: ground-truth label " + std::to_string(g) + " outside 0.." +
                          std::to_string(num_classes - 1));
    }
    const std::int32_t p = mapping(pred.labels[i]);
    gt_count[g] += 1.0;
    if (p >= 0 && static_cast<std::uint32_t>(p) < num_classes) {
      pred_count[p] += 1.0;
      if (p == g) inter[g] += 1.0;
    }
  }
  IouReport report;
  report.per_class.assign(num_classes, std::numeric_limits<double>::quiet_NaN());
  double total = 0.0;
  int present = 0;
  for (std::uint32_t c = 0; c < num_classes; ++c) {
    if (gt_count[c] == 0.0) continue;
    report.per_class[c] = inter[c] / (gt_count[c] + pred_count[c] - inter[c]);
    total += report.per_class[c];
    ++present;
  }
  report.mean = present ? total / present : std::numeric_limits<double>::quiet_NaN();
  return report;
}

}  // namespace amnc
