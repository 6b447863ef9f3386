#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tokenmask/tensor.hpp"

namespace tokenmask {

// Dense per-pixel category map, entries in [0, K).
struct SemanticMap {
  std::int64_t h = 0;
  std::int64_t w = 0;
  std::vector<std::int32_t> category;  // row-major

  std::int32_t at(std::int64_t y, std::int64_t x) const {
    return category[static_cast<std::size_t>(y * w + x)];
  }
};

struct Segment {
  std::int32_t id = 0;
  std::int32_t category = 0;
  bool is_thing = true;
  std::int64_t area = 0;
};

// Segment-id grid (0 = void) plus the segment table. Every nonzero id in the
// grid appears exactly once in `segments`, and areas match grid counts.
struct PanopticMap {
  std::int64_t h = 0;
  std::int64_t w = 0;
  std::vector<std::int32_t> segment_id;  // row-major, 0 = void
  std::vector<Segment> segments;

  std::int32_t at(std::int64_t y, std::int64_t x) const {
    return segment_id[static_cast<std::size_t>(y * w + x)];
  }
  void validate() const;
};

struct InstancePrediction {
  std::int32_t category = 0;
  double score = 0.0;                // class confidence * mask quality
  std::vector<std::uint8_t> mask;    // row-major binary mask
};

struct DecodeThresholds {
  double tau_cls = 0.5;
  double tau_mask = 0.5;
  double tau_overlap = 0.8;
  std::int64_t min_area = 0;

  void validate() const {
    if (tau_cls < 0.0 || tau_cls > 1.0 || tau_mask < 0.0 || tau_mask > 1.0 ||
        tau_overlap < 0.0 || tau_overlap > 1.0) {
      throw config_error("decode thresholds must lie in [0, 1]");
    }
    if (min_area < 0) throw config_error("min_area must be >= 0");
  }
};

// Per-category and averaged panoptic quality. Categories absent from both
// maps are undefined and excluded from the averages; with no defined
// category the averages are 0 and num_defined is 0.
struct PqResult {
  struct CategoryStat {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    double iou_sum = 0.0;
    double pq = 0.0;
    double sq = 0.0;
    double rq = 0.0;
  };
  std::map<std::int32_t, CategoryStat> per_category;
  double pq = 0.0;
  double sq = 0.0;
  double rq = 0.0;
  std::int64_t num_defined = 0;
};

// Mask-classification marginalization: s[k,x] = sum_q softmax(classes)[q,k] *
// sigmoid(masks)[q,x] over the K real categories (no-object excluded), then
// per-pixel argmax with ties toward the smaller category index.
// masks: [Qn,H,W] logits; classes: [Qn,K+1] logits, final slot = no-object.
SemanticMap semantic_decode(const Tensor64& masks, const Tensor64& classes);

// Mask2Former-style merging: keep confident non-no-object queries, assign
// each pixel to the kept query maximizing score_q * sigmoid(mask), void
// pixels below tau_mask, then drop small / low-overlap segments and merge
// same-category stuff segments. `thing_flags` has one entry per category
// (nonzero = thing); empty means all categories are things. Output ids are
// canonical (first-pixel scan order), so equal inputs give equal maps.
PanopticMap panoptic_decode(const Tensor64& masks, const Tensor64& classes,
                            const DecodeThresholds& thresholds,
                            const std::vector<std::uint8_t>& thing_flags = {});

// Candidates ranked by class confidence times mask quality, where quality is
// the mean sigmoid over pixels at or above tau_mask (0 for an empty mask).
std::vector<InstancePrediction> instance_decode(const Tensor64& masks, const Tensor64& classes,
                                                std::int64_t top_k,
                                                double tau_mask = 0.5);

// PQ = sum_TP IoU / (|TP| + |FP|/2 + |FN|/2) with IoU > 0.5 matching; void
// pixels belong to no segment and never enter an IoU.
PqResult pq_metric(const PanopticMap& pred, const PanopticMap& gt);

// Mean IoU over the classes present in either map.
double miou_metric(const SemanticMap& pred, const SemanticMap& gt, std::int32_t num_classes);

// Renumbers segment ids 1..n in first-pixel scan order; segments sorted by id.
PanopticMap canonical_relabel(const PanopticMap& map);

// 32-bit convenience overloads; decoding itself always runs in 64-bit.
inline SemanticMap semantic_decode(const Tensor& masks, const Tensor& classes) {
  return semantic_decode(masks.cast<double>(), classes.cast<double>());
}
inline PanopticMap panoptic_decode(const Tensor& masks, const Tensor& classes,
                                   const DecodeThresholds& thresholds,
                                   const std::vector<std::uint8_t>& thing_flags = {}) {
  return panoptic_decode(masks.cast<double>(), classes.cast<double>(), thresholds, thing_flags);
}
inline std::vector<InstancePrediction> instance_decode(const Tensor& masks, const Tensor& classes,
                                                       std::int64_t top_k,
                                                       double tau_mask = 0.5) {
  return instance_decode(masks.cast<double>(), classes.cast<double>(), top_k, tau_mask);
}

// JSON forms with grids as row-major integer arrays, for golden-file tests.
std::string semantic_to_json(const SemanticMap& map);
SemanticMap semantic_from_json(const std::string& text);
std::string panoptic_to_json(const PanopticMap& map);
PanopticMap panoptic_from_json(const std::string& text);

}  // namespace tokenmask
