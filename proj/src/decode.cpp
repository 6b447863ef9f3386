#include "tokenmask/decode.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace tokenmask {

namespace {

using json = nlohmann::ordered_json;

void check_decode_shapes(const Tensor64& masks, const Tensor64& classes) {
  detail::require_rank(masks, 3, "decode masks");
  detail::require_rank(classes, 2, "decode classes");
  if (masks.dim(0) != classes.dim(0)) {
    throw shape_error("decode: query axes disagree, masks " + std::to_string(masks.dim(0)) +
                      " vs classes " + std::to_string(classes.dim(0)));
  }
  if (classes.dim(1) < 2) {
    throw shape_error("decode: classes need K >= 1 real categories plus a no-object slot");
  }
}

// Row-wise softmax of [Qn, K+1] class logits.
std::vector<double> class_probs(const Tensor64& classes) {
  const std::int64_t Qn = classes.dim(0), S = classes.dim(1);
  std::vector<double> p(static_cast<std::size_t>(Qn * S));
  for (std::int64_t q = 0; q < Qn; ++q) {
    const double* in = classes.data() + q * S;
    double* out = p.data() + q * S;
    double mx = in[0];
    for (std::int64_t k = 1; k < S; ++k) mx = std::max(mx, in[k]);
    double sum = 0.0;
    for (std::int64_t k = 0; k < S; ++k) {
      out[k] = std::exp(in[k] - mx);
      sum += out[k];
    }
    for (std::int64_t k = 0; k < S; ++k) out[k] /= sum;
  }
  return p;
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

void PanopticMap::validate() const {
  if (static_cast<std::int64_t>(segment_id.size()) != h * w) {
    throw shape_error("panoptic grid length does not match extents");
  }
  std::unordered_map<std::int32_t, std::int64_t> counts;
  for (auto id : segment_id) {
    if (id != 0) ++counts[id];
  }
  if (counts.size() != segments.size()) {
    throw config_error("panoptic map: grid ids and segment table disagree");
  }
  for (const auto& seg : segments) {
    auto it = counts.find(seg.id);
    if (it == counts.end()) {
      throw config_error("panoptic map: segment " + std::to_string(seg.id) +
                         " missing from grid");
    }
    if (it->second != seg.area) {
      throw config_error("panoptic map: segment " + std::to_string(seg.id) + " area " +
                         std::to_string(seg.area) + " != grid count " +
                         std::to_string(it->second));
    }
  }
}

SemanticMap semantic_decode(const Tensor64& masks, const Tensor64& classes) {
  check_decode_shapes(masks, classes);
  const std::int64_t Qn = masks.dim(0), H = masks.dim(1), W = masks.dim(2);
  const std::int64_t K = classes.dim(1) - 1;
  const std::int64_t P = H * W;

  const std::vector<double> probs = class_probs(classes);
  std::vector<double> scores(static_cast<std::size_t>(K * P), 0.0);
  for (std::int64_t q = 0; q < Qn; ++q) {
    const double* mrow = masks.data() + q * P;
    for (std::int64_t k = 0; k < K; ++k) {
      const double w = probs[static_cast<std::size_t>(q * (K + 1) + k)];
      double* srow = scores.data() + k * P;
      for (std::int64_t x = 0; x < P; ++x) {
        srow[x] += w * sigmoid(mrow[x]);
      }
    }
  }

  SemanticMap out;
  out.h = H;
  out.w = W;
  out.category.resize(static_cast<std::size_t>(P));
  for (std::int64_t x = 0; x < P; ++x) {
    std::int32_t best = 0;
    double best_score = scores[static_cast<std::size_t>(x)];
    for (std::int64_t k = 1; k < K; ++k) {
      const double s = scores[static_cast<std::size_t>(k * P + x)];
      if (s > best_score) {
        best_score = s;
        best = static_cast<std::int32_t>(k);
      }
    }
    out.category[static_cast<std::size_t>(x)] = best;
  }
  return out;
}

PanopticMap panoptic_decode(const Tensor64& masks, const Tensor64& classes,
                            const DecodeThresholds& thresholds,
                            const std::vector<std::uint8_t>& thing_flags) {
  check_decode_shapes(masks, classes);
  thresholds.validate();
  const std::int64_t Qn = masks.dim(0), H = masks.dim(1), W = masks.dim(2);
  const std::int64_t K = classes.dim(1) - 1;
  const std::int64_t P = H * W;
  if (!thing_flags.empty() && static_cast<std::int64_t>(thing_flags.size()) != K) {
    throw config_error("thing_flags must have one entry per category");
  }
  const auto is_thing = [&](std::int32_t cat) {
    return thing_flags.empty() || thing_flags[static_cast<std::size_t>(cat)] != 0;
  };

  const std::vector<double> probs = class_probs(classes);

  // Keep queries whose overall argmax is a real category with enough mass.
  struct Kept {
    std::int64_t query;
    std::int32_t label;
    double score;
  };
  std::vector<Kept> kept;
  for (std::int64_t q = 0; q < Qn; ++q) {
    const double* p = probs.data() + q * (K + 1);
    std::int64_t arg = 0;
    for (std::int64_t k = 1; k <= K; ++k) {
      if (p[k] > p[arg]) arg = k;
    }
    if (arg == K) continue;  // no-object
    std::int32_t label = 0;
    double score = p[0];
    for (std::int64_t k = 1; k < K; ++k) {
      if (p[k] > score) {
        score = p[k];
        label = static_cast<std::int32_t>(k);
      }
    }
    if (score < thresholds.tau_cls) continue;
    kept.push_back({q, label, score});
  }

  // Per-pixel winner among kept queries; below tau_mask stays void.
  std::vector<std::int32_t> owner(static_cast<std::size_t>(P), -1);
  std::vector<std::int64_t> soft_area(kept.size(), 0);
  std::vector<std::int64_t> hard_area(kept.size(), 0);
  for (std::int64_t x = 0; x < P; ++x) {
    std::int32_t best = -1;
    double best_score = 0.0;
    for (std::size_t i = 0; i < kept.size(); ++i) {
      const double m = sigmoid(masks.at(kept[i].query, x / W, x % W));
      if (m >= thresholds.tau_mask) ++soft_area[i];
      const double s = kept[i].score * m;
      if (best < 0 || s > best_score) {
        best = static_cast<std::int32_t>(i);
        best_score = s;
      }
    }
    if (best >= 0) {
      const double m = sigmoid(masks.at(kept[static_cast<std::size_t>(best)].query, x / W, x % W));
      if (m >= thresholds.tau_mask) {
        owner[static_cast<std::size_t>(x)] = best;
        ++hard_area[static_cast<std::size_t>(best)];
      }
    }
  }

  // Drop segments that are too small or kept too little of their soft mask.
  std::vector<bool> alive(kept.size(), false);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (hard_area[i] == 0) continue;
    if (hard_area[i] < thresholds.min_area) continue;
    if (soft_area[i] > 0 &&
        static_cast<double>(hard_area[i]) / static_cast<double>(soft_area[i]) <
            thresholds.tau_overlap) {
      continue;
    }
    alive[i] = true;
  }

  // Merge same-category stuff: all their pixels share one merged key.
  std::vector<std::int32_t> merge_key(kept.size(), -1);
  std::map<std::int32_t, std::int32_t> stuff_key;  // category -> key
  std::int32_t next_key = 0;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (!alive[i]) continue;
    if (!is_thing(kept[i].label)) {
      auto [it, inserted] = stuff_key.try_emplace(kept[i].label, next_key);
      if (inserted) ++next_key;
      merge_key[i] = it->second;
    } else {
      merge_key[i] = next_key++;
    }
  }

  // Canonical ids in first-pixel scan order.
  PanopticMap out;
  out.h = H;
  out.w = W;
  out.segment_id.assign(static_cast<std::size_t>(P), 0);
  std::map<std::int32_t, std::int32_t> key_to_id;
  for (std::int64_t x = 0; x < P; ++x) {
    const std::int32_t o = owner[static_cast<std::size_t>(x)];
    if (o < 0 || !alive[static_cast<std::size_t>(o)]) continue;
    const std::int32_t key = merge_key[static_cast<std::size_t>(o)];
    auto [it, inserted] = key_to_id.try_emplace(key, static_cast<std::int32_t>(key_to_id.size() + 1));
    if (inserted) {
      Segment seg;
      seg.id = it->second;
      seg.category = kept[static_cast<std::size_t>(o)].label;
      seg.is_thing = is_thing(seg.category);
      out.segments.push_back(seg);
    }
    out.segment_id[static_cast<std::size_t>(x)] = it->second;
    ++out.segments[static_cast<std::size_t>(it->second - 1)].area;
  }
  out.validate();
  return out;
}

std::vector<InstancePrediction> instance_decode(const Tensor64& masks, const Tensor64& classes,
                                                std::int64_t top_k, double tau_mask) {
  check_decode_shapes(masks, classes);
  if (top_k < 1) throw config_error("top_k must be >= 1");
  if (tau_mask < 0.0 || tau_mask > 1.0) throw config_error("tau_mask must lie in [0, 1]");
  const std::int64_t Qn = masks.dim(0), H = masks.dim(1), W = masks.dim(2);
  const std::int64_t K = classes.dim(1) - 1;
  const std::int64_t P = H * W;

  const std::vector<double> probs = class_probs(classes);
  struct Candidate {
    std::int64_t query;
    std::int32_t label;
    double combined;
    std::vector<std::uint8_t> mask;
  };
  std::vector<Candidate> cands;
  cands.reserve(static_cast<std::size_t>(Qn));
  for (std::int64_t q = 0; q < Qn; ++q) {
    const double* p = probs.data() + q * (K + 1);
    std::int32_t label = 0;
    double score = p[0];
    for (std::int64_t k = 1; k < K; ++k) {
      if (p[k] > score) {
        score = p[k];
        label = static_cast<std::int32_t>(k);
      }
    }
    std::vector<std::uint8_t> bin(static_cast<std::size_t>(P), 0);
    double quality_sum = 0.0;
    std::int64_t quality_count = 0;
    const double* mrow = masks.data() + q * P;
    for (std::int64_t x = 0; x < P; ++x) {
      const double m = sigmoid(mrow[x]);
      if (m >= tau_mask) {
        bin[static_cast<std::size_t>(x)] = 1;
        quality_sum += m;
        ++quality_count;
      }
    }
    const double quality = quality_count > 0 ? quality_sum / static_cast<double>(quality_count) : 0.0;
    cands.push_back({q, label, score * quality, std::move(bin)});
  }

  std::stable_sort(cands.begin(), cands.end(),
                   [](const Candidate& a, const Candidate& b) { return a.combined > b.combined; });
  const std::size_t n = std::min<std::size_t>(cands.size(), static_cast<std::size_t>(top_k));
  std::vector<InstancePrediction> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({cands[i].label, cands[i].combined, std::move(cands[i].mask)});
  }
  return out;
}

PqResult pq_metric(const PanopticMap& pred, const PanopticMap& gt) {
  if (pred.h != gt.h || pred.w != gt.w) {
    throw shape_error("pq_metric: grid extents disagree");
  }
  pred.validate();
  gt.validate();

  std::unordered_map<std::int64_t, std::int64_t> inter;  // (pred_id << 32 | gt_id) -> count
  const std::int64_t P = pred.h * pred.w;
  for (std::int64_t x = 0; x < P; ++x) {
    const std::int32_t pi = pred.segment_id[static_cast<std::size_t>(x)];
    const std::int32_t gi = gt.segment_id[static_cast<std::size_t>(x)];
    if (pi == 0 || gi == 0) continue;
    ++inter[(static_cast<std::int64_t>(pi) << 32) | static_cast<std::uint32_t>(gi)];
  }

  std::unordered_map<std::int32_t, const Segment*> pred_by_id, gt_by_id;
  for (const auto& s : pred.segments) pred_by_id[s.id] = &s;
  for (const auto& s : gt.segments) gt_by_id[s.id] = &s;

  PqResult res;
  std::map<std::int32_t, PqResult::CategoryStat> stats;
  std::unordered_map<std::int32_t, bool> pred_matched, gt_matched;

  for (const auto& [key, count] : inter) {
    const auto* ps = pred_by_id[static_cast<std::int32_t>(key >> 32)];
    const auto* gs = gt_by_id[static_cast<std::int32_t>(key & 0xffffffff)];
    if (ps->category != gs->category) continue;
    const double iou = static_cast<double>(count) /
                       static_cast<double>(ps->area + gs->area - count);
    if (iou > 0.5) {  // unique by the IoU > 0.5 theorem
      auto& st = stats[ps->category];
      ++st.tp;
      st.iou_sum += iou;
      pred_matched[ps->id] = true;
      gt_matched[gs->id] = true;
    }
  }
  for (const auto& s : pred.segments) {
    if (!pred_matched[s.id]) ++stats[s.category].fp;
  }
  for (const auto& s : gt.segments) {
    if (!gt_matched[s.id]) ++stats[s.category].fn;
  }

  for (auto& [cat, st] : stats) {
    const double denom = static_cast<double>(st.tp) + 0.5 * static_cast<double>(st.fp) +
                         0.5 * static_cast<double>(st.fn);
    st.pq = st.iou_sum / denom;
    st.sq = st.tp > 0 ? st.iou_sum / static_cast<double>(st.tp) : 0.0;
    st.rq = static_cast<double>(st.tp) / denom;
    res.pq += st.pq;
    res.sq += st.sq;
    res.rq += st.rq;
    ++res.num_defined;
  }
  if (res.num_defined > 0) {
    res.pq /= static_cast<double>(res.num_defined);
    res.sq /= static_cast<double>(res.num_defined);
    res.rq /= static_cast<double>(res.num_defined);
  }
  res.per_category = std::move(stats);
  return res;
}

double miou_metric(const SemanticMap& pred, const SemanticMap& gt, std::int32_t num_classes) {
  if (pred.h != gt.h || pred.w != gt.w) {
    throw shape_error("miou_metric: grid extents disagree");
  }
  std::vector<std::int64_t> inter(static_cast<std::size_t>(num_classes), 0);
  std::vector<std::int64_t> uni(static_cast<std::size_t>(num_classes), 0);
  const std::int64_t P = pred.h * pred.w;
  for (std::int64_t x = 0; x < P; ++x) {
    const std::int32_t p = pred.category[static_cast<std::size_t>(x)];
    const std::int32_t g = gt.category[static_cast<std::size_t>(x)];
    if (p < 0 || p >= num_classes || g < 0 || g >= num_classes) {
      throw config_error("miou_metric: category outside [0, K)");
    }
    if (p == g) {
      ++inter[static_cast<std::size_t>(p)];
      ++uni[static_cast<std::size_t>(p)];
    } else {
      ++uni[static_cast<std::size_t>(p)];
      ++uni[static_cast<std::size_t>(g)];
    }
  }
  double sum = 0.0;
  std::int64_t present = 0;
  for (std::int32_t k = 0; k < num_classes; ++k) {
    if (uni[static_cast<std::size_t>(k)] == 0) continue;  // absent from both
    sum += static_cast<double>(inter[static_cast<std::size_t>(k)]) /
           static_cast<double>(uni[static_cast<std::size_t>(k)]);
    ++present;
  }
  return present > 0 ? sum / static_cast<double>(present) : 0.0;
}

PanopticMap canonical_relabel(const PanopticMap& map) {
  map.validate();
  PanopticMap out;
  out.h = map.h;
  out.w = map.w;
  out.segment_id.assign(map.segment_id.size(), 0);
  std::unordered_map<std::int32_t, const Segment*> by_id;
  for (const auto& s : map.segments) by_id[s.id] = &s;

  std::unordered_map<std::int32_t, std::int32_t> relabel;
  for (std::size_t x = 0; x < map.segment_id.size(); ++x) {
    const std::int32_t id = map.segment_id[x];
    if (id == 0) continue;
    auto [it, inserted] = relabel.try_emplace(id, static_cast<std::int32_t>(relabel.size() + 1));
    if (inserted) {
      Segment seg = *by_id[id];
      seg.id = it->second;
      out.segments.push_back(seg);
    }
    out.segment_id[x] = it->second;
  }
  return out;
}

std::string semantic_to_json(const SemanticMap& map) {
  json j;
  j["h"] = map.h;
  j["w"] = map.w;
  j["category"] = map.category;
  return j.dump();
}

SemanticMap semantic_from_json(const std::string& text) {
  const json j = json::parse(text);
  SemanticMap map;
  map.h = j.at("h").get<std::int64_t>();
  map.w = j.at("w").get<std::int64_t>();
  map.category = j.at("category").get<std::vector<std::int32_t>>();
  if (static_cast<std::int64_t>(map.category.size()) != map.h * map.w) {
    throw config_error("semantic map JSON: grid length does not match extents");
  }
  return map;
}

std::string panoptic_to_json(const PanopticMap& map) {
  json j;
  j["h"] = map.h;
  j["w"] = map.w;
  j["segment_id"] = map.segment_id;
  j["segments"] = json::array();
  for (const auto& s : map.segments) {
    j["segments"].push_back({{"id", s.id},
                             {"category", s.category},
                             {"is_thing", s.is_thing},
                             {"area", s.area}});
  }
  return j.dump();
}

PanopticMap panoptic_from_json(const std::string& text) {
  const json j = json::parse(text);
  PanopticMap map;
  map.h = j.at("h").get<std::int64_t>();
  map.w = j.at("w").get<std::int64_t>();
  map.segment_id = j.at("segment_id").get<std::vector<std::int32_t>>();
  for (const auto& js : j.at("segments")) {
    Segment s;
    s.id = js.at("id").get<std::int32_t>();
    s.category = js.at("category").get<std::int32_t>();
    s.is_thing = js.at("is_thing").get<bool>();
    s.area = js.at("area").get<std::int64_t>();
    map.segments.push_back(s);
  }
  map.validate();
  return map;
}

}  // namespace tokenmask
