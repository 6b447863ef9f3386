#include "tokenmask/selftest.hpp"

#include <cmath>
#include <sstream>

#include "tokenmask/cost_model.hpp"
#include "tokenmask/decode.hpp"
#include "tokenmask/heads.hpp"
#include "tokenmask/synthetic.hpp"

namespace tokenmask {

namespace {

template <typename T>
double max_abs_diff(const TensorT<T>& a, const TensorT<T>& b) {
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a.at(i)) - static_cast<double>(b.at(i))));
  }
  return m;
}

template <typename T>
double max_rel_diff(const TensorT<T>& a, const TensorT<T>& b) {
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double x = static_cast<double>(a.at(i));
    const double y = static_cast<double>(b.at(i));
    const double scale = std::max({std::abs(x), std::abs(y), 1e-12});
    m = std::max(m, std::abs(x - y) / scale);
  }
  return m;
}

}  // namespace

std::vector<SelfTestCase> run_selftest(std::uint64_t seed) {
  std::vector<SelfTestCase> cases;
  const auto record = [&](const std::string& name, bool ok, const std::string& detail) {
    cases.push_back({name, ok, detail});
  };

  // Both heads reduce to the same algebra at the patch grid.
  {
    HeadConfig cfg;
    cfg.upsample_location = UpsampleLocation::kNone;
    cfg.image_h = cfg.image_w = 64;
    cfg.patch = 16;
    double worst_f32 = 0.0, worst_f64 = 0.0;
    for (std::uint64_t s = 0; s < 8; ++s) {
      auto in32 = gen_synthetic<float>(seed + s, 2, cfg.token_count(), 12, 5);
      Tensor mq32 = project_queries(in32.queries, in32.projection);
      HeadConfig img = cfg, tok = cfg;
      img.upsample_location = UpsampleLocation::kNone;
      worst_f32 = std::max(worst_f32, max_rel_diff(image_space_head(in32.tokens, mq32, img),
                                                   token_space_head(in32.tokens, mq32, tok)));
      auto in64 = gen_synthetic<double>(seed + s, 2, cfg.token_count(), 12, 5);
      Tensor64 mq64 = project_queries(in64.queries, in64.projection);
      worst_f64 = std::max(worst_f64, max_abs_diff(image_space_head(in64.tokens, mq64, img),
                                                   token_space_head(in64.tokens, mq64, tok)));
    }
    std::ostringstream os;
    os << "max rel diff f32 = " << worst_f32 << ", max abs diff f64 = " << worst_f64;
    record("head_equivalence_at_patch_grid", worst_f32 <= 1e-5 && worst_f64 == 0.0, os.str());
  }

  // Upsample-then-score commutes with score-then-upsample.
  {
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 8; ++s) {
      HeadConfig feature;
      feature.upsample_location = UpsampleLocation::kFeature;
      feature.image_h = feature.image_w = 64;
      feature.patch = 16;
      feature.output_stride = (s % 2 == 0) ? 4 : 8;
      HeadConfig logit = feature;
      logit.upsample_location = UpsampleLocation::kLogit;
      auto in = gen_synthetic<float>(seed + 100 + s, 1, feature.token_count(), 16, 6);
      Tensor mq = project_queries(in.queries, in.projection);
      worst = std::max(worst, max_abs_diff(image_space_head(in.tokens, mq, feature),
                                           token_space_head(in.tokens, mq, logit)));
    }
    std::ostringstream os;
    os << "max abs deviation f32 = " << worst;
    record("upsample_commutation", worst <= 1e-4, os.str());
  }

  // Analytical model matches instrumented counters exactly.
  {
    bool ok = true;
    std::string detail = "all presets, 128^2, feature and logit paths";
    for (const auto& preset : backbone_presets()) {
      for (auto loc : {UpsampleLocation::kFeature, UpsampleLocation::kLogit}) {
        HeadConfig cfg;
        cfg.upsample_location = loc;
        cfg.image_h = cfg.image_w = 128;
        cfg.patch = preset.patch;
        cfg.output_stride = 4;
        auto v = validate_against_counters(cfg, preset, 50, seed);
        if (!v.ok) {
          ok = false;
          detail = preset.name + "/" + to_string(loc) + ": " + v.mismatches.front();
        }
      }
    }
    record("counters_match_model", ok, detail);
  }

  // Interpolation cost ratio between the paths is C/Qn.
  {
    bool ok = true;
    std::string detail = "feature/logit interpolation flops == C/Qn";
    for (const auto& preset : backbone_presets()) {
      HeadConfig feature;
      feature.upsample_location = UpsampleLocation::kFeature;
      feature.image_h = feature.image_w = 640;
      feature.patch = preset.patch;
      feature.output_stride = 4;
      HeadConfig logit = feature;
      logit.upsample_location = UpsampleLocation::kLogit;
      const std::int64_t qn = 100;
      const CostReport fr = head_cost(feature, preset, qn);
      const CostReport lr = head_cost(logit, preset, qn);
      const auto fs = fr.stage("feature_upsample");
      const auto ls = lr.stage("logit_upsample");
      if (!fs || !ls || fs->flops * static_cast<std::uint64_t>(qn) !=
                            ls->flops * static_cast<std::uint64_t>(preset.embed_dim)) {
        ok = false;
        detail = "ratio mismatch for " + preset.name;
      }
    }
    record("interpolation_cost_ratio", ok, detail);
  }

  // Token-path peak activation is smaller and independent of C.
  {
    bool ok = true;
    std::string detail = "token peak < image peak, C-independent";
    std::uint64_t token_peak_ref = 0;
    for (const auto& preset : backbone_presets()) {
      HeadConfig feature;
      feature.upsample_location = UpsampleLocation::kFeature;
      feature.image_h = feature.image_w = 640;
      feature.patch = preset.patch;
      feature.output_stride = 4;
      HeadConfig logit = feature;
      logit.upsample_location = UpsampleLocation::kLogit;
      const std::int64_t qn = 100;
      const std::uint64_t tok = peak_memory(logit, preset, qn);
      const std::uint64_t img = peak_memory(feature, preset, qn);
      if (tok >= img) {
        ok = false;
        detail = "ordering violated for " + preset.name;
      }
      if (token_peak_ref == 0) token_peak_ref = tok;
      if (tok != token_peak_ref) {
        ok = false;
        detail = "token peak varies with C";
      }
    }
    record("peak_memory_ordering", ok, detail);
  }

  // Elementwise kernels behave.
  {
    Tensor x({1, 3}, {0.0f, std::log(3.0f), 0.0f});
    Tensor sm = softmax_lastdim(x);
    double sum = 0.0;
    for (std::int64_t i = 0; i < sm.numel(); ++i) sum += sm.at(i);
    const Tensor sg = sigmoid(Tensor({1}, {0.0f}));
    const bool ok = std::abs(sum - 1.0) <= 1e-6 && std::abs(sg.at(0) - 0.5f) <= 1e-7;
    record("elementwise_identities", ok, "softmax row sum and sigmoid(0)");
  }

  // Decoding a map against itself scores perfect panoptic quality.
  {
    auto in = gen_synthetic<float>(seed + 7, 1, 64, 16, 6, 4);
    HeadConfig cfg;
    cfg.upsample_location = UpsampleLocation::kNone;
    cfg.image_h = cfg.image_w = 128;
    cfg.patch = 16;
    Tensor mq = project_queries(in.queries, in.projection);
    Tensor masks = token_space_head(in.tokens, mq, cfg);
    PanopticMap map = panoptic_decode(slice_batch(masks, 0), slice_batch(in.class_logits, 0),
                                      DecodeThresholds{});
    const PqResult pq = pq_metric(map, map);
    const bool ok = map.segments.empty()
                        ? pq.num_defined == 0
                        : (std::abs(pq.pq - 1.0) <= 1e-12 && std::abs(pq.sq - 1.0) <= 1e-12 &&
                           std::abs(pq.rq - 1.0) <= 1e-12);
    record("pq_self_identity", ok, map.segments.empty() ? "decoded map empty" : "PQ=SQ=RQ=1");
  }

  return cases;
}

}  // namespace tokenmask
