#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <string>

#include "tokenmask/cost_model.hpp"

using namespace tokenmask;

namespace {

HeadConfig std_config(UpsampleLocation loc, std::int64_t size = 640, std::int64_t stride = 4) {
  HeadConfig cfg;
  cfg.upsample_location = loc;
  cfg.output_stride = stride;
  cfg.image_h = cfg.image_w = size;
  cfg.patch = 16;
  return cfg;
}

}  // namespace

TEST_CASE("interpolation-stage flops ratio is exactly C/Qn") {
  for (const auto& preset : backbone_presets()) {
    for (std::int64_t qn : {100, 200}) {
      const auto feature =
          head_cost(std_config(UpsampleLocation::kFeature), preset, qn);
      const auto logit = head_cost(std_config(UpsampleLocation::kLogit), preset, qn);
      const StageCost* fs = feature.stage("feature_upsample");
      const StageCost* ls = logit.stage("logit_upsample");
      REQUIRE(fs != nullptr);
      REQUIRE(ls != nullptr);
      // fs/ls == C/Qn as an exact integer identity
      CHECK(fs->flops * static_cast<std::uint64_t>(qn) ==
            ls->flops * static_cast<std::uint64_t>(preset.embed_dim));
    }
  }
  // ViT-Base spot check: 768/200
  const auto& base = preset_by_name("vit-base");
  const auto f = head_cost(std_config(UpsampleLocation::kFeature), base, 200);
  const auto l = head_cost(std_config(UpsampleLocation::kLogit), base, 200);
  CHECK(static_cast<double>(f.stage("feature_upsample")->flops) /
            static_cast<double>(l.stage("logit_upsample")->flops) ==
        doctest::Approx(768.0 / 200.0).epsilon(1e-15));
}

TEST_CASE("no upsampling: interpolation stage absent, equal flop totals") {
  const auto& preset = preset_by_name("vit-small");
  const HeadConfig cfg = std_config(UpsampleLocation::kNone);
  const auto image = head_cost(cfg, preset, 100, HeadKind::kImageSpace);
  const auto token = head_cost(cfg, preset, 100, HeadKind::kTokenSpace);
  CHECK(image.stage("feature_upsample") == nullptr);
  CHECK(token.stage("logit_upsample") == nullptr);
  CHECK(image.total_flops() == token.total_flops());
}

TEST_CASE("logit path removes at least 40% of the head cost on small presets") {
  for (const char* name : {"vit-tiny", "vit-small", "vit-base"}) {
    const auto& preset = preset_by_name(name);
    const auto feature = head_cost(std_config(UpsampleLocation::kFeature), preset, 200);
    const auto logit = head_cost(std_config(UpsampleLocation::kLogit), preset, 200);
    CHECK(static_cast<double>(logit.total_flops()) <=
          0.6 * static_cast<double>(feature.total_flops()));
  }
}

TEST_CASE("logit path is cheaper whenever Qn < C and stride < patch") {
  for (const auto& preset : backbone_presets()) {
    for (std::int64_t qn : {100, 200}) {
      if (qn >= preset.embed_dim) continue;
      const auto feature = head_cost(std_config(UpsampleLocation::kFeature), preset, qn);
      const auto logit = head_cost(std_config(UpsampleLocation::kLogit), preset, qn);
      CHECK(logit.total_flops() < feature.total_flops());
    }
  }
}

TEST_CASE("head cost grows monotonically in every extent") {
  const auto& preset = preset_by_name("vit-tiny");
  const auto base = head_cost(std_config(UpsampleLocation::kLogit), preset, 100);
  CHECK(head_cost(std_config(UpsampleLocation::kLogit), preset, 200).total_flops() >=
        base.total_flops());
  CHECK(head_cost(std_config(UpsampleLocation::kLogit), preset, 100, 2).total_flops() >=
        base.total_flops());
  CHECK(head_cost(std_config(UpsampleLocation::kLogit, 1280), preset, 100).total_flops() >=
        base.total_flops());
  CHECK(head_cost(std_config(UpsampleLocation::kLogit, 640, 1), preset, 100).total_flops() >=
        base.total_flops());
  CHECK(head_cost(std_config(UpsampleLocation::kLogit), preset_by_name("vit-small"), 100)
            .total_flops() >= base.total_flops());
}

TEST_CASE("report totals and peak are consistent") {
  const auto& preset = preset_by_name("vit-base");
  const auto r = head_cost(std_config(UpsampleLocation::kFeature), preset, 200);
  std::uint64_t flops = 0;
  for (const auto& s : r.stages) {
    flops += s.flops;
    CHECK(r.peak_activation_bytes() >= s.peak_activation_bytes);
  }
  CHECK(flops == r.total_flops());
  CHECK(r.to_json().find("mask_scoring") != std::string::npos);

  const std::string csv = r.to_csv();
  CHECK(csv.rfind("preset,head,upsample_location,output_stride,queries,stage,", 0) == 0);
  // one row per stage plus header and total
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(r.stages.size()) + 2);
  CHECK(csv.find("total," + std::to_string(r.total_flops())) != std::string::npos);
}

TEST_CASE("backbone cost reduces to the plain ViT closed form") {
  const auto& preset = preset_by_name("vit-small");
  const std::uint64_t C = static_cast<std::uint64_t>(preset.embed_dim);
  const std::uint64_t N = (640 / 16) * (640 / 16);

  // independent re-summation, term by term
  const auto block = [&](std::uint64_t S) {
    const std::uint64_t qkv_out = 4 * S * C * C;
    const std::uint64_t attn = 2 * S * S * C;
    const std::uint64_t mlp = 8 * S * C * C;
    return 2 * (qkv_out + attn + mlp);
  };
  std::uint64_t want = 2 * N * C * 3 * 16 * 16;
  for (int b = 0; b < preset.depth; ++b) want += block(N);
  CHECK(backbone_cost(preset, 640, 640, 0, 0) == want);
  CHECK(backbone_cost(preset, 640, 640, 200, 0) == want);

  // with late query blocks
  const std::int64_t qb = default_query_blocks(preset);
  std::uint64_t want_q = 2 * N * C * 3 * 16 * 16;
  for (int b = 0; b < preset.depth; ++b)
    want_q += block(b < preset.depth - qb ? N : N + 200);
  CHECK(backbone_cost(preset, 640, 640, 200, qb) == want_q);
}

TEST_CASE("doubling the token count more than doubles backbone cost") {
  const auto& preset = preset_by_name("vit-tiny");
  const std::uint64_t one = backbone_cost(preset, 640, 640, 0, 0);
  const std::uint64_t two = backbone_cost(preset, 1280, 640, 0, 0);
  CHECK(two > 2 * one);
}

TEST_CASE("analytical model equals instrumented counters on every preset") {
  for (const auto& preset : backbone_presets()) {
    for (auto loc :
         {UpsampleLocation::kFeature, UpsampleLocation::kLogit, UpsampleLocation::kNone}) {
      HeadConfig cfg;
      cfg.upsample_location = loc;
      cfg.output_stride = 4;
      cfg.image_h = cfg.image_w = 128;
      cfg.patch = preset.patch;
      const auto v = validate_against_counters(cfg, preset, 200, 17);
      INFO(preset.name, "/", to_string(loc));
      if (!v.ok) {
        for (const auto& m : v.mismatches) MESSAGE(m);
      }
      CHECK(v.ok);
      CHECK(v.analytical.total_flops() == v.measured.flops);
    }
  }
}

TEST_CASE("scoring-stage flops equal 2*B*Qn*N*C for both heads at patch resolution") {
  const auto& preset = preset_by_name("vit-tiny");
  HeadConfig cfg = std_config(UpsampleLocation::kNone, 128);
  const std::uint64_t want = 2ull * 1 * 50 * cfg.token_count() * preset.embed_dim;
  CHECK(head_cost(cfg, preset, 50, HeadKind::kImageSpace).stage("mask_scoring")->flops == want);
  CHECK(head_cost(cfg, preset, 50, HeadKind::kTokenSpace).stage("mask_scoring")->flops == want);
}

TEST_CASE("feature-path interpolation counter reads back as 7*B*C*out") {
  const auto& preset = preset_by_name("vit-tiny");
  HeadConfig cfg = std_config(UpsampleLocation::kFeature, 128);
  const auto v = validate_against_counters(cfg, preset, 50, 3);
  REQUIRE(v.ok);
  const StageCost* s = v.analytical.stage("feature_upsample");
  REQUIRE(s != nullptr);
  CHECK(s->flops == 7ull * 1 * static_cast<std::uint64_t>(preset.embed_dim) * 32 * 32);
}

TEST_CASE("token-path peak memory beats the image path and ignores C") {
  std::uint64_t token_ref = 0;
  for (const auto& preset : backbone_presets()) {
    const std::int64_t qn = 100;  // < C for every preset
    const std::uint64_t tok =
        peak_memory(std_config(UpsampleLocation::kLogit), preset, qn);
    const std::uint64_t img =
        peak_memory(std_config(UpsampleLocation::kFeature), preset, qn);
    CHECK(tok < img);
    if (token_ref == 0) token_ref = tok;
    CHECK(tok == token_ref);
  }
}

TEST_CASE("peak memory closed forms") {
  const auto& base = preset_by_name("vit-base");
  const std::int64_t qn = 200;
  // logit path peak = bytes * max(Qn*N, Qn*out)
  const HeadConfig logit = std_config(UpsampleLocation::kLogit);
  const std::uint64_t n = static_cast<std::uint64_t>(logit.token_count());
  const std::uint64_t out = static_cast<std::uint64_t>(logit.out_h() * logit.out_w());
  CHECK(peak_memory(logit, base, qn) == 4ull * std::max<std::uint64_t>(200 * n, 200 * out));

  // 2-byte scalars mirror the deployment precision; ratio stays < 1
  const HeadConfig feature = std_config(UpsampleLocation::kFeature);
  const double ratio = static_cast<double>(peak_memory(logit, base, qn, HeadKind::kTokenSpace, 2)) /
                       static_cast<double>(peak_memory(feature, base, qn, HeadKind::kImageSpace, 2));
  CHECK(ratio < 1.0);
  CHECK(ratio == doctest::Approx(200.0 / 768.0).epsilon(1e-12));

  // stride == patch: peaks are Qn*N vs C*N, ratio Qn/C
  const HeadConfig tok16 = std_config(UpsampleLocation::kLogit, 640, 16);
  const HeadConfig img16 = std_config(UpsampleLocation::kFeature, 640, 16);
  CHECK(static_cast<double>(peak_memory(tok16, base, qn)) /
            static_cast<double>(peak_memory(img16, base, qn)) ==
        doctest::Approx(200.0 / 768.0).epsilon(1e-12));
}

TEST_CASE("preset lookup failures are configuration errors") {
  CHECK_THROWS_AS(preset_by_name("vit-huge"), config_error);
  CHECK(preset_by_name("vit-large").embed_dim == 1024);
  CHECK(preset_by_name("vit-large").depth == 24);
}
