#include "tokenmask/cost_model.hpp"

#include <algorithm>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tokenmask/synthetic.hpp"

namespace tokenmask {

namespace {

using json = nlohmann::ordered_json;

StageCost make_stage(std::string name, std::uint64_t flops, std::uint64_t read,
                     std::uint64_t written, std::uint64_t peak) {
  return StageCost{std::move(name), flops, read, written, peak};
}

}  // namespace

const std::vector<BackbonePreset>& backbone_presets() {
  static const std::vector<BackbonePreset> presets = {
      {"vit-tiny", 192, 12, 3, 16},
      {"vit-small", 384, 12, 6, 16},
      {"vit-base", 768, 12, 12, 16},
      {"vit-large", 1024, 24, 16, 16},
  };
  return presets;
}

const BackbonePreset& preset_by_name(const std::string& name) {
  for (const auto& p : backbone_presets()) {
    if (p.name == name) return p;
  }
  throw config_error("unknown backbone preset '" + name +
                     "' (vit-tiny|vit-small|vit-base|vit-large)");
}

std::uint64_t CostReport::total_flops() const {
  std::uint64_t n = 0;
  for (const auto& s : stages) n += s.flops;
  return n;
}

std::uint64_t CostReport::total_bytes_read() const {
  std::uint64_t n = 0;
  for (const auto& s : stages) n += s.bytes_read;
  return n;
}

std::uint64_t CostReport::total_bytes_written() const {
  std::uint64_t n = 0;
  for (const auto& s : stages) n += s.bytes_written;
  return n;
}

std::uint64_t CostReport::peak_activation_bytes() const {
  std::uint64_t n = 0;
  for (const auto& s : stages) n = std::max(n, s.peak_activation_bytes);
  return n;
}

const StageCost* CostReport::stage(const std::string& name) const {
  for (const auto& s : stages) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

std::string CostReport::to_json() const {
  json j;
  j["preset"] = preset;
  j["head"] = to_string(head);
  j["upsample_location"] = to_string(upsample_location);
  j["output_stride"] = output_stride;
  j["image_h"] = image_h;
  j["image_w"] = image_w;
  j["queries"] = queries;
  j["batch"] = batch;
  j["bytes_per_scalar"] = bytes_per_scalar;
  j["stages"] = json::array();
  for (const auto& s : stages) {
    j["stages"].push_back({{"name", s.name},
                           {"flops", s.flops},
                           {"bytes_read", s.bytes_read},
                           {"bytes_written", s.bytes_written},
                           {"peak_activation_bytes", s.peak_activation_bytes}});
  }
  j["total_flops"] = total_flops();
  j["total_bytes_read"] = total_bytes_read();
  j["total_bytes_written"] = total_bytes_written();
  j["peak_activation_bytes"] = peak_activation_bytes();
  return j.dump(2);
}

std::string CostReport::to_csv() const {
  std::ostringstream os;
  os << "preset,head,upsample_location,output_stride,queries,stage,flops,bytes_read,"
        "bytes_written,peak_activation_bytes\n";
  const auto row = [&](const std::string& name, std::uint64_t flops, std::uint64_t read,
                       std::uint64_t written, std::uint64_t peak) {
    os << preset << ',' << to_string(head) << ',' << to_string(upsample_location) << ','
       << output_stride << ',' << queries << ',' << name << ',' << flops << ',' << read << ','
       << written << ',' << peak << '\n';
  };
  for (const auto& s : stages) {
    row(s.name, s.flops, s.bytes_read, s.bytes_written, s.peak_activation_bytes);
  }
  row("total", total_flops(), total_bytes_read(), total_bytes_written(),
      peak_activation_bytes());
  return os.str();
}

CostReport head_cost(const HeadConfig& cfg, const BackbonePreset& preset, std::int64_t queries,
                     HeadKind kind, std::int64_t batch, std::int64_t bytes_per_scalar) {
  cfg.validate();
  if (queries < 1) throw config_error("query count must be >= 1");
  if (cfg.patch != preset.patch) {
    throw config_error("config patch does not match preset patch");
  }
  if (kind == HeadKind::kImageSpace && cfg.upsample_location == UpsampleLocation::kLogit) {
    throw config_error("image-space head has no logit upsampling stage");
  }
  if (kind == HeadKind::kTokenSpace && cfg.upsample_location == UpsampleLocation::kFeature) {
    throw config_error("token-space head has no feature upsampling stage");
  }

  const std::uint64_t B = static_cast<std::uint64_t>(batch);
  const std::uint64_t Qn = static_cast<std::uint64_t>(queries);
  const std::uint64_t C = static_cast<std::uint64_t>(preset.embed_dim);
  const std::uint64_t N = static_cast<std::uint64_t>(cfg.token_count());
  const std::uint64_t oh = static_cast<std::uint64_t>(cfg.out_h());
  const std::uint64_t ow = static_cast<std::uint64_t>(cfg.out_w());
  const std::uint64_t s = static_cast<std::uint64_t>(bytes_per_scalar);
  const bool resample = cfg.resamples();

  CostReport report;
  report.preset = preset.name;
  report.head = kind;
  report.upsample_location = cfg.upsample_location;
  report.output_stride = cfg.output_stride;
  report.image_h = cfg.image_h;
  report.image_w = cfg.image_w;
  report.queries = queries;
  report.batch = batch;
  report.bytes_per_scalar = bytes_per_scalar;

  if (kind == HeadKind::kImageSpace) {
    report.stages.push_back(
        make_stage("tokens_to_grid", 0, B * N * C * s, B * C * N * s, B * C * N * s));
    std::uint64_t pixels = N;
    std::uint64_t feat_bytes = B * C * N * s;
    if (resample) {
      pixels = oh * ow;
      const std::uint64_t up_bytes = B * C * pixels * s;
      report.stages.push_back(make_stage("feature_upsample",
                                         kBilinearFlopsPerSample * B * C * pixels, feat_bytes,
                                         up_bytes, up_bytes));
      feat_bytes = up_bytes;
    }
    const std::uint64_t out_bytes = B * Qn * pixels * s;
    report.stages.push_back(make_stage("mask_scoring", 2 * B * Qn * pixels * C,
                                       B * Qn * C * s + feat_bytes, out_bytes, out_bytes));
  } else {
    const std::uint64_t score_bytes = B * Qn * N * s;
    report.stages.push_back(make_stage("mask_scoring", 2 * B * Qn * N * C,
                                       B * Qn * C * s + B * N * C * s, score_bytes, score_bytes));
    report.stages.push_back(
        make_stage("scores_to_grid", 0, score_bytes, score_bytes, score_bytes));
    if (resample) {
      const std::uint64_t up_bytes = B * Qn * oh * ow * s;
      report.stages.push_back(make_stage("logit_upsample",
                                         kBilinearFlopsPerSample * B * Qn * oh * ow, score_bytes,
                                         up_bytes, up_bytes));
    }
  }
  return report;
}

CostReport head_cost(const HeadConfig& cfg, const BackbonePreset& preset, std::int64_t queries,
                     std::int64_t batch, std::int64_t bytes_per_scalar) {
  return head_cost(cfg, preset, queries, head_kind_for(cfg), batch, bytes_per_scalar);
}

std::int64_t default_query_blocks(const BackbonePreset& preset) {
  return (preset.depth + 3) / 4;
}

std::uint64_t backbone_cost(const BackbonePreset& preset, std::int64_t image_h,
                            std::int64_t image_w, std::int64_t queries,
                            std::int64_t query_blocks) {
  if (image_h % preset.patch != 0 || image_w % preset.patch != 0) {
    throw config_error("image extents not divisible by patch");
  }
  if (query_blocks < 0 || query_blocks > preset.depth) {
    throw config_error("query_blocks must lie in [0, depth]");
  }
  const std::uint64_t C = static_cast<std::uint64_t>(preset.embed_dim);
  const std::uint64_t N =
      static_cast<std::uint64_t>((image_h / preset.patch) * (image_w / preset.patch));
  const std::uint64_t patch2 = static_cast<std::uint64_t>(preset.patch * preset.patch);

  const auto block_flops = [&](std::uint64_t S) {
    return 2 * (4 * S * C * C + 2 * S * S * C + 8 * S * C * C);
  };

  const std::uint64_t plain_blocks = static_cast<std::uint64_t>(preset.depth - query_blocks);
  const std::uint64_t joint_blocks = static_cast<std::uint64_t>(query_blocks);
  const std::uint64_t S_joint = N + static_cast<std::uint64_t>(queries);

  std::uint64_t total = 2 * N * C * 3 * patch2;  // patch embedding
  total += plain_blocks * block_flops(N);
  total += joint_blocks * block_flops(S_joint);
  return total;
}

std::uint64_t peak_memory(const HeadConfig& cfg, const BackbonePreset& preset,
                          std::int64_t queries, HeadKind kind, std::int64_t bytes_per_scalar) {
  return head_cost(cfg, preset, queries, kind, 1, bytes_per_scalar).peak_activation_bytes();
}

std::uint64_t peak_memory(const HeadConfig& cfg, const BackbonePreset& preset,
                          std::int64_t queries, std::int64_t bytes_per_scalar) {
  return peak_memory(cfg, preset, queries, head_kind_for(cfg), bytes_per_scalar);
}

CounterValidation validate_against_counters(const HeadConfig& cfg, const BackbonePreset& preset,
                                            std::int64_t queries, std::uint64_t seed) {
  cfg.validate();
  const HeadKind kind = head_kind_for(cfg);
  CounterValidation result;
  result.analytical = head_cost(cfg, preset, queries, kind, 1, sizeof(float));

  auto inputs = gen_synthetic<float>(seed, 1, cfg.token_count(), preset.embed_dim, queries);
  OpCounter projection_counter;  // projection is outside the head pipeline
  Tensor mq = project_queries(inputs.queries, inputs.projection, &projection_counter);

  // Re-run the pipeline through the same public sub-ops, one counter per
  // stage, so a divergence can be pinned to a stage by name.
  std::vector<std::pair<std::string, OpCounter>> measured_stages;
  const std::int64_t C = preset.embed_dim;
  if (kind == HeadKind::kImageSpace) {
    OpCounter c0;
    Tensor feat = tokens_to_grid(inputs.tokens, cfg.grid_h(), cfg.grid_w(), &c0);
    measured_stages.emplace_back("tokens_to_grid", c0);
    if (cfg.resamples()) {
      OpCounter c1;
      feat = bilinear_resize(feat, cfg.plan(C), &c1);
      measured_stages.emplace_back("feature_upsample", c1);
    }
    OpCounter c2;
    const std::int64_t pixels = feat.dim(2) * feat.dim(3);
    Tensor flat = std::move(feat).reshaped({1, C, pixels});
    gemm(mq, flat, &c2);
    measured_stages.emplace_back("mask_scoring", c2);
  } else {
    OpCounter c0;
    Tensor scores = token_scores(inputs.tokens, mq, &c0);
    measured_stages.emplace_back("mask_scoring", c0);
    OpCounter c1;
    Tensor grid = scores_to_grid(scores, cfg.grid_h(), cfg.grid_w(), &c1);
    measured_stages.emplace_back("scores_to_grid", c1);
    if (cfg.resamples()) {
      OpCounter c2;
      bilinear_resize(grid, cfg.plan(queries), &c2);
      measured_stages.emplace_back("logit_upsample", c2);
    }
  }

  const auto check = [&](const std::string& what, std::uint64_t analytical,
                         std::uint64_t observed) {
    if (analytical != observed) {
      result.ok = false;
      result.mismatches.push_back(what + ": analytical " + std::to_string(analytical) +
                                  " != measured " + std::to_string(observed));
    }
  };

  if (measured_stages.size() != result.analytical.stages.size()) {
    result.ok = false;
    result.mismatches.push_back("stage count: analytical " +
                                std::to_string(result.analytical.stages.size()) +
                                " != measured " + std::to_string(measured_stages.size()));
  } else {
    for (std::size_t i = 0; i < measured_stages.size(); ++i) {
      const auto& [name, c] = measured_stages[i];
      const auto& a = result.analytical.stages[i];
      if (name != a.name) {
        result.ok = false;
        result.mismatches.push_back("stage " + std::to_string(i) + " name: analytical " +
                                    a.name + " != measured " + name);
        continue;
      }
      check(name + ".flops", a.flops, c.flops);
      check(name + ".bytes_read", a.bytes_read, c.bytes_read);
      check(name + ".bytes_written", a.bytes_written, c.bytes_written);
      check(name + ".peak_activation_bytes", a.peak_activation_bytes, c.peak_alloc_bytes);
      result.measured += c;
    }
  }

  // The composed head must agree with the stage-wise sum; guards the mirror
  // above against drifting from the real pipeline.
  OpCounter composed;
  if (kind == HeadKind::kImageSpace) {
    image_space_head(inputs.tokens, mq, cfg, &composed);
  } else {
    token_space_head(inputs.tokens, mq, cfg, &composed);
  }
  check("composed.flops", composed.flops, result.measured.flops);
  check("composed.bytes_read", composed.bytes_read, result.measured.bytes_read);
  check("composed.bytes_written", composed.bytes_written, result.measured.bytes_written);
  check("composed.peak_activation_bytes", composed.peak_alloc_bytes,
        result.measured.peak_alloc_bytes);
  return result;
}

}  // namespace tokenmask
