#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tokenmask/heads.hpp"
#include "tokenmask/tensor.hpp"

namespace tokenmask {

// Standard ViT family dimensions; patch 16 throughout.
struct BackbonePreset {
  std::string name;
  std::int64_t embed_dim = 0;
  std::int64_t depth = 0;
  std::int64_t heads = 0;
  std::int64_t patch = 16;
};

const std::vector<BackbonePreset>& backbone_presets();
const BackbonePreset& preset_by_name(const std::string& name);

enum class HeadKind { kImageSpace, kTokenSpace };

inline const char* to_string(HeadKind kind) {
  return kind == HeadKind::kImageSpace ? "image_space" : "token_space";
}

// Which head a config naturally runs on: feature upsampling implies the
// image-space pipeline, logit or none the token-space one.
inline HeadKind head_kind_for(const HeadConfig& cfg) {
  return cfg.upsample_location == UpsampleLocation::kFeature ? HeadKind::kImageSpace
                                                             : HeadKind::kTokenSpace;
}

struct StageCost {
  std::string name;
  std::uint64_t flops = 0;
  std::uint64_t bytes_read = 0;
  std::uint64_t bytes_written = 0;
  std::uint64_t peak_activation_bytes = 0;
};

// Per-stage analytical costs for one head configuration. Totals are stage
// sums; the peak is the largest single activation any stage materializes.
struct CostReport {
  std::string preset;
  HeadKind head = HeadKind::kTokenSpace;
  UpsampleLocation upsample_location = UpsampleLocation::kNone;
  std::int64_t output_stride = 16;
  std::int64_t image_h = 0;
  std::int64_t image_w = 0;
  std::int64_t queries = 0;
  std::int64_t batch = 1;
  std::int64_t bytes_per_scalar = 4;
  std::vector<StageCost> stages;

  std::uint64_t total_flops() const;
  std::uint64_t total_bytes_read() const;
  std::uint64_t total_bytes_written() const;
  std::uint64_t peak_activation_bytes() const;
  const StageCost* stage(const std::string& name) const;
  std::string to_json() const;
  std::string to_csv() const;  // one row per stage plus a total row
};

// Closed-form per-stage costs mirroring the instrumented pipelines exactly:
// scoring GEMM at the resolution where scoring occurs, interpolation at
// 7 flops per output sample over C (feature path) or Qn (logit path)
// channels, reshapes at zero flops but counted bytes.
CostReport head_cost(const HeadConfig& cfg, const BackbonePreset& preset, std::int64_t queries,
                     HeadKind kind, std::int64_t batch = 1, std::int64_t bytes_per_scalar = 4);
CostReport head_cost(const HeadConfig& cfg, const BackbonePreset& preset, std::int64_t queries,
                     std::int64_t batch = 1, std::int64_t bytes_per_scalar = 4);

// Analytical transformer-backbone flops for context in reports: per block
// 2*(4*S*C^2 + 2*S^2*C + 8*S*C^2), with S = N for the first depth -
// query_blocks blocks and S = N + Qn for the trailing query_blocks blocks,
// plus the patch-embedding cost 2*N*C*3*patch^2. Never measured, only
// modeled.
std::uint64_t backbone_cost(const BackbonePreset& preset, std::int64_t image_h,
                            std::int64_t image_w, std::int64_t queries,
                            std::int64_t query_blocks);

// Default late-query-block count: depth/4 rounded up.
std::int64_t default_query_blocks(const BackbonePreset& preset);

// Peak single-tensor activation of the head pipeline, in bytes. The token
// path peak depends only on Qn and the resolutions, never on C.
std::uint64_t peak_memory(const HeadConfig& cfg, const BackbonePreset& preset,
                          std::int64_t queries, std::int64_t bytes_per_scalar = 4);
std::uint64_t peak_memory(const HeadConfig& cfg, const BackbonePreset& preset,
                          std::int64_t queries, HeadKind kind,
                          std::int64_t bytes_per_scalar = 4);

// Runs the instrumented head on synthetic inputs and checks the analytical
// model stage by stage. Same flop convention on both sides, so agreement is
// exact; any divergent stage is listed by name.
struct CounterValidation {
  bool ok = true;
  CostReport analytical;
  OpCounter measured;
  std::vector<std::string> mismatches;
};

CounterValidation validate_against_counters(const HeadConfig& cfg, const BackbonePreset& preset,
                                            std::int64_t queries, std::uint64_t seed);

}  // namespace tokenmask
