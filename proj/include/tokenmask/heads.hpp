#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "tokenmask/interp.hpp"
#include "tokenmask/tensor.hpp"

namespace tokenmask {

enum class UpsampleLocation { kFeature, kLogit, kNone };

inline const char* to_string(UpsampleLocation loc) {
  switch (loc) {
    case UpsampleLocation::kFeature: return "feature";
    case UpsampleLocation::kLogit: return "logit";
    case UpsampleLocation::kNone: return "none";
  }
  return "?";
}

inline UpsampleLocation upsample_location_from_string(const std::string& s) {
  if (s == "feature") return UpsampleLocation::kFeature;
  if (s == "logit") return UpsampleLocation::kLogit;
  if (s == "none") return UpsampleLocation::kNone;
  throw config_error("unknown upsample location '" + s + "' (feature|logit|none)");
}

// Where upsampling happens, at which output stride, and the input geometry.
// upsample none always emits at the native patch grid.
struct HeadConfig {
  UpsampleLocation upsample_location = UpsampleLocation::kLogit;
  std::int64_t output_stride = 4;
  std::int64_t image_h = 640;
  std::int64_t image_w = 640;
  std::int64_t patch = 16;

  std::int64_t grid_h() const { return image_h / patch; }
  std::int64_t grid_w() const { return image_w / patch; }
  std::int64_t token_count() const { return grid_h() * grid_w(); }
  std::int64_t out_h() const {
    return upsample_location == UpsampleLocation::kNone ? grid_h() : image_h / output_stride;
  }
  std::int64_t out_w() const {
    return upsample_location == UpsampleLocation::kNone ? grid_w() : image_w / output_stride;
  }
  bool resamples() const {
    return upsample_location != UpsampleLocation::kNone &&
           (out_h() != grid_h() || out_w() != grid_w());
  }

  void validate() const {
    if (output_stride != 1 && output_stride != 4 && output_stride != 8 && output_stride != 16) {
      throw config_error("output stride must be one of 1, 4, 8, 16; got " +
                         std::to_string(output_stride));
    }
    if (patch < 1 || image_h < patch || image_w < patch) {
      throw config_error("image extents must be at least one patch");
    }
    if (image_h % patch != 0 || image_w % patch != 0) {
      throw config_error("image " + std::to_string(image_h) + "x" + std::to_string(image_w) +
                         " not divisible by patch " + std::to_string(patch));
    }
    if (image_h % output_stride != 0 || image_w % output_stride != 0) {
      throw config_error("image " + std::to_string(image_h) + "x" + std::to_string(image_w) +
                         " not divisible by stride " + std::to_string(output_stride));
    }
  }

  ResamplePlan plan(std::int64_t channels) const {
    return resolve_output_stride(image_h, image_w, patch, output_stride, channels);
  }
};

// A fixed set of queries, values [B, Qn, C]. Qn = 0 is rejected outright:
// there are no segmentation semantics without queries.
template <typename T>
struct QuerySetT {
  TensorT<T> values;

  explicit QuerySetT(TensorT<T> v) : values(std::move(v)) {
    detail::require_rank(values, 3, "QuerySet");
    if (values.dim(1) < 1) throw config_error("query count must be >= 1");
  }

  std::int64_t batch() const { return values.dim(0); }
  std::int64_t count() const { return values.dim(1); }
  std::int64_t channels() const { return values.dim(2); }
};

using QuerySet = QuerySetT<float>;

// The learned linear map from query embedding to mask embedding.
template <typename T>
struct MaskProjectionT {
  TensorT<T> weight;                 // [C, C]
  std::optional<TensorT<T>> bias;    // [C]

  void validate() const {
    detail::require_rank(weight, 2, "MaskProjection weight");
    if (weight.dim(0) != weight.dim(1)) {
      throw shape_error("MaskProjection weight must be square, got " + shape_str(weight.shape()));
    }
    if (bias && (bias->rank() != 1 || bias->dim(0) != weight.dim(0))) {
      throw shape_error("MaskProjection bias length must equal the channel count");
    }
  }

  static MaskProjectionT identity(std::int64_t channels) {
    TensorT<T> w({channels, channels});
    for (std::int64_t i = 0; i < channels; ++i) w.at(i, i) = T(1);
    return MaskProjectionT{std::move(w), std::nullopt};
  }
};

using MaskProjection = MaskProjectionT<float>;

// out[b,i,:] = weight * q[b,i,:] + bias.
template <typename T>
TensorT<T> project_queries(const QuerySetT<T>& queries, const MaskProjectionT<T>& proj,
                           OpCounter* counter = nullptr) {
  proj.validate();
  const std::int64_t C = queries.channels();
  if (proj.weight.dim(1) != C) {
    throw shape_error("projection expects " + std::to_string(proj.weight.dim(1)) +
                      " channels, queries have " + std::to_string(C));
  }
  const std::int64_t B = queries.batch(), Qn = queries.count();
  TensorT<T> out({B, Qn, C});
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t q = 0; q < Qn; ++q) {
      for (std::int64_t i = 0; i < C; ++i) {
        T acc = proj.bias ? proj.bias->at(i) : T(0);
        for (std::int64_t j = 0; j < C; ++j) {
          acc += proj.weight.at(i, j) * queries.values.at(b, q, j);
        }
        out.at(b, q, i) = acc;
      }
    }
  }
  if (counter) {
    counter->flops += 2ull * static_cast<std::uint64_t>(B) * Qn * C * C +
                      (proj.bias ? static_cast<std::uint64_t>(B) * Qn * C : 0);
    counter->bytes_read += queries.values.byte_size() + proj.weight.byte_size() +
                           (proj.bias ? proj.bias->byte_size() : 0);
    counter->bytes_written += out.byte_size();
    counter->record_alloc(out.byte_size());
  }
  return out;
}

// Optional MLP variant: linear layers with ReLU between them. Depth 1 is the
// plain projection and is what every equivalence property assumes.
template <typename T>
TensorT<T> project_queries_mlp(const QuerySetT<T>& queries,
                               std::span<const MaskProjectionT<T>> layers,
                               OpCounter* counter = nullptr) {
  if (layers.empty()) throw config_error("projection MLP needs at least one layer");
  TensorT<T> cur = project_queries(queries, layers[0], counter);
  for (std::size_t l = 1; l < layers.size(); ++l) {
    for (std::int64_t i = 0; i < cur.numel(); ++i) cur.at(i) = std::max(cur.at(i), T(0));
    cur = project_queries(QuerySetT<T>(std::move(cur)), layers[l], counter);
  }
  return cur;
}

// Query-token affinities L[b,q,i] = <mq[b,q,:], t[b,i,:]> as one batched
// GEMM against the token sequence, no grid materialization.
template <typename T>
TensorT<T> token_scores(const TensorT<T>& tokens, const TensorT<T>& mask_embeddings,
                        OpCounter* counter = nullptr) {
  detail::require_rank(tokens, 3, "token_scores tokens");
  detail::require_rank(mask_embeddings, 3, "token_scores mask embeddings");
  if (tokens.dim(2) != mask_embeddings.dim(2)) {
    throw shape_error("token_scores: channel axes disagree, tokens " +
                      std::to_string(tokens.dim(2)) + " vs embeddings " +
                      std::to_string(mask_embeddings.dim(2)));
  }
  return gemm_bt(mask_embeddings, tokens, counter);
}

namespace detail {

template <typename T>
void check_head_inputs(const TensorT<T>& tokens, const TensorT<T>& mask_embeddings,
                       const HeadConfig& cfg) {
  cfg.validate();
  require_rank(tokens, 3, "head tokens");
  require_rank(mask_embeddings, 3, "head mask embeddings");
  if (tokens.dim(0) != mask_embeddings.dim(0)) {
    throw shape_error("head: batch axes disagree");
  }
  if (tokens.dim(2) != mask_embeddings.dim(2)) {
    throw shape_error("head: channel axes disagree");
  }
  if (tokens.dim(1) != cfg.token_count()) {
    throw shape_error("head: token count " + std::to_string(tokens.dim(1)) +
                      " does not match patch grid " + std::to_string(cfg.grid_h()) + "x" +
                      std::to_string(cfg.grid_w()));
  }
  if (mask_embeddings.dim(1) < 1) throw config_error("query count must be >= 1");
}

}  // namespace detail

// Image-space pipeline: reshape tokens to a C-channel feature map, optionally
// upsample it, then take the per-location dot product with the mask
// embeddings (a batched GEMM over flattened pixels).
template <typename T>
TensorT<T> image_space_head(const TensorT<T>& tokens, const TensorT<T>& mask_embeddings,
                            const HeadConfig& cfg, OpCounter* counter = nullptr) {
  detail::check_head_inputs(tokens, mask_embeddings, cfg);
  if (cfg.upsample_location == UpsampleLocation::kLogit) {
    throw config_error("image-space head supports upsample feature|none");
  }
  const std::int64_t B = tokens.dim(0);
  const std::int64_t Qn = mask_embeddings.dim(1);
  const std::int64_t C = tokens.dim(2);

  TensorT<T> feat = tokens_to_grid(tokens, cfg.grid_h(), cfg.grid_w(), counter);
  if (cfg.resamples()) {
    feat = bilinear_resize(feat, cfg.plan(C), counter);
  }
  const std::int64_t oh = feat.dim(2), ow = feat.dim(3);
  TensorT<T> flat = std::move(feat).reshaped({B, C, oh * ow});
  TensorT<T> logits = gemm(mask_embeddings, flat, counter);
  return std::move(logits).reshaped({B, Qn, oh, ow});
}

// Token-space pipeline: score queries against the token sequence, reshape the
// scores onto the patch grid, optionally upsample in logit space over Qn
// channels. No tensor with a C-sized channel axis above the patch grid is
// ever materialized.
template <typename T>
TensorT<T> token_space_head(const TensorT<T>& tokens, const TensorT<T>& mask_embeddings,
                            const HeadConfig& cfg, OpCounter* counter = nullptr) {
  detail::check_head_inputs(tokens, mask_embeddings, cfg);
  if (cfg.upsample_location == UpsampleLocation::kFeature) {
    throw config_error("token-space head supports upsample logit|none");
  }
  const std::int64_t Qn = mask_embeddings.dim(1);

  TensorT<T> scores = token_scores(tokens, mask_embeddings, counter);
  TensorT<T> grid = scores_to_grid(scores, cfg.grid_h(), cfg.grid_w(), counter);
  if (cfg.resamples()) {
    grid = bilinear_resize(grid, cfg.plan(Qn), counter);
  }
  return grid;
}

}  // namespace tokenmask
