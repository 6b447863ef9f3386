#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tokenmask/tensor.hpp"

namespace tokenmask {

// Per-output-sample flop charge for bilinear resampling: 4 multiplies plus
// 3 adds for the convex combination of the 4 source neighbors. Weight
// computation is amortized per row/column and not charged.
inline constexpr std::uint64_t kBilinearFlopsPerSample = 7;

// Spatial resampling plan. Corner convention is fixed to half-pixel centers:
// source coordinate = (i + 0.5) * src/dst - 0.5, neighbors clamped to edges.
struct ResamplePlan {
  std::int64_t src_h = 1;
  std::int64_t src_w = 1;
  std::int64_t dst_h = 1;
  std::int64_t dst_w = 1;
  std::int64_t channels = 0;  // 0 = unconstrained

  bool identity() const { return src_h == dst_h && src_w == dst_w; }

  void validate() const {
    if (src_h < 1 || src_w < 1 || dst_h < 1 || dst_w < 1) {
      throw config_error("resample plan extents must be >= 1");
    }
  }
};

// Builds the plan implied by an output stride: the source is the patch grid,
// the destination is the image resolution divided by the stride. stride ==
// patch yields an identity plan (no resampling work).
inline ResamplePlan resolve_output_stride(std::int64_t image_h, std::int64_t image_w,
                                          std::int64_t patch, std::int64_t stride,
                                          std::int64_t channels = 0) {
  if (patch < 1 || stride < 1) {
    throw config_error("patch and stride must be >= 1");
  }
  if (image_h % patch != 0 || image_w % patch != 0) {
    throw config_error("image " + std::to_string(image_h) + "x" + std::to_string(image_w) +
                       " not divisible by patch " + std::to_string(patch));
  }
  if (image_h % stride != 0 || image_w % stride != 0) {
    throw config_error("image " + std::to_string(image_h) + "x" + std::to_string(image_w) +
                       " not divisible by stride " + std::to_string(stride));
  }
  ResamplePlan plan;
  plan.src_h = image_h / patch;
  plan.src_w = image_w / patch;
  plan.dst_h = image_h / stride;
  plan.dst_w = image_w / stride;
  plan.channels = channels;
  return plan;
}

namespace detail {

// Precomputed per-axis neighbor indices and fractional weight under the
// half-pixel mapping with edge clamping.
struct AxisTap {
  std::int64_t lo;
  std::int64_t hi;
  double frac;
};

inline std::vector<AxisTap> axis_taps(std::int64_t src, std::int64_t dst) {
  std::vector<AxisTap> taps(static_cast<std::size_t>(dst));
  const double ratio = static_cast<double>(src) / static_cast<double>(dst);
  for (std::int64_t i = 0; i < dst; ++i) {
    const double center = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    double base = std::floor(center);
    double frac = center - base;
    std::int64_t lo = static_cast<std::int64_t>(base);
    std::int64_t hi = lo + 1;
    lo = std::clamp<std::int64_t>(lo, 0, src - 1);
    hi = std::clamp<std::int64_t>(hi, 0, src - 1);
    taps[static_cast<std::size_t>(i)] = {lo, hi, frac};
  }
  return taps;
}

}  // namespace detail

// Bilinear resampling of [B,Ch,H,W] to the plan's destination extents. Each
// output sample is the convex combination of its <= 4 clamped source
// neighbors; the result is a linear function of the input and every output
// value lies within [min(x), max(x)]. Counter: flops += 7*B*Ch*dst_h*dst_w.
template <typename T>
TensorT<T> bilinear_resize(const TensorT<T>& x, const ResamplePlan& plan,
                           OpCounter* counter = nullptr) {
  detail::require_rank(x, 4, "bilinear_resize");
  plan.validate();
  const std::int64_t B = x.dim(0), Ch = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H != plan.src_h || W != plan.src_w) {
    throw shape_error("bilinear_resize: input " + std::to_string(H) + "x" + std::to_string(W) +
                      " does not match plan source " + std::to_string(plan.src_h) + "x" +
                      std::to_string(plan.src_w));
  }
  if (plan.channels != 0 && plan.channels != Ch) {
    throw shape_error("bilinear_resize: plan expects " + std::to_string(plan.channels) +
                      " channels, input has " + std::to_string(Ch));
  }

  const auto ytaps = detail::axis_taps(H, plan.dst_h);
  const auto xtaps = detail::axis_taps(W, plan.dst_w);
  TensorT<T> out({B, Ch, plan.dst_h, plan.dst_w});

  const std::int64_t planes = B * Ch;
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* in = x.data() + p * H * W;
    T* o = out.data() + p * plan.dst_h * plan.dst_w;
    for (std::int64_t y = 0; y < plan.dst_h; ++y) {
      const auto& ty = ytaps[static_cast<std::size_t>(y)];
      const T dy = static_cast<T>(ty.frac);
      const T* row_lo = in + ty.lo * W;
      const T* row_hi = in + ty.hi * W;
      T* orow = o + y * plan.dst_w;
      for (std::int64_t xi = 0; xi < plan.dst_w; ++xi) {
        const auto& tx = xtaps[static_cast<std::size_t>(xi)];
        const T dx = static_cast<T>(tx.frac);
        if (dx == T(0) && dy == T(0)) {
          orow[xi] = row_lo[tx.lo];
          continue;
        }
        const T v00 = row_lo[tx.lo];
        const T v01 = row_lo[tx.hi];
        const T v10 = row_hi[tx.lo];
        const T v11 = row_hi[tx.hi];
        const T top = v00 + dx * (v01 - v00);
        const T bot = v10 + dx * (v11 - v10);
        const T val = top + dy * (bot - top);
        // rounding may overshoot the neighbor hull by an ulp; clamp to it
        const T lo = std::min(std::min(v00, v01), std::min(v10, v11));
        const T hi = std::max(std::max(v00, v01), std::max(v10, v11));
        orow[xi] = std::clamp(val, lo, hi);
      }
    }
  }
  if (counter) {
    counter->flops += kBilinearFlopsPerSample *
                      static_cast<std::uint64_t>(planes * plan.dst_h * plan.dst_w);
    counter->bytes_read += x.byte_size();
    counter->bytes_written += out.byte_size();
    counter->record_alloc(out.byte_size());
  }
  return out;
}

}  // namespace tokenmask
