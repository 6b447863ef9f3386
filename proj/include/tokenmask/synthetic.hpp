#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "tokenmask/heads.hpp"
#include "tokenmask/tensor.hpp"

namespace tokenmask {

// Deterministic uniform draw in [lo, hi) from the top 53 bits of the
// generator, so sequences do not depend on the standard library's
// distribution internals.
inline double uniform_draw(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + u * (hi - lo);
}

template <typename T>
struct SyntheticInputsT {
  TensorT<T> tokens;              // [B, N, C], values in [-1, 1]
  QuerySetT<T> queries;           // [B, Qn, C]
  MaskProjectionT<T> projection;  // weight [C, C] in [-1/sqrt(C), 1/sqrt(C)], bias [C]
  TensorT<T> class_logits;        // [B, Qn, K+1]
};

using SyntheticInputs = SyntheticInputsT<float>;

// Seeded synthetic tensors for tests and benchmarks. PRNG: std::mt19937_64
// with the 53-bit uniform mapping above; a given (seed, shape) pair always
// produces the same values within this implementation.
template <typename T = float>
SyntheticInputsT<T> gen_synthetic(std::uint64_t seed, std::int64_t batch, std::int64_t tokens,
                                  std::int64_t channels, std::int64_t queries,
                                  std::int64_t categories = 8) {
  if (batch < 1 || tokens < 1 || channels < 1 || queries < 1 || categories < 1) {
    throw config_error("gen_synthetic: all extents must be positive");
  }
  std::mt19937_64 rng(seed);

  TensorT<T> tok({batch, tokens, channels});
  for (std::int64_t i = 0; i < tok.numel(); ++i) {
    tok.at(i) = static_cast<T>(uniform_draw(rng, -1.0, 1.0));
  }

  TensorT<T> qry({batch, queries, channels});
  for (std::int64_t i = 0; i < qry.numel(); ++i) {
    qry.at(i) = static_cast<T>(uniform_draw(rng, -1.0, 1.0));
  }

  const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
  TensorT<T> weight({channels, channels});
  for (std::int64_t i = 0; i < weight.numel(); ++i) {
    weight.at(i) = static_cast<T>(uniform_draw(rng, -bound, bound));
  }
  TensorT<T> bias({channels});
  for (std::int64_t i = 0; i < bias.numel(); ++i) {
    bias.at(i) = static_cast<T>(uniform_draw(rng, -bound, bound));
  }

  TensorT<T> cls({batch, queries, categories + 1});
  for (std::int64_t i = 0; i < cls.numel(); ++i) {
    cls.at(i) = static_cast<T>(uniform_draw(rng, -2.0, 2.0));
  }

  SyntheticInputsT<T> out{std::move(tok), QuerySetT<T>(std::move(qry)),
                          MaskProjectionT<T>{std::move(weight), std::move(bias)},
                          std::move(cls)};
  if (!out.tokens.all_finite() || !out.queries.values.all_finite() ||
      !out.projection.weight.all_finite() || !out.class_logits.all_finite()) {
    throw config_error("gen_synthetic produced non-finite values");
  }
  return out;
}

// Slices one batch entry of [B, Q, ...] to [Q, ...]; used when feeding the
// per-image decoders.
template <typename T>
TensorT<T> slice_batch(const TensorT<T>& t, std::int64_t index) {
  if (t.rank() < 2) throw shape_error("slice_batch: rank must be >= 2");
  if (index < 0 || index >= t.dim(0)) throw shape_error("slice_batch: index out of range");
  Shape s(t.shape().begin() + 1, t.shape().end());
  const std::int64_t n = TensorT<T>::numel_of(s);
  std::vector<T> data(t.data() + index * n, t.data() + (index + 1) * n);
  return TensorT<T>(std::move(s), std::move(data));
}

}  // namespace tokenmask
