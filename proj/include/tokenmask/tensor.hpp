#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tokenmask {

// Thrown when operand extents disagree. The message names the offending axes.
class shape_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Thrown for invalid run configurations (strides, thresholds, divisibility).
class config_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::int64_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

// Scalar operation counter. Convention: one multiply = 1 flop, one add = 1
// flop (a MAC = 2). bytes_read/bytes_written treat each operand as streamed
// once. peak_alloc_bytes tracks the largest single tensor an operation
// materialized, which is what the memory model asserts against.
struct OpCounter {
  std::uint64_t flops = 0;
  std::uint64_t bytes_read = 0;
  std::uint64_t bytes_written = 0;
  std::uint64_t peak_alloc_bytes = 0;

  void record_alloc(std::uint64_t bytes) {
    peak_alloc_bytes = std::max(peak_alloc_bytes, bytes);
  }

  OpCounter& operator+=(const OpCounter& o) {
    flops += o.flops;
    bytes_read += o.bytes_read;
    bytes_written += o.bytes_written;
    peak_alloc_bytes = std::max(peak_alloc_bytes, o.peak_alloc_bytes);
    return *this;
  }
};

// Per-element flop constants for the elementwise ops, used by both the
// instrumented kernels and the analytical cost model.
inline constexpr std::uint64_t kSigmoidFlopsPerElement = 4;  // neg, exp, add, div
inline constexpr std::uint64_t kSoftmaxFlopsPerElement = 5;  // max, sub, exp, sum, div
inline constexpr std::uint64_t kScaleFlopsPerElement = 1;
inline constexpr std::uint64_t kAddFlopsPerElement = 1;

// Dense row-major tensor of up to 4 axes, last axis fastest. Immutable by
// convention once built: all ops return fresh tensors.
template <typename T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(Shape shape) : shape_(std::move(shape)) {
    check_rank();
    data_.assign(static_cast<std::size_t>(numel_of(shape_)), T(0));
  }

  TensorT(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_rank();
    if (numel_of(shape_) != static_cast<std::int64_t>(data_.size())) {
      throw shape_error("tensor data length " + std::to_string(data_.size()) +
                        " does not match shape " + shape_str(shape_));
    }
  }

  static TensorT full(Shape shape, T value) {
    TensorT t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  std::uint64_t byte_size() const { return data_.size() * sizeof(T); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return {data_.data(), data_.size()}; }
  std::span<const T> values() const { return {data_.data(), data_.size()}; }

  T& at(std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  T at(std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
  T& at(std::int64_t i, std::int64_t j) {
    return data_[static_cast<std::size_t>(i * shape_[1] + j)];
  }
  T at(std::int64_t i, std::int64_t j) const {
    return data_[static_cast<std::size_t>(i * shape_[1] + j)];
  }
  T& at(std::int64_t i, std::int64_t j, std::int64_t k) {
    return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  T at(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  T& at(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l) {
    return data_[static_cast<std::size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
  }
  T at(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l) const {
    return data_[static_cast<std::size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
  }

  // Moves the buffer under a new shape with the same element count.
  TensorT reshaped(Shape shape) && {
    if (numel_of(shape) != numel()) {
      throw shape_error("cannot view " + shape_str(shape_) + " as " + shape_str(shape));
    }
    return TensorT(std::move(shape), std::move(data_));
  }

  template <typename U>
  TensorT<U> cast() const {
    std::vector<U> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return TensorT<U>(shape_, std::move(out));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](T v) { return std::isfinite(static_cast<double>(v)); });
  }

  static std::int64_t numel_of(const Shape& shape) {
    std::int64_t n = 1;
    for (auto e : shape) {
      if (e < 0) throw shape_error("negative extent in shape " + shape_str(shape));
      n *= e;
    }
    return n;
  }

 private:
  void check_rank() const {
    if (shape_.empty() || shape_.size() > 4) {
      throw shape_error("tensor rank must be 1..4, got shape " + shape_str(shape_));
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

namespace detail {

template <typename T>
void require_rank(const TensorT<T>& t, int rank, const char* what) {
  if (t.rank() != rank) {
    throw shape_error(std::string(what) + ": expected rank " + std::to_string(rank) +
                      ", got shape " + shape_str(t.shape()));
  }
}

}  // namespace detail

// Batched GEMM: out[b,p,s] = sum_r a[b,p,r] * b[b,r,s].
// Counter: flops += 2*B*P*R*S, reads both operands once, writes the output.
template <typename T>
TensorT<T> gemm(const TensorT<T>& a, const TensorT<T>& b, OpCounter* counter = nullptr) {
  detail::require_rank(a, 3, "gemm lhs");
  detail::require_rank(b, 3, "gemm rhs");
  if (a.dim(0) != b.dim(0)) {
    throw shape_error("gemm batch axes disagree: lhs axis 0 = " + std::to_string(a.dim(0)) +
                      ", rhs axis 0 = " + std::to_string(b.dim(0)));
  }
  if (a.dim(2) != b.dim(1)) {
    throw shape_error("gemm inner axes disagree: lhs axis 2 = " + std::to_string(a.dim(2)) +
                      ", rhs axis 1 = " + std::to_string(b.dim(1)));
  }
  const std::int64_t B = a.dim(0), P = a.dim(1), R = a.dim(2), S = b.dim(2);
  TensorT<T> out({B, P, S});
  for (std::int64_t n = 0; n < B; ++n) {
    const T* ab = a.data() + n * P * R;
    const T* bb = b.data() + n * R * S;
    T* ob = out.data() + n * P * S;
    // ikj ordering: contiguous inner axis, accumulation over r stays in
    // increasing order for every output element.
    for (std::int64_t p = 0; p < P; ++p) {
      T* orow = ob + p * S;
      for (std::int64_t r = 0; r < R; ++r) {
        const T av = ab[p * R + r];
        const T* brow = bb + r * S;
        for (std::int64_t s = 0; s < S; ++s) {
          orow[s] += av * brow[s];
        }
      }
    }
  }
  if (counter) {
    counter->flops += 2ull * static_cast<std::uint64_t>(B) * P * R * S;
    counter->bytes_read += a.byte_size() + b.byte_size();
    counter->bytes_written += out.byte_size();
    counter->record_alloc(out.byte_size());
  }
  return out;
}

// Batched GEMM with the right operand transposed in place:
// out[b,p,s] = sum_r a[b,p,r] * bt[b,s,r]. Same counter contract as gemm.
// Used to score queries against a token sequence without materializing T^t.
template <typename T>
TensorT<T> gemm_bt(const TensorT<T>& a, const TensorT<T>& bt, OpCounter* counter = nullptr) {
  detail::require_rank(a, 3, "gemm_bt lhs");
  detail::require_rank(bt, 3, "gemm_bt rhs");
  if (a.dim(0) != bt.dim(0)) {
    throw shape_error("gemm_bt batch axes disagree: lhs axis 0 = " + std::to_string(a.dim(0)) +
                      ", rhs axis 0 = " + std::to_string(bt.dim(0)));
  }
  if (a.dim(2) != bt.dim(2)) {
    throw shape_error("gemm_bt inner axes disagree: lhs axis 2 = " + std::to_string(a.dim(2)) +
                      ", rhs axis 2 = " + std::to_string(bt.dim(2)));
  }
  const std::int64_t B = a.dim(0), P = a.dim(1), R = a.dim(2), S = bt.dim(1);
  TensorT<T> out({B, P, S});
  for (std::int64_t n = 0; n < B; ++n) {
    const T* ab = a.data() + n * P * R;
    const T* bb = bt.data() + n * S * R;
    T* ob = out.data() + n * P * S;
    for (std::int64_t p = 0; p < P; ++p) {
      const T* arow = ab + p * R;
      for (std::int64_t s = 0; s < S; ++s) {
        const T* brow = bb + s * R;
        T acc = T(0);
        for (std::int64_t r = 0; r < R; ++r) {
          acc += arow[r] * brow[r];
        }
        ob[p * S + s] = acc;
      }
    }
  }
  if (counter) {
    counter->flops += 2ull * static_cast<std::uint64_t>(B) * P * R * S;
    counter->bytes_read += a.byte_size() + bt.byte_size();
    counter->bytes_written += out.byte_size();
    counter->record_alloc(out.byte_size());
  }
  return out;
}

// Rearranges a token sequence [B,N,C] into an image-like grid [B,C,hp,wp]
// with out[b,c,y,x] = t[b, y*wp + x, c]. Zero flops, bytes accounted.
template <typename T>
TensorT<T> tokens_to_grid(const TensorT<T>& t, std::int64_t hp, std::int64_t wp,
                          OpCounter* counter = nullptr) {
  detail::require_rank(t, 3, "tokens_to_grid");
  const std::int64_t B = t.dim(0), N = t.dim(1), C = t.dim(2);
  if (N != hp * wp) {
    throw shape_error("tokens_to_grid: N = " + std::to_string(N) + " != hp*wp = " +
                      std::to_string(hp) + "*" + std::to_string(wp));
  }
  TensorT<T> out({B, C, hp, wp});
  for (std::int64_t b = 0; b < B; ++b) {
    const T* tb = t.data() + b * N * C;
    T* ob = out.data() + b * C * N;
    for (std::int64_t n = 0; n < N; ++n) {
      const T* tok = tb + n * C;
      for (std::int64_t c = 0; c < C; ++c) {
        ob[c * N + n] = tok[c];
      }
    }
  }
  if (counter) {
    counter->bytes_read += t.byte_size();
    counter->bytes_written += out.byte_size();
    counter->record_alloc(out.byte_size());
  }
  return out;
}

// Inverse of tokens_to_grid.
template <typename T>
TensorT<T> grid_to_tokens(const TensorT<T>& g, OpCounter* counter = nullptr) {
  detail::require_rank(g, 4, "grid_to_tokens");
  const std::int64_t B = g.dim(0), C = g.dim(1), N = g.dim(2) * g.dim(3);
  TensorT<T> out({B, N, C});
  for (std::int64_t b = 0; b < B; ++b) {
    const T* gb = g.data() + b * C * N;
    T* ob = out.data() + b * N * C;
    for (std::int64_t c = 0; c < C; ++c) {
      for (std::int64_t n = 0; n < N; ++n) {
        ob[n * C + c] = gb[c * N + n];
      }
    }
  }
  if (counter) {
    counter->bytes_read += g.byte_size();
    counter->bytes_written += out.byte_size();
    counter->record_alloc(out.byte_size());
  }
  return out;
}

// Reshapes token-indexed scores [B,Qn,N] onto the patch grid [B,Qn,hp,wp]
// with out[b,q,y,x] = l[b,q, y*wp + x]. Zero flops, bytes accounted.
template <typename T>
TensorT<T> scores_to_grid(const TensorT<T>& l, std::int64_t hp, std::int64_t wp,
                          OpCounter* counter = nullptr) {
  detail::require_rank(l, 3, "scores_to_grid");
  const std::int64_t N = l.dim(2);
  if (N != hp * wp) {
    throw shape_error("scores_to_grid: N = " + std::to_string(N) + " != hp*wp = " +
                      std::to_string(hp) + "*" + std::to_string(wp));
  }
  TensorT<T> out({l.dim(0), l.dim(1), hp, wp},
                 std::vector<T>(l.values().begin(), l.values().end()));
  if (counter) {
    counter->bytes_read += l.byte_size();
    counter->bytes_written += out.byte_size();
    counter->record_alloc(out.byte_size());
  }
  return out;
}

// Inverse of scores_to_grid.
template <typename T>
TensorT<T> grid_to_scores(const TensorT<T>& g, OpCounter* counter = nullptr) {
  detail::require_rank(g, 4, "grid_to_scores");
  TensorT<T> out({g.dim(0), g.dim(1), g.dim(2) * g.dim(3)},
                 std::vector<T>(g.values().begin(), g.values().end()));
  if (counter) {
    counter->bytes_read += g.byte_size();
    counter->bytes_written += out.byte_size();
    counter->record_alloc(out.byte_size());
  }
  return out;
}

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& x, OpCounter* counter = nullptr) {
  TensorT<T> out(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    out.at(i) = T(1) / (T(1) + std::exp(-x.at(i)));
  }
  if (counter) {
    counter->flops += kSigmoidFlopsPerElement * static_cast<std::uint64_t>(x.numel());
    counter->bytes_read += x.byte_size();
    counter->bytes_written += out.byte_size();
    counter->record_alloc(out.byte_size());
  }
  return out;
}

// Softmax over the last axis, numerically stabilized by the row max.
template <typename T>
TensorT<T> softmax_lastdim(const TensorT<T>& x, OpCounter* counter = nullptr) {
  const std::int64_t inner = x.dim(x.rank() - 1);
  if (inner < 1) throw shape_error("softmax: last axis extent must be >= 1");
  const std::int64_t rows = x.numel() / inner;
  TensorT<T> out(x.shape());
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* in = x.data() + r * inner;
    T* o = out.data() + r * inner;
    T mx = in[0];
    for (std::int64_t i = 1; i < inner; ++i) mx = std::max(mx, in[i]);
    T sum = T(0);
    for (std::int64_t i = 0; i < inner; ++i) {
      o[i] = std::exp(in[i] - mx);
      sum += o[i];
    }
    for (std::int64_t i = 0; i < inner; ++i) o[i] /= sum;
  }
  if (counter) {
    counter->flops += kSoftmaxFlopsPerElement * static_cast<std::uint64_t>(x.numel());
    counter->bytes_read += x.byte_size();
    counter->bytes_written += out.byte_size();
    counter->record_alloc(out.byte_size());
  }
  return out;
}

template <typename T>
TensorT<T> scale(const TensorT<T>& x, T alpha, OpCounter* counter = nullptr) {
  TensorT<T> out(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) out.at(i) = alpha * x.at(i);
  if (counter) {
    counter->flops += kScaleFlopsPerElement * static_cast<std::uint64_t>(x.numel());
    counter->bytes_read += x.byte_size();
    counter->bytes_written += out.byte_size();
    counter->record_alloc(out.byte_size());
  }
  return out;
}

template <typename T>
TensorT<T> add(const TensorT<T>& x, const TensorT<T>& y, OpCounter* counter = nullptr) {
  if (x.shape() != y.shape()) {
    throw shape_error("add: shapes disagree, " + shape_str(x.shape()) + " vs " +
                      shape_str(y.shape()));
  }
  TensorT<T> out(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) out.at(i) = x.at(i) + y.at(i);
  if (counter) {
    counter->flops += kAddFlopsPerElement * static_cast<std::uint64_t>(x.numel());
    counter->bytes_read += x.byte_size() + y.byte_size();
    counter->bytes_written += out.byte_size();
    counter->record_alloc(out.byte_size());
  }
  return out;
}

}  // namespace tokenmask
