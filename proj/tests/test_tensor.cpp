#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "tokenmask/tensor.hpp"

using namespace tokenmask;

TEST_CASE("gemm scalar product") {
  Tensor a({1, 1, 1}, {2.0f});
  Tensor b({1, 1, 1}, {3.0f});
  OpCounter c;
  Tensor out = gemm(a, b, &c);
  CHECK(out.at(0, 0, 0) == 6.0f);
  CHECK(c.flops == 2);
}

TEST_CASE("gemm identity passthrough") {
  Tensor eye({1, 3, 3});
  for (int i = 0; i < 3; ++i) eye.at(0, i, i) = 1.0f;
  std::mt19937_64 rng(3);
  Tensor x = oracles::random_tensor(rng, {1, 3, 3}).cast<float>();
  Tensor out = gemm(eye, x);
  CHECK(oracles::bitwise_equal(out, x));
}

TEST_CASE("gemm matches triple-loop oracle on seeded shapes") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> ext(1, 8);
  for (int i = 0; i < 200; ++i) {
    const std::int64_t B = ext(rng), P = ext(rng), R = ext(rng), S = ext(rng);
    Tensor64 a = oracles::random_tensor(rng, {B, P, R});
    Tensor64 b = oracles::random_tensor(rng, {B, R, S});
    Tensor af = a.cast<float>();
    Tensor bf = b.cast<float>();
    OpCounter c;
    Tensor out = gemm(af, bf, &c);
    Tensor64 ref = oracles::gemm(af.cast<double>(), bf.cast<double>());
    CHECK(oracles::rel_error_floored(out.cast<double>(), ref) < 1e-6);
    CHECK(c.flops == 2ull * B * P * R * S);
  }
}

TEST_CASE("gemm_bt matches explicit transpose") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 50; ++i) {
    std::uniform_int_distribution<int> ext(1, 6);
    const std::int64_t B = ext(rng), P = ext(rng), R = ext(rng), S = ext(rng);
    Tensor64 a = oracles::random_tensor(rng, {B, P, R});
    Tensor64 bt = oracles::random_tensor(rng, {B, S, R});
    Tensor64 b({B, R, S});
    for (std::int64_t n = 0; n < B; ++n)
      for (std::int64_t r = 0; r < R; ++r)
        for (std::int64_t s = 0; s < S; ++s) b.at(n, r, s) = bt.at(n, s, r);
    OpCounter c;
    Tensor64 out = gemm_bt(a, bt, &c);
    CHECK(oracles::max_abs_diff(out, oracles::gemm(a, b)) < 1e-12);
    CHECK(c.flops == 2ull * B * P * R * S);
  }
}

TEST_CASE("gemm shape errors name the offending axes") {
  Tensor a({1, 2, 3});
  Tensor b({1, 4, 2});
  CHECK_THROWS_WITH_AS(gemm(a, b), doctest::Contains("inner axes"), shape_error);
  Tensor c({2, 3, 2});
  CHECK_THROWS_WITH_AS(gemm(a, c), doctest::Contains("batch axes"), shape_error);
}

TEST_CASE("tokens_to_grid singleton and index formula") {
  Tensor t({1, 1, 1}, {5.0f});
  Tensor g = tokens_to_grid(t, 1, 1);
  CHECK(g.shape() == Shape{1, 1, 1, 1});
  CHECK(g.at(0, 0, 0, 0) == 5.0f);

  // token 3, channel 1 lands at (c=1, y=1, x=1) on a 2x2 grid
  Tensor t2({1, 4, 2});
  for (std::int64_t n = 0; n < 4; ++n)
    for (std::int64_t c = 0; c < 2; ++c) t2.at(0, n, c) = static_cast<float>(10 * n + c);
  Tensor g2 = tokens_to_grid(t2, 2, 2);
  CHECK(g2.at(0, 1, 1, 1) == 31.0f);
  for (std::int64_t c = 0; c < 2; ++c)
    for (std::int64_t y = 0; y < 2; ++y)
      for (std::int64_t x = 0; x < 2; ++x)
        CHECK(g2.at(0, c, y, x) == t2.at(0, y * 2 + x, c));
}

TEST_CASE("grid reshapes are bijective, zero-flop, allocation-accounted") {
  std::mt19937_64 rng(13);
  Tensor t = oracles::random_tensor(rng, {2, 12, 5}).cast<float>();
  OpCounter c;
  Tensor g = tokens_to_grid(t, 3, 4, &c);
  Tensor back = grid_to_tokens(g, &c);
  CHECK(oracles::bitwise_equal(back, t));
  CHECK(c.flops == 0);
  CHECK(c.bytes_written == t.byte_size() + g.byte_size());
  CHECK(c.peak_alloc_bytes == g.byte_size());

  Tensor l = oracles::random_tensor(rng, {2, 7, 12}).cast<float>();
  OpCounter c2;
  Tensor lg = scores_to_grid(l, 3, 4, &c2);
  CHECK(oracles::bitwise_equal(grid_to_scores(lg), l));
  CHECK(c2.flops == 0);
  CHECK(c2.bytes_written == lg.byte_size());
}

TEST_CASE("scores_to_grid spot index") {
  Tensor l({1, 1, 4}, {0.0f, 1.0f, 2.0f, 3.0f});
  Tensor g = scores_to_grid(l, 2, 2);
  CHECK(g.at(0, 0, 1, 0) == 2.0f);  // token 2 -> (y=1, x=0) for wp=2
  CHECK(g.at(0, 0, 0, 0) == 0.0f);

  Tensor bad({1, 1, 5});
  CHECK_THROWS_AS(scores_to_grid(bad, 2, 2), shape_error);
  CHECK_THROWS_AS(tokens_to_grid(Tensor({1, 5, 1}), 2, 2), shape_error);
}

TEST_CASE("sigmoid and softmax basics") {
  Tensor s = sigmoid(Tensor({1}, {0.0f}));
  CHECK(s.at(0) == doctest::Approx(0.5).epsilon(1e-7));

  Tensor sym = softmax_lastdim(Tensor({3}, {1.5f, 1.5f, 1.5f}));
  for (int i = 0; i < 3; ++i) CHECK(sym.at(i) == doctest::Approx(1.0 / 3).epsilon(1e-6));

  Tensor two = softmax_lastdim(Tensor({2}, {0.0f, std::log(3.0f)}));
  CHECK(two.at(0) == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(two.at(1) == doctest::Approx(0.75).epsilon(1e-6));
}

TEST_CASE("softmax rows sum to one, sigmoid stays in (0,1)") {
  std::mt19937_64 rng(17);
  // |x| <= 12 keeps float32 sigmoid away from its saturation points
  Tensor x = oracles::random_tensor(rng, {4, 6}, -12.0, 12.0).cast<float>();
  Tensor sm = softmax_lastdim(x);
  for (std::int64_t r = 0; r < 4; ++r) {
    double sum = 0.0;
    for (std::int64_t i = 0; i < 6; ++i) sum += sm.at(r, i);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
  Tensor sg = sigmoid(x);
  for (std::int64_t i = 0; i < sg.numel(); ++i) {
    CHECK(sg.at(i) > 0.0f);
    CHECK(sg.at(i) < 1.0f);
  }
}

TEST_CASE("elementwise flop constants") {
  Tensor x({2, 3});
  OpCounter c;
  sigmoid(x, &c);
  CHECK(c.flops == kSigmoidFlopsPerElement * 6);
  c = {};
  softmax_lastdim(x, &c);
  CHECK(c.flops == kSoftmaxFlopsPerElement * 6);
  c = {};
  scale(x, 2.0f, &c);
  CHECK(c.flops == 6);
  c = {};
  add(x, x, &c);
  CHECK(c.flops == 6);
  CHECK_THROWS_AS(add(x, Tensor({3, 2})), shape_error);
}

TEST_CASE("counters compose additively") {
  OpCounter a{10, 20, 30, 40};
  OpCounter b{1, 2, 3, 100};
  a += b;
  CHECK(a.flops == 11);
  CHECK(a.bytes_read == 22);
  CHECK(a.bytes_written == 33);
  CHECK(a.peak_alloc_bytes == 100);
}

TEST_CASE("tensor construction rejects bad shapes") {
  CHECK_THROWS_AS(Tensor(Shape{}), shape_error);
  CHECK_THROWS_AS(Tensor(Shape{1, 1, 1, 1, 1}), shape_error);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<float>(3)), shape_error);
  CHECK_THROWS_AS(std::move(Tensor({2, 2})).reshaped({3, 2}), shape_error);
}
