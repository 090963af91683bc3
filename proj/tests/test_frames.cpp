#include <gtest/gtest.h>

#include "dtcn/frames.hpp"
#include "test_util.hpp"

using namespace dtcn;
using dtcn::testing::random_tensor;
using dtcn::testing::weighted_sum;

namespace {

std::vector<double> ramp(std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(i);
  return x;
}

// Gauss-Jordan inverse with partial pivoting.
Tensor invert(Tensor a) {
  const std::size_t n = a.dim(0);
  Tensor inv({n, n});
  for (std::size_t i = 0; i < n; ++i) inv(i, i) = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    for (std::size_t k = 0; k < n; ++k) {
      std::swap(a(c, k), a(piv, k));
      std::swap(inv(c, k), inv(piv, k));
    }
    const double d = a(c, c);
    for (std::size_t k = 0; k < n; ++k) {
      a(c, k) /= d;
      inv(c, k) /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a(r, c);
      for (std::size_t k = 0; k < n; ++k) {
        a(r, k) -= f * a(c, k);
        inv(r, k) -= f * inv(c, k);
      }
    }
  }
  return inv;
}

}  // namespace

TEST(Segment, ThirtyTwoSamplesGiveThreeFrames) {
  const auto x = ramp(32);
  const FrameMatrix fm = segment(x, 16);
  ASSERT_EQ(fm.num_frames(), 3u);
  EXPECT_EQ(fm.hop, 8u);
  EXPECT_EQ(fm.frames(0, 0), 0.0);
  EXPECT_EQ(fm.frames(0, 15), 15.0);
  EXPECT_EQ(fm.frames(1, 0), 8.0);
  EXPECT_EQ(fm.frames(1, 15), 23.0);
  EXPECT_EQ(fm.frames(2, 0), 16.0);
  EXPECT_EQ(fm.frames(2, 15), 31.0);
}

TEST(Segment, ExactBlockIsOneFrame) { EXPECT_EQ(segment(ramp(16), 16).num_frames(), 1u); }

TEST(Segment, TailIsZeroPadded) {
  EXPECT_EQ(padded_length(20, 16), 24u);
  const FrameMatrix fm = segment(ramp(20), 16);
  ASSERT_EQ(fm.num_frames(), 2u);
  EXPECT_EQ(fm.frames(1, 0), 8.0);
  EXPECT_EQ(fm.frames(1, 11), 19.0);
  for (std::size_t i = 12; i < 16; ++i) EXPECT_EQ(fm.frames(1, i), 0.0);
}

TEST(Segment, EmptyInputThrows) {
  EXPECT_THROW(segment(std::vector<double>{}, 16), EmptyInputError);
  EXPECT_THROW(segment(ramp(4), 5), std::invalid_argument);
}

TEST(OverlapAdd, RoundTripRandomLengths) {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(16, 1000)(rng);
    std::vector<double> x(n);
    for (auto& v : x) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    const auto y = overlap_add(segment(x, 16), n);
    ASSERT_EQ(y.size(), n);
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(y[i] - x[i]));
    EXPECT_LT(worst, 1e-6) << "length " << n;
  }
}

TEST(OverlapAdd, SingleFrameVerbatimAndZeros) {
  const Tensor f = random_tensor({1, 16}, 3);
  const auto y = overlap_add(FrameMatrix{f, 8}, 16);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(y[i], f(0, i));
  for (double v : overlap_add(FrameMatrix{Tensor({5, 16}), 8}, 40)) EXPECT_EQ(v, 0.0);
}

TEST(OverlapAdd, RejectsTooLongOutput) { EXPECT_THROW(overlap_add(FrameMatrix{Tensor({3, 16}), 8}, 33), std::invalid_argument); }

TEST(OverlapAdd, GradCheck) {
  const Tensor f = random_tensor({4, 8}, 5);
  const auto w = random_tensor({18}, 6);
  auto loss = [&](const std::vector<Tensor>& in) {
    const auto y = overlap_add(FrameMatrix{in[0], 4}, 18);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
    return s;
  };
  EXPECT_LT(grad_check(loss, {f}, {overlap_add_backward(w.data(), 4, 8)}), 1e-4);
}

TEST(Encode, IdentityBasisOnNonnegativeInput) {
  const std::size_t L = 4, N = 6;
  Tensor B({L, N});
  for (std::size_t i = 0; i < L; ++i) B(i, i) = 1.0;
  const FrameMatrix fm{random_tensor({3, L}, 1, 0.0, 1.0), L / 2};
  const Tensor w = encode(fm, B);
  ASSERT_EQ(w.shape(), (Shape{N, 3}));
  for (std::size_t l = 0; l < 3; ++l)
    for (std::size_t n = 0; n < N; ++n) EXPECT_EQ(w(n, l), n < L ? fm.frames(l, n) : 0.0);
}

TEST(Encode, ZeroFramesAndNonnegativity) {
  const Tensor B = random_tensor({8, 10}, 2);
  EXPECT_EQ(encode(FrameMatrix{Tensor({3, 8}), 4}, B), Tensor({10, 3}));
  const Tensor w = encode(FrameMatrix{random_tensor({9, 8}, 3), 4}, B);
  for (double v : w.data()) EXPECT_GE(v, 0.0);
  EXPECT_THROW(encode(FrameMatrix{Tensor({3, 8}), 4}, Tensor({6, 10})), ShapeError);
}

TEST(Encode, GradCheck) {
  const Tensor frames = random_tensor({5, 8}, 7), B = random_tensor({8, 6}, 8);
  const Tensor w = random_tensor({6, 5}, 9);
  Tensor pre;
  encode(FrameMatrix{frames, 4}, B, &pre);
  for (double v : pre.data()) ASSERT_GT(std::abs(v), 1e-4);
  auto loss = [&](const std::vector<Tensor>& in) { return weighted_sum(encode(FrameMatrix{in[0], 4}, in[1]), w); };
  Tensor dB(B.shape());
  const Tensor dframes = encode_backward(FrameMatrix{frames, 4}, B, pre, w, dB);
  EXPECT_LT(grad_check(loss, {frames, B}, {dframes, dB}), 1e-4);
}

TEST(ApplyMask, Definition) {
  const Tensor w = random_tensor({3, 4}, 1);
  EXPECT_EQ(apply_mask(w, Tensor({3, 4}, 1.0)), w);
  EXPECT_EQ(apply_mask(w, Tensor({3, 4})), Tensor({3, 4}));
  EXPECT_EQ(apply_mask(Tensor({2, 1}, std::vector<double>{2, 3}), Tensor({2, 1}, std::vector<double>{0.5, 1})),
            Tensor({2, 1}, std::vector<double>({1, 3})));
  EXPECT_THROW(apply_mask(w, Tensor({4, 3})), ShapeError);
}

TEST(ApplyMask, GradCheck) {
  const Tensor w = random_tensor({3, 4}, 2), m = random_tensor({3, 4}, 3, 0.0, 1.0), g = random_tensor({3, 4}, 4);
  auto loss = [&](const std::vector<Tensor>& in) { return weighted_sum(apply_mask(in[0], in[1]), g); };
  EXPECT_LT(grad_check(loss, {w, m}, {apply_mask(g, m), apply_mask(g, w)}), 1e-4);
}

TEST(Decode, ZeroAndLinearity) {
  const Tensor U = random_tensor({6, 8}, 1);
  EXPECT_EQ(decode(Tensor({6, 3}), U).frames, Tensor({3, 8}));
  const Tensor v1 = random_tensor({6, 3}, 2), v2 = random_tensor({6, 3}, 3);
  Tensor sum = v1 + v2;
  EXPECT_LT(max_abs_diff(decode(sum, U).frames, decode(v1, U).frames + decode(v2, U).frames), 1e-12);
}

TEST(Decode, RightInverseRecoversNonnegativeInput) {
  const std::size_t L = 8;
  Tensor B = random_tensor({L, L}, 5, 0.0, 0.5);
  for (std::size_t i = 0; i < L; ++i) B(i, i) += 2.0;
  const Tensor U = invert(B);
  const FrameMatrix fm{random_tensor({6, L}, 6, 0.0, 1.0), L / 2};
  const FrameMatrix back = decode(encode(fm, B), U);
  EXPECT_LT(max_abs_diff(back.frames, fm.frames), 1e-10);
}

TEST(Decode, GradCheck) {
  const Tensor v = random_tensor({6, 5}, 1), U = random_tensor({6, 8}, 2), g = random_tensor({5, 8}, 3);
  auto loss = [&](const std::vector<Tensor>& in) { return weighted_sum(decode(in[0], in[1]).frames, g); };
  Tensor dU(U.shape());
  const Tensor dv = decode_backward(v, U, g, dU);
  EXPECT_LT(grad_check(loss, {v, U}, {dv, dU}), 1e-4);
}
