#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace texsyn;
using texsyn::oracle::naive_gram_entry;
using texsyn::oracle::numeric_gradient;
using texsyn::oracle::random_tensor;
using texsyn::oracle::relative_error;

namespace {

Tensor<double> two_maps() {
  return Tensor<double>({2, 1, 4}, std::vector<double>{1, 2, 3, 4, 1, 0, 1, 0});
}

Tensor<double> one_row(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor<double>({1, 1, n}, std::move(v));
}

// Circular roll of every map along x by k columns.
Tensor<double> roll_x(const Tensor<double>& f, std::size_t k) {
  Tensor<double> out(f.shape());
  const std::size_t w = f.extent(2);
  for (std::size_t c = 0; c < f.extent(0); ++c)
    for (std::size_t y = 0; y < f.extent(1); ++y)
      for (std::size_t x = 0; x < w; ++x) out(c, y, (x + k) % w) = f(c, y, x);
  return out;
}

}  // namespace

TEST(Gram, HandValues) {
  const auto g = gram(two_maps());
  EXPECT_EQ(g.values(0, 0), 7.5);
  EXPECT_EQ(g.values(0, 1), 1.0);
  EXPECT_EQ(g.values(1, 0), 1.0);
  EXPECT_EQ(g.values(1, 1), 0.5);
  EXPECT_EQ(g.normalizer, 4.0);
}

TEST(Gram, DiagonalModeZeroesOffDiagonal) {
  const auto g = gram(two_maps(), GramMode::diagonal);
  EXPECT_EQ(g.values, Tensor<double>({2, 2}, std::vector<double>{7.5, 0, 0, 0.5}));
}

TEST(ShiftedGram, HandValue) {
  const auto g = shifted_gram(one_row({1, 2, 3}), ShiftAxis::x, 1);
  EXPECT_EQ(g.values(0, 0) * 3.0, 8.0);
  EXPECT_DOUBLE_EQ(g.values(0, 0), 8.0 / 3.0);
}

TEST(FlipGram, HandValue) {
  const auto g = flip_gram(one_row({1, 2, 3}), FlipAxis::lr);
  EXPECT_DOUBLE_EQ(g.values(0, 0), 10.0 / 3.0);
}

TEST(FlipGram, PalindromicMapMatchesGram) {
  const auto f = one_row({2, 5, 7, 5, 2});
  EXPECT_EQ(flip_gram(f, FlipAxis::lr).values, gram(f).values);
}

TEST(ShiftedGram, ZeroDeltaEqualsGramExactly) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto f = random_tensor({5, 7, 9}, rng);
    const auto g = gram(f).values;
    EXPECT_EQ(shifted_gram(f, ShiftAxis::x, 0).values, g);
    EXPECT_EQ(shifted_gram(f, ShiftAxis::y, 0).values, g);
  }
}

TEST(ShiftedGram, ExhaustedOffsetIsEmptyOverlap) {
  Tensor<double> f({2, 4, 6});
  EXPECT_THROW(shifted_gram(f, ShiftAxis::x, 6), EmptyOverlap);
  EXPECT_THROW(shifted_gram(f, ShiftAxis::y, 4), EmptyOverlap);
  EXPECT_NO_THROW(shifted_gram(f, ShiftAxis::x, 5));
}

TEST(ShiftedGram, ConstantMapValue) {
  for (double c : {0.5, 3.0, -2.0})
    for (std::size_t w : {4u, 7u, 12u})
      for (std::size_t d = 0; d < w; ++d) {
        Tensor<double> f({1, 3, w}, c);
        const double expected = c * c * static_cast<double>(w - d) / static_cast<double>(w);
        EXPECT_NEAR(shifted_gram(f, ShiftAxis::x, d).values(0, 0), expected, 1e-14);
        EXPECT_NEAR(shifted_gram(f, ShiftAxis::x, d, ShiftNormalization::overlap).values(0, 0), c * c,
                    1e-14);
      }
}

TEST(Gram, SymmetricAndPositiveSemidefinite) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto f = random_tensor({6, 5, 5}, rng);
    const auto g = gram(f).values;
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(g(i, j), g(j, i));
    for (int probe = 0; probe < 10; ++probe) {
      const auto v = random_tensor({6}, rng);
      double q = 0.0;
      for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j) q += v[i] * g(i, j) * v[j];
      EXPECT_GE(q, -1e-12);
    }
  }
}

// The shifted Gram of the flipped stack is the transpose of the original:
// flipping swaps which map sits at the leading position.
TEST(ShiftedGram, FlipTransposesTheShiftedGram) {
  Rng rng(13);
  const auto f = random_tensor({4, 6, 8}, rng);
  for (std::size_t d = 1; d < 5; ++d) {
    const auto a = shifted_gram(f, ShiftAxis::x, d).values;
    const auto b = shifted_gram(flip(f, FlipAxis::lr), ShiftAxis::x, d).values;
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(a(i, j), b(j, i), 1e-12);
  }
}

TEST(ShiftedGram, SwappedCropsGiveTheTranspose) {
  Rng rng(14);
  const auto f = random_tensor({4, 6, 8}, rng);
  for (std::size_t d = 1; d < 5; ++d) {
    const auto g = shifted_gram(f, ShiftAxis::x, d);
    const auto swapped = cross_gram(crop_columns(f, CropSide::back, d),
                                    crop_columns(f, CropSide::front, d), g.normalizer);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(g.values(i, j), swapped(j, i));
  }
}

// A stack periodic in x rolled by a whole period has exactly the same Gram.
// An arbitrary circular roll changes a shifted Gram only through the δ·H
// wrap-around products.
TEST(ShiftedGram, RollInvariance) {
  Rng rng(8);
  const std::size_t n = 3, h = 5, period = 4, w = 12;
  const auto tile = random_tensor({n, h, period}, rng);
  Tensor<double> periodic({n, h, w});
  for (std::size_t c = 0; c < n; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) periodic(c, y, x) = tile(c, y, x % period);
  EXPECT_EQ(gram(roll_x(periodic, period)).values, gram(periodic).values);

  const auto f = random_tensor({n, h, w}, rng);
  const auto r = roll_x(f, 5);
  double peak = 0.0;
  for (double v : f.data()) peak = std::max(peak, std::abs(v));
  for (std::size_t d = 1; d < 4; ++d) {
    const auto s0 = shifted_gram(f, ShiftAxis::x, d).values, s1 = shifted_gram(r, ShiftAxis::x, d).values;
    const double bound = 2.0 * static_cast<double>(d) / static_cast<double>(w) * peak * peak;
    for (std::size_t i = 0; i < s0.size(); ++i) EXPECT_LE(std::abs(s0[i] - s1[i]), bound);
  }
}

TEST(Oracle, AllKindsMatchNaiveEvaluation) {
  Rng rng(1234);
  double worst = 0.0;
  for (std::size_t trial = 0; trial < 60; ++trial) {
    const std::size_t n = 1 + trial % 8, h = 3 + (trial * 7) % 14, w = 3 + (trial * 5) % 14;
    const auto f = random_tensor({n, h, w}, rng, 2.0);
    for (auto norm : {ShiftNormalization::full_map, ShiftNormalization::overlap})
      for (auto kind : {GramKind::standard, GramKind::shift_x, GramKind::shift_y, GramKind::flip_lr,
                        GramKind::flip_ud}) {
        const std::size_t extent = kind == GramKind::shift_y ? h : w;
        const std::size_t delta =
            (kind == GramKind::shift_x || kind == GramKind::shift_y) ? 1 + trial % (extent - 1) : 0;
        const auto g = compute_gram(f, kind, delta, GramMode::full, norm);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j)
            worst = std::max(worst, std::abs(g.values(i, j) -
                                             naive_gram_entry(f, kind, delta, i, j,
                                                              norm == ShiftNormalization::overlap)));
      }
  }
  EXPECT_LE(worst, 1e-10);
}

TEST(GramBackward, MatchesFiniteDifferences) {
  Rng rng(77);
  for (auto kind : {GramKind::standard, GramKind::shift_x, GramKind::shift_y, GramKind::flip_lr,
                    GramKind::flip_ud}) {
    const auto f = random_tensor({3, 5, 6}, rng);
    const std::size_t delta = (kind == GramKind::shift_x || kind == GramKind::shift_y) ? 2 : 0;
    const auto weights = random_tensor({3, 3}, rng);
    auto probe = [&](const Tensor<double>& x) {
      return inner_product(compute_gram(x, kind, delta, GramMode::full, ShiftNormalization::full_map).values,
                           weights);
    };
    Tensor<double> grad(f.shape());
    gram_backward(f, kind, delta, ShiftNormalization::full_map, weights, grad);
    EXPECT_LE(relative_error(grad, numeric_gradient(probe, f)), 1e-7) << to_string(kind);
  }
}
