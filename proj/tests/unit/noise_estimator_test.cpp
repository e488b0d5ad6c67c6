#include <gtest/gtest.h>

#include <cmath>
#include <future>
#include <random>
#include <vector>

#include "faddefend/desk_dataset.hpp"
#include "faddefend/noise_estimator.hpp"

namespace faddefend {
namespace {

constexpr int kPhotoSide = 256;

TEST(TextureStrengthTest, ConstantPatchIsZero) {
  const std::vector<float> patch(49, 0.37f);
  EXPECT_EQ(texture_strength(patch, 7), 0.0);
}

TEST(TextureStrengthTest, HorizontalRampHandComputed) {
  // Each of the 6x6 interior positions sees a horizontal difference of 2 and
  // no vertical difference, so G^T G = diag(36 * 4, 0).
  std::vector<float> patch(49);
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 7; ++x) patch[y * 7 + x] = 2.0f * x;
  EXPECT_DOUBLE_EQ(texture_strength(patch, 7), 144.0);

  std::vector<float> transposed(49);
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 7; ++x) transposed[y * 7 + x] = 2.0f * y;
  EXPECT_DOUBLE_EQ(texture_strength(transposed, 7), 144.0);
}

TEST(TextureStrengthTest, InvariantToConstantOffsetAndNonNegative) {
  std::mt19937_64 rng(5);
  std::normal_distribution<float> n(0.0f, 10.0f);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<float> patch(25), shifted(25);
    for (int i = 0; i < 25; ++i) patch[i] = n(rng);
    for (int i = 0; i < 25; ++i) shifted[i] = patch[i] + 17.0f;
    const double s = texture_strength(patch, 5);
    EXPECT_GE(s, 0.0);
    EXPECT_NEAR(texture_strength(shifted, 5), s, 1e-3 * (1.0 + s));
  }
  EXPECT_THROW(texture_strength(std::vector<float>(24), 5), DimensionError);
}

TEST(TextureStrengthTest, NullQuantileIsCachedAndStable) {
  const double q = unit_noise_strength_quantile(7, 0.99);
  EXPECT_GT(q, 0.0);
  EXPECT_EQ(unit_noise_strength_quantile(7, 0.99), q);
  // A higher percentile of the same distribution is larger.
  EXPECT_GT(unit_noise_strength_quantile(7, 0.999), q);
}

TEST(TextureStrengthTest, ConcurrentFirstUseAgrees) {
  std::vector<std::future<double>> futures;
  for (int i = 0; i < 6; ++i) {
    futures.push_back(std::async(std::launch::async, [] { return unit_noise_strength_quantile(6, 0.95); }));
  }
  const double first = futures[0].get();
  for (std::size_t i = 1; i < futures.size(); ++i) EXPECT_EQ(futures[i].get(), first);
}

TEST(EstimateSigmaTest, ConstantImageNearZero) {
  const PerturbationEstimate e = estimate_sigma(ImageTensor(64, 64, 3, 0.5f));
  EXPECT_LE(e.sigma, 0.5);
  EXPECT_GE(e.sigma, 0.0);
}

TEST(EstimateSigmaTest, TooSmallImageRejected) {
  EXPECT_THROW(estimate_sigma(ImageTensor(6, 6, 1)), DimensionError);
  EstimatorConfig bad;
  bad.confidence = 1.0;
  EXPECT_THROW(estimate_sigma(ImageTensor(16, 16, 1), bad), std::invalid_argument);
}

// Noise is shared across channels so the luminance plane carries the full
// sigma; independent channel noise shrinks to ~0.67 sigma in luma.
TEST(EstimateSigmaTest, RecoversInjectedSigmaTen) {
  int within = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const ImageTensor photo = synthetic_photo(kPhotoSide, kPhotoSide, 1000 + seed);
    const PerturbationEstimate e = estimate_sigma(add_gaussian_noise(photo, 10.0, seed, true));
    within += e.sigma >= 8.0 && e.sigma <= 12.0;
    if (e.converged) {
      EXPECT_GE(e.selected_patches, 1);
    }
  }
  EXPECT_GE(within, 16);
}

TEST(EstimateSigmaTest, IndependentChannelNoiseSeenThroughLuma) {
  const ImageTensor photo = synthetic_photo(kPhotoSide, kPhotoSide, 77);
  const double shared = estimate_sigma(add_gaussian_noise(photo, 10.0, 5, true)).sigma;
  const double indep = estimate_sigma(add_gaussian_noise(photo, 10.0, 5)).sigma;
  const double luma_gain = std::sqrt(0.299 * 0.299 + 0.587 * 0.587 + 0.114 * 0.114);
  EXPECT_NEAR(indep / shared, luma_gain, 0.05);
}

TEST(EstimateSigmaTest, MonotoneInInjectedNoise) {
  int ordered = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const ImageTensor photo = synthetic_photo(128, 128, 2000 + seed);
    const double lo = estimate_sigma(add_gaussian_noise(photo, 2.0, seed)).sigma;
    const double hi = estimate_sigma(add_gaussian_noise(photo, 20.0, seed)).sigma;
    ordered += hi > lo;
  }
  EXPECT_EQ(ordered, 20);
}

TEST(EstimateSigmaTest, PairedNoiseIncreaseProperty) {
  // 50 random pairs with a gap of at least 5 (0-255 scale).
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> base(0.0, 15.0), gap(5.0, 15.0);
  int increased = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const ImageTensor photo = synthetic_photo(96, 96, 3000 + trial);
    const double s0 = base(rng), s1 = s0 + gap(rng);
    const auto seed = static_cast<std::uint64_t>(trial);
    increased += estimate_sigma(add_gaussian_noise(photo, s1, seed)).sigma >
                 estimate_sigma(add_gaussian_noise(photo, s0, seed)).sigma;
  }
  EXPECT_GE(increased, 45);
}

TEST(EstimateSigmaTest, Deterministic) {
  const ImageTensor img = add_gaussian_noise(synthetic_photo(64, 64, 9), 5.0, 9);
  const PerturbationEstimate a = estimate_sigma(img), b = estimate_sigma(img);
  EXPECT_EQ(a.sigma, b.sigma);
  EXPECT_EQ(a.selected_patches, b.selected_patches);
  EXPECT_EQ(a.iterations_used, b.iterations_used);
}

TEST(GradeTest, PaperThresholdExamples) {
  PerturbationEstimate e;
  e.sigma = 2.0;
  EXPECT_EQ(grade(e, 2.13), Grade::kSmall);
  e.sigma = 2.2;
  EXPECT_EQ(grade(e, 2.13), Grade::kLarge);
  e.sigma = 2.13;
  EXPECT_EQ(grade(e, 2.13), Grade::kLarge);
  EXPECT_THROW(grade(e, -1.0), std::invalid_argument);
}

TEST(GradeTest, ScaleInvariantProperty) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 10.0), k(0.1, 10.0);
  for (int trial = 0; trial < 1000; ++trial) {
    PerturbationEstimate e;
    e.sigma = u(rng);
    const double t = u(rng), s = k(rng);
    PerturbationEstimate scaled = e;
    scaled.sigma = e.sigma * s;
    const bool below = e.sigma < t;
    EXPECT_EQ(grade(e, t) == Grade::kSmall, below);
    if ((e.sigma * s < t * s) == below) {
      EXPECT_EQ(grade(scaled, t * s), grade(e, t));
    }
  }
}

}  // namespace
}  // namespace faddefend
