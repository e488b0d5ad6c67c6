#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "faddefend/desk_dataset.hpp"
#include "faddefend/dip.hpp"

namespace faddefend {
namespace {

GeneratorSpec tiny_generator() {
  GeneratorSpec g;
  g.depth = 2;
  g.base_channels = 4;
  g.max_channels = 8;
  g.skip_channels = 2;
  g.input_channels = 4;
  return g;
}

DipConfig short_fit(int iterations = 60, std::uint64_t seed = 0) {
  DipConfig d;
  d.iterations = iterations;
  d.noise_seed = seed;
  return d;
}

TEST(DipTest, LossDecreasesAcrossSeeds) {
  for (std::uint64_t s = 0; s < 4; ++s) {
    const ImageTensor x = add_gaussian_noise(synthetic_photo(16, 16, s), 8.0, s);
    const DipResult r = dip_reconstruct(x, tiny_generator(), short_fit(80, s));
    ASSERT_EQ(r.loss_history.size(), 80u);
    EXPECT_LT(r.loss_history.back(), r.loss_history.front());
    EXPECT_LT(r.loss_history.back(), 0.5 * r.loss_history.front());
  }
}

TEST(DipTest, DeterministicForFixedSeed) {
  const ImageTensor x = synthetic_photo(16, 16, 3);
  const DipResult a = dip_reconstruct(x, tiny_generator(), short_fit(20, 5));
  const DipResult b = dip_reconstruct(x, tiny_generator(), short_fit(20, 5));
  EXPECT_EQ(a.reconstruction, b.reconstruction);
  EXPECT_EQ(a.loss_history, b.loss_history);
  const DipResult c = dip_reconstruct(x, tiny_generator(), short_fit(20, 6));
  EXPECT_NE(a.reconstruction, c.reconstruction);
}

// Buffers of every possible alignment must give the same result.
TEST(DipTest, IndependentOfHeapLayout) {
  const ImageTensor x = synthetic_photo(16, 16, 9);
  const DipResult ref = dip_reconstruct(x, tiny_generator(), short_fit(25, 1));
  std::vector<std::vector<char>> ballast;
  for (int shift = 1; shift <= 8; ++shift) {
    ballast.emplace_back(static_cast<std::size_t>(shift) * 4 + 1);
    auto copy = std::make_unique<ImageTensor>(x);
    EXPECT_EQ(dip_reconstruct(*copy, tiny_generator(), short_fit(25, 1)).loss_history, ref.loss_history) << shift;
  }
}

TEST(DipTest, OddSizesArePaddedAndCroppedBack) {
  for (int channels : {1, 3}) {
    ImageTensor x = synthetic_photo(13, 19, 4);
    if (channels == 1) x = luminance(x);
    const DipResult r = dip_reconstruct(x, tiny_generator(), short_fit(10));
    EXPECT_TRUE(r.reconstruction.same_shape(x));
    EXPECT_TRUE(r.reconstruction.in_range());
  }
}

TEST(DipTest, SingleIteration) {
  const ImageTensor x = synthetic_photo(8, 8, 1);
  const DipResult r = dip_reconstruct(x, tiny_generator(), short_fit(1));
  EXPECT_EQ(r.loss_history.size(), 1u);
  EXPECT_TRUE(r.reconstruction.in_range());
}

TEST(DipTest, TrajectorySnapshotsEveryPeriod) {
  const ImageTensor x = synthetic_photo(16, 16, 2);
  DipConfig d = short_fit(30);
  d.trajectory_every = 10;
  const DipResult r = dip_reconstruct(x, tiny_generator(), d);
  ASSERT_EQ(r.trajectory.size(), 3u);
  EXPECT_EQ(r.trajectory[0].iteration, 10);
  EXPECT_EQ(r.trajectory[2].iteration, 30);
  EXPECT_EQ(r.trajectory[2].image, r.reconstruction);
  DipConfig plain = short_fit(30);
  EXPECT_EQ(dip_reconstruct(x, tiny_generator(), plain).reconstruction, r.reconstruction);
}

TEST(DipTest, LargePathIsReconstructionThenSmallPath) {
  const ImageTensor x = add_gaussian_noise(synthetic_photo(16, 16, 8), 12.0, 8);
  const PreprocessConfig pre{};
  const ImageTensor composed =
      small_path_defend(dip_reconstruct(x, tiny_generator(), short_fit(15)).reconstruction, pre);
  EXPECT_EQ(large_path_defend(x, tiny_generator(), short_fit(15), pre), composed);
}

TEST(DipTest, DivergenceRaisesOptimizationError) {
  DipConfig d = short_fit(50);
  d.learning_rate = 1e30;
  GeneratorSpec g = tiny_generator();
  g.batch_norm = false;
  try {
    dip_reconstruct(synthetic_photo(8, 8, 1), g, d);
    FAIL() << "expected OptimizationError";
  } catch (const OptimizationError& e) {
    EXPECT_GE(e.iteration(), 1);
  }
}

TEST(DipTest, InvalidConfigurationsRejected) {
  const ImageTensor x = synthetic_photo(8, 8, 1);
  DipConfig d;
  d.iterations = 0;
  EXPECT_THROW(dip_reconstruct(x, tiny_generator(), d), std::invalid_argument);
  d = DipConfig{};
  d.learning_rate = 0.0;
  EXPECT_THROW(dip_reconstruct(x, tiny_generator(), d), std::invalid_argument);
  GeneratorSpec g = tiny_generator();
  g.depth = 0;
  EXPECT_THROW(dip_reconstruct(x, g, DipConfig{}), std::invalid_argument);
  EXPECT_THROW(dip_reconstruct(ImageTensor(), tiny_generator(), DipConfig{}), DimensionError);
}

TEST(DipTest, ParameterCountMatchesHandCount) {
  GeneratorSpec g;
  g.depth = 1;
  g.base_channels = 2;
  g.max_channels = 2;
  g.skip_channels = 1;
  g.input_channels = 1;
  g.batch_norm = false;
  // skip 1x1 (1->1) 2, down 3x3 s2 (1->2) 20 and 3x3 (2->2) 38, up 3x3 (3->2) 56 and 1x1 (2->2) 6, head 1x1 (2->1) 3.
  // Norm layers add gamma and beta: skip 1 channel, down 2+2, up 3+2+2.
  EXPECT_EQ(generator_parameter_count(g, 1), 125u);
  g.batch_norm = true;
  EXPECT_EQ(generator_parameter_count(g, 1), 149u);
  EXPECT_EQ(g.channels_at(3), 2);
}

}  // namespace
}  // namespace faddefend
