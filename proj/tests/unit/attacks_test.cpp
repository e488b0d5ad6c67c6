#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "faddefend/attacks.hpp"
#include "oracles.hpp"

namespace faddefend {
namespace {

using testing::LinearToyClassifier;

constexpr InputShape kToyShape{8, 8, 1};

ImageTensor random_image(std::mt19937_64& rng, InputShape s = kToyShape) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  ImageTensor img(s.height, s.width, s.channels);
  for (float& v : img.values()) v = u(rng);
  // Push a few samples onto the range edges so clamping is exercised.
  img.values()[0] = 0.0f;
  img.values()[1] = 1.0f;
  return img;
}

AttackSpec spec_of(AttackFamily f, double eps, int steps, double step, bool random_start = false,
                   double momentum = 1.0, std::uint64_t seed = 0) {
  AttackSpec s;
  s.family = f;
  s.epsilon = eps;
  s.steps = steps;
  s.step_size = step;
  s.random_start = random_start;
  s.momentum = momentum;
  s.seed = seed;
  return s;
}

TEST(AttackSpecTest, DefaultsAndValidation) {
  const auto f = AttackSpec::defaults(AttackFamily::kFgsm, 4.0);
  EXPECT_EQ(f.steps, 1);
  EXPECT_DOUBLE_EQ(f.step_size, 4.0);
  const auto p = AttackSpec::defaults(AttackFamily::kPgd, 8.0);
  EXPECT_EQ(p.steps, 10);
  EXPECT_DOUBLE_EQ(p.step_size, 1.6);
  EXPECT_TRUE(p.random_start);
  EXPECT_FALSE(AttackSpec::defaults(AttackFamily::kBim, 8.0).random_start);
  EXPECT_THROW(spec_of(AttackFamily::kFgsm, 4, 2, 4).validate(), std::invalid_argument);
  EXPECT_THROW(spec_of(AttackFamily::kBim, -1, 2, 1).validate(), std::invalid_argument);
  EXPECT_THROW(spec_of(AttackFamily::kBim, 1, 0, 1).validate(), std::invalid_argument);
  EXPECT_THROW(spec_of(AttackFamily::kMifgsm, 1, 2, 1, false, -0.5).validate(), std::invalid_argument);
  EXPECT_EQ(attack_family_from_string("mi-fgsm"), AttackFamily::kMifgsm);
  EXPECT_THROW(attack_family_from_string("cw"), std::invalid_argument);
}

TEST(AttackTest, WrongFamilyRejected) {
  LinearToyClassifier m(kToyShape, 3, 1);
  std::mt19937_64 rng(1);
  const auto img = random_image(rng);
  EXPECT_THROW(fgsm(m, img, 0, spec_of(AttackFamily::kBim, 2, 1, 2)), std::invalid_argument);
}

TEST(AttackTest, ZeroEpsilonIsIdentity) {
  LinearToyClassifier m(kToyShape, 3, 2);
  std::mt19937_64 rng(2);
  const auto img = random_image(rng);
  for (auto f : {AttackFamily::kFgsm, AttackFamily::kBim, AttackFamily::kMifgsm, AttackFamily::kPgd}) {
    auto s = AttackSpec::defaults(f, 0.0, 5);
    EXPECT_EQ(run_attack(m, img, 1, s), img) << to_string(f);
  }
}

TEST(AttackTest, FgsmMatchesLinearClosedForm) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    LinearToyClassifier m(kToyShape, 4, 100 + trial);
    const auto img = random_image(rng);
    const int label = trial % 4;
    const auto adv = fgsm(m, img, label, spec_of(AttackFamily::kFgsm, 8, 1, 8));
    const auto sign = m.gradient_sign(img, label);
    for (std::size_t i = 0; i < img.size(); ++i) {
      const float expected = std::clamp(img.values()[i] + static_cast<float>(8.0 / 255.0) * sign[i], 0.0f, 1.0f);
      ASSERT_EQ(adv.values()[i], expected);
    }
    EXPECT_GE(m.loss(adv, label), m.loss(img, label));
  }
}

// Property suite over 10^4 random (model, image, spec) cases: the reduction
// lattice holds bit-exactly and every output stays in the eps-ball and [0, 1].
TEST(AttackPropertyTest, ReductionLatticeAndInvariants) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> eps_dist(0.5, 32.0);
  std::uniform_int_distribution<int> steps_dist(1, 4);
  const InputShape shape{4, 4, 3};
  std::size_t lattice_mismatch = 0, ball_violations = 0, range_violations = 0;
  const int cases = 10000;
  for (int c = 0; c < cases; ++c) {
    LinearToyClassifier m(shape, 3, rng());
    const auto img = random_image(rng, shape);
    const int label = c % 3;
    const double eps = eps_dist(rng);
    const int steps = steps_dist(rng);
    const double step = 2.0 * eps / steps;

    const auto b = bim(m, img, label, spec_of(AttackFamily::kBim, eps, steps, step));
    const auto p = pgd(m, img, label, spec_of(AttackFamily::kPgd, eps, steps, step, false));
    const auto mi = mifgsm(m, img, label, spec_of(AttackFamily::kMifgsm, eps, steps, step, false, 0.0));
    const auto one = bim(m, img, label, spec_of(AttackFamily::kBim, eps, 1, eps));
    const auto f = fgsm(m, img, label, spec_of(AttackFamily::kFgsm, eps, 1, eps));
    lattice_mismatch += !(p == b) + !(mi == b) + !(one == f);

    const auto pr = pgd(m, img, label, spec_of(AttackFamily::kPgd, eps, steps, step, true, 1.0, c));
    const auto mm = mifgsm(m, img, label, spec_of(AttackFamily::kMifgsm, eps, steps, step, false, 1.0));
    // One float ulp at 1.0 of slack for the rounding of origin +- eps.
    const double bound = eps / 255.0 + 0x1p-23;
    for (const ImageTensor* adv : {&b, &f, &pr, &mm}) {
      ball_violations += linf_distance(*adv, img) > bound;
      range_violations += !adv->in_range();
    }
  }
  EXPECT_EQ(lattice_mismatch, 0u);
  EXPECT_EQ(ball_violations, 0u);
  EXPECT_EQ(range_violations, 0u);
}

TEST(AttackTest, PgdRandomStartDependsOnSeedOnly) {
  LinearToyClassifier m(kToyShape, 3, 5);
  std::mt19937_64 rng(5);
  const auto img = random_image(rng);
  const auto s1 = spec_of(AttackFamily::kPgd, 8, 3, 2, true, 1.0, 11);
  auto s2 = s1;
  s2.seed = 12;
  EXPECT_EQ(pgd(m, img, 0, s1), pgd(m, img, 0, s1));
  EXPECT_NE(pgd(m, img, 0, s1), pgd(m, img, 0, s2));
}

TEST(AttackTest, DeriveSeedSeparatesIdsAndBases) {
  EXPECT_EQ(derive_seed(1, "a/b"), derive_seed(1, "a/b"));
  EXPECT_NE(derive_seed(1, "a/b"), derive_seed(1, "a/c"));
  EXPECT_NE(derive_seed(1, "a/b"), derive_seed(2, "a/b"));
}

std::vector<LabeledImage> toy_set(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<LabeledImage> out;
  for (int i = 0; i < n; ++i) {
    auto img = random_image(rng);
    out.push_back({img, i % 3, "toy/" + std::to_string(i)});
  }
  return out;
}

TEST(CraftDatasetTest, ScreensThenAttacksWithManifest) {
  LinearToyClassifier m(kToyShape, 3, 6);
  const auto clean = toy_set(60, 6);
  const auto kept = screen(m, clean);
  ASSERT_FALSE(kept.empty());
  ASSERT_LT(kept.size(), clean.size());

  const auto spec = AttackSpec::defaults(AttackFamily::kPgd, 8.0, 3);
  const auto crafted = craft_dataset(m, clean, spec, 2);
  EXPECT_EQ(crafted.manifest.clean_count, clean.size());
  EXPECT_EQ(crafted.manifest.screened_count, kept.size());
  ASSERT_EQ(crafted.images.size(), kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const auto& e = crafted.manifest.entries[i];
    EXPECT_EQ(e.source_id, kept[i].source_id);
    EXPECT_EQ(crafted.images[i].label, kept[i].label);
    EXPECT_EQ(e.seed, derive_seed(spec.seed, kept[i].source_id));
    EXPECT_LE(e.linf, 8.0 / 255.0 + 1e-6);
    EXPECT_NEAR(e.linf, linf_distance(crafted.images[i].image, kept[i].image), 1e-7);
    EXPECT_EQ(e.fooled, m.predict_label(crafted.images[i].image) != kept[i].label);
  }
  const auto again = craft_dataset(m, clean, spec, 1);
  for (std::size_t i = 0; i < kept.size(); ++i) EXPECT_EQ(again.images[i].image, crafted.images[i].image);
}

TEST(CraftDatasetTest, EmptyAfterScreeningIsAnError) {
  LinearToyClassifier m(kToyShape, 3, 7);
  auto clean = toy_set(10, 7);
  for (auto& s : clean) s.label = (m.predict_label(s.image) + 1) % 3;
  EXPECT_THROW(craft_dataset(m, clean, AttackSpec::defaults(AttackFamily::kFgsm, 2.0)), DatasetError);
  EXPECT_THROW(craft_dataset(m, {}, AttackSpec::defaults(AttackFamily::kFgsm, 2.0)), DatasetError);
}

}  // namespace
}  // namespace faddefend
