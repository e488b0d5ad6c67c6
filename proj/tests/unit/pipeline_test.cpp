#include <gtest/gtest.h>

#include "faddefend/desk_dataset.hpp"
#include "faddefend/pipeline.hpp"
#include "oracles.hpp"

namespace faddefend {
namespace {

DefenseConfig fast_config(double threshold = 2.13) {
  DefenseConfig cfg;
  cfg.threshold = threshold;
  cfg.generator.depth = 2;
  cfg.generator.base_channels = 4;
  cfg.generator.max_channels = 8;
  cfg.generator.input_channels = 4;
  cfg.dip.iterations = 12;
  return cfg;
}

// 16x16 photos at increasing noise levels; labels from a toy model so some
// defended images keep their label and some do not.
std::vector<LabeledImage> graded_set(const Classifier& model, int n) {
  std::vector<LabeledImage> out;
  for (int i = 0; i < n; ++i) {
    const double sigma = 1.5 * i;
    ImageTensor img = add_gaussian_noise(synthetic_photo(16, 16, 40 + i), sigma, i, true);
    out.push_back({img, (model.predict_label(img) + i % 2) % model.num_classes(), "g/" + std::to_string(i)});
  }
  return out;
}

TEST(DefendTest, RoutesBySigma) {
  const DefenseConfig cfg = fast_config();
  const Defended flat = defend(ImageTensor(16, 16, 3, 0.5f), cfg, "flat");
  EXPECT_EQ(flat.record.route, Grade::kSmall);
  EXPECT_EQ(flat.record.source_id, "flat");
  EXPECT_EQ(flat.record.seconds.reconstruct, 0.0);

  const ImageTensor noisy = add_gaussian_noise(synthetic_photo(64, 64, 1), 10.0, 1, true);
  const Defended d = defend(noisy, cfg);
  EXPECT_EQ(d.record.route, Grade::kLarge);
  EXPECT_EQ(d.record.route, grade(estimate_sigma(noisy, cfg.estimator), cfg.threshold));
  EXPECT_GT(d.record.seconds.reconstruct, 0.0);
  EXPECT_EQ(d.image, large_path_defend(noisy, cfg.generator, cfg.dip, cfg.preprocess));
  EXPECT_EQ(defend(noisy, cfg).image, d.image);
}

TEST(DefendTest, HugeThresholdEqualsSmallPath) {
  const DefenseConfig cfg = fast_config(1e9);
  for (int i = 0; i < 4; ++i) {
    const ImageTensor img = add_gaussian_noise(synthetic_photo(16, 16, i), 20.0, i);
    EXPECT_EQ(defend(img, cfg).image, small_path_defend(img, cfg.preprocess));
  }
}

TEST(DefendTest, ZeroThresholdAlwaysReconstructs) {
  const DefenseConfig cfg = fast_config(0.0);
  const Defended d = defend(ImageTensor(16, 16, 3, 0.5f), cfg);
  EXPECT_EQ(d.record.route, Grade::kLarge);
}

TEST(DefendTest, FailuresCarryTheirStage) {
  try {
    defend(ImageTensor(4, 4, 3), fast_config());
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "config");
  }
  DefenseConfig bad = fast_config(0.0);
  bad.dip.learning_rate = 1e30;
  bad.dip.iterations = 50;
  bad.generator.batch_norm = false;
  try {
    defend(synthetic_photo(16, 16, 2), bad);
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "reconstruct");
  }
  DefenseConfig negative = fast_config(-1.0);
  EXPECT_THROW(defend(synthetic_photo(16, 16, 2), negative), StageError);
}

TEST(CrossingTest, InterpolatesFirstSignChange) {
  const CalibrationCurve falling{{1.0, 0.8, 0}, {2.0, 0.6, 0}, {3.0, 0.4, 0}, {4.0, 0.6, 0}};
  EXPECT_DOUBLE_EQ(crossing_threshold(falling, 0.5), 2.5);
  const CalibrationCurve exact{{1.0, 0.7, 0}, {2.0, 0.5, 0}, {3.0, 0.3, 0}};
  EXPECT_DOUBLE_EQ(crossing_threshold(exact, 0.5), 2.0);
  const CalibrationCurve rising{{0.0, 0.2, 0}, {1.0, 0.6, 0}};
  EXPECT_DOUBLE_EQ(crossing_threshold(rising, 0.5), 0.75);
}

TEST(CrossingTest, NoCrossingKeepsCurve) {
  const CalibrationCurve above{{1.0, 0.9, 0}, {2.0, 0.7, 0}};
  try {
    crossing_threshold(above, 0.5);
    FAIL();
  } catch (const CalibrationError& e) {
    ASSERT_EQ(e.curve().size(), 2u);
    EXPECT_DOUBLE_EQ(e.curve()[1].accuracy, 0.7);
  }
}

TEST(CalibrateTest, CurveMatchesPerThresholdDefend) {
  const testing::LinearToyClassifier model(InputShape{16, 16, 3}, 3, 17);
  const auto set = graded_set(model, 12);
  const DefenseConfig cfg = fast_config();
  const std::vector<double> candidates{0.0, 2.0, 6.0, 12.0, 100.0};
  CalibrationCurve curve;
  try {
    curve = calibrate_threshold(candidates, set, model, cfg, 0.5).curve;
  } catch (const CalibrationError& e) {
    curve = e.curve();
  }
  ASSERT_EQ(curve.size(), candidates.size());
  std::size_t previous_small = 0;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    DefenseConfig at = cfg;
    at.threshold = candidates[k];
    const ClassifiedSet direct = defend_and_classify(set, model, at, 2);
    EXPECT_DOUBLE_EQ(curve[k].threshold, candidates[k]);
    EXPECT_DOUBLE_EQ(curve[k].accuracy, direct.accuracy) << candidates[k];
    std::size_t small = 0;
    for (const auto& r : direct.records) small += r.route == Grade::kSmall;
    EXPECT_EQ(curve[k].small_routed, small);
    EXPECT_GE(curve[k].small_routed, previous_small);
    previous_small = curve[k].small_routed;
  }
  EXPECT_EQ(curve.front().small_routed, 0u);
  EXPECT_EQ(curve.back().small_routed, set.size());
}

TEST(CalibrateTest, RejectsBadCandidates) {
  const testing::LinearToyClassifier model(InputShape{16, 16, 3}, 3, 1);
  const auto set = graded_set(model, 2);
  const DefenseConfig cfg = fast_config();
  EXPECT_THROW(calibrate_threshold(std::vector<double>{1.0}, set, model, cfg), std::invalid_argument);
  EXPECT_THROW(calibrate_threshold(std::vector<double>{2.0, 1.0}, set, model, cfg), std::invalid_argument);
  EXPECT_THROW(calibrate_threshold(std::vector<double>{1.0, 1.0}, set, model, cfg), std::invalid_argument);
  EXPECT_THROW(calibrate_threshold(std::vector<double>{-1.0, 1.0}, set, model, cfg), std::invalid_argument);
  EXPECT_THROW(calibrate_threshold(std::vector<double>{1.0, 2.0}, {}, model, cfg), std::invalid_argument);
  EXPECT_THROW(calibrate_threshold(std::vector<double>{1.0, 2.0}, set, model, cfg, 1.5), std::invalid_argument);
}

TEST(DefendAndClassifyTest, AccuracyAgreesWithPredictions) {
  const testing::LinearToyClassifier model(InputShape{16, 16, 3}, 3, 3);
  const auto set = graded_set(model, 6);
  const ClassifiedSet out = defend_and_classify(set, model, fast_config(1e9));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < set.size(); ++i) correct += out.predictions[i] == set[i].label;
  EXPECT_DOUBLE_EQ(out.accuracy, static_cast<double>(correct) / set.size());
  EXPECT_EQ(out.records[3].source_id, "g/3");
  EXPECT_THROW(defend_and_classify({}, model, fast_config()), std::invalid_argument);
}

TEST(DefenseConfigJsonTest, RoundTripAndStrictKeys) {
  DefenseConfig cfg = fast_config(1.75);
  cfg.preprocess.chroma = ChromaSubsampling::k444;
  cfg.preprocess.apply_flip = false;
  cfg.dip.noise_seed = 99;
  const nlohmann::json j = to_json(cfg);
  EXPECT_EQ(j["preprocess"]["chroma"], "444");
  const DefenseConfig back = defense_config_from_json(j);
  EXPECT_EQ(to_json(back), j);

  const DefenseConfig partial = defense_config_from_json(nlohmann::json{{"threshold", 3.0}});
  EXPECT_DOUBLE_EQ(partial.threshold, 3.0);
  EXPECT_EQ(partial.dip.iterations, DefenseConfig{}.dip.iterations);

  EXPECT_THROW(defense_config_from_json(nlohmann::json{{"treshold", 3.0}}), std::invalid_argument);
  EXPECT_THROW(defense_config_from_json(nlohmann::json{{"dip", {{"iters", 3}}}}), std::invalid_argument);
  EXPECT_THROW(defense_config_from_json(nlohmann::json{{"threshold", -1.0}}), std::invalid_argument);
  EXPECT_THROW(defense_config_from_json(nlohmann::json{{"preprocess", {{"chroma", "422"}}}}), std::invalid_argument);
  EXPECT_THROW(defense_config_from_json(nlohmann::json::array()), std::invalid_argument);
}

}  // namespace
}  // namespace faddefend
