#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "faddefend/classifier.hpp"
#include "faddefend/dip.hpp"
#include "faddefend/image.hpp"
#include "faddefend/noise_estimator.hpp"
#include "faddefend/preprocess.hpp"

namespace faddefend {

struct DefenseConfig {
  /// Routing threshold on the 0-255 sigma scale.
  double threshold = 2.13;
  EstimatorConfig estimator;
  PreprocessConfig preprocess;
  GeneratorSpec generator;
  DipConfig dip;

  void validate() const;
};

nlohmann::json to_json(const DefenseConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
DefenseConfig defense_config_from_json(const nlohmann::json& j, DefenseConfig base = {});

struct StageTimes {
  double estimate = 0.0;
  double reconstruct = 0.0;
  double preprocess = 0.0;
};

struct RoutingRecord {
  std::string source_id;
  double sigma = 0.0;
  Grade route = Grade::kSmall;
  /// Seconds spent per stage.
  StageTimes seconds;
};

/// A module failure inside defend(), tagged with the stage that raised it.
class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct Defended {
  ImageTensor image;
  RoutingRecord record;
};

/// Estimate sigma, then run the small path (sigma < threshold) or the large
/// path. Pure given (img, cfg).
Defended defend(const ImageTensor& img, const DefenseConfig& cfg, const std::string& source_id = {});

/// Same as defend() with the estimate supplied by the caller.
Defended defend_with_estimate(const ImageTensor& img, const PerturbationEstimate& estimate,
                              const DefenseConfig& cfg, const std::string& source_id = {});

struct ClassifiedSet {
  double accuracy = 0.0;
  std::vector<RoutingRecord> records;
  std::vector<int> predictions;
};

/// Defend every image and classify the result. Throws std::invalid_argument on
/// an empty set.
ClassifiedSet defend_and_classify(std::span<const LabeledImage> set, const Classifier& model,
                                  const DefenseConfig& cfg, int workers = 1);

struct CalibrationPoint {
  double threshold = 0.0;
  double accuracy = 0.0;
  std::size_t small_routed = 0;
};

using CalibrationCurve = std::vector<CalibrationPoint>;

class CalibrationError : public std::runtime_error {
 public:
  CalibrationError(const std::string& what, CalibrationCurve curve)
      : std::runtime_error(what), curve_(std::move(curve)) {}
  const CalibrationCurve& curve() const { return curve_; }

 private:
  CalibrationCurve curve_;
};

struct CalibrationResult {
  double threshold = 0.0;
  CalibrationCurve curve;
};

/// Smallest threshold at which the curve reaches `expected`, linearly
/// interpolated between neighbouring points. Throws CalibrationError if the
/// curve never crosses.
double crossing_threshold(const CalibrationCurve& curve, double expected);

/// Accuracy after defend() for each candidate threshold (ascending, at least
/// two), then crossing_threshold(). Sigma and both path outputs are computed
/// once per image; a path is skipped when no candidate selects it.
CalibrationResult calibrate_threshold(std::span<const double> candidates, std::span<const LabeledImage> calib_set,
                                      const Classifier& model, const DefenseConfig& cfg,
                                      double expected_accuracy = 0.5, int workers = 1);

}  // namespace faddefend
