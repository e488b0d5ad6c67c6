#include "faddefend/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <optional>

#include "faddefend/parallel.hpp"

namespace faddefend {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename Fn>
auto run_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

using Setter = std::function<void(const nlohmann::json&)>;

void apply_fields(const nlohmann::json& j, const std::string& where, const std::map<std::string, Setter>& fields) {
  if (!j.is_object()) throw std::invalid_argument("config section '" + where + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    const auto it = fields.find(key);
    if (it == fields.end()) throw std::invalid_argument("unknown config key '" + where + "." + key + "'");
    it->second(value);
  }
}

std::string chroma_name(ChromaSubsampling c) { return c == ChromaSubsampling::k420 ? "420" : "444"; }

ChromaSubsampling chroma_from_name(const std::string& s) {
  if (s == "420" || s == "4:2:0") return ChromaSubsampling::k420;
  if (s == "444" || s == "4:4:4") return ChromaSubsampling::k444;
  throw std::invalid_argument("unknown chroma subsampling '" + s + "'");
}

}  // namespace

void DefenseConfig::validate() const {
  if (!(threshold >= 0.0)) throw std::invalid_argument("defense threshold must be >= 0");
  estimator.validate();
  preprocess.validate();
  generator.validate();
  dip.validate();
}

nlohmann::json to_json(const DefenseConfig& cfg) {
  return {
      {"threshold", cfg.threshold},
      {"estimator",
       {{"patch_side", cfg.estimator.patch_side},
        {"stride", cfg.estimator.stride},
        {"confidence", cfg.estimator.confidence},
        {"max_iterations", cfg.estimator.max_iterations},
        {"convergence_tol", cfg.estimator.convergence_tol}}},
      {"preprocess",
       {{"quality_factor", cfg.preprocess.quality_factor},
        {"apply_flip", cfg.preprocess.apply_flip},
        {"chroma", chroma_name(cfg.preprocess.chroma)}}},
      {"generator",
       {{"depth", cfg.generator.depth},
        {"base_channels", cfg.generator.base_channels},
        {"max_channels", cfg.generator.max_channels},
        {"skip_channels", cfg.generator.skip_channels},
        {"leaky_slope", cfg.generator.leaky_slope},
        {"input_channels", cfg.generator.input_channels},
        {"batch_norm", cfg.generator.batch_norm}}},
      {"dip",
       {{"iterations", cfg.dip.iterations},
        {"learning_rate", cfg.dip.learning_rate},
        {"noise_seed", cfg.dip.noise_seed},
        {"input_noise_scale", cfg.dip.input_noise_scale},
        {"trajectory_every", cfg.dip.trajectory_every}}},
  };
}

DefenseConfig defense_config_from_json(const nlohmann::json& j, DefenseConfig cfg) {
  auto& e = cfg.estimator;
  auto& p = cfg.preprocess;
  auto& g = cfg.generator;
  auto& d = cfg.dip;
  apply_fields(j, "defense",
               {
                   {"threshold", [&](const auto& v) { cfg.threshold = v.template get<double>(); }},
                   {"estimator",
                    [&](const auto& v) {
                      apply_fields(v, "estimator",
                                   {{"patch_side", [&](const auto& x) { e.patch_side = x.template get<int>(); }},
                                    {"stride", [&](const auto& x) { e.stride = x.template get<int>(); }},
                                    {"confidence", [&](const auto& x) { e.confidence = x.template get<double>(); }},
                                    {"max_iterations", [&](const auto& x) { e.max_iterations = x.template get<int>(); }},
                                    {"convergence_tol",
                                     [&](const auto& x) { e.convergence_tol = x.template get<double>(); }}});
                    }},
                   {"preprocess",
                    [&](const auto& v) {
                      apply_fields(
                          v, "preprocess",
                          {{"quality_factor", [&](const auto& x) { p.quality_factor = x.template get<int>(); }},
                           {"apply_flip", [&](const auto& x) { p.apply_flip = x.template get<bool>(); }},
                           {"chroma", [&](const auto& x) { p.chroma = chroma_from_name(x.template get<std::string>()); }}});
                    }},
                   {"generator",
                    [&](const auto& v) {
                      apply_fields(v, "generator",
                                   {{"depth", [&](const auto& x) { g.depth = x.template get<int>(); }},
                                    {"base_channels", [&](const auto& x) { g.base_channels = x.template get<int>(); }},
                                    {"max_channels", [&](const auto& x) { g.max_channels = x.template get<int>(); }},
                                    {"skip_channels", [&](const auto& x) { g.skip_channels = x.template get<int>(); }},
                                    {"leaky_slope", [&](const auto& x) { g.leaky_slope = x.template get<float>(); }},
                                    {"input_channels", [&](const auto& x) { g.input_channels = x.template get<int>(); }},
                                    {"batch_norm", [&](const auto& x) { g.batch_norm = x.template get<bool>(); }}});
                    }},
                   {"dip",
                    [&](const auto& v) {
                      apply_fields(
                          v, "dip",
                          {{"iterations", [&](const auto& x) { d.iterations = x.template get<int>(); }},
                           {"learning_rate", [&](const auto& x) { d.learning_rate = x.template get<double>(); }},
                           {"noise_seed", [&](const auto& x) { d.noise_seed = x.template get<std::uint64_t>(); }},
                           {"input_noise_scale", [&](const auto& x) { d.input_noise_scale = x.template get<double>(); }},
                           {"trajectory_every", [&](const auto& x) { d.trajectory_every = x.template get<int>(); }}});
                    }},
               });
  cfg.validate();
  return cfg;
}

Defended defend_with_estimate(const ImageTensor& img, const PerturbationEstimate& estimate,
                              const DefenseConfig& cfg, const std::string& source_id) {
  Defended out;
  out.record.source_id = source_id;
  out.record.sigma = estimate.sigma;
  out.record.route = grade(estimate, cfg.threshold);
  ImageTensor staged;
  if (out.record.route == Grade::kLarge) {
    const auto start = Clock::now();
    staged = run_stage("reconstruct", [&] { return dip_reconstruct(img, cfg.generator, cfg.dip).reconstruction; });
    out.record.seconds.reconstruct = seconds_since(start);
  }
  const auto start = Clock::now();
  out.image = run_stage("preprocess", [&] {
    return small_path_defend(out.record.route == Grade::kLarge ? staged : img, cfg.preprocess);
  });
  out.record.seconds.preprocess = seconds_since(start);
  return out;
}

Defended defend(const ImageTensor& img, const DefenseConfig& cfg, const std::string& source_id) {
  run_stage("config", [&] {
    cfg.validate();
    require_valid_image(img, "defend");
    return 0;
  });
  const auto start = Clock::now();
  const PerturbationEstimate estimate = run_stage("estimate", [&] { return estimate_sigma(img, cfg.estimator); });
  const double estimate_seconds = seconds_since(start);
  Defended out = defend_with_estimate(img, estimate, cfg, source_id);
  out.record.seconds.estimate = estimate_seconds;
  return out;
}

ClassifiedSet defend_and_classify(std::span<const LabeledImage> set, const Classifier& model,
                                  const DefenseConfig& cfg, int workers) {
  if (set.empty()) throw std::invalid_argument("defend_and_classify: empty set");
  ClassifiedSet out;
  out.records.resize(set.size());
  out.predictions.resize(set.size());
  parallel_for(set.size(), workers, [&](std::size_t i) {
    Defended d = defend(set[i].image, cfg, set[i].source_id);
    out.predictions[i] = model.predict_label(d.image);
    out.records[i] = std::move(d.record);
  });
  std::size_t correct = 0;
  for (std::size_t i = 0; i < set.size(); ++i) correct += out.predictions[i] == set[i].label;
  out.accuracy = static_cast<double>(correct) / static_cast<double>(set.size());
  return out;
}

double crossing_threshold(const CalibrationCurve& curve, double expected) {
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const double a = curve[i].accuracy - expected;
    if (a == 0.0) return curve[i].threshold;
    if (i + 1 == curve.size()) break;
    const double b = curve[i + 1].accuracy - expected;
    if ((a < 0.0) != (b < 0.0)) {
      const double t0 = curve[i].threshold, t1 = curve[i + 1].threshold;
      return t0 + (t1 - t0) * (-a) / (b - a);
    }
  }
  throw CalibrationError("accuracy curve never crosses the expected accuracy", curve);
}

CalibrationResult calibrate_threshold(std::span<const double> candidates, std::span<const LabeledImage> calib_set,
                                      const Classifier& model, const DefenseConfig& cfg, double expected_accuracy,
                                      int workers) {
  if (candidates.size() < 2) throw std::invalid_argument("calibration needs at least two candidate thresholds");
  if (!std::is_sorted(candidates.begin(), candidates.end()) ||
      std::adjacent_find(candidates.begin(), candidates.end()) != candidates.end()) {
    throw std::invalid_argument("calibration thresholds must be strictly ascending");
  }
  if (candidates.front() < 0.0) throw std::invalid_argument("calibration thresholds must be >= 0");
  if (calib_set.empty()) throw std::invalid_argument("calibration set is empty");
  if (!(expected_accuracy >= 0.0 && expected_accuracy <= 1.0)) {
    throw std::invalid_argument("expected accuracy must lie in [0, 1]");
  }
  cfg.estimator.validate();
  cfg.preprocess.validate();
  cfg.generator.validate();
  cfg.dip.validate();

  const double lowest = candidates.front();
  const double highest = candidates.back();
  struct Outcome {
    double sigma = 0.0;
    std::optional<bool> small_correct;
    std::optional<bool> large_correct;
  };
  std::vector<Outcome> outcomes(calib_set.size());
  parallel_for(calib_set.size(), workers, [&](std::size_t i) {
    const auto& sample = calib_set[i];
    const PerturbationEstimate est = estimate_sigma(sample.image, cfg.estimator);
    Outcome& o = outcomes[i];
    o.sigma = est.sigma;
    DefenseConfig routed = cfg;
    // Some candidate routes this image SMALL iff sigma < highest; LARGE iff sigma >= lowest.
    if (est.sigma < highest) {
      routed.threshold = highest;
      o.small_correct = model.predict_label(defend_with_estimate(sample.image, est, routed).image) == sample.label;
    }
    if (est.sigma >= lowest) {
      routed.threshold = lowest;
      o.large_correct = model.predict_label(defend_with_estimate(sample.image, est, routed).image) == sample.label;
    }
  });

  CalibrationResult result;
  for (const double t : candidates) {
    CalibrationPoint point{t, 0.0, 0};
    std::size_t correct = 0;
    for (const auto& o : outcomes) {
      const bool small = o.sigma < t;
      point.small_routed += small;
      correct += small ? *o.small_correct : *o.large_correct;
    }
    point.accuracy = static_cast<double>(correct) / static_cast<double>(outcomes.size());
    result.curve.push_back(point);
  }
  result.threshold = crossing_threshold(result.curve, expected_accuracy);
  return result;
}

}  // namespace faddefend
