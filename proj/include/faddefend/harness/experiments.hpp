#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "faddefend/classifier.hpp"
#include "faddefend/harness/evaluate.hpp"
#include "faddefend/pipeline.hpp"

namespace faddefend {

/// candidates "a:b:step" (inclusive) or "a,b,c".
std::vector<double> parse_threshold_list(const std::string& text);

struct CalibrationRun {
  std::optional<double> threshold;
  CalibrationCurve curve;
  std::size_t examples = 0;
  nlohmann::json document;
};

/// Pool the cells, calibrate, and write calibration.json and
/// calibration_curve.csv under `out`. A curve that never crosses is still
/// written, with a null threshold.
CalibrationRun run_calibration(std::span<const EvalCell> cells, const Classifier& model, const DefenseConfig& cfg,
                               std::span<const double> candidates, double expected_accuracy,
                               const std::filesystem::path& out, int workers = 1);

std::string calibration_curve_csv(const CalibrationCurve& curve);

/// Plot-ready accuracy vs QF table (cell, qf, jpeg+flip, faddefend) from an
/// evaluation run over several quality factors.
std::string qf_sweep_csv(const EvalReport& report);

struct TraceRow {
  int iteration = 0;
  double psnr_to_target = 0.0;
  std::optional<double> psnr_to_clean;
  std::optional<int> predicted;
};

struct DipTrace {
  std::vector<TraceRow> rows;
  std::vector<double> loss_history;
};

/// Run the reconstruction with snapshots every `every` iterations, write
/// snapshot_<iter>.png, trace.csv and loss.csv under `out`.
DipTrace run_dip_trace(const ImageTensor& target, const std::optional<ImageTensor>& clean, const Classifier* model,
                       const GeneratorSpec& gen, DipConfig dip, int every, const std::filesystem::path& out);

}  // namespace faddefend
