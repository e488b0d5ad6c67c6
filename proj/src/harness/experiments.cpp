#include "faddefend/harness/experiments.hpp"

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <map>
#include <sstream>

#include "faddefend/dip.hpp"
#include "faddefend/harness/dataset_io.hpp"
#include "faddefend/harness/png_io.hpp"

namespace faddefend {

namespace fs = std::filesystem;

std::vector<double> parse_threshold_list(const std::string& text) {
  std::vector<double> out;
  const auto to_double = [&](const std::string& s) {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("bad number '" + s + "' in '" + text + "'");
    return v;
  };
  if (text.find(':') != std::string::npos) {
    std::vector<double> parts;
    std::istringstream in(text);
    std::string tok;
    while (std::getline(in, tok, ':')) parts.push_back(to_double(tok));
    if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0]) {
      throw std::invalid_argument("range must be start:stop:step with step > 0, got '" + text + "'");
    }
    const auto count = static_cast<long>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9));
    for (long i = 0; i <= count; ++i) out.push_back(parts[0] + static_cast<double>(i) * parts[2]);
    return out;
  }
  std::istringstream in(text);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    if (!tok.empty()) out.push_back(to_double(tok));
  }
  return out;
}

std::string calibration_curve_csv(const CalibrationCurve& curve) {
  std::ostringstream os;
  os << "threshold,accuracy,small_routed\n" << std::setprecision(10);
  for (const auto& p : curve) os << p.threshold << ',' << p.accuracy << ',' << p.small_routed << '\n';
  return os.str();
}

CalibrationRun run_calibration(std::span<const EvalCell> cells, const Classifier& model, const DefenseConfig& cfg,
                               std::span<const double> candidates, double expected_accuracy, const fs::path& out,
                               int workers) {
  std::vector<LabeledImage> pooled;
  nlohmann::json sources = nlohmann::json::array();
  for (const auto& c : cells) {
    pooled.insert(pooled.end(), c.images.begin(), c.images.end());
    sources.push_back({{"family", c.family}, {"epsilon", c.epsilon}, {"n", c.images.size()},
                       {"manifest_hash", c.manifest_hash}});
  }
  CalibrationRun run;
  run.examples = pooled.size();
  std::string error;
  try {
    CalibrationResult r = calibrate_threshold(candidates, pooled, model, cfg, expected_accuracy, workers);
    run.threshold = r.threshold;
    run.curve = std::move(r.curve);
  } catch (const CalibrationError& e) {
    run.curve = e.curve();
    error = e.what();
  }
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& p : run.curve) {
    curve.push_back({{"threshold", p.threshold}, {"accuracy", p.accuracy}, {"small_routed", p.small_routed}});
  }
  run.document = {{"model", model.identity().to_string()},
                  {"expected_accuracy", expected_accuracy},
                  {"examples", run.examples},
                  {"sources", sources},
                  {"defense_config", to_json(cfg)},
                  {"threshold", run.threshold ? nlohmann::json(*run.threshold) : nlohmann::json(nullptr)},
                  {"error", error.empty() ? nlohmann::json(nullptr) : nlohmann::json(error)},
                  {"curve", curve}};
  fs::create_directories(out);
  write_json_file(run.document, out / "calibration.json");
  write_text_file(calibration_curve_csv(run.curve), out / "calibration_curve.csv");
  return run;
}

std::string qf_sweep_csv(const EvalReport& report) {
  std::map<std::tuple<std::string, double, int>, std::pair<double, double>> table;
  for (const auto& r : report.rows) {
    auto& slot = table[{r.family, r.epsilon, r.quality_factor}];
    if (r.defense == to_string(DefenseVariant::kJpegFlip)) slot.first = r.accuracy;
    if (r.defense == to_string(DefenseVariant::kFadDefend)) slot.second = r.accuracy;
  }
  std::ostringstream os;
  os << "family,epsilon,quality_factor,jpeg+flip,faddefend\n" << std::setprecision(6);
  for (const auto& [key, acc] : table) {
    os << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ',' << acc.first << ','
       << acc.second << '\n';
  }
  return os.str();
}

DipTrace run_dip_trace(const ImageTensor& target, const std::optional<ImageTensor>& clean, const Classifier* model,
                       const GeneratorSpec& gen, DipConfig dip, int every, const fs::path& out) {
  if (every < 1) throw std::invalid_argument("trace period must be >= 1");
  dip.trajectory_every = every;
  const DipResult result = dip_reconstruct(target, gen, dip);
  fs::create_directories(out);
  DipTrace trace;
  trace.loss_history = result.loss_history;
  std::ostringstream csv;
  csv << "iteration,psnr_to_target,psnr_to_clean,predicted\n" << std::setprecision(8);
  for (const auto& snap : result.trajectory) {
    TraceRow row;
    row.iteration = snap.iteration;
    row.psnr_to_target = psnr(snap.image, target);
    if (clean) row.psnr_to_clean = psnr(snap.image, *clean);
    if (model) row.predicted = model->predict_label(snap.image);
    char name[48];
    std::snprintf(name, sizeof name, "snapshot_%05d.png", snap.iteration);
    write_png(snap.image, out / name);
    csv << row.iteration << ',' << row.psnr_to_target << ',';
    if (row.psnr_to_clean) csv << *row.psnr_to_clean;
    csv << ',';
    if (row.predicted) csv << *row.predicted;
    csv << '\n';
    trace.rows.push_back(row);
  }
  write_png(result.reconstruction, out / "reconstruction.png");
  write_text_file(csv.str(), out / "trace.csv");
  std::ostringstream loss;
  loss << "iteration,loss\n" << std::setprecision(10);
  for (std::size_t i = 0; i < result.loss_history.size(); ++i) loss << i << ',' << result.loss_history[i] << '\n';
  write_text_file(loss.str(), out / "loss.csv");
  return trace;
}

}  // namespace faddefend
