#include "faddefend/harness/bench.hpp"

#include <Eigen/Core>
#include <png.h>

#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include "faddefend/preprocess.hpp"

namespace faddefend {

namespace {

std::string cpu_model() {
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) return line.substr(line.find_first_not_of(' ', colon + 1));
    }
  }
  return "unknown";
}

double status_kb(const std::string& key) {
  std::ifstream in("/proc/self/status");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(key + ":", 0) == 0) {
      std::istringstream fields(line.substr(key.size() + 1));
      double kb = 0.0;
      fields >> kb;
      return kb;
    }
  }
  return 0.0;
}

}  // namespace

nlohmann::json environment_fingerprint() {
  std::ostringstream eigen;
  eigen << EIGEN_WORLD_VERSION << "." << EIGEN_MAJOR_VERSION << "." << EIGEN_MINOR_VERSION;
  return {{"cpu", cpu_model()},
          {"hardware_threads", std::thread::hardware_concurrency()},
          {"compiler", __VERSION__},
          {"jpeg_codec", jpeg_codec_identity()},
          {"png", PNG_LIBPNG_VER_STRING},
          {"eigen", eigen.str()}};
}

double peak_rss_mb() { return status_kb("VmHWM") / 1024.0; }

bool reset_peak_rss() {
  std::ofstream out("/proc/self/clear_refs");
  if (!out) return false;
  out << "5";
  out.flush();
  return static_cast<bool>(out);
}

BenchReport run_bench(std::span<const LabeledImage> set, const DefenseConfig& cfg) {
  if (set.empty()) throw std::invalid_argument("bench set is empty");
  cfg.validate();
  BenchReport report;
  bool resettable = true;
  DefenseConfig forced = cfg;
  forced.threshold = 0.0;  // sigma >= 0 always routes LARGE
  const std::pair<const char*, const DefenseConfig*> variants[] = {{"faddefend", &cfg}, {"forced-dip", &forced}};
  for (const auto& [name, variant_cfg] : variants) {
    resettable = reset_peak_rss() && resettable;
    BenchRow row;
    row.defense = name;
    row.images = set.size();
    const auto start = std::chrono::steady_clock::now();
    for (const auto& s : set) row.small_routed += defend(s.image, *variant_cfg, s.source_id).record.route == Grade::kSmall;
    row.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    row.mean_seconds = row.total_seconds / static_cast<double>(set.size());
    row.peak_rss_mb = peak_rss_mb();
    report.rows.push_back(row);
  }
  report.time_ratio = report.rows[0].total_seconds / report.rows[1].total_seconds;
  report.memory_method = resettable ? "VmHWM from /proc/self/status, reset via /proc/self/clear_refs before each variant"
                                    : "VmHWM from /proc/self/status since process start (reset unsupported)";
  report.environment = environment_fingerprint();
  return report;
}

nlohmann::json to_json(const BenchReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"defense", r.defense},
                    {"images", r.images},
                    {"small_routed", r.small_routed},
                    {"total_seconds", r.total_seconds},
                    {"mean_seconds", r.mean_seconds},
                    {"peak_rss_mb", r.peak_rss_mb}});
  }
  return {{"rows", rows},
          {"time_ratio", report.time_ratio},
          {"memory_method", report.memory_method},
          {"environment", report.environment}};
}

std::string bench_report_csv(const BenchReport& report) {
  std::ostringstream os;
  os << "defense,images,small_routed,total_seconds,mean_seconds,peak_rss_mb\n";
  for (const auto& r : report.rows) {
    os << r.defense << ',' << r.images << ',' << r.small_routed << ',' << r.total_seconds << ',' << r.mean_seconds
       << ',' << r.peak_rss_mb << '\n';
  }
  return os.str();
}

}  // namespace faddefend
