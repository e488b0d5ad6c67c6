#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "faddefend/pipeline.hpp"

namespace faddefend {

struct BenchRow {
  std::string defense;
  std::size_t images = 0;
  std::size_t small_routed = 0;
  double total_seconds = 0.0;
  double mean_seconds = 0.0;
  double peak_rss_mb = 0.0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  /// faddefend total time / forced-DIP total time.
  double time_ratio = 0.0;
  std::string memory_method;
  nlohmann::json environment;
};

/// CPU model, core count, compiler, codec identity and library versions.
nlohmann::json environment_fingerprint();

/// Peak resident set size in MB since the last reset_peak_rss() (or process
/// start when resetting is unsupported).
double peak_rss_mb();
/// Returns false when the kernel does not allow resetting the high-water mark.
bool reset_peak_rss();

/// Time the routed defense and forced-DIP-on-everything over the same images,
/// single-threaded.
BenchReport run_bench(std::span<const LabeledImage> set, const DefenseConfig& cfg);

nlohmann::json to_json(const BenchReport& report);
std::string bench_report_csv(const BenchReport& report);

}  // namespace faddefend
