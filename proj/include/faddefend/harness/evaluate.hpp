#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "faddefend/classifier.hpp"
#include "faddefend/image.hpp"
#include "faddefend/pipeline.hpp"

namespace faddefend {

enum class DefenseVariant { kNone, kJpeg, kJpegFlip, kDipJpegFlip, kFadDefend };

std::string to_string(DefenseVariant v);
DefenseVariant defense_variant_from_string(const std::string& name);
const std::vector<DefenseVariant>& all_defense_variants();

struct CacheStats {
  std::size_t sigma_hits = 0, sigma_misses = 0;
  std::size_t jpeg_hits = 0, jpeg_misses = 0;
  std::size_t dip_hits = 0, dip_misses = 0;
  std::size_t dip_jpeg_hits = 0, dip_jpeg_misses = 0;

  CacheStats& operator+=(const CacheStats& o);
};

/// Memoized defense stages for one image. Variants that share a stage (JPEG
/// for jpeg-only and jpeg+flip, the reconstruction for the forced and routed
/// DIP paths) compute it once; outputs equal the uncached modules bit-exactly.
class DefendedImageCache {
 public:
  DefendedImageCache(const ImageTensor& img, const DefenseConfig& cfg) : img_(img), cfg_(cfg) {}

  double sigma();
  /// Defended image for `variant` at quality `qf` (routing uses `threshold`).
  ImageTensor apply(DefenseVariant variant, int qf, double threshold);
  /// Route chosen for kFadDefend at `threshold`.
  Grade route(double threshold) { return sigma() < threshold ? Grade::kSmall : Grade::kLarge; }
  const CacheStats& stats() const { return stats_; }

 private:
  const ImageTensor& jpeg(int qf);
  const ImageTensor& reconstruction();
  const ImageTensor& reconstruction_jpeg(int qf);
  PreprocessConfig flipped(int qf) const;

  const ImageTensor& img_;
  const DefenseConfig& cfg_;
  std::optional<double> sigma_;
  std::map<int, ImageTensor> jpeg_;
  std::optional<ImageTensor> reconstruction_;
  std::map<int, ImageTensor> reconstruction_jpeg_;
  CacheStats stats_;
};

/// One labeled evaluation set (clean or adversarial) with provenance.
struct EvalCell {
  std::string family;  // "clean" or an attack family name
  double epsilon = 0.0;
  std::string manifest_hash;
  std::string crafted_on;  // model identity used for crafting, empty for clean
  std::vector<LabeledImage> images;
};

struct EvalRow {
  std::string defense;
  std::string family;
  double epsilon = 0.0;
  int quality_factor = 95;
  double accuracy = 0.0;
  std::size_t n = 0;
  std::size_t correct = 0;
  std::size_t small_routed = 0;
  std::string manifest_hash;
};

struct EvalReport {
  std::string model;
  nlohmann::json defense_config;
  std::vector<EvalRow> rows;
  CacheStats cache;
  std::vector<std::string> gaps;
};

struct EvalOptions {
  std::vector<DefenseVariant> variants = all_defense_variants();
  /// Quality factors evaluated; the report has one row per (variant, cell, qf)
  /// except for kNone, which ignores QF and appears once per cell.
  std::vector<int> quality_factors = {95};
  int workers = 1;
};

/// Run every variant over every cell with `model`. Cells with no images are
/// reported as gaps.
EvalReport evaluate_cells(std::span<const EvalCell> cells, const Classifier& model, const DefenseConfig& cfg,
                          const EvalOptions& options);

std::string eval_report_csv(const EvalReport& report);
nlohmann::json to_json(const EvalReport& report);
/// Human-readable accuracy matrix (defense x cell).
std::string eval_report_table(const EvalReport& report);

/// Lookup helper; throws std::out_of_range if absent.
const EvalRow& find_row(const EvalReport& report, DefenseVariant variant, const std::string& family, double epsilon,
                        int quality_factor = 95);

}  // namespace faddefend
