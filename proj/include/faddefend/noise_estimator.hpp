#pragma once

#include <span>

#include "faddefend/image.hpp"

namespace faddefend {

/// Blind additive-noise estimate. sigma is on the 0-255 intensity scale.
struct PerturbationEstimate {
  double sigma = 0.0;
  int selected_patches = 0;
  int iterations_used = 0;
  bool converged = false;
};

struct EstimatorConfig {
  int patch_side = 7;
  int stride = 3;
  /// Percentile of the noise-only texture-strength distribution used as the
  /// weak-texture cutoff.
  double confidence = 0.99;
  int max_iterations = 10;
  double convergence_tol = 1e-5;

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

enum class Grade { kSmall, kLarge };

const char* to_string(Grade g);

/// Largest eigenvalue of G^T G, where the two columns of G hold the [-1, 1]
/// horizontal and vertical differences over the (side-1)^2 interior grid.
double texture_strength(std::span<const float> patch, int side);

/// `confidence` quantile of texture_strength for i.i.d. unit-variance Gaussian
/// patches. Built once per (side, confidence) from 10^4 seeded samples and
/// cached; safe under concurrent first use.
double unit_noise_strength_quantile(int side, double confidence);

/// Weak-texture patch selection + PCA noise estimate on the luminance of
/// `img`. Throws DimensionError if the image is smaller than the patch.
PerturbationEstimate estimate_sigma(const ImageTensor& img, const EstimatorConfig& cfg = {});

/// kSmall iff estimate.sigma < threshold; ties go to kLarge.
Grade grade(const PerturbationEstimate& estimate, double threshold);

}  // namespace faddefend
