#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "faddefend/image.hpp"
#include "faddefend/preprocess.hpp"

namespace faddefend {

/// Raised when the reconstruction objective stops being finite.
class OptimizationError : public std::runtime_error {
 public:
  OptimizationError(const std::string& what, int iteration)
      : std::runtime_error(what), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

/// Encoder-decoder generator with skip connections.
struct GeneratorSpec {
  /// Number of stride-2 down stages (and matching bilinear up stages).
  int depth = 4;
  /// Channels at the first stage, doubled per stage up to max_channels.
  int base_channels = 8;
  int max_channels = 32;
  /// Channels of each skip branch; 0 disables skips.
  int skip_channels = 0;
  float leaky_slope = 0.2f;
  /// Channels of the fixed noise input z.
  int input_channels = 32;
  bool batch_norm = true;

  void validate() const;
  int channels_at(int level) const;
};

struct DipConfig {
  int iterations = 400;
  double learning_rate = 0.01;
  std::uint64_t noise_seed = 0;
  /// z ~ U[0, 1) * input_noise_scale, drawn once per reconstruction.
  double input_noise_scale = 0.1;
  /// Keep a snapshot every this many updates; 0 disables.
  int trajectory_every = 0;

  void validate() const;
};

struct DipSnapshot {
  int iteration = 0;
  ImageTensor image;
};

struct DipResult {
  ImageTensor reconstruction;
  /// Squared L2 fitting error ||f(z) - x_adv||^2 before each update.
  std::vector<double> loss_history;
  std::vector<DipSnapshot> trajectory;
};

/// Fit a freshly initialized generator to `x_adv` from fixed noise for exactly
/// cfg.iterations Adam steps and return the clamped output. Inputs whose sides
/// are not multiples of 2^depth are reflect-padded and cropped back.
DipResult dip_reconstruct(const ImageTensor& x_adv, const GeneratorSpec& gen, const DipConfig& cfg);

/// dip_reconstruct followed by small_path_defend.
ImageTensor large_path_defend(const ImageTensor& x_adv, const GeneratorSpec& gen,
                              const DipConfig& dip_cfg, const PreprocessConfig& pre_cfg);

/// Trainable parameter count of the generator built for `channels` outputs.
std::size_t generator_parameter_count(const GeneratorSpec& gen, int channels);

}  // namespace faddefend
