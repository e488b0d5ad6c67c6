#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "faddefend/image.hpp"

namespace faddefend {

/// Procedural stand-in for a small natural-image benchmark: ten classes of
/// shaded shapes on smooth textured backgrounds, 8-bit quantized.
struct DeskDatasetOptions {
  int per_class = 100;
  int size = 32;
  std::uint64_t seed = 1;
  /// Prefix for source ids ("<prefix>/<class>/<index>").
  std::string split = "train";
};

constexpr int kDeskClasses = 10;

const std::vector<std::string>& desk_class_names();

/// Deterministic given the options; images are interleaved by class.
std::vector<LabeledImage> generate_desk_dataset(const DeskDatasetOptions& options);

/// Smooth, noise-free 3-channel test photo of arbitrary size (gradients,
/// soft shapes and shading) for estimator and codec checks.
ImageTensor synthetic_photo(int height, int width, std::uint64_t seed);

/// Add Gaussian noise with standard deviation sigma (0-255 scale), clamped to
/// [0, 1]. Independent per channel, or one draw per pixel shared by all
/// channels when `shared_across_channels` (luminance then sees the full sigma).
ImageTensor add_gaussian_noise(const ImageTensor& img, double sigma255, std::uint64_t seed,
                               bool shared_across_channels = false);

}  // namespace faddefend
