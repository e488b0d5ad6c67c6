#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace faddefend {

/// Raised when tensor shapes or sizes do not satisfy an operation's contract.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Height x width x channels image with channel-last float samples in [0, 1].
///
/// The range invariant is checked by `checked()` and restored by `clamp01()`;
/// in-place writes through `values()` are the caller's responsibility.
class ImageTensor {
 public:
  /// Smallest side accepted at pipeline boundaries (patch extraction, JPEG
  /// blocks). Plain construction only requires positive dimensions.
  static constexpr int kMinSide = 8;

  ImageTensor() = default;
  ImageTensor(int height, int width, int channels, float fill = 0.0f);
  ImageTensor(int height, int width, int channels, std::vector<float> values);

  /// Like the vector constructor but rejects samples outside [0, 1] or NaN.
  static ImageTensor checked(int height, int width, int channels, std::vector<float> values);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }
  float at(int y, int x, int c = 0) const { return values_[index(y, x, c)]; }
  float& at(int y, int x, int c = 0) { return values_[index(y, x, c)]; }

  std::span<const float> values() const { return values_; }
  std::span<float> values() { return values_; }

  bool same_shape(const ImageTensor& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  /// True when every sample is finite and inside [0, 1].
  bool in_range() const;

  /// Clamp every sample into [0, 1] in place; NaN becomes 0.
  ImageTensor& clamp01();

  std::string shape_string() const;

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> values_;
};

struct LabeledImage {
  ImageTensor image;
  int label = 0;
  std::string source_id;
};

/// 8-bit image, same channel-last layout as ImageTensor.
struct ByteImage {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> values;

  friend bool operator==(const ByteImage&, const ByteImage&) = default;
};

/// Row-major stack of flattened square patches.
struct PatchMatrix {
  int count = 0;
  int dim = 0;
  std::vector<float> values;

  std::span<const float> row(int i) const {
    return std::span<const float>(values).subspan(static_cast<std::size_t>(i) * dim, dim);
  }
};

/// Throws DimensionError unless channels is 1 or 3 and both sides are at
/// least ImageTensor::kMinSide.
void require_valid_image(const ImageTensor& img, const char* context);

/// round(v * 255) with halves rounded up, clamped to [0, 255].
ByteImage to_bytes_scale(const ImageTensor& img);
ImageTensor from_bytes_scale(const ByteImage& bytes);

/// BT.601 luma; single-channel input is returned unchanged.
ImageTensor luminance(const ImageTensor& img);

/// Sliding-window patches of a single-channel image, row-major over window
/// positions. Count is (floor((H-side)/stride)+1) * (floor((W-side)/stride)+1).
PatchMatrix extract_patches(const ImageTensor& img, int side, int stride);

/// 10*log10(1/MSE) on the [0, 1] scale; +infinity when the images are equal.
double psnr(const ImageTensor& a, const ImageTensor& b);

/// Largest absolute per-sample difference.
double linf_distance(const ImageTensor& a, const ImageTensor& b);

}  // namespace faddefend
