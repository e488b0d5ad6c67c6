#include "faddefend/image.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace faddefend {

namespace {

void require_positive_shape(int height, int width, int channels) {
  if (height <= 0 || width <= 0 || channels <= 0) {
    throw DimensionError("image dimensions must be positive, got " + std::to_string(height) + "x" +
                         std::to_string(width) + "x" + std::to_string(channels));
  }
}

}  // namespace

ImageTensor::ImageTensor(int height, int width, int channels, float fill)
    : height_(height), width_(width), channels_(channels) {
  require_positive_shape(height, width, channels);
  values_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

ImageTensor::ImageTensor(int height, int width, int channels, std::vector<float> values)
    : height_(height), width_(width), channels_(channels), values_(std::move(values)) {
  require_positive_shape(height, width, channels);
  if (values_.size() != static_cast<std::size_t>(height) * width * channels) {
    throw DimensionError("image buffer has " + std::to_string(values_.size()) +
                         " samples, expected " + shape_string());
  }
}

ImageTensor ImageTensor::checked(int height, int width, int channels, std::vector<float> values) {
  ImageTensor img(height, width, channels, std::move(values));
  if (!img.in_range()) {
    throw std::domain_error("image samples must be finite and inside [0, 1]");
  }
  return img;
}

bool ImageTensor::in_range() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](float v) { return v >= 0.0f && v <= 1.0f; });
}

ImageTensor& ImageTensor::clamp01() {
  for (float& v : values_) {
    v = std::isnan(v) ? 0.0f : std::clamp(v, 0.0f, 1.0f);
  }
  return *this;
}

std::string ImageTensor::shape_string() const {
  std::ostringstream os;
  os << height_ << "x" << width_ << "x" << channels_;
  return os.str();
}

void require_valid_image(const ImageTensor& img, const char* context) {
  if (img.channels() != 1 && img.channels() != 3) {
    throw DimensionError(std::string(context) + ": channels must be 1 or 3, got " +
                         std::to_string(img.channels()));
  }
  if (img.height() < ImageTensor::kMinSide || img.width() < ImageTensor::kMinSide) {
    throw DimensionError(std::string(context) + ": image " + img.shape_string() +
                         " is smaller than the 8x8 minimum");
  }
}

ByteImage to_bytes_scale(const ImageTensor& img) {
  ByteImage out{img.height(), img.width(), img.channels(), {}};
  out.values.resize(img.size());
  auto src = img.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const float scaled = std::floor(src[i] * 255.0f + 0.5f);
    out.values[i] = static_cast<std::uint8_t>(std::clamp(scaled, 0.0f, 255.0f));
  }
  return out;
}

ImageTensor from_bytes_scale(const ByteImage& bytes) {
  std::vector<float> values(bytes.values.size());
  std::transform(bytes.values.begin(), bytes.values.end(), values.begin(),
                 [](std::uint8_t b) { return static_cast<float>(b) / 255.0f; });
  return ImageTensor(bytes.height, bytes.width, bytes.channels, std::move(values));
}

ImageTensor luminance(const ImageTensor& img) {
  if (img.channels() == 1) return img;
  if (img.channels() != 3) {
    throw DimensionError("luminance: expected 1 or 3 channels, got " +
                         std::to_string(img.channels()));
  }
  ImageTensor out(img.height(), img.width(), 1);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const float v = 0.299f * img.at(y, x, 0) + 0.587f * img.at(y, x, 1) + 0.114f * img.at(y, x, 2);
      out.at(y, x) = std::clamp(v, 0.0f, 1.0f);
    }
  }
  return out;
}

PatchMatrix extract_patches(const ImageTensor& img, int side, int stride) {
  if (img.channels() != 1) {
    throw DimensionError("extract_patches: expected a single-channel image, got " +
                         img.shape_string());
  }
  if (side < 1 || stride < 1) {
    throw DimensionError("extract_patches: side and stride must be positive");
  }
  if (side > img.height() || side > img.width()) {
    throw DimensionError("extract_patches: patch side " + std::to_string(side) +
                         " exceeds image " + img.shape_string());
  }
  const int rows = (img.height() - side) / stride + 1;
  const int cols = (img.width() - side) / stride + 1;
  PatchMatrix out;
  out.count = rows * cols;
  out.dim = side * side;
  out.values.reserve(static_cast<std::size_t>(out.count) * out.dim);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      for (int dy = 0; dy < side; ++dy) {
        for (int dx = 0; dx < side; ++dx) {
          out.values.push_back(img.at(r * stride + dy, c * stride + dx));
        }
      }
    }
  }
  return out;
}

double psnr(const ImageTensor& a, const ImageTensor& b) {
  if (!a.same_shape(b)) {
    throw DimensionError("psnr: shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
  auto av = a.values();
  auto bv = b.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
    sum += d * d;
  }
  if (sum == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = sum / static_cast<double>(av.size());
  return 10.0 * std::log10(1.0 / mse);
}

double linf_distance(const ImageTensor& a, const ImageTensor& b) {
  if (!a.same_shape(b)) {
    throw DimensionError("linf_distance: shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
  }
  auto av = a.values();
  auto bv = b.values();
  double m = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(av[i]) - static_cast<double>(bv[i])));
  }
  return m;
}

}  // namespace faddefend
