#pragma once

#include <filesystem>
#include <stdexcept>

#include "faddefend/image.hpp"

namespace faddefend {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit gray, gray+alpha, RGB or RGBA PNG. Alpha is dropped; palette and
/// 16-bit inputs are converted to 8-bit.
ImageTensor read_png(const std::filesystem::path& path);

/// Lossless 8-bit PNG (gray for 1 channel, RGB for 3).
void write_png(const ImageTensor& img, const std::filesystem::path& path);

}  // namespace faddefend
