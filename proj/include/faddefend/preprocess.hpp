#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "faddefend/image.hpp"

namespace faddefend {

class CodecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ChromaSubsampling { k420, k444 };

struct PreprocessConfig {
  int quality_factor = 95;
  bool apply_flip = true;
  ChromaSubsampling chroma = ChromaSubsampling::k420;

  void validate() const;
};

/// Identity of the pinned JPEG codec, e.g. "libjpeg-turbo 2.1.2 (jpeg8)".
std::string jpeg_codec_identity();

/// Baseline JFIF encoding of the byte-scaled image.
std::vector<std::uint8_t> jpeg_encode(const ImageTensor& img, int quality,
                                      ChromaSubsampling chroma = ChromaSubsampling::k420);
ImageTensor jpeg_decode(const std::vector<std::uint8_t>& jfif);

/// Encode then decode; output has the input's shape.
ImageTensor jpeg_roundtrip(const ImageTensor& img, int quality,
                           ChromaSubsampling chroma = ChromaSubsampling::k420);

/// Left-right reflection.
ImageTensor mirror_flip(const ImageTensor& img);

/// JPEG round trip followed by the optional mirror flip.
ImageTensor small_path_defend(const ImageTensor& img, const PreprocessConfig& cfg);

}  // namespace faddefend
