#include "faddefend/preprocess.hpp"

#include <csetjmp>
#include <cstdio>
#include <cstdlib>

#include <jpeglib.h>

namespace faddefend {

namespace {

// libjpeg reports fatal errors through error_exit; jump back out instead of
// letting it call exit().
struct ErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void on_error_exit(j_common_ptr info) {
  auto* mgr = reinterpret_cast<ErrorManager*>(info->err);
  (*info->err->format_message)(info, mgr->message);
  std::longjmp(mgr->jump, 1);
}

void on_output_message(j_common_ptr) {}

// The setjmp frames below hold only trivially destructible locals so the
// longjmp cannot skip a destructor.
bool encode_raw(const ByteImage& bytes, int quality, ChromaSubsampling chroma,
                unsigned char** buffer, unsigned long* size, char* message) {
  jpeg_compress_struct cinfo;
  ErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = on_error_exit;
  err.base.output_message = on_output_message;
  if (setjmp(err.jump)) {
    std::snprintf(message, JMSG_LENGTH_MAX, "%s", err.message);
    jpeg_destroy_compress(&cinfo);
    return false;
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, buffer, size);
  cinfo.image_width = static_cast<JDIMENSION>(bytes.width);
  cinfo.image_height = static_cast<JDIMENSION>(bytes.height);
  cinfo.input_components = bytes.channels;
  cinfo.in_color_space = bytes.channels == 3 ? JCS_RGB : JCS_GRAYSCALE;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  cinfo.dct_method = JDCT_ISLOW;
  if (bytes.channels == 3) {
    const int h = chroma == ChromaSubsampling::k420 ? 2 : 1;
    cinfo.comp_info[0].h_samp_factor = h;
    cinfo.comp_info[0].v_samp_factor = h;
    for (int c = 1; c < 3; ++c) {
      cinfo.comp_info[c].h_samp_factor = 1;
      cinfo.comp_info[c].v_samp_factor = 1;
    }
  }
  jpeg_start_compress(&cinfo, TRUE);
  const auto stride = static_cast<std::size_t>(bytes.width) * bytes.channels;
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = const_cast<JSAMPROW>(bytes.values.data() + cinfo.next_scanline * stride);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  return true;
}

bool decode_raw(const unsigned char* data, unsigned long size, ByteImage* out, char* message) {
  jpeg_decompress_struct dinfo;
  ErrorManager err;
  dinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = on_error_exit;
  err.base.output_message = on_output_message;
  if (setjmp(err.jump)) {
    std::snprintf(message, JMSG_LENGTH_MAX, "%s", err.message);
    jpeg_destroy_decompress(&dinfo);
    return false;
  }
  jpeg_create_decompress(&dinfo);
  jpeg_mem_src(&dinfo, data, size);
  jpeg_read_header(&dinfo, TRUE);
  dinfo.dct_method = JDCT_ISLOW;
  dinfo.out_color_space = dinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&dinfo);
  out->height = static_cast<int>(dinfo.output_height);
  out->width = static_cast<int>(dinfo.output_width);
  out->channels = dinfo.output_components;
  const auto stride = static_cast<std::size_t>(out->width) * out->channels;
  out->values.resize(stride * out->height);
  while (dinfo.output_scanline < dinfo.output_height) {
    JSAMPROW row = out->values.data() + dinfo.output_scanline * stride;
    jpeg_read_scanlines(&dinfo, &row, 1);
  }
  jpeg_finish_decompress(&dinfo);
  jpeg_destroy_decompress(&dinfo);
  return true;
}

}  // namespace

void PreprocessConfig::validate() const {
  if (quality_factor < 1 || quality_factor > 100) {
    throw std::invalid_argument("quality factor must lie in [1, 100], got " +
                                std::to_string(quality_factor));
  }
}

std::string jpeg_codec_identity() {
  std::string id;
#ifdef LIBJPEG_TURBO_VERSION
#define FADDEFEND_STR2(x) #x
#define FADDEFEND_STR(x) FADDEFEND_STR2(x)
  id = "libjpeg-turbo " FADDEFEND_STR(LIBJPEG_TURBO_VERSION);
#undef FADDEFEND_STR
#undef FADDEFEND_STR2
#else
  id = "libjpeg";
#endif
  return id + " (jpeg" + std::to_string(JPEG_LIB_VERSION / 10) + ", islow dct)";
}

std::vector<std::uint8_t> jpeg_encode(const ImageTensor& img, int quality, ChromaSubsampling chroma) {
  if (img.channels() != 1 && img.channels() != 3) {
    throw DimensionError("jpeg_encode: channels must be 1 or 3, got " + img.shape_string());
  }
  if (quality < 1 || quality > 100) throw std::invalid_argument("jpeg_encode: quality out of range");
  const ByteImage bytes = to_bytes_scale(img);
  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  char message[JMSG_LENGTH_MAX] = {};
  const bool ok = encode_raw(bytes, quality, chroma, &buffer, &size, message);
  std::vector<std::uint8_t> out;
  if (ok) out.assign(buffer, buffer + size);
  std::free(buffer);
  if (!ok) throw CodecError(std::string("JPEG encode failed: ") + message);
  return out;
}

ImageTensor jpeg_decode(const std::vector<std::uint8_t>& jfif) {
  ByteImage bytes;
  char message[JMSG_LENGTH_MAX] = {};
  if (jfif.empty() || !decode_raw(jfif.data(), static_cast<unsigned long>(jfif.size()), &bytes, message)) {
    throw CodecError(std::string("JPEG decode failed: ") + (jfif.empty() ? "empty stream" : message));
  }
  return from_bytes_scale(bytes);
}

ImageTensor jpeg_roundtrip(const ImageTensor& img, int quality, ChromaSubsampling chroma) {
  ImageTensor out = jpeg_decode(jpeg_encode(img, quality, chroma));
  if (!out.same_shape(img)) {
    throw CodecError("JPEG round trip changed shape " + img.shape_string() + " -> " +
                     out.shape_string());
  }
  return out;
}

ImageTensor mirror_flip(const ImageTensor& img) {
  ImageTensor out(img.height(), img.width(), img.channels());
  const int w = img.width();
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < img.channels(); ++c) out.at(y, w - 1 - x, c) = img.at(y, x, c);
    }
  }
  return out;
}

ImageTensor small_path_defend(const ImageTensor& img, const PreprocessConfig& cfg) {
  cfg.validate();
  ImageTensor out = jpeg_roundtrip(img, cfg.quality_factor, cfg.chroma);
  if (cfg.apply_flip) out = mirror_flip(out);
  return out;
}

}  // namespace faddefend
