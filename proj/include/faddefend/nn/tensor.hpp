#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "faddefend/image.hpp"

namespace faddefend::nn {

template <typename T>
using MatrixR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense NCHW activation tensor. Fully connected activations use h = w = 1.
template <typename T>
struct Tensor {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, T fill = T(0))
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }

  T* sample(int i) { return data.data() + i * sample_size(); }
  const T* sample(int i) const { return data.data() + i * sample_size(); }

  T& at(int i, int ch, int y, int x) {
    return data[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
  }
  T at(int i, int ch, int y, int x) const {
    return data[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
  }

  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }

  std::string shape_string() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
           std::to_string(w);
  }
};

/// Stack channel-last images into an NCHW batch.
template <typename T>
Tensor<T> to_tensor(std::span<const ImageTensor> images) {
  if (images.empty()) return {};
  const auto& first = images.front();
  Tensor<T> out(static_cast<int>(images.size()), first.channels(), first.height(), first.width());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& img = images[i];
    if (!img.same_shape(first)) {
      throw DimensionError("batch images differ in shape: " + img.shape_string() + " vs " +
                           first.shape_string());
    }
    for (int ch = 0; ch < out.c; ++ch) {
      for (int y = 0; y < out.h; ++y) {
        for (int x = 0; x < out.w; ++x) {
          out.at(static_cast<int>(i), ch, y, x) = static_cast<T>(img.at(y, x, ch));
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> to_tensor(const ImageTensor& img) {
  return to_tensor<T>(std::span<const ImageTensor>(&img, 1));
}

/// Sample `i` of an NCHW tensor as a channel-last image (no clamping).
template <typename T>
ImageTensor to_image(const Tensor<T>& t, int i = 0) {
  ImageTensor out(t.h, t.w, t.c);
  for (int ch = 0; ch < t.c; ++ch) {
    for (int y = 0; y < t.h; ++y) {
      for (int x = 0; x < t.w; ++x) out.at(y, x, ch) = static_cast<float>(t.at(i, ch, y, x));
    }
  }
  return out;
}

}  // namespace faddefend::nn
