#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "faddefend/nn/tensor.hpp"

namespace faddefend::nn {

/// Stateless-at-inference layer. forward() never mutates the layer, so a
/// trained network can serve concurrent readers. backward() receives the
/// forward input and output and writes parameter gradients into
/// `param_grads` (same order as parameters()); an empty span skips them.
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& in) const = 0;
  virtual Tensor<T> backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& grad_out,
                             std::span<std::vector<T>> param_grads) const = 0;
  virtual std::vector<std::vector<T>*> parameters() { return {}; }
  virtual std::string describe() const = 0;
};

namespace detail {

template <typename T>
void im2col(const T* in, int channels, int height, int width, int k, int stride, int pad,
            int out_h, int out_w, T* cols) {
  const int plane = out_h * out_w;
  for (int ch = 0; ch < channels; ++ch) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + static_cast<std::size_t>((ch * k + ky) * k + kx) * plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          T* dst = row + oy * out_w;
          if (iy < 0 || iy >= height) {
            std::fill(dst, dst + out_w, T(0));
            continue;
          }
          const T* src = in + (static_cast<std::size_t>(ch) * height + iy) * width;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < width) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, int channels, int height, int width, int k, int stride, int pad,
            int out_h, int out_w, T* in) {
  const int plane = out_h * out_w;
  for (int ch = 0; ch < channels; ++ch) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + static_cast<std::size_t>((ch * k + ky) * k + kx) * plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= height) continue;
          T* dst = in + (static_cast<std::size_t>(ch) * height + iy) * width;
          const T* src = row + oy * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// 2-D convolution with zero padding, weights laid out [out][in][ky][kx].
template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int pad)
      : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride), pad_(pad),
        weight_(static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel),
        bias_(out_channels, T(0)) {}

  int out_size(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

  Tensor<T> forward(const Tensor<T>& in) const override {
    check_input(in);
    const int oh = out_size(in.h), ow = out_size(in.w);
    Tensor<T> out(in.n, out_, oh, ow);
    const int kdim = in_ * k_ * k_;
    const int plane = oh * ow;
    std::vector<T> cols(static_cast<std::size_t>(kdim) * plane);
    Eigen::Map<const MatrixR<T>> w(weight_.data(), out_, kdim);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias_.data(), out_);
    for (int i = 0; i < in.n; ++i) {
      detail::im2col(in.sample(i), in_, in.h, in.w, k_, stride_, pad_, oh, ow, cols.data());
      Eigen::Map<const MatrixR<T>> c(cols.data(), kdim, plane);
      Eigen::Map<MatrixR<T>> y(out.sample(i), out_, plane);
      y.noalias() = w * c;
      y.colwise() += b;
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& grad_out,
                     std::span<std::vector<T>> param_grads) const override {
    const int oh = out.h, ow = out.w;
    const int kdim = in_ * k_ * k_;
    const int plane = oh * ow;
    Tensor<T> grad_in(in.n, in.c, in.h, in.w);
    std::vector<T> cols(static_cast<std::size_t>(kdim) * plane);
    Eigen::Map<const MatrixR<T>> w(weight_.data(), out_, kdim);
    const bool want_params = !param_grads.empty();
    for (int i = 0; i < in.n; ++i) {
      Eigen::Map<const MatrixR<T>> gy(grad_out.sample(i), out_, plane);
      if (want_params) {
        detail::im2col(in.sample(i), in_, in.h, in.w, k_, stride_, pad_, oh, ow, cols.data());
        Eigen::Map<const MatrixR<T>> c(cols.data(), kdim, plane);
        Eigen::Map<MatrixR<T>> gw(param_grads[0].data(), out_, kdim);
        gw.noalias() += gy * c.transpose();
        // Plain loops: Eigen's vectorized sums peel by address alignment,
        // which would make results depend on where buffers land.
        for (int o = 0; o < out_; ++o) {
          const T* row = grad_out.sample(i) + static_cast<std::size_t>(o) * plane;
          T s = T(0);
          for (int p = 0; p < plane; ++p) s += row[p];
          param_grads[1][o] += s;
        }
      }
      Eigen::Map<MatrixR<T>> gc(cols.data(), kdim, plane);
      gc.noalias() = w.transpose() * gy;
      detail::col2im(cols.data(), in_, in.h, in.w, k_, stride_, pad_, oh, ow, grad_in.sample(i));
    }
    return grad_in;
  }

  std::vector<std::vector<T>*> parameters() override { return {&weight_, &bias_}; }

  std::string describe() const override {
    return "conv" + std::to_string(k_) + "x" + std::to_string(k_) + "(" + std::to_string(in_) +
           "->" + std::to_string(out_) + ",s" + std::to_string(stride_) + ")";
  }

  /// He-normal weights, zero bias.
  void initialize(std::mt19937_64& rng, double gain = std::sqrt(2.0)) {
    std::normal_distribution<double> normal(0.0, gain / std::sqrt(static_cast<double>(in_ * k_ * k_)));
    for (auto& v : weight_) v = static_cast<T>(normal(rng));
    std::fill(bias_.begin(), bias_.end(), T(0));
  }

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

 private:
  void check_input(const Tensor<T>& in) const {
    if (in.c != in_) {
      throw DimensionError("conv input has " + std::to_string(in.c) + " channels, expected " +
                           std::to_string(in_));
    }
  }

  int in_, out_, k_, stride_, pad_;
  std::vector<T> weight_;
  std::vector<T> bias_;
};

/// Fully connected layer over the flattened sample; output is n x out x 1 x 1.
template <typename T>
class Linear final : public Layer<T> {
 public:
  Linear(int in_features, int out_features)
      : in_(in_features), out_(out_features),
        weight_(static_cast<std::size_t>(out_features) * in_features), bias_(out_features, T(0)) {}

  Tensor<T> forward(const Tensor<T>& in) const override {
    if (static_cast<int>(in.sample_size()) != in_) {
      throw DimensionError("linear input has " + std::to_string(in.sample_size()) +
                           " features, expected " + std::to_string(in_));
    }
    Tensor<T> out(in.n, out_, 1, 1);
    Eigen::Map<const MatrixR<T>> x(in.data.data(), in.n, in_);
    Eigen::Map<const MatrixR<T>> w(weight_.data(), out_, in_);
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias_.data(), out_);
    Eigen::Map<MatrixR<T>> y(out.data.data(), in.n, out_);
    y.noalias() = x * w.transpose();
    y.rowwise() += b;
    return out;
  }

  Tensor<T> backward(const Tensor<T>& in, const Tensor<T>&, const Tensor<T>& grad_out,
                     std::span<std::vector<T>> param_grads) const override {
    Tensor<T> grad_in(in.n, in.c, in.h, in.w);
    Eigen::Map<const MatrixR<T>> gy(grad_out.data.data(), in.n, out_);
    Eigen::Map<const MatrixR<T>> w(weight_.data(), out_, in_);
    Eigen::Map<MatrixR<T>> gx(grad_in.data.data(), in.n, in_);
    gx.noalias() = gy * w;
    if (!param_grads.empty()) {
      Eigen::Map<const MatrixR<T>> x(in.data.data(), in.n, in_);
      Eigen::Map<MatrixR<T>> gw(param_grads[0].data(), out_, in_);
      gw.noalias() += gy.transpose() * x;
      for (int i = 0; i < in.n; ++i) {
        for (int o = 0; o < out_; ++o) param_grads[1][o] += gy(i, o);
      }
    }
    return grad_in;
  }

  std::vector<std::vector<T>*> parameters() override { return {&weight_, &bias_}; }

  std::string describe() const override {
    return "linear(" + std::to_string(in_) + "->" + std::to_string(out_) + ")";
  }

  void initialize(std::mt19937_64& rng, double gain = std::sqrt(2.0)) {
    std::normal_distribution<double> normal(0.0, gain / std::sqrt(static_cast<double>(in_)));
    for (auto& v : weight_) v = static_cast<T>(normal(rng));
    std::fill(bias_.begin(), bias_.end(), T(0));
  }

 private:
  int in_, out_;
  std::vector<T> weight_;
  std::vector<T> bias_;
};

/// max(x, slope * x); slope 0 gives ReLU.
template <typename T>
class LeakyRelu final : public Layer<T> {
 public:
  explicit LeakyRelu(T slope = T(0)) : slope_(slope) {}

  Tensor<T> forward(const Tensor<T>& in) const override {
    Tensor<T> out = in;
    for (auto& v : out.data) v = v > T(0) ? v : slope_ * v;
    return out;
  }

  Tensor<T> backward(const Tensor<T>& in, const Tensor<T>&, const Tensor<T>& grad_out,
                     std::span<std::vector<T>>) const override {
    Tensor<T> grad_in = grad_out;
    for (std::size_t i = 0; i < in.data.size(); ++i) {
      if (!(in.data[i] > T(0))) grad_in.data[i] *= slope_;
    }
    return grad_in;
  }

  std::string describe() const override {
    return slope_ == T(0) ? "relu" : "leaky_relu(" + std::to_string(static_cast<double>(slope_)) + ")";
  }

 private:
  T slope_;
};

template <typename T>
class Sigmoid final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& in) const override {
    Tensor<T> out = in;
    for (auto& v : out.data) v = T(1) / (T(1) + std::exp(-v));
    return out;
  }

  Tensor<T> backward(const Tensor<T>&, const Tensor<T>& out, const Tensor<T>& grad_out,
                     std::span<std::vector<T>>) const override {
    Tensor<T> grad_in = grad_out;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      grad_in.data[i] *= out.data[i] * (T(1) - out.data[i]);
    }
    return grad_in;
  }

  std::string describe() const override { return "sigmoid"; }
};

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
template <typename T>
class MaxPool2 final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& in) const override {
    Tensor<T> out(in.n, in.c, in.h / 2, in.w / 2);
    for (int i = 0; i < in.n; ++i) {
      for (int ch = 0; ch < in.c; ++ch) {
        for (int y = 0; y < out.h; ++y) {
          for (int x = 0; x < out.w; ++x) {
            T m = in.at(i, ch, 2 * y, 2 * x);
            m = std::max(m, in.at(i, ch, 2 * y, 2 * x + 1));
            m = std::max(m, in.at(i, ch, 2 * y + 1, 2 * x));
            m = std::max(m, in.at(i, ch, 2 * y + 1, 2 * x + 1));
            out.at(i, ch, y, x) = m;
          }
        }
      }
    }
    return out;
  }

  // Gradient goes to the first maximal element in scan order.
  Tensor<T> backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& grad_out,
                     std::span<std::vector<T>>) const override {
    Tensor<T> grad_in(in.n, in.c, in.h, in.w);
    for (int i = 0; i < in.n; ++i) {
      for (int ch = 0; ch < in.c; ++ch) {
        for (int y = 0; y < out.h; ++y) {
          for (int x = 0; x < out.w; ++x) {
            const T m = out.at(i, ch, y, x);
            const T g = grad_out.at(i, ch, y, x);
            bool done = false;
            for (int dy = 0; dy < 2 && !done; ++dy) {
              for (int dx = 0; dx < 2 && !done; ++dx) {
                if (in.at(i, ch, 2 * y + dy, 2 * x + dx) == m) {
                  grad_in.at(i, ch, 2 * y + dy, 2 * x + dx) += g;
                  done = true;
                }
              }
            }
          }
        }
      }
    }
    return grad_in;
  }

  std::string describe() const override { return "maxpool2"; }
};

/// Per-channel normalization with statistics of the current batch (no
/// running averages); used only by single-image generators.
template <typename T>
class BatchNorm final : public Layer<T> {
 public:
  explicit BatchNorm(int channels, T eps = T(1e-5))
      : channels_(channels), eps_(eps), gamma_(channels, T(1)), beta_(channels, T(0)) {}

  Tensor<T> forward(const Tensor<T>& in) const override {
    Tensor<T> out(in.n, in.c, in.h, in.w);
    for (int ch = 0; ch < in.c; ++ch) {
      const auto [mean, inv_std] = stats(in, ch);
      for (int i = 0; i < in.n; ++i) {
        const T* src = in.sample(i) + ch * in.plane();
        T* dst = out.sample(i) + ch * in.plane();
        for (std::size_t p = 0; p < in.plane(); ++p) {
          dst[p] = gamma_[ch] * (src[p] - mean) * inv_std + beta_[ch];
        }
      }
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& in, const Tensor<T>&, const Tensor<T>& grad_out,
                     std::span<std::vector<T>> param_grads) const override {
    Tensor<T> grad_in(in.n, in.c, in.h, in.w);
    const T count = static_cast<T>(in.n * in.plane());
    for (int ch = 0; ch < in.c; ++ch) {
      const auto [mean, inv_std] = stats(in, ch);
      T sum_g = 0, sum_gx = 0;
      for (int i = 0; i < in.n; ++i) {
        const T* src = in.sample(i) + ch * in.plane();
        const T* g = grad_out.sample(i) + ch * in.plane();
        for (std::size_t p = 0; p < in.plane(); ++p) {
          sum_g += g[p];
          sum_gx += g[p] * (src[p] - mean) * inv_std;
        }
      }
      if (!param_grads.empty()) {
        param_grads[0][ch] += sum_gx;
        param_grads[1][ch] += sum_g;
      }
      const T scale = gamma_[ch] * inv_std / count;
      for (int i = 0; i < in.n; ++i) {
        const T* src = in.sample(i) + ch * in.plane();
        const T* g = grad_out.sample(i) + ch * in.plane();
        T* dst = grad_in.sample(i) + ch * in.plane();
        for (std::size_t p = 0; p < in.plane(); ++p) {
          const T xhat = (src[p] - mean) * inv_std;
          dst[p] = scale * (count * g[p] - sum_g - xhat * sum_gx);
        }
      }
    }
    return grad_in;
  }

  std::vector<std::vector<T>*> parameters() override { return {&gamma_, &beta_}; }
  std::string describe() const override { return "batchnorm(" + std::to_string(channels_) + ")"; }

 private:
  std::pair<T, T> stats(const Tensor<T>& in, int ch) const {
    T sum = 0;
    for (int i = 0; i < in.n; ++i) {
      const T* src = in.sample(i) + ch * in.plane();
      for (std::size_t p = 0; p < in.plane(); ++p) sum += src[p];
    }
    const T count = static_cast<T>(in.n * in.plane());
    const T mean = sum / count;
    T var = 0;
    for (int i = 0; i < in.n; ++i) {
      const T* src = in.sample(i) + ch * in.plane();
      for (std::size_t p = 0; p < in.plane(); ++p) var += (src[p] - mean) * (src[p] - mean);
    }
    var /= count;
    return {mean, T(1) / std::sqrt(var + eps_)};
  }

  int channels_;
  T eps_;
  std::vector<T> gamma_;
  std::vector<T> beta_;
};

/// x2 bilinear upsampling with half-pixel centers (edge samples clamped).
template <typename T>
class BilinearUp2 final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& in) const override {
    Tensor<T> out(in.n, in.c, in.h * 2, in.w * 2);
    const auto ys = taps(in.h), xs = taps(in.w);
    for (int i = 0; i < in.n; ++i) {
      for (int ch = 0; ch < in.c; ++ch) {
        for (int y = 0; y < out.h; ++y) {
          const Tap& ty = ys[y];
          for (int x = 0; x < out.w; ++x) {
            const Tap& tx = xs[x];
            out.at(i, ch, y, x) = (T(1) - ty.frac) * ((T(1) - tx.frac) * in.at(i, ch, ty.lo, tx.lo) +
                                                      tx.frac * in.at(i, ch, ty.lo, tx.hi)) +
                                  ty.frac * ((T(1) - tx.frac) * in.at(i, ch, ty.hi, tx.lo) +
                                             tx.frac * in.at(i, ch, ty.hi, tx.hi));
          }
        }
      }
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& in, const Tensor<T>&, const Tensor<T>& grad_out,
                     std::span<std::vector<T>>) const override {
    Tensor<T> grad_in(in.n, in.c, in.h, in.w);
    const auto ys = taps(in.h), xs = taps(in.w);
    for (int i = 0; i < in.n; ++i) {
      for (int ch = 0; ch < in.c; ++ch) {
        for (int y = 0; y < grad_out.h; ++y) {
          const Tap& ty = ys[y];
          for (int x = 0; x < grad_out.w; ++x) {
            const Tap& tx = xs[x];
            const T g = grad_out.at(i, ch, y, x);
            grad_in.at(i, ch, ty.lo, tx.lo) += g * (T(1) - ty.frac) * (T(1) - tx.frac);
            grad_in.at(i, ch, ty.lo, tx.hi) += g * (T(1) - ty.frac) * tx.frac;
            grad_in.at(i, ch, ty.hi, tx.lo) += g * ty.frac * (T(1) - tx.frac);
            grad_in.at(i, ch, ty.hi, tx.hi) += g * ty.frac * tx.frac;
          }
        }
      }
    }
    return grad_in;
  }

  std::string describe() const override { return "bilinear_up2"; }

 private:
  struct Tap {
    int lo;
    int hi;
    T frac;
  };

  static std::vector<Tap> taps(int in_size) {
    std::vector<Tap> out(static_cast<std::size_t>(in_size) * 2);
    for (int o = 0; o < in_size * 2; ++o) {
      const T src = std::max(T(0), (static_cast<T>(o) + T(0.5)) / T(2) - T(0.5));
      const int lo = std::min(static_cast<int>(src), in_size - 1);
      const int hi = std::min(lo + 1, in_size - 1);
      out[o] = {lo, hi, src - static_cast<T>(lo)};
    }
    return out;
  }
};

/// Channel concatenation of two tensors with equal n, h, w.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w) {
    throw DimensionError("concat: " + a.shape_string() + " vs " + b.shape_string());
  }
  Tensor<T> out(a.n, a.c + b.c, a.h, a.w);
  for (int i = 0; i < a.n; ++i) {
    std::copy(a.sample(i), a.sample(i) + a.sample_size(), out.sample(i));
    std::copy(b.sample(i), b.sample(i) + b.sample_size(), out.sample(i) + a.sample_size());
  }
  return out;
}

/// Inverse of concat_channels for gradients: returns the (first, second) parts.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& t, int first_channels) {
  Tensor<T> a(t.n, first_channels, t.h, t.w);
  Tensor<T> b(t.n, t.c - first_channels, t.h, t.w);
  for (int i = 0; i < t.n; ++i) {
    std::copy(t.sample(i), t.sample(i) + a.sample_size(), a.sample(i));
    std::copy(t.sample(i) + a.sample_size(), t.sample(i) + t.sample_size(), b.sample(i));
  }
  return {std::move(a), std::move(b)};
}

}  // namespace faddefend::nn
