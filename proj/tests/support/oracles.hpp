#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "faddefend/classifier.hpp"
#include "faddefend/image.hpp"
#include "faddefend/nn/network.hpp"

namespace faddefend::testing {

/// logits = W x + b over the flattened channel-last image, in double. Its
/// cross-entropy input gradient has the closed form W^T (softmax - onehot).
class LinearToyClassifier final : public Classifier {
 public:
  LinearToyClassifier(InputShape shape, int classes, std::uint64_t seed)
      : shape_(shape), classes_(classes), identity_{"toy", "linear", "synthetic"} {
    const std::size_t dim = static_cast<std::size_t>(shape.height) * shape.width * shape.channels;
    weights_.resize(classes * dim);
    bias_.resize(classes);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& w : weights_) w = normal(rng);
    for (auto& b : bias_) b = normal(rng);
  }

  const ClassifierIdentity& identity() const override { return identity_; }
  int num_classes() const override { return classes_; }
  InputShape input_shape() const override { return shape_; }

  std::vector<double> probabilities(const ImageTensor& img) const {
    const auto x = img.values();
    std::vector<double> z(classes_);
    for (int k = 0; k < classes_; ++k) {
      double s = bias_[k];
      for (std::size_t i = 0; i < x.size(); ++i) s += weights_[k * x.size() + i] * x[i];
      z[k] = s;
    }
    const double m = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (auto& v : z) total += (v = std::exp(v - m));
    for (auto& v : z) v /= total;
    return z;
  }

  std::vector<std::vector<float>> predict(std::span<const ImageTensor> batch) const override {
    std::vector<std::vector<float>> out;
    for (const auto& img : batch) {
      const auto p = probabilities(img);
      out.emplace_back(p.begin(), p.end());
    }
    return out;
  }

  std::vector<float> input_gradient(const ImageTensor& img, int label) const override {
    const auto p = probabilities(img);
    std::vector<float> g(img.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      double s = 0.0;
      for (int k = 0; k < classes_; ++k) s += weights_[k * g.size() + i] * (p[k] - (k == label ? 1.0 : 0.0));
      g[i] = static_cast<float>(s);
    }
    return g;
  }

  double loss(const ImageTensor& img, int label) const override { return -std::log(probabilities(img)[label]); }

  /// Sign of the closed-form gradient, computed independently of input_gradient.
  std::vector<int> gradient_sign(const ImageTensor& img, int label) const {
    const auto p = probabilities(img);
    std::vector<int> out(img.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      double s = 0.0;
      for (int k = 0; k < classes_; ++k) s += weights_[k * out.size() + i] * p[k];
      s -= weights_[label * out.size() + i];
      out[i] = (s > 0) - (s < 0);
    }
    return out;
  }

 private:
  InputShape shape_;
  int classes_;
  ClassifierIdentity identity_;
  std::vector<double> weights_;
  std::vector<double> bias_;
};

struct GradientCheck {
  std::size_t checked = 0;
  std::size_t failed = 0;
  std::size_t kinks_skipped = 0;
  double worst_relative = 0.0;
};

/// Compare an analytic input gradient with central differences of `loss` on
/// `samples` random coordinates. Relative error is |a - f| / max(|a|, |f|,
/// floor), the floor being floor_fraction * max|a| so near-zero entries are
/// judged on the gradient's own scale. With kink_tol > 0, coordinates whose
/// one-sided slopes disagree by more than kink_tol (relative) sit on a ReLU or
/// max-pool switch, where no central difference is meaningful; they are
/// counted and replaced by another draw.
template <typename LossFn>
GradientCheck check_input_gradient(const ImageTensor& img, const std::vector<double>& analytic, LossFn&& loss,
                                   int samples, std::uint64_t seed, double step = 1e-5, double tol = 1e-3,
                                   double floor_fraction = 1e-2, double kink_tol = 0.0) {
  double scale = 0.0;
  for (double a : analytic) scale = std::max(scale, std::abs(a));
  const double floor = std::max(floor_fraction * scale, 1e-12);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, img.size() - 1);
  GradientCheck out;
  std::vector<double> x(img.values().begin(), img.values().end());
  const double center = kink_tol > 0.0 ? loss(x) : 0.0;
  for (int draws = 0; out.checked < static_cast<std::size_t>(samples) && draws < 20 * samples; ++draws) {
    const std::size_t i = pick(rng);
    const double keep = x[i];
    x[i] = keep + step;
    const double up = loss(x);
    x[i] = keep - step;
    const double down = loss(x);
    x[i] = keep;
    if (kink_tol > 0.0) {
      const double right = (up - center) / step, left = (center - down) / step;
      if (std::abs(right - left) > kink_tol * std::max({std::abs(right), std::abs(left), floor})) {
        ++out.kinks_skipped;
        continue;
      }
    }
    const double fd = (up - down) / (2.0 * step);
    const double rel = std::abs(analytic[i] - fd) / std::max({std::abs(analytic[i]), std::abs(fd), floor});
    ++out.checked;
    out.failed += rel > tol;
    out.worst_relative = std::max(out.worst_relative, rel);
  }
  return out;
}

/// Cross-entropy of a double-precision model at channel-last values `x`.
inline double double_loss(const ConvClassifier<double>& m, const ImageTensor& shape, const std::vector<double>& x,
                          int label) {
  nn::Tensor<double> t(1, shape.channels(), shape.height(), shape.width());
  for (int c = 0; c < t.c; ++c) {
    for (int y = 0; y < t.h; ++y) {
      for (int xx = 0; xx < t.w; ++xx) t.at(0, c, y, xx) = x[shape.index(y, xx, c)];
    }
  }
  const int labels[1] = {label};
  return nn::softmax_cross_entropy<double>(m.logits(t), std::span<const int>(labels), nullptr);
}

}  // namespace faddefend::testing
