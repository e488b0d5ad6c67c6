#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <vector>

#include "faddefend/nn/layers.hpp"

namespace faddefend::nn {

/// One gradient buffer per parameter tensor, aligned with parameters().
template <typename T>
using Gradients = std::vector<std::vector<T>>;

template <typename T>
Gradients<T> zeros_like(const std::vector<std::vector<T>*>& params) {
  Gradients<T> g;
  g.reserve(params.size());
  for (const auto* p : params) g.emplace_back(p->size(), T(0));
  return g;
}

template <typename T>
class Sequential {
 public:
  Sequential() = default;
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <typename L>
  L& add(std::unique_ptr<L> layer) {
    L& ref = *layer;
    const auto count = layer->parameters().size();
    offsets_.push_back(param_count_);
    param_count_ += count;
    layers_.push_back(std::move(layer));
    return ref;
  }

  std::size_t size() const { return layers_.size(); }
  const Layer<T>& layer(std::size_t i) const { return *layers_[i]; }
  Layer<T>& layer(std::size_t i) { return *layers_[i]; }

  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> cur = x;
    for (const auto& l : layers_) cur = l->forward(cur);
    return cur;
  }

  /// Activations of every layer; element 0 is the input.
  std::vector<Tensor<T>> forward_trace(const Tensor<T>& x) const {
    std::vector<Tensor<T>> acts;
    acts.reserve(layers_.size() + 1);
    acts.push_back(x);
    for (const auto& l : layers_) acts.push_back(l->forward(acts.back()));
    return acts;
  }

  /// Gradient with respect to the network input. Parameter gradients are
  /// accumulated into `grads` (aligned with parameters()) unless it is empty.
  Tensor<T> backward(const std::vector<Tensor<T>>& acts, const Tensor<T>& grad_out,
                     std::span<std::vector<T>> grads) const {
    Tensor<T> g = grad_out;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      std::span<std::vector<T>> slot;
      if (!grads.empty()) {
        slot = grads.subspan(offsets_[i], layers_[i]->parameters().size());
      }
      g = layers_[i]->backward(acts[i], acts[i + 1], g, slot);
    }
    return g;
  }

  std::vector<std::vector<T>*> parameters() const {
    std::vector<std::vector<T>*> out;
    for (const auto& l : layers_) {
      for (auto* p : l->parameters()) out.push_back(p);
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += p->size();
    return n;
  }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  std::vector<std::size_t> offsets_;
  std::size_t param_count_ = 0;
};

/// Mean softmax cross-entropy over the batch. Writes d(loss)/d(logits) into
/// `grad` when non-null.
template <typename T>
double softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels, Tensor<T>* grad) {
  const int k = static_cast<int>(logits.sample_size());
  if (static_cast<int>(labels.size()) != logits.n) {
    throw DimensionError("cross entropy: label count does not match batch");
  }
  if (grad != nullptr) *grad = Tensor<T>(logits.n, logits.c, logits.h, logits.w);
  double total = 0.0;
  std::vector<double> p(k);
  for (int i = 0; i < logits.n; ++i) {
    const T* z = logits.sample(i);
    const int y = labels[i];
    if (y < 0 || y >= k) throw std::out_of_range("cross entropy: label out of range");
    double m = z[0];
    for (int j = 1; j < k; ++j) m = std::max(m, static_cast<double>(z[j]));
    double s = 0.0;
    double others = 0.0;
    for (int j = 0; j < k; ++j) {
      p[j] = std::exp(static_cast<double>(z[j]) - m);
      s += p[j];
      if (j != y) others += p[j];
    }
    total += -(static_cast<double>(z[y]) - m - std::log(s));
    if (grad != nullptr) {
      // p_y - 1 is formed as -(sum of the other classes) so a confident
      // prediction keeps a nonzero gradient.
      T* g = grad->sample(i);
      for (int j = 0; j < k; ++j) {
        const double d = j == y ? -others / s : p[j] / s;
        g[j] = static_cast<T>(d / logits.n);
      }
    }
  }
  return total / logits.n;
}

/// Row-wise softmax of a n x k logit tensor.
template <typename T>
std::vector<std::vector<float>> softmax_rows(const Tensor<T>& logits) {
  const int k = static_cast<int>(logits.sample_size());
  std::vector<std::vector<float>> out(logits.n, std::vector<float>(k));
  for (int i = 0; i < logits.n; ++i) {
    const T* z = logits.sample(i);
    double m = z[0];
    for (int j = 1; j < k; ++j) m = std::max(m, static_cast<double>(z[j]));
    double s = 0.0;
    std::vector<double> e(k);
    for (int j = 0; j < k; ++j) s += (e[j] = std::exp(static_cast<double>(z[j]) - m));
    for (int j = 0; j < k; ++j) out[i][j] = static_cast<float>(e[j] / s);
  }
  return out;
}

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
class Adam {
 public:
  Adam(std::vector<std::vector<T>*> params, AdamOptions opts)
      : params_(std::move(params)), opts_(opts), m_(zeros_like(params_)), v_(zeros_like(params_)) {}

  void step(const Gradients<T>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(opts_.beta1, t_);
    const double c2 = 1.0 - std::pow(opts_.beta2, t_);
    const T b1 = static_cast<T>(opts_.beta1), b2 = static_cast<T>(opts_.beta2);
    const T step = static_cast<T>(opts_.learning_rate / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(opts_.epsilon);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = *params_[k];
      auto& m = m_[k];
      auto& v = v_[k];
      const auto& g = grads[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = b1 * m[i] + (T(1) - b1) * g[i];
        v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
        p[i] -= step * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
      }
    }
  }

  void set_learning_rate(double lr) { opts_.learning_rate = lr; }
  long steps() const { return t_; }

 private:
  std::vector<std::vector<T>*> params_;
  AdamOptions opts_;
  Gradients<T> m_;
  Gradients<T> v_;
  long t_ = 0;
};

}  // namespace faddefend::nn
