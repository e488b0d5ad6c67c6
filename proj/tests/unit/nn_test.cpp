#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <random>

#include "faddefend/nn/layers.hpp"
#include "faddefend/nn/network.hpp"

namespace faddefend::nn {
namespace {

Tensor<double> random_tensor(int n, int c, int h, int w, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor<double> t(n, c, h, w);
  for (auto& v : t.data) v = normal(rng);
  return t;
}

// loss = <layer(x), r>; checks input and parameter gradients against central differences.
void check_layer(Layer<double>& layer, Tensor<double> x, std::uint64_t seed, double tol = 1e-6) {
  std::mt19937_64 rng(seed);
  const Tensor<double> y0 = layer.forward(x);
  const Tensor<double> r = random_tensor(y0.n, y0.c, y0.h, y0.w, rng);
  auto loss = [&](const Tensor<double>& in) {
    const Tensor<double> y = layer.forward(in);
    double s = 0.0;
    for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * r.data[i];
    return s;
  };
  Gradients<double> pg = zeros_like(layer.parameters());
  const Tensor<double> gx = layer.backward(x, y0, r, pg);
  ASSERT_TRUE(gx.same_shape(x));

  const double h = 1e-6;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double keep = x.data[i];
    x.data[i] = keep + h;
    const double up = loss(x);
    x.data[i] = keep - h;
    const double down = loss(x);
    x.data[i] = keep;
    EXPECT_NEAR(gx.data[i], (up - down) / (2 * h), tol * (1.0 + std::abs(gx.data[i]))) << layer.describe() << " x" << i;
  }
  auto params = layer.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double keep = p[i];
      p[i] = keep + h;
      const double up = loss(x);
      p[i] = keep - h;
      const double down = loss(x);
      p[i] = keep;
      EXPECT_NEAR(pg[k][i], (up - down) / (2 * h), tol * (1.0 + std::abs(pg[k][i])))
          << layer.describe() << " p" << k << "[" << i << "]";
    }
  }
}

TEST(LayerGradientTest, Conv2dStrideAndPadding) {
  std::mt19937_64 rng(1);
  for (const auto& [k, s, p] : {std::tuple{3, 1, 1}, std::tuple{3, 2, 1}, std::tuple{1, 1, 0}}) {
    Conv2d<double> conv(2, 3, k, s, p);
    conv.initialize(rng);
    std::normal_distribution<double> normal(0.0, 0.1);
    for (auto* b : conv.parameters()) {
      if (b->size() == 3) for (auto& v : *b) v = normal(rng);
    }
    check_layer(conv, random_tensor(2, 2, 5, 6, rng), 11);
  }
}

TEST(LayerGradientTest, Linear) {
  std::mt19937_64 rng(2);
  Linear<double> fc(12, 4);
  std::normal_distribution<double> normal(0.0, 0.5);
  for (auto* p : fc.parameters()) for (auto& v : *p) v = normal(rng);
  check_layer(fc, random_tensor(3, 3, 2, 2, rng), 12);
}

TEST(LayerGradientTest, PointwiseAndPooling) {
  std::mt19937_64 rng(3);
  LeakyRelu<double> leaky(0.2);
  check_layer(leaky, random_tensor(2, 2, 4, 4, rng), 13);
  Sigmoid<double> sig;
  check_layer(sig, random_tensor(2, 2, 4, 4, rng), 14);
  // Distinct values keep the max away from ties.
  Tensor<double> x = random_tensor(1, 2, 5, 4, rng);
  for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += 0.37 * static_cast<double>(i);
  MaxPool2<double> pool;
  check_layer(pool, x, 15);
}

TEST(LayerGradientTest, BatchNormUsesBatchStatistics) {
  std::mt19937_64 rng(4);
  BatchNorm<double> bn(3);
  std::normal_distribution<double> normal(0.0, 0.3);
  for (auto* p : bn.parameters()) for (auto& v : *p) v += normal(rng);
  check_layer(bn, random_tensor(2, 3, 3, 4, rng), 16, 1e-5);
  const Tensor<double> y = BatchNorm<double>(1).forward(random_tensor(1, 1, 6, 6, rng));
  double mean = 0.0;
  for (double v : y.data) mean += v;
  EXPECT_NEAR(mean / y.data.size(), 0.0, 1e-12);
}

TEST(LayerGradientTest, BilinearUpsample) {
  std::mt19937_64 rng(5);
  BilinearUp2<double> up;
  check_layer(up, random_tensor(1, 2, 3, 5, rng), 17);
  const Tensor<double> flat = up.forward(Tensor<double>(1, 1, 3, 3, 0.25));
  for (double v : flat.data) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(LayerGradientTest, SequentialBackwardMatchesDifferences) {
  std::mt19937_64 rng(6);
  Sequential<double> net;
  net.add(std::make_unique<Conv2d<double>>(1, 2, 3, 1, 1)).initialize(rng);
  net.add(std::make_unique<LeakyRelu<double>>(0.1));
  net.add(std::make_unique<MaxPool2<double>>());
  net.add(std::make_unique<Linear<double>>(8, 3));
  for (auto* p : net.layer(3).parameters()) for (auto& v : *p) v = std::normal_distribution<double>(0, 0.5)(rng);
  Tensor<double> x = random_tensor(1, 1, 4, 4, rng);
  const auto acts = net.forward_trace(x);
  std::vector<int> labels{1};
  Tensor<double> g;
  softmax_cross_entropy(acts.back(), labels, &g);
  Gradients<double> pg = zeros_like(net.parameters());
  const Tensor<double> gx = net.backward(acts, g, pg);
  const double h = 1e-6;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double keep = x.data[i];
    x.data[i] = keep + h;
    const double up = softmax_cross_entropy<double>(net.forward(x), labels, nullptr);
    x.data[i] = keep - h;
    const double down = softmax_cross_entropy<double>(net.forward(x), labels, nullptr);
    x.data[i] = keep;
    EXPECT_NEAR(gx.data[i], (up - down) / (2 * h), 1e-6);
  }
}

TEST(CrossEntropyTest, ConfidentPredictionKeepsGradient) {
  Tensor<float> logits(1, 3, 1, 1);
  logits.data = {40.0f, 0.0f, 0.0f};
  std::vector<int> labels{0};
  Tensor<float> g;
  const double loss = softmax_cross_entropy(logits, labels, &g);
  EXPECT_GE(loss, 0.0);
  EXPECT_LT(g.data[0], 0.0f);
  EXPECT_GT(g.data[1], 0.0f);
  EXPECT_THROW(softmax_cross_entropy<float>(logits, std::vector<int>{3}, nullptr), std::out_of_range);
  EXPECT_THROW(softmax_cross_entropy<float>(logits, std::vector<int>{0, 1}, nullptr), DimensionError);
}

TEST(AdamTest, MinimizesQuadratic) {
  std::vector<double> w{3.0, -2.0};
  Adam<double> adam({&w}, AdamOptions{0.1});
  Gradients<double> g{{0.0, 0.0}};
  for (int i = 0; i < 500; ++i) {
    g[0] = {2.0 * w[0], 2.0 * w[1]};
    adam.step(g);
  }
  EXPECT_NEAR(w[0], 0.0, 1e-2);
  EXPECT_NEAR(w[1], 0.0, 1e-2);
  EXPECT_EQ(adam.steps(), 500);
}

}  // namespace
}  // namespace faddefend::nn
