#include "faddefend/dip.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include "faddefend/nn/network.hpp"

namespace faddefend {

namespace {

using nn::Sequential;
using nn::Tensor;

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n - 2;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

// U-Net style generator: per level a 1x1 skip branch and a stride-2 down
// block; the decoder upsamples, concatenates the skip and refines.
class Generator {
 public:
  struct Trace {
    std::vector<std::vector<Tensor<float>>> skip;
    std::vector<std::vector<Tensor<float>>> down;
    std::vector<std::vector<Tensor<float>>> up;
    std::vector<Tensor<float>> up_source;
    std::vector<Tensor<float>> head;
  };

  Generator(const Generator&) = delete;
  Generator& operator=(const Generator&) = delete;

  Generator(const GeneratorSpec& spec, int out_channels) : spec_(spec) {
    const float slope = spec.leaky_slope;
    for (int level = 0; level < spec.depth; ++level) {
      const int in = level == 0 ? spec.input_channels : spec.channels_at(level - 1);
      const int ch = spec.channels_at(level);
      Sequential<float> skip;
      if (spec.skip_channels > 0) {
        skip.add(std::make_unique<nn::Conv2d<float>>(in, spec.skip_channels, 1, 1, 0));
        if (spec.batch_norm) skip.add(std::make_unique<nn::BatchNorm<float>>(spec.skip_channels));
        skip.add(std::make_unique<nn::LeakyRelu<float>>(slope));
      }
      skip_.push_back(std::move(skip));

      Sequential<float> down;
      down.add(std::make_unique<nn::Conv2d<float>>(in, ch, 3, 2, 1));
      if (spec.batch_norm) down.add(std::make_unique<nn::BatchNorm<float>>(ch));
      down.add(std::make_unique<nn::LeakyRelu<float>>(slope));
      down.add(std::make_unique<nn::Conv2d<float>>(ch, ch, 3, 1, 1));
      if (spec.batch_norm) down.add(std::make_unique<nn::BatchNorm<float>>(ch));
      down.add(std::make_unique<nn::LeakyRelu<float>>(slope));
      down_.push_back(std::move(down));

      const int up_in = (level == spec.depth - 1 ? spec.channels_at(level) : spec.channels_at(level + 1)) +
                        spec.skip_channels;
      Sequential<float> up;
      if (spec.batch_norm) up.add(std::make_unique<nn::BatchNorm<float>>(up_in));
      up.add(std::make_unique<nn::Conv2d<float>>(up_in, ch, 3, 1, 1));
      if (spec.batch_norm) up.add(std::make_unique<nn::BatchNorm<float>>(ch));
      up.add(std::make_unique<nn::LeakyRelu<float>>(slope));
      up.add(std::make_unique<nn::Conv2d<float>>(ch, ch, 1, 1, 0));
      if (spec.batch_norm) up.add(std::make_unique<nn::BatchNorm<float>>(ch));
      up.add(std::make_unique<nn::LeakyRelu<float>>(slope));
      up_.push_back(std::move(up));
    }
    head_.add(std::make_unique<nn::Conv2d<float>>(spec.channels_at(0), out_channels, 1, 1, 0));
    head_.add(std::make_unique<nn::Sigmoid<float>>());

    for (auto* chain : chains()) {
      offsets_.push_back(params_.size());
      for (auto* p : chain->parameters()) params_.push_back(p);
    }
  }

  void initialize(std::mt19937_64& rng) {
    const double gain = std::sqrt(2.0 / (1.0 + spec_.leaky_slope * spec_.leaky_slope));
    for (auto* chain : chains()) {
      for (std::size_t i = 0; i < chain->size(); ++i) {
        if (auto* conv = dynamic_cast<nn::Conv2d<float>*>(&chain->layer(i))) conv->initialize(rng, gain);
      }
    }
  }

  const std::vector<std::vector<float>*>& parameters() const { return params_; }

  Tensor<float> forward(const Tensor<float>& z, Trace& trace) const {
    const auto depth = static_cast<std::size_t>(spec_.depth);
    trace.skip.resize(depth);
    trace.down.resize(depth);
    trace.up.resize(depth);
    trace.up_source.resize(depth);
    const Tensor<float>* x = &z;
    for (std::size_t level = 0; level < depth; ++level) {
      if (spec_.skip_channels > 0) trace.skip[level] = skip_[level].forward_trace(*x);
      trace.down[level] = down_[level].forward_trace(*x);
      x = &trace.down[level].back();
    }
    const Tensor<float>* y = x;
    for (std::size_t level = depth; level-- > 0;) {
      trace.up_source[level] = *y;
      Tensor<float> u = upsample_.forward(*y);
      Tensor<float> cat = spec_.skip_channels > 0 ? nn::concat_channels(trace.skip[level].back(), u) : std::move(u);
      trace.up[level] = up_[level].forward_trace(cat);
      y = &trace.up[level].back();
    }
    trace.head = head_.forward_trace(*y);
    return trace.head.back();
  }

  void backward(const Trace& trace, const Tensor<float>& grad_out, nn::Gradients<float>& grads) const {
    const auto depth = static_cast<std::size_t>(spec_.depth);
    const auto slot = [&](std::size_t chain_index) {
      const std::size_t begin = offsets_[chain_index];
      const std::size_t end = chain_index + 1 < offsets_.size() ? offsets_[chain_index + 1] : params_.size();
      return std::span<std::vector<float>>(grads.data() + begin, end - begin);
    };
    // Chain order matches chains(): skip[0..d), down[0..d), up[0..d), head.
    Tensor<float> g = head_.backward(trace.head, grad_out, slot(3 * depth));
    std::vector<Tensor<float>> skip_grads(depth);
    for (std::size_t level = 0; level < depth; ++level) {
      Tensor<float> g_cat = up_[level].backward(trace.up[level], g, slot(2 * depth + level));
      Tensor<float> g_up;
      if (spec_.skip_channels > 0) {
        auto parts = nn::split_channels(g_cat, spec_.skip_channels);
        skip_grads[level] = std::move(parts.first);
        g_up = std::move(parts.second);
      } else {
        g_up = std::move(g_cat);
      }
      g = upsample_.backward(trace.up_source[level], Tensor<float>(), g_up, {});
    }
    for (std::size_t level = depth; level-- > 0;) {
      Tensor<float> g_in = down_[level].backward(trace.down[level], g, slot(depth + level));
      if (spec_.skip_channels > 0) {
        const Tensor<float> g_skip = skip_[level].backward(trace.skip[level], skip_grads[level], slot(level));
        for (std::size_t i = 0; i < g_in.data.size(); ++i) g_in.data[i] += g_skip.data[i];
      }
      g = std::move(g_in);
    }
  }

 private:
  std::vector<Sequential<float>*> chains() {
    std::vector<Sequential<float>*> out;
    for (auto& s : skip_) out.push_back(&s);
    for (auto& s : down_) out.push_back(&s);
    for (auto& s : up_) out.push_back(&s);
    out.push_back(&head_);
    return out;
  }

  GeneratorSpec spec_;
  std::vector<Sequential<float>> skip_;
  std::vector<Sequential<float>> down_;
  std::vector<Sequential<float>> up_;
  nn::BilinearUp2<float> upsample_;
  Sequential<float> head_;
  std::vector<std::vector<float>*> params_;
  std::vector<std::size_t> offsets_;
};

Tensor<float> reflect_pad(const ImageTensor& img, int multiple) {
  const int h = (img.height() + multiple - 1) / multiple * multiple;
  const int w = (img.width() + multiple - 1) / multiple * multiple;
  Tensor<float> out(1, img.channels(), h, w);
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      const int sy = reflect_index(y, img.height());
      for (int x = 0; x < w; ++x) out.at(0, c, y, x) = img.at(sy, reflect_index(x, img.width()), c);
    }
  }
  return out;
}

ImageTensor crop_clamped(const Tensor<float>& t, int height, int width) {
  ImageTensor out(height, width, t.c);
  for (int c = 0; c < t.c; ++c) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) out.at(y, x, c) = t.at(0, c, y, x);
    }
  }
  return out.clamp01();
}

}  // namespace

void GeneratorSpec::validate() const {
  if (depth < 1) throw std::invalid_argument("generator depth must be >= 1");
  if (base_channels <= 0 || max_channels <= 0 || input_channels <= 0 || skip_channels < 0) {
    throw std::invalid_argument("generator channel counts must be positive");
  }
  if (!(leaky_slope >= 0.0f && leaky_slope < 1.0f)) {
    throw std::invalid_argument("generator leaky slope must lie in [0, 1)");
  }
}

int GeneratorSpec::channels_at(int level) const {
  long ch = base_channels;
  for (int i = 0; i < level && ch < max_channels; ++i) ch *= 2;
  return static_cast<int>(std::min<long>(ch, max_channels));
}

void DipConfig::validate() const {
  if (iterations < 1) throw std::invalid_argument("DIP iterations must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("DIP learning rate must be > 0");
  if (!(input_noise_scale > 0.0)) throw std::invalid_argument("DIP input noise scale must be > 0");
  if (trajectory_every < 0) throw std::invalid_argument("DIP trajectory period must be >= 0");
}

std::size_t generator_parameter_count(const GeneratorSpec& gen, int channels) {
  gen.validate();
  Generator g(gen, channels);
  std::size_t n = 0;
  for (const auto* p : g.parameters()) n += p->size();
  return n;
}

DipResult dip_reconstruct(const ImageTensor& x_adv, const GeneratorSpec& gen, const DipConfig& cfg) {
  gen.validate();
  cfg.validate();
  if (x_adv.empty()) throw DimensionError("dip_reconstruct: empty image");

  const int multiple = 1 << gen.depth;
  const Tensor<float> target = reflect_pad(x_adv, multiple);

  std::mt19937_64 init_rng(cfg.noise_seed);
  std::mt19937_64 noise_rng(cfg.noise_seed ^ 0xd1b54a32d192ed03ULL);
  Generator generator(gen, x_adv.channels());
  generator.initialize(init_rng);

  Tensor<float> z(1, gen.input_channels, target.h, target.w);
  std::uniform_real_distribution<float> uniform(0.0f, 1.0f);
  const auto scale = static_cast<float>(cfg.input_noise_scale);
  for (auto& v : z.data) v = uniform(noise_rng) * scale;

  nn::Adam<float> adam(generator.parameters(), nn::AdamOptions{cfg.learning_rate});
  nn::Gradients<float> grads = nn::zeros_like(generator.parameters());
  Generator::Trace trace;

  DipResult result;
  result.loss_history.reserve(cfg.iterations);
  Tensor<float> grad_out(target.n, target.c, target.h, target.w);
  for (int it = 0; it < cfg.iterations; ++it) {
    const Tensor<float> out = generator.forward(z, trace);
    if (cfg.trajectory_every > 0 && it > 0 && it % cfg.trajectory_every == 0) {
      result.trajectory.push_back({it, crop_clamped(out, x_adv.height(), x_adv.width())});
    }
    double loss = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      const float d = out.data[i] - target.data[i];
      loss += static_cast<double>(d) * d;
      grad_out.data[i] = 2.0f * d;
    }
    if (!std::isfinite(loss)) {
      throw OptimizationError("DIP objective became non-finite at iteration " + std::to_string(it), it);
    }
    result.loss_history.push_back(loss);
    for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0f);
    generator.backward(trace, grad_out, grads);
    adam.step(grads);
  }
  const Tensor<float> final_out = generator.forward(z, trace);
  for (float v : final_out.data) {
    if (!std::isfinite(v)) {
      throw OptimizationError("DIP output became non-finite after the last update", cfg.iterations);
    }
  }
  result.reconstruction = crop_clamped(final_out, x_adv.height(), x_adv.width());
  if (cfg.trajectory_every > 0 && cfg.iterations % cfg.trajectory_every == 0) {
    result.trajectory.push_back({cfg.iterations, result.reconstruction});
  }
  return result;
}

ImageTensor large_path_defend(const ImageTensor& x_adv, const GeneratorSpec& gen,
                              const DipConfig& dip_cfg, const PreprocessConfig& pre_cfg) {
  return small_path_defend(dip_reconstruct(x_adv, gen, dip_cfg).reconstruction, pre_cfg);
}

}  // namespace faddefend
