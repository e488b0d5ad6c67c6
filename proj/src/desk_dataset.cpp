#include "faddefend/desk_dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

namespace faddefend {

namespace {

struct Vec2 {
  double x;
  double y;
};

using Color = std::array<double, 3>;

double length(Vec2 p) { return std::hypot(p.x, p.y); }

Vec2 rotate(Vec2 p, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * p.x - s * p.y, s * p.x + c * p.y};
}

double box_sdf(Vec2 p, double hx, double hy) {
  const double dx = std::abs(p.x) - hx, dy = std::abs(p.y) - hy;
  const double outside = std::hypot(std::max(dx, 0.0), std::max(dy, 0.0));
  return outside + std::min(std::max(dx, dy), 0.0);
}

double ellipse_sdf(Vec2 p, double a, double b) {
  return (std::hypot(p.x / a, p.y / b) - 1.0) * std::min(a, b);
}

double triangle_sdf(Vec2 p, double r) {
  // Equilateral triangle pointing up (image y grows downward).
  const double k = std::sqrt(3.0);
  double px = std::abs(p.x) - r;
  double py = -p.y + r / k;
  if (px + k * py > 0.0) {
    const double nx = (px - k * py) / 2.0, ny = (-k * px - py) / 2.0;
    px = nx;
    py = ny;
  }
  px -= std::clamp(px, -2.0 * r, 0.0);
  return -std::hypot(px, py) * (py < 0.0 ? -1.0 : 1.0);
}

double shape_sdf(int cls, Vec2 p, double r) {
  switch (cls) {
    case 0: return length(p) - r;
    case 1: return box_sdf(p, 0.8 * r, 0.8 * r);
    case 2: return triangle_sdf(p, 1.05 * r);
    case 3: return std::abs(length(p) - 0.72 * r) - 0.26 * r;
    case 4: return std::min(box_sdf(p, r, 0.3 * r), box_sdf(p, 0.3 * r, r));
    case 5: {
      const Vec2 q = rotate(p, std::numbers::pi / 4.0);
      return std::min(box_sdf(q, r, 0.28 * r), box_sdf(q, 0.28 * r, r));
    }
    case 6: return ellipse_sdf(p, r, 0.5 * r);
    case 7: return ellipse_sdf(p, 0.5 * r, r);
    case 8: return (std::abs(p.x) + std::abs(p.y) - r) / std::numbers::sqrt2;
    default: return std::max(box_sdf(p, 0.85 * r, 0.85 * r), -box_sdf(p, 0.55 * r, 0.55 * r));
  }
}

double luma(const Color& c) { return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]; }

Color random_color(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(rng), u(rng), u(rng)};
}

struct Wave {
  double fx, fy, phase, amp;
  Color tint;
};

std::vector<Wave> random_waves(std::mt19937_64& rng, int count, double max_freq, double amp) {
  std::uniform_real_distribution<double> f(-max_freq, max_freq), ph(0.0, 2.0 * std::numbers::pi),
      a(0.3 * amp, amp), t(0.5, 1.0);
  std::vector<Wave> waves;
  for (int i = 0; i < count; ++i) waves.push_back({f(rng), f(rng), ph(rng), a(rng), {t(rng), t(rng), t(rng)}});
  return waves;
}

double coverage(double sdf, double aa = 0.75) { return std::clamp(0.5 - sdf / aa, 0.0, 1.0); }

ImageTensor render_sample(int cls, int size, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double half = size / 2.0;
  const double scale = size / 32.0;

  const Color bg_a = random_color(rng, 0.1, 0.9);
  const Color bg_b = random_color(rng, 0.1, 0.9);
  const double bg_angle = u01(rng) * 2.0 * std::numbers::pi;
  const Vec2 bg_dir{std::cos(bg_angle), std::sin(bg_angle)};
  auto waves = random_waves(rng, 3, 0.22 / scale, 0.05);
  const auto fine = random_waves(rng, 3, 0.5 / scale, 0.04);
  waves.insert(waves.end(), fine.begin(), fine.end());

  const Vec2 center{half + (u01(rng) - 0.5) * 10.0 * scale, half + (u01(rng) - 0.5) * 10.0 * scale};
  const double radius = (6.0 + 5.0 * u01(rng)) * scale;
  const double angle = (u01(rng) - 0.5) * 0.5;
  const Color bg_center = [&] {
    const double t = 0.5 + 0.5 * ((center.x - half) * bg_dir.x + (center.y - half) * bg_dir.y) / half;
    Color c;
    for (int k = 0; k < 3; ++k) c[k] = bg_a[k] + (bg_b[k] - bg_a[k]) * t;
    return c;
  }();
  Color fg = random_color(rng, 0.05, 0.95);
  for (int tries = 0; tries < 20 && std::abs(luma(fg) - luma(bg_center)) < 0.08; ++tries) {
    fg = random_color(rng, 0.05, 0.95);
  }
  const double shade_angle = u01(rng) * 2.0 * std::numbers::pi;
  const Vec2 shade_dir{std::cos(shade_angle), std::sin(shade_angle)};
  const double shade_amp = 0.1 + 0.2 * u01(rng);

  // Optional distractor blob.
  const bool distractor = u01(rng) < 0.5;
  const Vec2 d_center{u01(rng) * size, u01(rng) * size};
  const double d_a = (2.0 + 3.0 * u01(rng)) * scale, d_b = (2.0 + 3.0 * u01(rng)) * scale;
  const Color d_color = random_color(rng, 0.1, 0.9);

  ImageTensor img(size, size, 3);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const Vec2 p{x + 0.5, y + 0.5};
      const double t = std::clamp(0.5 + 0.5 * ((p.x - half) * bg_dir.x + (p.y - half) * bg_dir.y) / half, 0.0, 1.0);
      Color c;
      for (int k = 0; k < 3; ++k) c[k] = bg_a[k] + (bg_b[k] - bg_a[k]) * t;
      for (const auto& w : waves) {
        const double v = w.amp * std::sin(2.0 * std::numbers::pi * (w.fx * p.x + w.fy * p.y) + w.phase);
        for (int k = 0; k < 3; ++k) c[k] += v * w.tint[k];
      }
      if (distractor) {
        const double cov = coverage(ellipse_sdf({p.x - d_center.x, p.y - d_center.y}, d_a, d_b));
        for (int k = 0; k < 3; ++k) c[k] += (d_color[k] - c[k]) * cov;
      }
      const Vec2 local = rotate({p.x - center.x, p.y - center.y}, angle);
      const double cov = coverage(shape_sdf(cls, local, radius));
      if (cov > 0.0) {
        const double shade = 1.0 + shade_amp * ((p.x - center.x) * shade_dir.x + (p.y - center.y) * shade_dir.y) / radius;
        for (int k = 0; k < 3; ++k) c[k] += (fg[k] * shade - c[k]) * cov;
      }
      for (int k = 0; k < 3; ++k) img.at(y, x, k) = static_cast<float>(c[k]);
    }
  }
  img.clamp01();
  return from_bytes_scale(to_bytes_scale(img));
}

}  // namespace

const std::vector<std::string>& desk_class_names() {
  static const std::vector<std::string> names = {"disk",    "square",  "triangle", "ring",    "plus",
                                                 "saltire", "ellipse_h", "ellipse_v", "diamond", "frame"};
  return names;
}

std::vector<LabeledImage> generate_desk_dataset(const DeskDatasetOptions& options) {
  if (options.per_class < 1) throw std::invalid_argument("desk dataset needs at least one image per class");
  if (options.size < ImageTensor::kMinSide) throw DimensionError("desk dataset image size below minimum");
  std::vector<LabeledImage> out;
  out.reserve(static_cast<std::size_t>(options.per_class) * kDeskClasses);
  const auto& names = desk_class_names();
  for (int i = 0; i < options.per_class; ++i) {
    for (int cls = 0; cls < kDeskClasses; ++cls) {
      std::seed_seq seq{static_cast<std::uint32_t>(options.seed), static_cast<std::uint32_t>(options.seed >> 32),
                        static_cast<std::uint32_t>(cls), static_cast<std::uint32_t>(i),
                        static_cast<std::uint32_t>(std::hash<std::string>{}(options.split))};
      std::mt19937_64 rng(seq);
      out.push_back({render_sample(cls, options.size, rng), cls,
                     options.split + "/" + names[cls] + "/" + std::to_string(i)});
    }
  }
  return out;
}

ImageTensor synthetic_photo(int height, int width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const Color a = random_color(rng, 0.3, 0.7), b = random_color(rng, 0.3, 0.7);
  const double scale = std::min(height, width) / 32.0;
  const auto waves = random_waves(rng, 4, 0.08 / scale, 0.05);
  struct Blob {
    Vec2 c;
    double ra, rb, angle;
    Color color;
  };
  std::vector<Blob> blobs;
  for (int i = 0; i < 6; ++i) {
    blobs.push_back({{u01(rng) * width, u01(rng) * height},
                     (3.0 + 6.0 * u01(rng)) * scale,
                     (3.0 + 6.0 * u01(rng)) * scale,
                     u01(rng) * std::numbers::pi,
                     random_color(rng, 0.2, 0.8)});
  }
  ImageTensor img(height, width, 3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double t = (static_cast<double>(x) / width + static_cast<double>(y) / height) / 2.0;
      Color c;
      for (int k = 0; k < 3; ++k) c[k] = a[k] + (b[k] - a[k]) * t;
      for (const auto& w : waves) {
        const double v = w.amp * std::sin(2.0 * std::numbers::pi * (w.fx * x + w.fy * y) + w.phase);
        for (int k = 0; k < 3; ++k) c[k] += v * w.tint[k];
      }
      for (const auto& blob : blobs) {
        const Vec2 q = rotate({x + 0.5 - blob.c.x, y + 0.5 - blob.c.y}, blob.angle);
        const double cov = coverage(ellipse_sdf(q, blob.ra, blob.rb), 1.5 * scale);
        for (int k = 0; k < 3; ++k) c[k] += (blob.color[k] - c[k]) * cov;
      }
      for (int k = 0; k < 3; ++k) img.at(y, x, k) = static_cast<float>(std::clamp(c[k], 0.1, 0.9));
    }
  }
  return img;
}

ImageTensor add_gaussian_noise(const ImageTensor& img, double sigma255, std::uint64_t seed,
                               bool shared_across_channels) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sigma255 / 255.0);
  ImageTensor out = img;
  if (!shared_across_channels) {
    for (float& v : out.values()) v = static_cast<float>(v + normal(rng));
    return out.clamp01();
  }
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      const double n = normal(rng);
      for (int c = 0; c < out.channels(); ++c) out.at(y, x, c) = static_cast<float>(out.at(y, x, c) + n);
    }
  }
  return out.clamp01();
}

}  // namespace faddefend
