#include "faddefend/noise_estimator.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

namespace faddefend {

namespace {

constexpr int kNullSamples = 10000;
constexpr std::uint64_t kNullSeed = 0x5eed'0f'9a'55ULL;

// Smallest eigenvalue of the sample covariance of the selected rows.
double min_covariance_eigenvalue(const Eigen::MatrixXd& patches, const std::vector<int>& rows) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd sel(n, patches.cols());
  for (Eigen::Index i = 0; i < n; ++i) sel.row(i) = patches.row(rows[i]);
  const Eigen::RowVectorXd mean = sel.colwise().mean();
  sel.rowwise() -= mean;
  const Eigen::MatrixXd cov = (sel.transpose() * sel) / static_cast<double>(std::max<Eigen::Index>(n - 1, 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov, Eigen::EigenvaluesOnly);
  return std::max(0.0, solver.eigenvalues()(0));
}

double build_quantile(int side, double confidence) {
  std::mt19937_64 rng(kNullSeed ^ static_cast<std::uint64_t>(side));
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<float> patch(static_cast<std::size_t>(side) * side);
  std::vector<double> strengths(kNullSamples);
  for (auto& s : strengths) {
    for (auto& v : patch) v = normal(rng);
    s = texture_strength(patch, side);
  }
  std::sort(strengths.begin(), strengths.end());
  const auto idx = static_cast<std::size_t>(std::ceil(confidence * kNullSamples)) - 1;
  return strengths[std::min(idx, strengths.size() - 1)];
}

}  // namespace

void EstimatorConfig::validate() const {
  if (patch_side < 3) throw std::invalid_argument("estimator patch_side must be >= 3");
  if (stride < 1) throw std::invalid_argument("estimator stride must be >= 1");
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw std::invalid_argument("estimator confidence must lie in (0, 1)");
  }
  if (max_iterations < 1) throw std::invalid_argument("estimator max_iterations must be >= 1");
  if (!(convergence_tol > 0.0)) throw std::invalid_argument("estimator convergence_tol must be > 0");
}

const char* to_string(Grade g) { return g == Grade::kSmall ? "SMALL" : "LARGE"; }

double texture_strength(std::span<const float> patch, int side) {
  if (patch.size() != static_cast<std::size_t>(side) * side) {
    throw DimensionError("texture_strength: patch length does not match side^2");
  }
  double hh = 0.0, vv = 0.0, hv = 0.0;
  for (int y = 0; y + 1 < side; ++y) {
    for (int x = 0; x + 1 < side; ++x) {
      const double p = patch[y * side + x];
      const double h = patch[y * side + x + 1] - p;
      const double v = patch[(y + 1) * side + x] - p;
      hh += h * h;
      vv += v * v;
      hv += h * v;
    }
  }
  // Largest eigenvalue of [[hh, hv], [hv, vv]].
  const double half_trace = 0.5 * (hh + vv);
  const double diff = 0.5 * (hh - vv);
  return half_trace + std::sqrt(diff * diff + hv * hv);
}

double unit_noise_strength_quantile(int side, double confidence) {
  static std::mutex mutex;
  static std::map<std::pair<int, double>, double> cache;
  std::lock_guard lock(mutex);
  const auto key = std::make_pair(side, confidence);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  const double q = build_quantile(side, confidence);
  cache.emplace(key, q);
  return q;
}

PerturbationEstimate estimate_sigma(const ImageTensor& img, const EstimatorConfig& cfg) {
  cfg.validate();
  if (img.height() < cfg.patch_side || img.width() < cfg.patch_side) {
    throw DimensionError("estimate_sigma: image " + img.shape_string() +
                         " smaller than patch side " + std::to_string(cfg.patch_side));
  }
  const ImageTensor luma = luminance(img);
  const PatchMatrix raw = extract_patches(luma, cfg.patch_side, cfg.stride);

  Eigen::MatrixXd patches(raw.count, raw.dim);
  for (int i = 0; i < raw.count; ++i) {
    for (int j = 0; j < raw.dim; ++j) {
      patches(i, j) = 255.0 * static_cast<double>(raw.values[static_cast<std::size_t>(i) * raw.dim + j]);
    }
  }
  std::vector<double> strength(raw.count);
  {
    std::vector<float> scaled(raw.dim);
    for (int i = 0; i < raw.count; ++i) {
      for (int j = 0; j < raw.dim; ++j) scaled[j] = static_cast<float>(patches(i, j));
      strength[i] = texture_strength(scaled, cfg.patch_side);
    }
  }

  const int min_rows = raw.dim + 1;
  std::vector<int> rows(raw.count);
  for (int i = 0; i < raw.count; ++i) rows[i] = i;

  PerturbationEstimate est;
  est.selected_patches = raw.count;
  double variance = min_covariance_eigenvalue(patches, rows);
  est.sigma = std::sqrt(variance);
  if (raw.count < min_rows) return est;

  const double unit_quantile = unit_noise_strength_quantile(cfg.patch_side, cfg.confidence);
  for (int it = 0; it < cfg.max_iterations; ++it) {
    est.iterations_used = it + 1;
    const double tau = variance * unit_quantile;
    rows.clear();
    for (int i = 0; i < raw.count; ++i) {
      if (strength[i] < tau) rows.push_back(i);
    }
    if (static_cast<int>(rows.size()) < min_rows) {
      est.converged = false;
      return est;
    }
    const double next = min_covariance_eigenvalue(patches, rows);
    const double next_sigma = std::sqrt(next);
    const bool done = std::abs(next_sigma - est.sigma) < cfg.convergence_tol;
    variance = next;
    est.sigma = next_sigma;
    est.selected_patches = static_cast<int>(rows.size());
    if (done) {
      est.converged = true;
      return est;
    }
  }
  est.converged = false;
  return est;
}

Grade grade(const PerturbationEstimate& estimate, double threshold) {
  if (threshold < 0.0) throw std::invalid_argument("grade: threshold must be >= 0");
  return estimate.sigma < threshold ? Grade::kSmall : Grade::kLarge;
}

}  // namespace faddefend
