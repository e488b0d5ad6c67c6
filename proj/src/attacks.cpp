#include "faddefend/attacks.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <sstream>

#include "faddefend/parallel.hpp"

namespace faddefend {

namespace {

float sign_of(double v) { return static_cast<float>((v > 0.0) - (v < 0.0)); }

float to_unit(double v255) { return static_cast<float>(v255 / 255.0); }

// Shared projected sign-gradient loop for BIM, MIFGSM and PGD. With
// use_momentum false the update direction is sign(grad).
ImageTensor iterate(const Classifier& model, const ImageTensor& img, int label, const AttackSpec& spec,
                    bool use_momentum) {
  const float eps = to_unit(spec.epsilon);
  const float alpha = to_unit(spec.step_size);
  ImageTensor x = img;
  if (spec.random_start) {
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<float> u(-eps, eps);
    for (float& v : x.values()) v += u(rng);
    x.clamp01();
  }
  const auto origin = img.values();
  std::vector<double> velocity(use_momentum ? img.size() : 0, 0.0);
  for (int step = 0; step < spec.steps; ++step) {
    const std::vector<float> grad = model.input_gradient(x, label);
    if (use_momentum) {
      double l1 = 0.0;
      for (float g : grad) l1 += std::abs(static_cast<double>(g));
      if (l1 > 0.0) {
        for (std::size_t i = 0; i < grad.size(); ++i) {
          velocity[i] = spec.momentum * velocity[i] + static_cast<double>(grad[i]) / l1;
        }
      }
    }
    auto values = x.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const float dir = use_momentum ? sign_of(velocity[i]) : sign_of(grad[i]);
      const float moved = values[i] + alpha * dir;
      const float projected = std::clamp(moved, origin[i] - eps, origin[i] + eps);
      values[i] = std::clamp(projected, 0.0f, 1.0f);
    }
  }
  return x;
}

void require_family(const AttackSpec& spec, AttackFamily family) {
  spec.validate();
  if (spec.family != family) {
    throw std::invalid_argument("attack spec family " + to_string(spec.family) + " passed to " +
                                to_string(family));
  }
}

}  // namespace

std::string to_string(AttackFamily family) {
  switch (family) {
    case AttackFamily::kFgsm: return "FGSM";
    case AttackFamily::kBim: return "BIM";
    case AttackFamily::kMifgsm: return "MIFGSM";
    case AttackFamily::kPgd: return "PGD";
  }
  return "?";
}

AttackFamily attack_family_from_string(const std::string& name) {
  std::string upper = name;
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  if (upper == "FGSM") return AttackFamily::kFgsm;
  if (upper == "BIM") return AttackFamily::kBim;
  if (upper == "MIFGSM" || upper == "MI-FGSM") return AttackFamily::kMifgsm;
  if (upper == "PGD") return AttackFamily::kPgd;
  throw std::invalid_argument("unknown attack family '" + name + "'");
}

AttackSpec AttackSpec::defaults(AttackFamily family, double epsilon, std::uint64_t seed) {
  AttackSpec spec;
  spec.family = family;
  spec.epsilon = epsilon;
  spec.seed = seed;
  if (family == AttackFamily::kFgsm) {
    spec.steps = 1;
    spec.step_size = epsilon;
  } else {
    spec.steps = 10;
    spec.step_size = 2.0 * epsilon / spec.steps;
  }
  spec.momentum = 1.0;
  spec.random_start = family == AttackFamily::kPgd;
  return spec;
}

void AttackSpec::validate() const {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("attack epsilon must be >= 0");
  if (steps < 1) throw std::invalid_argument("attack steps must be >= 1");
  if (family == AttackFamily::kFgsm && steps != 1) throw std::invalid_argument("FGSM takes exactly one step");
  if (!(step_size >= 0.0)) throw std::invalid_argument("attack step size must be >= 0");
  if (!(momentum >= 0.0)) throw std::invalid_argument("attack momentum must be >= 0");
}

std::string AttackSpec::to_string() const {
  std::ostringstream os;
  os << faddefend::to_string(family) << "(eps=" << epsilon << "/255, steps=" << steps << ", step=" << step_size
     << "/255";
  if (family == AttackFamily::kMifgsm) os << ", mu=" << momentum;
  if (family == AttackFamily::kPgd) os << ", random_start=" << (random_start ? "on" : "off");
  os << ", seed=" << seed << ")";
  return os.str();
}

ImageTensor fgsm(const Classifier& model, const ImageTensor& img, int label, const AttackSpec& spec) {
  require_family(spec, AttackFamily::kFgsm);
  const float eps = to_unit(spec.epsilon);
  const std::vector<float> grad = model.input_gradient(img, label);
  ImageTensor out = img;
  auto values = out.values();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = values[i] + eps * sign_of(grad[i]);
  return out.clamp01();
}

ImageTensor bim(const Classifier& model, const ImageTensor& img, int label, const AttackSpec& spec) {
  require_family(spec, AttackFamily::kBim);
  AttackSpec plain = spec;
  plain.random_start = false;
  return iterate(model, img, label, plain, false);
}

ImageTensor mifgsm(const Classifier& model, const ImageTensor& img, int label, const AttackSpec& spec) {
  require_family(spec, AttackFamily::kMifgsm);
  AttackSpec plain = spec;
  plain.random_start = false;
  return iterate(model, img, label, plain, true);
}

ImageTensor pgd(const Classifier& model, const ImageTensor& img, int label, const AttackSpec& spec) {
  require_family(spec, AttackFamily::kPgd);
  return iterate(model, img, label, spec, false);
}

ImageTensor run_attack(const Classifier& model, const ImageTensor& img, int label, const AttackSpec& spec) {
  switch (spec.family) {
    case AttackFamily::kFgsm: return fgsm(model, img, label, spec);
    case AttackFamily::kBim: return bim(model, img, label, spec);
    case AttackFamily::kMifgsm: return mifgsm(model, img, label, spec);
    case AttackFamily::kPgd: return pgd(model, img, label, spec);
  }
  throw std::invalid_argument("unknown attack family");
}

std::uint64_t derive_seed(std::uint64_t base, const std::string& source_id) {
  // FNV-1a over the id, then a splitmix64 finalizer mixed with the base seed.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : source_id) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t z = h ^ (base + 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<LabeledImage> screen(const Classifier& model, std::span<const LabeledImage> set) {
  std::vector<ImageTensor> images;
  images.reserve(set.size());
  for (const auto& s : set) images.push_back(s.image);
  const auto predicted = model.predict_labels(images);
  std::vector<LabeledImage> kept;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (predicted[i] == set[i].label) kept.push_back(set[i]);
  }
  return kept;
}

CraftedSet craft_dataset(const Classifier& model, std::span<const LabeledImage> clean_set,
                         const AttackSpec& spec, int workers) {
  spec.validate();
  if (clean_set.empty()) throw DatasetError("craft_dataset: clean set is empty");
  std::vector<LabeledImage> kept = screen(model, clean_set);
  if (kept.empty()) throw DatasetError("craft_dataset: no image survived screening");

  CraftedSet out;
  out.manifest.spec = spec;
  out.manifest.model = model.identity();
  out.manifest.clean_count = clean_set.size();
  out.manifest.screened_count = kept.size();
  out.images.resize(kept.size());
  out.manifest.entries.resize(kept.size());

  parallel_for(kept.size(), workers, [&](std::size_t i) {
    const auto& src = kept[i];
    AttackSpec local = spec;
    local.seed = derive_seed(spec.seed, src.source_id);
    ImageTensor adv = run_attack(model, src.image, src.label, local);
    ManifestEntry& e = out.manifest.entries[i];
    e.source_id = src.source_id;
    e.label = src.label;
    e.seed = local.seed;
    e.linf = linf_distance(adv, src.image);
    e.linf_bytes = linf_distance(from_bytes_scale(to_bytes_scale(adv)), from_bytes_scale(to_bytes_scale(src.image)));
    e.fooled = model.predict_label(adv) != src.label;
    out.images[i] = LabeledImage{std::move(adv), src.label, src.source_id};
  });
  return out;
}

}  // namespace faddefend
