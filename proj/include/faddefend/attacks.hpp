#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "faddefend/classifier.hpp"
#include "faddefend/image.hpp"

namespace faddefend {

enum class AttackFamily { kFgsm, kBim, kMifgsm, kPgd };

std::string to_string(AttackFamily family);
AttackFamily attack_family_from_string(const std::string& name);

/// Untargeted L-infinity attack settings. epsilon and step_size are in 1/255
/// intensity units.
struct AttackSpec {
  AttackFamily family = AttackFamily::kFgsm;
  double epsilon = 8.0;
  int steps = 1;
  double step_size = 8.0;
  double momentum = 1.0;
  bool random_start = false;
  std::uint64_t seed = 0;

  /// steps = 10, step = 2*eps/steps for the iterative families, momentum 1,
  /// random start on for PGD.
  static AttackSpec defaults(AttackFamily family, double epsilon, std::uint64_t seed = 0);

  void validate() const;
  std::string to_string() const;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ImageTensor fgsm(const Classifier& model, const ImageTensor& img, int label, const AttackSpec& spec);
ImageTensor bim(const Classifier& model, const ImageTensor& img, int label, const AttackSpec& spec);
ImageTensor mifgsm(const Classifier& model, const ImageTensor& img, int label, const AttackSpec& spec);
ImageTensor pgd(const Classifier& model, const ImageTensor& img, int label, const AttackSpec& spec);

/// Dispatch on spec.family.
ImageTensor run_attack(const Classifier& model, const ImageTensor& img, int label, const AttackSpec& spec);

/// Per-image seed derived from the spec seed and the image's source id.
std::uint64_t derive_seed(std::uint64_t base, const std::string& source_id);

struct ManifestEntry {
  std::string source_id;
  int label = 0;
  std::uint64_t seed = 0;
  /// ||x_adv - x||_inf on the [0, 1] scale, before byte quantization.
  double linf = 0.0;
  /// Same norm after both images are rounded to 8 bits.
  double linf_bytes = 0.0;
  bool fooled = false;
};

struct AttackManifest {
  AttackSpec spec;
  ClassifierIdentity model;
  std::size_t clean_count = 0;
  std::size_t screened_count = 0;
  std::vector<ManifestEntry> entries;
};

struct CraftedSet {
  std::vector<LabeledImage> images;
  AttackManifest manifest;
};

/// Keep the images `model` already classifies correctly, then attack each
/// with a per-image seed. Throws DatasetError if nothing survives screening.
CraftedSet craft_dataset(const Classifier& model, std::span<const LabeledImage> clean_set,
                         const AttackSpec& spec, int workers = 1);

/// The subset of `set` that `model` classifies correctly.
std::vector<LabeledImage> screen(const Classifier& model, std::span<const LabeledImage> set);

}  // namespace faddefend
