#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "faddefend/attacks.hpp"
#include "faddefend/harness/evaluate.hpp"

namespace faddefend {

struct AttackGrid {
  std::vector<AttackFamily> families;
  std::vector<double> epsilons;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct AttackCellInfo {
  AttackFamily family = AttackFamily::kFgsm;
  double epsilon = 0.0;
  std::filesystem::path directory;
  std::string manifest_hash;
  std::size_t count = 0;
};

/// "8", "2.5": the directory name used for an epsilon.
std::string epsilon_label(double epsilon);

nlohmann::json to_json(const AttackSpec& spec);
/// Manifest for a crafted set; `files` are the PNG names in entry order and
/// `hashes` their content hashes. Contains no timestamps, so equal inputs give
/// byte-identical manifests.
nlohmann::json manifest_json(const AttackManifest& manifest, const std::vector<std::string>& files,
                             const std::vector<std::string>& hashes);

/// Craft every (family, epsilon) cell with AttackSpec::defaults and write
/// out/<family>/<eps>/<index>.png plus manifest.json.
std::vector<AttackCellInfo> write_attack_sets(const Classifier& model, std::span<const LabeledImage> clean,
                                              const AttackGrid& grid, const std::filesystem::path& out);

/// Read a directory written by write_attack_sets.
EvalCell load_attack_cell(const std::filesystem::path& dir);

/// All cells under `root` (root/<family>/<eps>/manifest.json), sorted by family then epsilon.
std::vector<EvalCell> load_attack_tree(const std::filesystem::path& root);

/// In-memory equivalent of a PNG round trip of each image.
std::vector<LabeledImage> quantized(std::span<const LabeledImage> set);

}  // namespace faddefend
