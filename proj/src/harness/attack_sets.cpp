#include "faddefend/harness/attack_sets.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

#include "faddefend/harness/dataset_io.hpp"
#include "faddefend/harness/png_io.hpp"

namespace faddefend {

namespace fs = std::filesystem;

std::string epsilon_label(double epsilon) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", epsilon);
  return buf;
}

nlohmann::json to_json(const AttackSpec& spec) {
  return {{"family", to_string(spec.family)}, {"epsilon", spec.epsilon},     {"steps", spec.steps},
          {"step_size", spec.step_size},      {"momentum", spec.momentum},   {"random_start", spec.random_start},
          {"seed", spec.seed}};
}

nlohmann::json manifest_json(const AttackManifest& manifest, const std::vector<std::string>& files,
                             const std::vector<std::string>& hashes) {
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& e = manifest.entries[i];
    entries.push_back({{"file", files.at(i)},
                       {"source_id", e.source_id},
                       {"label", e.label},
                       {"seed", e.seed},
                       {"linf", e.linf},
                       {"linf_bytes", e.linf_bytes},
                       {"fooled", e.fooled},
                       {"hash", hashes.at(i)}});
  }
  return {{"format_version", 1},
          {"spec", to_json(manifest.spec)},
          {"model", manifest.model.to_string()},
          {"clean_count", manifest.clean_count},
          {"screened_count", manifest.screened_count},
          {"entries", entries}};
}

std::vector<AttackCellInfo> write_attack_sets(const Classifier& model, std::span<const LabeledImage> clean,
                                              const AttackGrid& grid, const fs::path& out) {
  if (grid.families.empty() || grid.epsilons.empty()) throw std::invalid_argument("attack grid is empty");
  std::vector<AttackCellInfo> cells;
  for (const auto family : grid.families) {
    for (const double eps : grid.epsilons) {
      const CraftedSet crafted = craft_dataset(model, clean, AttackSpec::defaults(family, eps, grid.seed), grid.workers);
      const fs::path dir = out / to_string(family) / epsilon_label(eps);
      fs::create_directories(dir);
      std::vector<std::string> files, hashes;
      for (std::size_t i = 0; i < crafted.images.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%05zu.png", i);
        write_png(crafted.images[i].image, dir / name);
        files.emplace_back(name);
        hashes.push_back(file_hash(dir / name));
      }
      const nlohmann::json manifest = manifest_json(crafted.manifest, files, hashes);
      write_json_file(manifest, dir / "manifest.json");
      cells.push_back({family, eps, dir, json_hash(manifest), crafted.images.size()});
    }
  }
  return cells;
}

EvalCell load_attack_cell(const fs::path& dir) {
  const nlohmann::json manifest = read_json_file(dir / "manifest.json");
  EvalCell cell;
  cell.family = manifest.at("spec").at("family").get<std::string>();
  cell.epsilon = manifest.at("spec").at("epsilon").get<double>();
  cell.crafted_on = manifest.at("model").get<std::string>();
  cell.manifest_hash = json_hash(manifest);
  for (const auto& e : manifest.at("entries")) {
    cell.images.push_back({read_png(dir / e.at("file").get<std::string>()), e.at("label").get<int>(),
                           e.at("source_id").get<std::string>()});
  }
  return cell;
}

std::vector<EvalCell> load_attack_tree(const fs::path& root) {
  std::vector<fs::path> dirs;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().filename() == "manifest.json") dirs.push_back(e.path().parent_path());
  }
  std::vector<EvalCell> cells;
  for (const auto& d : dirs) cells.push_back(load_attack_cell(d));
  std::sort(cells.begin(), cells.end(), [](const EvalCell& a, const EvalCell& b) {
    return std::tie(a.family, a.epsilon) < std::tie(b.family, b.epsilon);
  });
  return cells;
}

std::vector<LabeledImage> quantized(std::span<const LabeledImage> set) {
  std::vector<LabeledImage> out;
  out.reserve(set.size());
  for (const auto& s : set) out.push_back({from_bytes_scale(to_bytes_scale(s.image)), s.label, s.source_id});
  return out;
}

}  // namespace faddefend
