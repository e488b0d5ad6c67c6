#include "faddefend/harness/dataset_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "faddefend/attacks.hpp"
#include "faddefend/harness/png_io.hpp"

namespace faddefend {

namespace fs = std::filesystem;

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& text) {
  return fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hex64(fnv1a64(bytes));
}

std::string json_hash(const nlohmann::json& j) { return hex64(fnv1a64(j.dump())); }

namespace {

std::string lower_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

}  // namespace

DatasetManifest ingest_folder(const fs::path& root) {
  if (!fs::is_directory(root)) throw DatasetError("dataset folder " + root.string() + " does not exist");
  DatasetManifest m;
  m.root = root;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) m.class_names.push_back(e.path().filename().string());
    else if (e.path().filename() != "manifest.json") m.warnings.push_back(e.path().filename().string() + ": not inside a class folder, skipped");
  }
  std::sort(m.class_names.begin(), m.class_names.end());
  for (std::size_t label = 0; label < m.class_names.size(); ++label) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root / m.class_names[label])) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      const std::string rel = fs::relative(file, root).generic_string();
      const std::string ext = lower_extension(file);
      if (ext == ".jpg" || ext == ".jpeg" || ext == ".jfif" || ext == ".webp") {
        m.warnings.push_back(rel + ": lossy format rejected, would pre-compress the input");
        continue;
      }
      if (ext != ".png") {
        m.warnings.push_back(rel + ": not a PNG, skipped");
        continue;
      }
      try {
        const ImageTensor img = read_png(file);
        require_valid_image(img, "ingest");
      } catch (const std::exception& ex) {
        m.warnings.push_back(rel + ": unreadable, " + ex.what());
        continue;
      }
      m.entries.push_back({rel, rel, static_cast<int>(label), file_hash(file)});
    }
  }
  if (m.entries.empty()) throw DatasetError("no usable PNG images under " + root.string());
  return m;
}

nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries) {
    entries.push_back({{"path", e.path}, {"source_id", e.source_id}, {"label", e.label}, {"hash", e.hash}});
  }
  return {{"root", m.root.string()}, {"class_names", m.class_names}, {"entries", entries}, {"warnings", m.warnings}};
}

DatasetManifest dataset_manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  m.root = j.at("root").get<std::string>();
  m.class_names = j.at("class_names").get<std::vector<std::string>>();
  for (const auto& e : j.at("entries")) {
    m.entries.push_back({e.at("path").get<std::string>(), e.at("source_id").get<std::string>(), e.at("label").get<int>(),
                         e.value("hash", std::string{})});
  }
  if (j.contains("warnings")) m.warnings = j.at("warnings").get<std::vector<std::string>>();
  return m;
}

std::vector<LabeledImage> load_dataset(const DatasetManifest& m) {
  std::vector<LabeledImage> out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) out.push_back({read_png(m.root / e.path), e.label, e.source_id});
  return out;
}

void write_dataset_folder(std::span<const LabeledImage> set, const std::vector<std::string>& class_names,
                          const fs::path& root) {
  for (const auto& s : set) {
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= class_names.size()) {
      throw std::invalid_argument("label out of range for " + s.source_id);
    }
    std::string name = s.source_id;
    std::replace(name.begin(), name.end(), '/', '_');
    const fs::path dir = root / class_names[static_cast<std::size_t>(s.label)];
    fs::create_directories(dir);
    write_png(s.image, dir / (name + ".png"));
  }
}

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return nlohmann::json::parse(in);
}

void write_text_file(const std::string& text, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

void write_json_file(const nlohmann::json& j, const fs::path& path) { write_text_file(j.dump(2) + "\n", path); }

}  // namespace faddefend
