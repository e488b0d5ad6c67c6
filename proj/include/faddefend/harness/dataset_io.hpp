#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "faddefend/image.hpp"

namespace faddefend {

/// 64-bit FNV-1a, used for content and manifest hashes.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(const std::string& text);
std::string hex64(std::uint64_t v);
/// Hash of the file's bytes.
std::string file_hash(const std::filesystem::path& path);
/// Hash of the JSON dump (sorted keys) of `j`.
std::string json_hash(const nlohmann::json& j);

struct DatasetEntry {
  /// Path relative to the dataset root, '/' separated.
  std::string path;
  std::string source_id;
  int label = 0;
  std::string hash;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<std::string> class_names;
  std::vector<DatasetEntry> entries;
  /// Files skipped with a reason (lossy formats, unreadable PNGs, strays).
  std::vector<std::string> warnings;
};

/// Scan root/<class>/... for PNG images. Classes are the sorted names of the
/// immediate subdirectories; source ids are "<class>/<relative path>".
/// Throws DatasetError when nothing usable is found.
DatasetManifest ingest_folder(const std::filesystem::path& root);

nlohmann::json to_json(const DatasetManifest& m);
DatasetManifest dataset_manifest_from_json(const nlohmann::json& j);

std::vector<LabeledImage> load_dataset(const DatasetManifest& m);

/// Write `set` as root/<class>/<file>.png, file names derived from source ids.
void write_dataset_folder(std::span<const LabeledImage> set, const std::vector<std::string>& class_names,
                          const std::filesystem::path& root);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const nlohmann::json& j, const std::filesystem::path& path);
void write_text_file(const std::string& text, const std::filesystem::path& path);

}  // namespace faddefend
