#include "faddefend/harness/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "faddefend/dip.hpp"
#include "faddefend/noise_estimator.hpp"
#include "faddefend/parallel.hpp"
#include "faddefend/preprocess.hpp"

namespace faddefend {

std::string to_string(DefenseVariant v) {
  switch (v) {
    case DefenseVariant::kNone: return "none";
    case DefenseVariant::kJpeg: return "jpeg";
    case DefenseVariant::kJpegFlip: return "jpeg+flip";
    case DefenseVariant::kDipJpegFlip: return "dip+jpeg+flip";
    case DefenseVariant::kFadDefend: return "faddefend";
  }
  return "?";
}

DefenseVariant defense_variant_from_string(const std::string& name) {
  for (const auto v : all_defense_variants()) {
    if (to_string(v) == name) return v;
  }
  throw std::invalid_argument("unknown defense variant '" + name + "'");
}

const std::vector<DefenseVariant>& all_defense_variants() {
  static const std::vector<DefenseVariant> all = {DefenseVariant::kNone, DefenseVariant::kJpeg,
                                                  DefenseVariant::kJpegFlip, DefenseVariant::kDipJpegFlip,
                                                  DefenseVariant::kFadDefend};
  return all;
}

CacheStats& CacheStats::operator+=(const CacheStats& o) {
  sigma_hits += o.sigma_hits;
  sigma_misses += o.sigma_misses;
  jpeg_hits += o.jpeg_hits;
  jpeg_misses += o.jpeg_misses;
  dip_hits += o.dip_hits;
  dip_misses += o.dip_misses;
  dip_jpeg_hits += o.dip_jpeg_hits;
  dip_jpeg_misses += o.dip_jpeg_misses;
  return *this;
}

double DefendedImageCache::sigma() {
  if (sigma_) {
    ++stats_.sigma_hits;
  } else {
    ++stats_.sigma_misses;
    sigma_ = estimate_sigma(img_, cfg_.estimator).sigma;
  }
  return *sigma_;
}

const ImageTensor& DefendedImageCache::jpeg(int qf) {
  auto it = jpeg_.find(qf);
  if (it != jpeg_.end()) {
    ++stats_.jpeg_hits;
    return it->second;
  }
  ++stats_.jpeg_misses;
  return jpeg_.emplace(qf, jpeg_roundtrip(img_, qf, cfg_.preprocess.chroma)).first->second;
}

const ImageTensor& DefendedImageCache::reconstruction() {
  if (reconstruction_) {
    ++stats_.dip_hits;
  } else {
    ++stats_.dip_misses;
    reconstruction_ = dip_reconstruct(img_, cfg_.generator, cfg_.dip).reconstruction;
  }
  return *reconstruction_;
}

const ImageTensor& DefendedImageCache::reconstruction_jpeg(int qf) {
  auto it = reconstruction_jpeg_.find(qf);
  if (it != reconstruction_jpeg_.end()) {
    ++stats_.dip_jpeg_hits;
    return it->second;
  }
  ++stats_.dip_jpeg_misses;
  const ImageTensor& rec = reconstruction();
  return reconstruction_jpeg_.emplace(qf, jpeg_roundtrip(rec, qf, cfg_.preprocess.chroma)).first->second;
}

ImageTensor DefendedImageCache::apply(DefenseVariant variant, int qf, double threshold) {
  const bool flip = cfg_.preprocess.apply_flip;
  switch (variant) {
    case DefenseVariant::kNone: return img_;
    case DefenseVariant::kJpeg: return jpeg(qf);
    case DefenseVariant::kJpegFlip: return mirror_flip(jpeg(qf));
    case DefenseVariant::kDipJpegFlip: return mirror_flip(reconstruction_jpeg(qf));
    case DefenseVariant::kFadDefend:
      if (route(threshold) == Grade::kSmall) return flip ? mirror_flip(jpeg(qf)) : jpeg(qf);
      return flip ? mirror_flip(reconstruction_jpeg(qf)) : reconstruction_jpeg(qf);
  }
  throw std::invalid_argument("unknown defense variant");
}

EvalReport evaluate_cells(std::span<const EvalCell> cells, const Classifier& model, const DefenseConfig& cfg,
                          const EvalOptions& options) {
  cfg.validate();
  if (options.variants.empty()) throw std::invalid_argument("evaluation needs at least one defense variant");
  if (options.quality_factors.empty()) throw std::invalid_argument("evaluation needs at least one quality factor");
  for (int qf : options.quality_factors) {
    if (qf < 1 || qf > 100) throw std::invalid_argument("quality factor must lie in [1, 100]");
  }

  EvalReport report;
  report.model = model.identity().to_string();
  report.defense_config = to_json(cfg);

  struct Slot {
    DefenseVariant variant;
    int qf;
  };
  std::vector<Slot> slots;
  for (const auto v : options.variants) {
    if (v == DefenseVariant::kNone) {
      slots.push_back({v, options.quality_factors.front()});
      continue;
    }
    for (int qf : options.quality_factors) slots.push_back({v, qf});
  }

  for (const auto& cell : cells) {
    if (cell.images.empty()) {
      std::ostringstream os;
      os << cell.family << "/" << cell.epsilon << ": no images";
      report.gaps.push_back(os.str());
      continue;
    }
    // correct[i][s], small[i][s]
    std::vector<std::vector<char>> correct(cell.images.size(), std::vector<char>(slots.size(), 0));
    std::vector<std::vector<char>> small(cell.images.size(), std::vector<char>(slots.size(), 0));
    std::vector<CacheStats> stats(cell.images.size());
    parallel_for(cell.images.size(), options.workers, [&](std::size_t i) {
      const LabeledImage& sample = cell.images[i];
      DefendedImageCache cache(sample.image, cfg);
      for (std::size_t s = 0; s < slots.size(); ++s) {
        const ImageTensor defended = cache.apply(slots[s].variant, slots[s].qf, cfg.threshold);
        correct[i][s] = model.predict_label(defended) == sample.label;
        if (slots[s].variant == DefenseVariant::kFadDefend) small[i][s] = cache.route(cfg.threshold) == Grade::kSmall;
      }
      stats[i] = cache.stats();
    });
    for (const auto& s : stats) report.cache += s;
    for (std::size_t s = 0; s < slots.size(); ++s) {
      EvalRow row;
      row.defense = to_string(slots[s].variant);
      row.family = cell.family;
      row.epsilon = cell.epsilon;
      row.quality_factor = slots[s].qf;
      row.n = cell.images.size();
      for (std::size_t i = 0; i < cell.images.size(); ++i) {
        row.correct += correct[i][s];
        row.small_routed += small[i][s];
      }
      row.accuracy = static_cast<double>(row.correct) / static_cast<double>(row.n);
      row.manifest_hash = cell.manifest_hash;
      report.rows.push_back(row);
    }
  }
  return report;
}

std::string eval_report_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "defense,family,epsilon,quality_factor,accuracy,n,correct,small_routed,manifest_hash\n";
  os << std::setprecision(6);
  for (const auto& r : report.rows) {
    os << r.defense << ',' << r.family << ',' << r.epsilon << ',' << r.quality_factor << ',' << r.accuracy << ','
       << r.n << ',' << r.correct << ',' << r.small_routed << ',' << r.manifest_hash << '\n';
  }
  return os.str();
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"defense", r.defense},
                    {"family", r.family},
                    {"epsilon", r.epsilon},
                    {"quality_factor", r.quality_factor},
                    {"accuracy", r.accuracy},
                    {"n", r.n},
                    {"correct", r.correct},
                    {"small_routed", r.small_routed},
                    {"manifest_hash", r.manifest_hash}});
  }
  const auto& c = report.cache;
  return {{"model", report.model},
          {"defense_config", report.defense_config},
          {"rows", rows},
          {"gaps", report.gaps},
          {"cache",
           {{"sigma", {{"hits", c.sigma_hits}, {"misses", c.sigma_misses}}},
            {"jpeg", {{"hits", c.jpeg_hits}, {"misses", c.jpeg_misses}}},
            {"dip", {{"hits", c.dip_hits}, {"misses", c.dip_misses}}},
            {"dip_jpeg", {{"hits", c.dip_jpeg_hits}, {"misses", c.dip_jpeg_misses}}}}}};
}

std::string eval_report_table(const EvalReport& report) {
  // Columns are (cell, qf); kNone ignores QF and is shown in every QF column of its cell.
  auto cell_name = [](const EvalRow& r) {
    std::ostringstream os;
    os << r.family;
    if (r.family != "clean") os << "-" << r.epsilon;
    return os.str();
  };
  std::vector<std::pair<std::string, int>> columns;
  std::vector<std::string> defenses;
  std::map<std::pair<std::string, std::string>, double> by_cell;  // kNone rows
  std::map<std::pair<std::string, std::pair<std::string, int>>, double> values;
  for (const auto& r : report.rows) {
    const std::string cell = cell_name(r);
    if (std::find(defenses.begin(), defenses.end(), r.defense) == defenses.end()) defenses.push_back(r.defense);
    if (r.defense == "none") {
      by_cell[{r.defense, cell}] = r.accuracy;
      continue;
    }
    const std::pair<std::string, int> col{cell, r.quality_factor};
    if (std::find(columns.begin(), columns.end(), col) == columns.end()) columns.push_back(col);
    values[{r.defense, col}] = r.accuracy;
  }
  std::ostringstream os;
  os << "model: " << report.model << "\n" << std::left << std::setw(15) << "defense";
  for (const auto& [cell, qf] : columns) os << std::setw(15) << (cell + "@q" + std::to_string(qf));
  os << "\n";
  for (const auto& d : defenses) {
    os << std::setw(15) << d;
    for (const auto& col : columns) {
      std::optional<double> v;
      if (auto it = values.find({d, col}); it != values.end()) v = it->second;
      if (auto it = by_cell.find({d, col.first}); it != by_cell.end()) v = it->second;
      std::ostringstream cell;
      if (v) cell << std::fixed << std::setprecision(1) << 100.0 * *v;
      else cell << "-";
      os << std::setw(15) << cell.str();
    }
    os << "\n";
  }
  for (const auto& g : report.gaps) os << "gap: " << g << "\n";
  return os.str();
}

const EvalRow& find_row(const EvalReport& report, DefenseVariant variant, const std::string& family, double epsilon,
                        int quality_factor) {
  const std::string name = to_string(variant);
  for (const auto& r : report.rows) {
    if (r.defense == name && r.family == family && r.epsilon == epsilon &&
        (variant == DefenseVariant::kNone || r.quality_factor == quality_factor)) {
      return r;
    }
  }
  throw std::out_of_range("no report row for " + name + " " + family);
}

}  // namespace faddefend
