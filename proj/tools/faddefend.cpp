// Command-line front end: ingest, train, attack, calibrate, evaluate,
// qf-sweep, bench, dip-trace (plus synth-desk to produce a dataset).

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "faddefend/attacks.hpp"
#include "faddefend/classifier.hpp"
#include "faddefend/desk_dataset.hpp"
#include "faddefend/harness/attack_sets.hpp"
#include "faddefend/harness/bench.hpp"
#include "faddefend/harness/dataset_io.hpp"
#include "faddefend/harness/evaluate.hpp"
#include "faddefend/harness/experiments.hpp"
#include "faddefend/harness/png_io.hpp"
#include "faddefend/pipeline.hpp"

namespace fs = std::filesystem;
using namespace faddefend;

namespace {

// Defense settings shared by calibrate, evaluate, qf-sweep and bench. Order of
// precedence: flag, then --defense-config JSON, then built-in defaults.
struct DefenseFlags {
  std::string json_path;
  std::optional<double> threshold;
  std::optional<int> quality;
  bool no_flip = false;
  std::optional<std::string> chroma;
  std::optional<int> patch, stride;
  std::optional<double> confidence;
  std::optional<int> dip_iterations;
  std::optional<double> dip_lr;
  std::optional<std::uint64_t> dip_seed;
  std::optional<int> gen_depth, gen_base, gen_max, gen_skip;

  void attach(CLI::App* cmd) {
    cmd->add_option("--defense-config", json_path, "DefenseConfig JSON file")->check(CLI::ExistingFile);
    cmd->add_option("--threshold", threshold, "Routing threshold (sigma, 0-255 scale)");
    cmd->add_option("--quality", quality, "JPEG quality factor")->check(CLI::Range(1, 100));
    cmd->add_flag("--no-flip", no_flip, "Skip the mirror flip");
    cmd->add_option("--chroma", chroma, "JPEG chroma subsampling: 420 or 444");
    cmd->add_option("--patch", patch, "Estimator patch side");
    cmd->add_option("--stride", stride, "Estimator patch stride");
    cmd->add_option("--confidence", confidence, "Estimator texture percentile");
    cmd->add_option("--dip-iterations", dip_iterations, "DIP iterations");
    cmd->add_option("--dip-lr", dip_lr, "DIP learning rate");
    cmd->add_option("--dip-seed", dip_seed, "DIP noise/initialization seed");
    cmd->add_option("--gen-depth", gen_depth, "Generator depth");
    cmd->add_option("--gen-base", gen_base, "Generator base channels");
    cmd->add_option("--gen-max", gen_max, "Generator channel cap");
    cmd->add_option("--gen-skip", gen_skip, "Generator skip channels");
  }

  DefenseConfig resolve() const {
    DefenseConfig cfg;
    if (!json_path.empty()) cfg = defense_config_from_json(read_json_file(json_path));
    if (threshold) cfg.threshold = *threshold;
    if (quality) cfg.preprocess.quality_factor = *quality;
    if (no_flip) cfg.preprocess.apply_flip = false;
    if (chroma) cfg.preprocess.chroma = *chroma == "444" ? ChromaSubsampling::k444 : ChromaSubsampling::k420;
    if (patch) cfg.estimator.patch_side = *patch;
    if (stride) cfg.estimator.stride = *stride;
    if (confidence) cfg.estimator.confidence = *confidence;
    if (dip_iterations) cfg.dip.iterations = *dip_iterations;
    if (dip_lr) cfg.dip.learning_rate = *dip_lr;
    if (dip_seed) cfg.dip.noise_seed = *dip_seed;
    if (gen_depth) cfg.generator.depth = *gen_depth;
    if (gen_base) cfg.generator.base_channels = *gen_base;
    if (gen_max) cfg.generator.max_channels = *gen_max;
    if (gen_skip) cfg.generator.skip_channels = *gen_skip;
    cfg.validate();
    return cfg;
  }
};

std::vector<LabeledImage> load_manifest_images(const std::string& path, std::size_t limit) {
  auto images = load_dataset(dataset_manifest_from_json(read_json_file(path)));
  if (limit > 0 && images.size() > limit) images.resize(limit);
  return images;
}

std::vector<EvalCell> load_cells(const std::vector<std::string>& roots) {
  std::vector<EvalCell> cells;
  for (const auto& r : roots) {
    if (fs::exists(fs::path(r) / "manifest.json")) {
      cells.push_back(load_attack_cell(r));
      continue;
    }
    auto tree = load_attack_tree(r);
    cells.insert(cells.end(), tree.begin(), tree.end());
  }
  if (cells.empty()) throw DatasetError("no attack sets found");
  return cells;
}

EvalCell clean_cell(const std::string& manifest_path, std::size_t limit) {
  EvalCell cell;
  cell.family = "clean";
  cell.manifest_hash = json_hash(read_json_file(manifest_path));
  cell.images = load_manifest_images(manifest_path, limit);
  return cell;
}

void write_eval_outputs(const EvalReport& report, const fs::path& out, const std::string& stem) {
  write_json_file(to_json(report), out / (stem + ".json"));
  write_text_file(eval_report_csv(report), out / (stem + ".csv"));
  const std::string table = eval_report_table(report);
  write_text_file(table, out / (stem + ".txt"));
  std::cout << table;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perturbation-graded adversarial defense toolkit"};
  app.set_config("--config", "", "TOML file mirroring the command-line flags (flags win)");
  app.require_subcommand(1);

  // synth-desk
  DeskDatasetOptions synth;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth-desk", "Write the procedural desk dataset as class folders of PNGs");
  synth_cmd->add_option("--out", synth_out, "Output folder")->required();
  synth_cmd->add_option("--per-class", synth.per_class, "Images per class");
  synth_cmd->add_option("--size", synth.size, "Image side");
  synth_cmd->add_option("--seed", synth.seed, "Generator seed");
  synth_cmd->add_option("--split", synth.split, "Source-id prefix");

  // ingest
  std::string ingest_folder_path, ingest_out;
  auto* ingest_cmd = app.add_subcommand("ingest", "Build a dataset manifest from a folder of class-labeled PNGs");
  ingest_cmd->add_option("--folder", ingest_folder_path, "Dataset root")->required();
  ingest_cmd->add_option("--out", ingest_out, "Manifest path (default <folder>/manifest.json)");

  // train
  std::string train_manifest, test_manifest, train_out, arch_name = "A";
  TrainOptions train_opts;
  auto* train_cmd = app.add_subcommand("train", "Train a desk classifier and write a checkpoint");
  train_cmd->add_option("--train", train_manifest, "Training manifest")->required();
  train_cmd->add_option("--test", test_manifest, "Test manifest")->required();
  train_cmd->add_option("--arch", arch_name, "small_conv_A or small_conv_B");
  train_cmd->add_option("--epochs", train_opts.epochs);
  train_cmd->add_option("--batch-size", train_opts.batch_size);
  train_cmd->add_option("--lr", train_opts.learning_rate);
  train_cmd->add_option("--seed", train_opts.seed);
  train_cmd->add_option("--name", train_opts.name);
  train_cmd->add_option("--dataset-tag", train_opts.dataset_tag);
  train_cmd->add_option("--out", train_out, "Checkpoint path")->required();

  // attack
  std::string attack_model, attack_data, attack_out;
  std::vector<std::string> attack_families = {"FGSM", "BIM", "MIFGSM", "PGD"};
  std::vector<double> attack_eps = {2, 4, 8, 16};
  std::uint64_t attack_seed = 0;
  std::size_t attack_limit = 0;
  int attack_workers = 1;
  auto* attack_cmd = app.add_subcommand("attack", "Craft adversarial sets into out/<family>/<eps>/");
  attack_cmd->add_option("--model", attack_model, "Checkpoint of the attacked model")->required();
  attack_cmd->add_option("--data", attack_data, "Clean dataset manifest")->required();
  attack_cmd->add_option("--families", attack_families, "Attack families");
  attack_cmd->add_option("--eps", attack_eps, "Epsilons in 1/255 units");
  attack_cmd->add_option("--seed", attack_seed);
  attack_cmd->add_option("--limit", attack_limit, "Use only the first N clean images");
  attack_cmd->add_option("--workers", attack_workers, "Worker threads (0 = all cores)");
  attack_cmd->add_option("--out", attack_out)->required();

  // calibrate
  std::string cal_model, cal_clean, cal_out, cal_thresholds = "0:6:0.25";
  std::vector<std::string> cal_sets;
  double cal_expected = 0.5;
  int cal_workers = 1;
  DefenseFlags cal_flags;
  auto* cal_cmd = app.add_subcommand("calibrate", "Sweep routing thresholds and pick the expected-accuracy crossing");
  cal_cmd->add_option("--model", cal_model)->required();
  cal_cmd->add_option("--sets", cal_sets, "Attack tree roots or cell directories")->required();
  cal_cmd->add_option("--include-clean", cal_clean, "Also pool this clean manifest");
  cal_cmd->add_option("--thresholds", cal_thresholds, "start:stop:step or comma list");
  cal_cmd->add_option("--expected", cal_expected, "Expected accuracy")->check(CLI::Range(0.0, 1.0));
  cal_cmd->add_option("--workers", cal_workers);
  cal_cmd->add_option("--out", cal_out)->required();
  cal_flags.attach(cal_cmd);

  // evaluate
  std::string eval_model, eval_clean, eval_out;
  std::vector<std::string> eval_sets, eval_variants;
  std::size_t eval_limit = 0;
  bool eval_transfer = false;
  int eval_workers = 1;
  DefenseFlags eval_flags;
  auto* eval_cmd = app.add_subcommand("evaluate", "Accuracy matrix of defense variants over attack sets");
  eval_cmd->add_option("--model", eval_model, "Evaluated model (the target in transfer mode)")->required();
  eval_cmd->add_option("--sets", eval_sets, "Attack tree roots or cell directories")->required();
  eval_cmd->add_option("--clean", eval_clean, "Clean manifest evaluated as an extra cell");
  eval_cmd->add_option("--clean-limit", eval_limit, "Use only the first N clean images");
  eval_cmd->add_option("--variants", eval_variants, "Subset of none, jpeg, jpeg+flip, dip+jpeg+flip, faddefend");
  eval_cmd->add_flag("--transfer", eval_transfer, "Sets were crafted on a different (surrogate) model");
  eval_cmd->add_option("--workers", eval_workers);
  eval_cmd->add_option("--out", eval_out)->required();
  eval_flags.attach(eval_cmd);

  // qf-sweep
  std::string qf_model, qf_out;
  std::vector<std::string> qf_sets;
  std::vector<int> qf_list = {50, 70, 90, 95};
  int qf_workers = 1;
  DefenseFlags qf_flags;
  auto* qf_cmd = app.add_subcommand("qf-sweep", "Accuracy vs JPEG quality for jpeg+flip and the routed defense");
  qf_cmd->add_option("--model", qf_model)->required();
  qf_cmd->add_option("--sets", qf_sets)->required();
  qf_cmd->add_option("--qf", qf_list, "Quality factors");
  qf_cmd->add_option("--workers", qf_workers);
  qf_cmd->add_option("--out", qf_out)->required();
  qf_flags.attach(qf_cmd);

  // bench
  std::string bench_out;
  std::vector<std::string> bench_sets;
  std::size_t bench_limit = 0;
  DefenseFlags bench_flags;
  auto* bench_cmd = app.add_subcommand("bench", "Wall time and peak memory: routed defense vs DIP on everything");
  bench_cmd->add_option("--sets", bench_sets, "Attack tree roots or cell directories (pooled)")->required();
  bench_cmd->add_option("--limit", bench_limit, "Use only the first N pooled images");
  bench_cmd->add_option("--out", bench_out)->required();
  bench_flags.attach(bench_cmd);

  // dip-trace
  std::string trace_image, trace_clean, trace_model, trace_out;
  int trace_every = 25;
  DefenseFlags trace_flags;
  auto* trace_cmd = app.add_subcommand("dip-trace", "Reconstruction snapshots and PSNR/prediction trajectory");
  trace_cmd->add_option("--image", trace_image, "Target PNG")->required()->check(CLI::ExistingFile);
  trace_cmd->add_option("--clean", trace_clean, "Clean reference PNG")->check(CLI::ExistingFile);
  trace_cmd->add_option("--model", trace_model, "Checkpoint used to label snapshots");
  trace_cmd->add_option("--every", trace_every, "Snapshot period");
  trace_cmd->add_option("--out", trace_out)->required();
  trace_flags.attach(trace_cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_cmd->parsed()) {
      const auto set = generate_desk_dataset(synth);
      write_dataset_folder(set, desk_class_names(), synth_out);
      std::cout << "wrote " << set.size() << " images to " << synth_out << "\n";
    } else if (ingest_cmd->parsed()) {
      const DatasetManifest m = ingest_folder(ingest_folder_path);
      const fs::path out = ingest_out.empty() ? fs::path(ingest_folder_path) / "manifest.json" : fs::path(ingest_out);
      write_json_file(to_json(m), out);
      for (const auto& w : m.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << m.entries.size() << " images, " << m.class_names.size() << " classes -> " << out << "\n";
    } else if (train_cmd->parsed()) {
      const auto train_manifest_data = dataset_manifest_from_json(read_json_file(train_manifest));
      const auto train = load_dataset(train_manifest_data);
      const auto test = load_manifest_images(test_manifest, 0);
      train_opts.arch = architecture_from_string(arch_name);
      const auto trained =
          train_classifier(train, test, static_cast<int>(train_manifest_data.class_names.size()), train_opts);
      save_checkpoint(*trained.model, trained.report, train_out);
      std::cout << "test accuracy " << trained.report.final_test_accuracy << " -> " << train_out << "\n";
    } else if (attack_cmd->parsed()) {
      const auto model = load_checkpoint(attack_model);
      const auto clean = load_manifest_images(attack_data, attack_limit);
      AttackGrid grid;
      for (const auto& f : attack_families) grid.families.push_back(attack_family_from_string(f));
      grid.epsilons = attack_eps;
      grid.seed = attack_seed;
      grid.workers = attack_workers;
      for (const auto& c : write_attack_sets(*model.model, clean, grid, attack_out)) {
        std::cout << to_string(c.family) << " eps " << c.epsilon << ": " << c.count << " images, manifest "
                  << c.manifest_hash << "\n";
      }
    } else if (cal_cmd->parsed()) {
      const auto model = load_checkpoint(cal_model);
      auto cells = load_cells(cal_sets);
      if (!cal_clean.empty()) cells.push_back(clean_cell(cal_clean, 0));
      const auto candidates = parse_threshold_list(cal_thresholds);
      const auto run = run_calibration(cells, *model.model, cal_flags.resolve(), candidates, cal_expected, cal_out,
                                       cal_workers);
      std::cout << calibration_curve_csv(run.curve);
      if (!run.threshold) {
        std::cerr << "calibration: curve never crosses " << cal_expected << "\n";
        return 3;
      }
      std::cout << "threshold " << *run.threshold << " over " << run.examples << " examples\n";
    } else if (eval_cmd->parsed()) {
      const auto model = load_checkpoint(eval_model);
      auto cells = load_cells(eval_sets);
      if (!eval_clean.empty()) cells.insert(cells.begin(), clean_cell(eval_clean, eval_limit));
      if (eval_transfer) {
        for (const auto& c : cells) {
          if (!c.crafted_on.empty() && c.crafted_on == model.model->identity().to_string()) {
            throw std::invalid_argument("transfer mode: set " + c.family + " was crafted on the evaluated model");
          }
        }
      }
      EvalOptions options;
      if (!eval_variants.empty()) {
        options.variants.clear();
        for (const auto& v : eval_variants) options.variants.push_back(defense_variant_from_string(v));
      }
      const DefenseConfig cfg = eval_flags.resolve();
      options.quality_factors = {cfg.preprocess.quality_factor};
      options.workers = eval_workers;
      write_eval_outputs(evaluate_cells(cells, *model.model, cfg, options), eval_out,
                         eval_transfer ? "transfer_report" : "report");
    } else if (qf_cmd->parsed()) {
      const auto model = load_checkpoint(qf_model);
      const auto cells = load_cells(qf_sets);
      EvalOptions options;
      options.variants = {DefenseVariant::kJpegFlip, DefenseVariant::kFadDefend};
      options.quality_factors = qf_list;
      options.workers = qf_workers;
      const auto report = evaluate_cells(cells, *model.model, qf_flags.resolve(), options);
      write_eval_outputs(report, qf_out, "qf_report");
      write_text_file(qf_sweep_csv(report), fs::path(qf_out) / "qf_curve.csv");
    } else if (bench_cmd->parsed()) {
      std::vector<LabeledImage> pooled;
      for (const auto& c : load_cells(bench_sets)) pooled.insert(pooled.end(), c.images.begin(), c.images.end());
      if (bench_limit > 0 && pooled.size() > bench_limit) pooled.resize(bench_limit);
      const auto report = run_bench(pooled, bench_flags.resolve());
      write_json_file(to_json(report), fs::path(bench_out) / "bench.json");
      write_text_file(bench_report_csv(report), fs::path(bench_out) / "bench.csv");
      std::cout << bench_report_csv(report) << "time ratio " << report.time_ratio << "\n";
    } else if (trace_cmd->parsed()) {
      const DefenseConfig cfg = trace_flags.resolve();
      std::optional<ImageTensor> clean;
      if (!trace_clean.empty()) clean = read_png(trace_clean);
      std::optional<LoadedClassifier> model;
      if (!trace_model.empty()) model = load_checkpoint(trace_model);
      const auto trace = run_dip_trace(read_png(trace_image), clean, model ? model->model.get() : nullptr,
                                       cfg.generator, cfg.dip, trace_every, trace_out);
      std::cout << trace.rows.size() << " snapshots -> " << trace_out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
