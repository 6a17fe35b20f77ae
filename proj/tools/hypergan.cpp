// Command-line front end: index-build, train, enhance, benchmark, eval-kid,
// match-report.

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hypergan/backbone.hpp"
#include "hypergan/checkpoint.hpp"
#include "hypergan/datasets.hpp"
#include "hypergan/errors.hpp"
#include "hypergan/evaluation.hpp"
#include "hypergan/inference.hpp"
#include "hypergan/patch_index.hpp"
#include "hypergan/training.hpp"

namespace fs = std::filesystem;
using namespace hypergan;

namespace {

std::vector<Resolution> parse_resolutions(const std::string& list) {
  std::vector<Resolution> out;
  std::stringstream in(list);
  for (std::string item; std::getline(in, item, ',');) {
    if (!item.empty()) out.push_back(parse_resolution(item));
  }
  if (out.empty()) throw ConfigError("no resolutions given");
  return out;
}

FeatureSet features_for(const fs::path& source, const std::string& extractor_path,
                        const std::optional<fs::path>& cache) {
  if (fs::is_regular_file(source)) return load_features(source);
  if (extractor_path.empty()) {
    throw ConfigError("'" + source.string() + "' is a directory; pass --extractor to compute its features");
  }
  TorchScriptExtractor extractor(extractor_path);
  return extract_features(source, extractor, cache);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Paired synthetic-to-real image enhancement with a real-patch discriminator"};
  app.require_subcommand(1);

  // index-build
  auto* index_cmd = app.add_subcommand("index-build", "Embed the grid patches of a real-image dataset");
  std::string real_dir, index_out, index_backbone = "random:0";
  int64_t image_size = 512, patch_size = 196;
  index_cmd->add_option("--real-dir", real_dir, "Real-world image directory")->required();
  index_cmd->add_option("--out", index_out, "Output index directory")->required();
  index_cmd->add_option("--backbone", index_backbone, "VGG-16 weights file or random:<seed>");
  index_cmd->add_option("--image-size", image_size, "Square image size before patch extraction");
  index_cmd->add_option("--patch-size", patch_size, "Patch side length");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train G and D on paired synthetic/enhanced images");
  std::string config_path, train_mode, train_index, train_out;
  train_cmd->add_option("--config", config_path, "key = value config file")->required();
  train_cmd->add_option("--mode", train_mode, "hybrid or enhanced-only (overrides the config)");
  train_cmd->add_option("--index", train_index, "Patch index directory (hybrid mode)");
  train_cmd->add_option("--out", train_out, "Run directory")->required();

  // enhance
  auto* enhance_cmd = app.add_subcommand("enhance", "Run a trained generator over a directory of images");
  std::string enhance_ckpt, enhance_in, enhance_out, pad = "reflect";
  enhance_cmd->add_option("--ckpt", enhance_ckpt, "Checkpoint directory")->required();
  enhance_cmd->add_option("--in", enhance_in, "Input image directory")->required();
  enhance_cmd->add_option("--out", enhance_out, "Output directory")->required();
  enhance_cmd->add_option("--pad", pad, "reflect or replicate");

  // benchmark
  auto* bench_cmd = app.add_subcommand("benchmark", "Time generator forward passes");
  std::string bench_ckpt, res_list = "1280x720,1920x1080", report_path;
  BenchmarkOptions bench;
  bench_cmd->add_option("--ckpt", bench_ckpt, "Checkpoint directory (omit for a freshly initialized G)");
  bench_cmd->add_option("--res", res_list, "Comma-separated WxH list");
  bench_cmd->add_option("--runs", bench.timed_runs, "Timed runs per resolution");
  bench_cmd->add_option("--warmup", bench.warmup_runs, "Untimed warmup runs per resolution");
  bench_cmd->add_option("--seed", bench.seed, "Seed for the random inputs");
  bench_cmd->add_option("--report", report_path, "Write the table here as well as to stdout");

  // eval-kid
  auto* kid_cmd = app.add_subcommand("eval-kid", "Kernel Inception Distance between two image sets");
  std::string set_a, set_b, extractor_path, cache_dir;
  KidOptions kid;
  kid_cmd->add_option("--set-a", set_a, "Image directory or .feat file")->required();
  kid_cmd->add_option("--set-b", set_b, "Image directory or .feat file")->required();
  kid_cmd->add_option("--extractor", extractor_path, "TorchScript Inception pool-feature module");
  kid_cmd->add_option("--cache", cache_dir, "Feature cache directory");
  kid_cmd->add_option("--subset", kid.subset_size, "Rows per subset");
  kid_cmd->add_option("--subsets", kid.n_subsets, "Number of subsets");
  kid_cmd->add_option("--seed", kid.seed, "Subset sampling seed");

  // match-report
  auto* match_cmd = app.add_subcommand("match-report", "Generated patches above their nearest real patches");
  std::string match_ckpt, match_index, match_images, match_out, match_backbone;
  match_cmd->add_option("--ckpt", match_ckpt, "Checkpoint directory")->required();
  match_cmd->add_option("--index", match_index, "Patch index directory")->required();
  match_cmd->add_option("--images", match_images, "Synthetic image directory")->required();
  match_cmd->add_option("--out", match_out, "Output directory")->required();
  match_cmd->add_option("--backbone", match_backbone, "Backbone the index was built with (default: from index)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*index_cmd) {
      const PatchGeometry geometry{image_size, patch_size};
      geometry.validate();
      const auto embedder = PerceptualEmbedder::from_spec(index_backbone);
      const auto index = build_index({real_dir, DatasetKind::kReal, Split::kTrain}, embedder, geometry,
                                     [](size_t done, size_t total) {
                                       if (done == total || done % 100 == 0) {
                                         std::cerr << "\rindexed " << done << "/" << total << std::flush;
                                       }
                                     });
      std::cerr << "\n";
      index.save(index_out);
      std::cout << index.size() << " entries of dimension " << index.dimension() << " written to " << index_out
                << "\n";
    } else if (*train_cmd) {
      auto run = load_training_config(config_path);
      if (!train_mode.empty()) run.training.mode = parse_training_mode(train_mode);
      PairedSplitOptions split_options;
      split_options.manifest = run.split_manifest;
      split_options.seed = run.training.seed;
      split_options.resolution = run.training.geometry.image_resolution();
      const auto split = load_paired_split({run.synthetic_dir, DatasetKind::kSynthetic, run.split},
                                           {run.enhanced_dir, DatasetKind::kEnhanced, run.split}, split_options);
      fs::create_directories(train_out);
      split.report().write(fs::path(train_out) / "pairing_report.tsv");

      std::unique_ptr<PatchIndex> index;
      std::unique_ptr<PerceptualEmbedder> embedder;
      std::unique_ptr<RealPatchMatcher> matcher;
      if (run.training.mode == TrainingMode::kHybrid) {
        if (train_index.empty()) throw ConfigError("hybrid training needs --index");
        index = std::make_unique<PatchIndex>(PatchIndex::load(train_index));
        embedder = std::make_unique<PerceptualEmbedder>(PerceptualEmbedder::from_spec(run.backbone));
        matcher = std::make_unique<RealPatchMatcher>(*index, *embedder);
      }
      std::cerr << "training " << split.size() << " pairs for "
                << planned_steps(run.training, split.size()) << " steps (" << to_string(run.training.mode)
                << ")\n";
      auto result = train(run.training, split, matcher.get(), train_out, [](const StepRecord& r) {
        if (r.step % 50 == 0) {
          std::cerr << "step " << r.step << " loss_d=" << r.loss_d << " loss_g=" << r.loss_g
                    << " l1=" << r.loss_g_l1 << "\n";
        }
      });
      std::cout << "final checkpoint: " << result.final_checkpoint.string() << "\n";
    } else if (*enhance_cmd) {
      EnhanceOptions options;
      options.policy = parse_pad_policy(pad);
      const auto written = enhance(enhance_ckpt, enhance_in, enhance_out, options);
      std::cout << written.size() << " images written to " << enhance_out << "\n";
    } else if (*bench_cmd) {
      const auto resolutions = parse_resolutions(res_list);
      std::vector<BenchmarkReport> reports;
      if (bench_ckpt.empty()) {
        Generator g;
        init_weights(*g, 0);
        reports = benchmark(g, resolutions, bench);
      } else {
        reports = benchmark(fs::path(bench_ckpt), resolutions, bench);
      }
      const auto table = format_benchmark_table(reports);
      std::cout << table;
      if (!report_path.empty()) {
        std::ofstream out(report_path);
        if (!out) throw Error("cannot write report '" + report_path + "'");
        out << table;
      }
      for (const auto& r : reports) {
        if (!r.ok()) return 1;
      }
    } else if (*kid_cmd) {
      std::optional<fs::path> cache;
      if (!cache_dir.empty()) cache = fs::path(cache_dir);
      const auto a = features_for(set_a, extractor_path, cache);
      const auto b = features_for(set_b, extractor_path, cache);
      std::cout << format_kid(compute_kid(a, b, kid), set_a, set_b) << "\n";
    } else if (*match_cmd) {
      const auto index = PatchIndex::load(match_index);
      std::string backbone = match_backbone;
      if (backbone.empty()) {
        const std::string prefix = "vgg16-random:";
        if (index.metadata().backbone_id.rfind(prefix, 0) != 0) {
          throw ConfigError("index uses pretrained weights; pass --backbone with the weights file");
        }
        backbone = "random:" + index.metadata().backbone_id.substr(prefix.size());
      }
      const auto embedder = PerceptualEmbedder::from_spec(backbone);
      const RealPatchMatcher matcher(index, embedder);
      const auto sheets = match_report(match_ckpt, matcher, match_images, match_out);
      std::cout << sheets.size() << " sheets written to " << match_out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
