#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "hypergan/backbone.hpp"
#include "hypergan/datasets.hpp"
#include "hypergan/networks.hpp"
#include "hypergan/patch_index.hpp"
#include "hypergan/patches.hpp"

namespace hypergan {

namespace fs = std::filesystem;

enum class TrainingMode { kHybrid, kEnhancedOnly };

std::string to_string(TrainingMode mode);
TrainingMode parse_training_mode(const std::string& text);

struct TrainingConfig {
  double lambda_l1 = 10.0;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int epochs = 20;
  int batch_size = 1;
  TrainingMode mode = TrainingMode::kHybrid;
  uint64_t seed = 0;
  // Steps between checkpoints; 0 writes only the final one.
  int64_t checkpoint_interval = 1000;
  // Stops early after this many optimizer steps (desk-scale runs).
  std::optional<int64_t> max_steps;
  PatchGeometry geometry;

  // Throws ConfigError on lambda_l1 <= 0, lr <= 0, batch_size < 1 and the like.
  void validate() const;
};

// Optimizer steps a full run takes: epochs * ceil(pairs / batch_size), capped
// by max_steps.
int64_t planned_steps(const TrainingConfig& config, size_t pair_count);

/// Everything `train` needs from a config file. Keys are flat `key = value`
/// lines; `#` starts a comment.
struct TrainingRunConfig {
  TrainingConfig training;
  fs::path synthetic_dir;
  fs::path enhanced_dir;
  std::optional<fs::path> split_manifest;
  Split split = Split::kTrain;
  std::string backbone = "random:0";
};

TrainingRunConfig parse_training_config(const std::string& text);
TrainingRunConfig load_training_config(const fs::path& path);

/// Looks up real-world patches for generated ones: embed, exact top-1 search,
/// then re-crop the winning patch's pixels from its source image.
class RealPatchMatcher {
 public:
  RealPatchMatcher(const PatchIndex& index, const PerceptualEmbedder& embedder, size_t image_cache = 64);

  struct Result {
    torch::Tensor pixels;  // 3 x P x P
    NearestMatch match;
  };
  Result match(const torch::Tensor& generated_patch) const;

  const PatchIndex& index() const { return index_; }

 private:
  const PatchIndex& index_;
  const PerceptualEmbedder& embedder_;
  mutable PatchStore store_;
};

/// The two patch sets the discriminator sees for one generated image.
/// Hybrid: generated = [p_hat, p_hat], real = [p_target, p_matched] (8 + 8).
/// Enhanced-only: generated = [p_hat], real = [p_target] (4 + 4).
struct HybridBatch {
  TrainingMode mode = TrainingMode::kHybrid;
  torch::Tensor generated;        // K x 3 x P x P, attached to G's graph
  torch::Tensor real;             // K x 3 x P x P
  torch::Tensor generated_image;  // N x 3 x S x S, G(x)
  std::vector<NearestMatch> matches;

  int64_t generated_count() const { return generated.size(0); }
  int64_t real_count() const { return real.size(0); }
};

/// Runs G once on `x` (N x 3 x S x S) and assembles the patch sets. `matcher`
/// is required in hybrid mode and never consulted in enhanced-only mode.
HybridBatch form_hybrid_batch(const torch::Tensor& x, const torch::Tensor& target, Generator& generator,
                              const RealPatchMatcher* matcher, TrainingMode mode,
                              const PatchGeometry& geometry = {});

HybridBatch form_hybrid_batch(const ImageTensor& x, const ImageTensor& target, Generator& generator,
                              const RealPatchMatcher* matcher, TrainingMode mode,
                              const PatchGeometry& geometry = {});

// Least-squares objectives on realism maps; means run over every map cell of
// every patch in a set.
torch::Tensor lsgan_discriminator_loss(const torch::Tensor& real_maps, const torch::Tensor& generated_maps);
torch::Tensor lsgan_generator_adversarial(const torch::Tensor& generated_maps);
// Per-pixel mean absolute difference.
torch::Tensor l1_reconstruction(const torch::Tensor& generated, const torch::Tensor& target);

/// E_real[(D(q) - 1)^2] + E_generated[D(q)^2], with generated patches detached.
torch::Tensor loss_discriminator(Discriminator& discriminator, const HybridBatch& batch);

struct GeneratorLoss {
  torch::Tensor total;
  torch::Tensor adversarial;
  torch::Tensor l1;  // unweighted
};

/// E_generated[(D(q) - 1)^2] + lambda * mean|X_hat - target|.
GeneratorLoss loss_generator(Discriminator& discriminator, const HybridBatch& batch,
                             const torch::Tensor& generated_image, const torch::Tensor& target, double lambda);

struct StepRecord {
  int64_t step = 0;
  int64_t epoch = 0;
  std::vector<std::string> stems;
  double loss_d = 0.0;
  double loss_g = 0.0;
  double loss_g_adv = 0.0;
  double loss_g_l1 = 0.0;
  std::vector<double> match_distances;
  // Parameter-hash isolation checks around the two optimizer steps.
  bool d_step_left_generator_unchanged = false;
  bool g_step_left_discriminator_unchanged = false;
};

std::string to_json_line(const StepRecord& record);

/// Owns G, D and their Adam optimizers; one call to `step` is one D update
/// followed by one G update.
class Trainer {
 public:
  Trainer(TrainingConfig config, const RealPatchMatcher* matcher);

  StepRecord step(const std::vector<std::pair<ImageTensor, ImageTensor>>& pairs, int64_t epoch = 0);

  Generator& generator() { return generator_; }
  Discriminator& discriminator() { return discriminator_; }
  const TrainingConfig& config() const { return config_; }
  int64_t steps_taken() const { return steps_; }

  // Directory for NaN diagnostics; none are written when unset.
  void set_dump_dir(fs::path dir) { dump_dir_ = std::move(dir); }

 private:
  [[noreturn]] void abort_non_finite(const StepRecord& record, const std::string& which);

  TrainingConfig config_;
  const RealPatchMatcher* matcher_;
  Generator generator_;
  Discriminator discriminator_;
  torch::optim::Adam optimizer_g_;
  torch::optim::Adam optimizer_d_;
  int64_t steps_ = 0;
  std::optional<fs::path> dump_dir_;
};

struct TrainingResult {
  std::vector<StepRecord> records;
  fs::path final_checkpoint;
};

using StepCallback = std::function<void(const StepRecord&)>;

/// Full loop over `split`: `<run_dir>/log.jsonl`, `<run_dir>/manifest.json`,
/// `<run_dir>/checkpoints/step_NNNNNNN/` and `<run_dir>/checkpoints/final/`.
TrainingResult train(const TrainingConfig& config, const PairedSplit& split, const RealPatchMatcher* matcher,
                     const fs::path& run_dir, const StepCallback& on_step = {});

}  // namespace hypergan
