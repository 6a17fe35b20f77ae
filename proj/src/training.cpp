#include "hypergan/training.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "hypergan/checkpoint.hpp"
#include "hypergan/errors.hpp"
#include "hypergan/hashing.hpp"

namespace hypergan {

std::string to_string(TrainingMode mode) {
  return mode == TrainingMode::kHybrid ? "hybrid" : "enhanced-only";
}

TrainingMode parse_training_mode(const std::string& text) {
  if (text == "hybrid") return TrainingMode::kHybrid;
  if (text == "enhanced-only" || text == "enhanced_only" || text == "eo") return TrainingMode::kEnhancedOnly;
  throw ConfigError("unknown training mode '" + text + "' (expected hybrid or enhanced-only)");
}

void TrainingConfig::validate() const {
  if (!(lambda_l1 > 0.0)) throw ConfigError("lambda_l1 must be positive");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("betas must lie in [0, 1)");
  }
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (checkpoint_interval < 0) throw ConfigError("checkpoint_interval must be non-negative");
  if (max_steps && *max_steps < 1) throw ConfigError("max_steps must be at least 1");
  geometry.validate();
}

int64_t planned_steps(const TrainingConfig& config, size_t pair_count) {
  const auto batch = static_cast<int64_t>(config.batch_size);
  const int64_t per_epoch = (static_cast<int64_t>(pair_count) + batch - 1) / batch;
  const int64_t total = per_epoch * config.epochs;
  return config.max_steps ? std::min(total, *config.max_steps) : total;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  in >> out;
  if (in.fail() || !in.eof()) throw ConfigError("config key '" + key + "' has invalid value '" + value + "'");
  return out;
}

}  // namespace

TrainingRunConfig parse_training_config(const std::string& text) {
  TrainingRunConfig run;
  auto& t = run.training;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + " is not 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "lambda_l1") t.lambda_l1 = parse_number<double>(key, value);
    else if (key == "lr") t.lr = parse_number<double>(key, value);
    else if (key == "beta1") t.beta1 = parse_number<double>(key, value);
    else if (key == "beta2") t.beta2 = parse_number<double>(key, value);
    else if (key == "epochs") t.epochs = parse_number<int>(key, value);
    else if (key == "batch_size") t.batch_size = parse_number<int>(key, value);
    else if (key == "mode") t.mode = parse_training_mode(value);
    else if (key == "seed") t.seed = parse_number<uint64_t>(key, value);
    else if (key == "checkpoint_interval") t.checkpoint_interval = parse_number<int64_t>(key, value);
    else if (key == "max_steps") t.max_steps = parse_number<int64_t>(key, value);
    else if (key == "image_size") t.geometry.image_size = parse_number<int64_t>(key, value);
    else if (key == "patch_size") t.geometry.patch_size = parse_number<int64_t>(key, value);
    else if (key == "synthetic_dir") run.synthetic_dir = value;
    else if (key == "enhanced_dir") run.enhanced_dir = value;
    else if (key == "split_manifest") run.split_manifest = fs::path(value);
    else if (key == "split") run.split = parse_split(value);
    else if (key == "backbone") run.backbone = value;
    else throw ConfigError("unknown config key '" + key + "' on line " + std::to_string(line_no));
  }
  t.validate();
  return run;
}

TrainingRunConfig load_training_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  auto run = parse_training_config(buf.str());
  // Relative data paths are taken relative to the config file.
  const auto base = path.parent_path();
  auto anchor = [&](fs::path& p) {
    if (!p.empty() && p.is_relative()) p = base / p;
  };
  anchor(run.synthetic_dir);
  anchor(run.enhanced_dir);
  if (run.split_manifest) anchor(*run.split_manifest);
  return run;
}

RealPatchMatcher::RealPatchMatcher(const PatchIndex& index, const PerceptualEmbedder& embedder, size_t image_cache)
    : index_(index), embedder_(embedder), store_(index.metadata().geometry, image_cache) {
  if (index.metadata().backbone_id != embedder.backbone_id() ||
      index.metadata().layer_name != embedder.layer_name()) {
    throw ConfigError("index was built with backbone '" + index.metadata().backbone_id + "' at " +
                      index.metadata().layer_name + ", but the matcher uses '" + embedder.backbone_id() + "' at " +
                      embedder.layer_name());
  }
}

RealPatchMatcher::Result RealPatchMatcher::match(const torch::Tensor& generated_patch) const {
  auto found = index_.query_nearest(embedder_.embed(generated_patch.detach()));
  return Result{store_.fetch(found.provenance), std::move(found)};
}

HybridBatch form_hybrid_batch(const torch::Tensor& x, const torch::Tensor& target, Generator& generator,
                              const RealPatchMatcher* matcher, TrainingMode mode, const PatchGeometry& geometry) {
  geometry.validate();
  if (x.dim() != 4 || !x.sizes().equals(target.sizes())) {
    throw ContractError("synthetic and target batches must be equally shaped Nx3xSxS tensors");
  }
  if (x.size(2) != geometry.image_size || x.size(3) != geometry.image_size) {
    throw ShapeError("training images must be " + std::to_string(geometry.image_size) + "x" +
                     std::to_string(geometry.image_size));
  }
  if (mode == TrainingMode::kHybrid) {
    if (matcher == nullptr) throw ConfigError("hybrid mode requires a real-world patch index");
    if (!(matcher->index().metadata().geometry == geometry)) {
      throw ConfigError("index patch geometry differs from the training geometry");
    }
  }

  HybridBatch batch;
  batch.mode = mode;
  batch.generated_image = generator->forward(x);

  std::vector<torch::Tensor> generated, positional, matched;
  for (int64_t n = 0; n < x.size(0); ++n) {
    const ImageTensor fake{batch.generated_image[n], {}};
    const ImageTensor enhanced{target[n], {}};
    for (int pos = 0; pos < kPatchesPerImage; ++pos) {
      auto p_hat = extract_patch(fake, pos, geometry).data;
      generated.push_back(p_hat);
      positional.push_back(extract_patch(enhanced, pos, geometry).data);
      if (mode == TrainingMode::kHybrid) {
        auto found = matcher->match(p_hat);
        matched.push_back(found.pixels.to(x.device()));
        batch.matches.push_back(std::move(found.match));
      }
    }
  }
  auto p_hat = torch::stack(generated);
  auto p_target = torch::stack(positional).detach();
  if (mode == TrainingMode::kHybrid) {
    batch.generated = torch::cat({p_hat, p_hat});
    batch.real = torch::cat({p_target, torch::stack(matched)});
  } else {
    batch.generated = p_hat;
    batch.real = p_target;
  }
  return batch;
}

HybridBatch form_hybrid_batch(const ImageTensor& x, const ImageTensor& target, Generator& generator,
                              const RealPatchMatcher* matcher, TrainingMode mode, const PatchGeometry& geometry) {
  return form_hybrid_batch(x.data.unsqueeze(0), target.data.unsqueeze(0), generator, matcher, mode, geometry);
}

torch::Tensor lsgan_discriminator_loss(const torch::Tensor& real_maps, const torch::Tensor& generated_maps) {
  if (real_maps.numel() == 0 || generated_maps.numel() == 0) {
    throw ContractError("discriminator loss needs non-empty real and generated sets");
  }
  return (real_maps - 1.0).pow(2).mean() + generated_maps.pow(2).mean();
}

torch::Tensor lsgan_generator_adversarial(const torch::Tensor& generated_maps) {
  if (generated_maps.numel() == 0) throw ContractError("generator loss needs a non-empty generated set");
  return (generated_maps - 1.0).pow(2).mean();
}

torch::Tensor l1_reconstruction(const torch::Tensor& generated, const torch::Tensor& target) {
  if (!generated.sizes().equals(target.sizes())) {
    throw ContractError("L1 term needs equally shaped generated and target images");
  }
  return (generated - target).abs().mean();
}

torch::Tensor loss_discriminator(Discriminator& discriminator, const HybridBatch& batch) {
  if (!batch.real.defined() || !batch.generated.defined()) throw ContractError("batch is not assembled");
  return lsgan_discriminator_loss(discriminator->forward(batch.real), discriminator->forward(batch.generated.detach()));
}

GeneratorLoss loss_generator(Discriminator& discriminator, const HybridBatch& batch,
                             const torch::Tensor& generated_image, const torch::Tensor& target, double lambda) {
  if (!batch.generated.defined()) throw ContractError("batch is not assembled");
  GeneratorLoss out;
  out.adversarial = lsgan_generator_adversarial(discriminator->forward(batch.generated));
  out.l1 = l1_reconstruction(generated_image, target);
  out.total = out.adversarial + lambda * out.l1;
  return out;
}

std::string to_json_line(const StepRecord& r) {
  nlohmann::json j = {
      {"step", r.step},
      {"epoch", r.epoch},
      {"stems", r.stems},
      {"loss_d", r.loss_d},
      {"loss_g", r.loss_g},
      {"loss_g_adv", r.loss_g_adv},
      {"loss_g_l1", r.loss_g_l1},
      {"match_distances", r.match_distances},
      {"d_step_left_generator_unchanged", r.d_step_left_generator_unchanged},
      {"g_step_left_discriminator_unchanged", r.g_step_left_discriminator_unchanged},
  };
  return j.dump();
}

namespace {

torch::optim::AdamOptions adam_options(const TrainingConfig& c) {
  return torch::optim::AdamOptions(c.lr).betas({c.beta1, c.beta2});
}

Generator seeded_generator(uint64_t seed) {
  Generator g;
  init_weights(*g, seed);
  return g;
}

Discriminator seeded_discriminator(uint64_t seed) {
  Discriminator d;
  init_weights(*d, seed);
  return d;
}

void set_trainable(torch::nn::Module& net, bool trainable) {
  for (auto& p : net.parameters()) p.set_requires_grad(trainable);
}

}  // namespace

Trainer::Trainer(TrainingConfig config, const RealPatchMatcher* matcher)
    : config_(std::move(config)),
      matcher_(matcher),
      generator_(seeded_generator(config_.seed)),
      discriminator_(seeded_discriminator(config_.seed + 1)),
      optimizer_g_(generator_->parameters(), adam_options(config_)),
      optimizer_d_(discriminator_->parameters(), adam_options(config_)) {
  config_.validate();
  if (config_.mode == TrainingMode::kHybrid && matcher_ == nullptr) {
    throw ConfigError("hybrid mode requires a real-world patch index");
  }
  generator_->train();
  discriminator_->train();
}

void Trainer::abort_non_finite(const StepRecord& record, const std::string& which) {
  std::string where;
  if (dump_dir_) {
    fs::create_directories(*dump_dir_);
    const auto path = *dump_dir_ / ("nan_step_" + std::to_string(record.step) + ".json");
    nlohmann::json dump = nlohmann::json::parse(to_json_line(record));
    dump["non_finite"] = which;
    dump["generator_parameter_hash"] = to_hex(parameter_hash(*generator_));
    dump["discriminator_parameter_hash"] = to_hex(parameter_hash(*discriminator_));
    auto finite = [](torch::nn::Module& net) {
      for (const auto& p : net.parameters()) {
        if (!torch::isfinite(p).all().item<bool>()) return false;
      }
      return true;
    };
    dump["generator_parameters_finite"] = finite(*generator_);
    dump["discriminator_parameters_finite"] = finite(*discriminator_);
    std::ofstream(path) << dump.dump(2) << "\n";
    where = "; diagnostics in " + path.string();
  }
  throw TrainingError("non-finite " + which + " at step " + std::to_string(record.step) + where);
}

StepRecord Trainer::step(const std::vector<std::pair<ImageTensor, ImageTensor>>& pairs, int64_t epoch) {
  if (pairs.empty()) throw ContractError("training step needs at least one pair");
  StepRecord record;
  record.step = steps_;
  record.epoch = epoch;
  std::vector<torch::Tensor> xs, targets;
  for (const auto& [x, target] : pairs) {
    xs.push_back(x.data);
    targets.push_back(target.data);
    record.stems.push_back(fs::path(x.source_id).stem().string());
  }
  const auto x = torch::stack(xs);
  const auto target = torch::stack(targets);

  auto batch = form_hybrid_batch(x, target, generator_, matcher_, config_.mode, config_.geometry);
  for (const auto& m : batch.matches) record.match_distances.push_back(m.squared_distance);

  // Discriminator update.
  const uint64_t g_before = parameter_hash(*generator_);
  optimizer_d_.zero_grad();
  auto loss_d = loss_discriminator(discriminator_, batch);
  record.loss_d = loss_d.item<double>();
  if (!std::isfinite(record.loss_d)) abort_non_finite(record, "loss_d");
  loss_d.backward();
  optimizer_d_.step();
  record.d_step_left_generator_unchanged = parameter_hash(*generator_) == g_before;

  // Generator update against the refreshed discriminator.
  const uint64_t d_before = parameter_hash(*discriminator_);
  set_trainable(*discriminator_, false);
  optimizer_g_.zero_grad();
  auto loss_g = loss_generator(discriminator_, batch, batch.generated_image, target, config_.lambda_l1);
  record.loss_g = loss_g.total.item<double>();
  record.loss_g_adv = loss_g.adversarial.item<double>();
  record.loss_g_l1 = loss_g.l1.item<double>();
  if (!std::isfinite(record.loss_g)) {
    set_trainable(*discriminator_, true);
    abort_non_finite(record, "loss_g");
  }
  loss_g.total.backward();
  optimizer_g_.step();
  set_trainable(*discriminator_, true);
  record.g_step_left_discriminator_unchanged = parameter_hash(*discriminator_) == d_before;

  if (!record.d_step_left_generator_unchanged || !record.g_step_left_discriminator_unchanged) {
    throw TrainingError("parameter isolation violated at step " + std::to_string(record.step));
  }
  ++steps_;
  return record;
}

TrainingResult train(const TrainingConfig& config, const PairedSplit& split, const RealPatchMatcher* matcher,
                     const fs::path& run_dir, const StepCallback& on_step) {
  config.validate();
  if (split.empty()) throw ConfigError("training split has no pairs");
  if (split.resolution() != config.geometry.image_resolution()) {
    throw ConfigError("split resolution " + to_string(split.resolution()) + " differs from training size " +
                      to_string(config.geometry.image_resolution()));
  }
  fs::create_directories(run_dir / "checkpoints");

  Trainer trainer(config, matcher);
  trainer.set_dump_dir(run_dir);
  CheckpointWriter writer;
  TrainingResult result;

  {
    nlohmann::json manifest = {
        {"format", "hypergan-run/1"},
        {"mode", to_string(config.mode)},
        {"seed", config.seed},
        {"lambda_l1", config.lambda_l1},
        {"lr", config.lr},
        {"betas", {config.beta1, config.beta2}},
        {"epochs", config.epochs},
        {"batch_size", config.batch_size},
        {"image_size", config.geometry.image_size},
        {"patch_size", config.geometry.patch_size},
        {"pairs", split.size()},
        {"planned_steps", planned_steps(config, split.size())},
        {"generator_config", trainer.generator()->config().canonical()},
        {"discriminator_config", trainer.discriminator()->config().canonical()},
    };
    if (matcher) {
      manifest["index_backbone"] = matcher->index().metadata().backbone_id;
      manifest["index_entries"] = matcher->index().size();
    }
    std::ofstream(run_dir / "manifest.json") << manifest.dump(2) << "\n";
  }
  std::ofstream log(run_dir / "log.jsonl");
  if (!log) throw Error("cannot write training log in '" + run_dir.string() + "'");

  const int64_t limit = config.max_steps.value_or(std::numeric_limits<int64_t>::max());
  int64_t epoch = 0;
  for (; epoch < config.epochs && trainer.steps_taken() < limit; ++epoch) {
    const auto order = split.epoch_order(config.seed, static_cast<uint64_t>(epoch));
    for (size_t i = 0; i < order.size() && trainer.steps_taken() < limit; i += config.batch_size) {
      std::vector<std::pair<ImageTensor, ImageTensor>> pairs;
      for (size_t j = i; j < std::min(order.size(), i + config.batch_size); ++j) pairs.push_back(split.load(order[j]));
      auto record = trainer.step(pairs, epoch);
      log << to_json_line(record) << "\n";
      log.flush();
      if (on_step) on_step(record);
      result.records.push_back(std::move(record));
      const int64_t done = trainer.steps_taken();
      if (config.checkpoint_interval > 0 && done % config.checkpoint_interval == 0) {
        std::ostringstream name;
        name << "step_" << std::setw(7) << std::setfill('0') << done;
        writer.submit(run_dir / "checkpoints" / name.str(), trainer.generator(), trainer.discriminator(),
                      make_manifest(trainer.generator(), config.seed, epoch, done, to_string(config.mode)));
      }
    }
  }
  writer.flush();
  result.final_checkpoint = run_dir / "checkpoints" / "final";
  save_checkpoint(result.final_checkpoint, trainer.generator(), &trainer.discriminator(),
                  make_manifest(trainer.generator(), config.seed, std::max<int64_t>(0, epoch - 1),
                                trainer.steps_taken(), to_string(config.mode)));
  return result;
}

}  // namespace hypergan
