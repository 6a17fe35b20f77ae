#include "hypergan/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "hypergan/errors.hpp"
#include "hypergan/hashing.hpp"

namespace hypergan {

namespace {

template <typename Net>
void copy_parameters(Net& from, Net& to) {
  torch::NoGradGuard no_grad;
  auto src = from->named_parameters();
  for (auto& dst : to->named_parameters()) dst.value().copy_(src[dst.key()]);
}

}  // namespace

CheckpointManifest make_manifest(Generator& generator, uint64_t seed, int64_t epoch, int64_t step,
                                 std::string mode) {
  CheckpointManifest m;
  m.generator_config = generator->config().canonical();
  m.config_hash = generator->config().hash();
  m.parameter_count = parameter_count(*generator);
  m.seed = seed;
  m.epoch = epoch;
  m.step = step;
  m.mode = std::move(mode);
  return m;
}

void save_checkpoint(const fs::path& dir, Generator& generator, Discriminator* discriminator,
                     CheckpointManifest manifest) {
  fs::create_directories(dir);
  torch::save(generator, (dir / "generator.pt").string());
  manifest.has_discriminator = discriminator != nullptr;
  if (discriminator) torch::save(*discriminator, (dir / "discriminator.pt").string());
  nlohmann::json j = {
      {"format", "hypergan-checkpoint/1"},
      {"generator_config", manifest.generator_config},
      {"config_hash", to_hex(manifest.config_hash)},
      {"parameter_count", manifest.parameter_count},
      {"seed", manifest.seed},
      {"epoch", manifest.epoch},
      {"step", manifest.step},
      {"mode", manifest.mode},
      {"has_discriminator", manifest.has_discriminator},
  };
  if (discriminator) j["discriminator_config"] = (*discriminator)->config().canonical();
  std::ofstream out(dir / "manifest.json");
  if (!out) throw Error("cannot write checkpoint manifest in '" + dir.string() + "'");
  out << j.dump(2) << "\n";
}

CheckpointManifest read_checkpoint_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw ConfigError("'" + dir.string() + "' has no checkpoint manifest");
  try {
    const auto j = nlohmann::json::parse(in);
    CheckpointManifest m;
    m.generator_config = j.at("generator_config").get<std::string>();
    m.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    m.parameter_count = j.at("parameter_count").get<int64_t>();
    m.seed = j.at("seed").get<uint64_t>();
    m.epoch = j.at("epoch").get<int64_t>();
    m.step = j.at("step").get<int64_t>();
    m.mode = j.at("mode").get<std::string>();
    m.has_discriminator = j.value("has_discriminator", false);
    return m;
  } catch (const std::exception& e) {
    throw ConfigError("malformed checkpoint manifest in '" + dir.string() + "': " + e.what());
  }
}

Generator load_generator(const fs::path& dir, const GeneratorConfig& expected) {
  const auto manifest = read_checkpoint_manifest(dir);
  if (manifest.config_hash != expected.hash()) {
    throw ConfigError("checkpoint '" + dir.string() + "' was written for '" + manifest.generator_config +
                      "' but this build expects '" + expected.canonical() + "'");
  }
  Generator g(expected);
  if (manifest.parameter_count != parameter_count(*g)) {
    throw ConfigError("checkpoint '" + dir.string() + "' parameter count does not match the architecture");
  }
  torch::load(g, (dir / "generator.pt").string());
  g->eval();
  return g;
}

Discriminator load_discriminator(const fs::path& dir, const DiscriminatorConfig& expected) {
  if (!fs::exists(dir / "discriminator.pt")) {
    throw ConfigError("checkpoint '" + dir.string() + "' has no discriminator weights");
  }
  Discriminator d(expected);
  torch::load(d, (dir / "discriminator.pt").string());
  return d;
}

Generator snapshot(Generator& generator) {
  Generator copy(generator->config());
  copy_parameters(generator, copy);
  return copy;
}

Discriminator snapshot(Discriminator& discriminator) {
  Discriminator copy(discriminator->config());
  copy_parameters(discriminator, copy);
  return copy;
}

CheckpointWriter::CheckpointWriter(size_t capacity)
    : capacity_(std::max<size_t>(1, capacity)), worker_([this] { run(); }) {}

CheckpointWriter::~CheckpointWriter() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  changed_.notify_all();
  worker_.join();
}

void CheckpointWriter::submit(fs::path dir, Generator& generator, Discriminator& discriminator,
                              CheckpointManifest manifest) {
  Job job{std::move(dir), snapshot(generator), snapshot(discriminator), std::move(manifest)};
  std::unique_lock lock(mutex_);
  changed_.wait(lock, [this] { return queue_.size() < capacity_; });
  queue_.push_back(std::move(job));
  changed_.notify_all();
}

void CheckpointWriter::flush() {
  std::unique_lock lock(mutex_);
  changed_.wait(lock, [this] { return queue_.empty() && !busy_; });
  if (failure_) std::rethrow_exception(std::exchange(failure_, nullptr));
}

void CheckpointWriter::run() {
  for (;;) {
    std::unique_lock lock(mutex_);
    changed_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
    if (queue_.empty()) return;
    Job job = std::move(queue_.front());
    queue_.pop_front();
    busy_ = true;
    lock.unlock();
    changed_.notify_all();
    try {
      save_checkpoint(job.dir, job.generator, &job.discriminator, job.manifest);
    } catch (...) {
      std::lock_guard guard(mutex_);
      if (!failure_) failure_ = std::current_exception();
    }
    lock.lock();
    busy_ = false;
    lock.unlock();
    changed_.notify_all();
  }
}

}  // namespace hypergan
