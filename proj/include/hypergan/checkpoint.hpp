#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "hypergan/networks.hpp"

namespace hypergan {

namespace fs = std::filesystem;

/// Sidecar of a checkpoint directory (`manifest.json`). The generator weights
/// live in `generator.pt`, the discriminator (optional) in `discriminator.pt`.
struct CheckpointManifest {
  std::string generator_config;
  uint64_t config_hash = 0;
  int64_t parameter_count = 0;
  uint64_t seed = 0;
  int64_t epoch = 0;
  int64_t step = 0;
  std::string mode;
  bool has_discriminator = false;
};

CheckpointManifest make_manifest(Generator& generator, uint64_t seed, int64_t epoch, int64_t step,
                                 std::string mode);

void save_checkpoint(const fs::path& dir, Generator& generator, Discriminator* discriminator,
                     CheckpointManifest manifest);

CheckpointManifest read_checkpoint_manifest(const fs::path& dir);

/// Loads a generator, refusing (ConfigError) when the checkpoint was written
/// for a different architecture than `expected`.
Generator load_generator(const fs::path& dir, const GeneratorConfig& expected = {});

Discriminator load_discriminator(const fs::path& dir, const DiscriminatorConfig& expected = {});

// Deep copy of parameters into a freshly constructed network.
Generator snapshot(Generator& generator);
Discriminator snapshot(Discriminator& discriminator);

/// Writes checkpoints on a background thread. `submit` blocks only when
/// `capacity` snapshots are already waiting.
class CheckpointWriter {
 public:
  explicit CheckpointWriter(size_t capacity = 2);
  ~CheckpointWriter();
  CheckpointWriter(const CheckpointWriter&) = delete;
  CheckpointWriter& operator=(const CheckpointWriter&) = delete;

  void submit(fs::path dir, Generator& generator, Discriminator& discriminator, CheckpointManifest manifest);

  // Waits for queued writes and rethrows the first write failure.
  void flush();

 private:
  struct Job {
    fs::path dir;
    Generator generator;
    Discriminator discriminator;
    CheckpointManifest manifest;
  };
  void run();

  size_t capacity_;
  std::mutex mutex_;
  std::condition_variable changed_;
  std::deque<Job> queue_;
  bool busy_ = false;
  bool stopping_ = false;
  std::exception_ptr failure_;
  std::thread worker_;
};

}  // namespace hypergan
