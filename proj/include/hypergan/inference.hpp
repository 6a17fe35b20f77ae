#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <torch/torch.h>

#include "hypergan/datasets.hpp"
#include "hypergan/networks.hpp"

namespace hypergan {

namespace fs = std::filesystem;

enum class PadPolicy { kReflect, kReplicate };

PadPolicy parse_pad_policy(const std::string& text);

// Smallest multiple of `multiple` that is >= n.
int64_t round_up(int64_t n, int64_t multiple);

/// Pads the bottom/right edges of an NxCxHxW tensor up to multiples of 8.
torch::Tensor pad_to_multiple_of_8(const torch::Tensor& x, PadPolicy policy = PadPolicy::kReflect);

/// G on an image of any size: pad to a multiple of 8, run, crop back.
ImageTensor enhance_image(Generator& generator, const ImageTensor& x, PadPolicy policy = PadPolicy::kReflect);

// 8-bit RGB in, 8-bit RGB out, native resolution.
cv::Mat enhance_rgb(Generator& generator, const cv::Mat& rgb, PadPolicy policy = PadPolicy::kReflect);

struct EnhanceOptions {
  PadPolicy policy = PadPolicy::kReflect;
  GeneratorConfig expected_config{};
};

/// Enhances every image in `input_dir` into `output_dir` as PNG, keeping stems
/// and dimensions. Only the generator is used.
std::vector<fs::path> enhance(const fs::path& checkpoint, const fs::path& input_dir, const fs::path& output_dir,
                              const EnhanceOptions& options = {});

struct BenchmarkOptions {
  int timed_runs = 100;
  int warmup_runs = 10;
  uint64_t seed = 0;
};

struct BenchmarkReport {
  Resolution resolution;
  double latency_mean_ms = 0.0;
  double latency_std_ms = 0.0;
  double fps_mean = 0.0;
  double fps_std = 0.0;
  double peak_memory_gb = 0.0;
  std::string memory_label;
  int warmup_runs = 0;
  int timed_runs = 0;
  std::string device;
  std::vector<double> latencies_ms;
  std::optional<std::string> failure;

  bool ok() const { return !failure.has_value(); }
  double latency_cv() const { return latency_mean_ms > 0 ? latency_std_ms / latency_mean_ms : 0.0; }
  // |fps_mean - 1000 / latency_mean| <= fps_std.
  bool fps_consistent() const;
  // Coefficient of variation below 10%; exceeding it is flagged, not fatal.
  bool stable() const { return latency_cv() < 0.10; }
};

/// Times forward passes only, on fresh seeded random inputs at the exact target
/// resolution, one pass at a time. Warmup passes are excluded. A failure at one
/// resolution is recorded and the rest still run.
std::vector<BenchmarkReport> benchmark(Generator& generator, const std::vector<Resolution>& resolutions,
                                       const BenchmarkOptions& options = {});

std::vector<BenchmarkReport> benchmark(const fs::path& checkpoint, const std::vector<Resolution>& resolutions,
                                       const BenchmarkOptions& options = {});

// Resolution | Latency (ms) | FPS | Memory (GB) table, followed by the published
// RTX 4070 Super reference rows, which are informational only.
std::string format_benchmark_table(const std::vector<BenchmarkReport>& reports, bool include_reference = true);

}  // namespace hypergan
