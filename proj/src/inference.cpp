#include "hypergan/inference.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <torch/cuda.h>

#include "hypergan/checkpoint.hpp"
#include "hypergan/errors.hpp"

namespace hypergan {

PadPolicy parse_pad_policy(const std::string& text) {
  if (text == "reflect") return PadPolicy::kReflect;
  if (text == "replicate") return PadPolicy::kReplicate;
  throw ConfigError("unknown pad policy '" + text + "' (expected reflect or replicate)");
}

int64_t round_up(int64_t n, int64_t multiple) { return (n + multiple - 1) / multiple * multiple; }

torch::Tensor pad_to_multiple_of_8(const torch::Tensor& x, PadPolicy policy) {
  if (x.dim() != 4) throw ShapeError("padding expects an NxCxHxW tensor");
  const int64_t h = x.size(2), w = x.size(3);
  const int64_t pad_h = round_up(h, 8) - h, pad_w = round_up(w, 8) - w;
  if (pad_h == 0 && pad_w == 0) return x;
  namespace F = torch::nn::functional;
  // Reflection needs the pad to be smaller than the edge it mirrors.
  const bool reflect = policy == PadPolicy::kReflect && pad_h < h && pad_w < w;
  auto options = F::PadFuncOptions({0, pad_w, 0, pad_h});
  if (reflect) {
    options.mode(torch::kReflect);
  } else {
    options.mode(torch::kReplicate);
  }
  return F::pad(x, options);
}

ImageTensor enhance_image(Generator& generator, const ImageTensor& x, PadPolicy policy) {
  if (x.data.dim() != 3 || x.data.size(0) != 3) throw ShapeError("enhance expects a 3xHxW image");
  torch::NoGradGuard no_grad;
  const int64_t h = x.height(), w = x.width();
  auto padded = pad_to_multiple_of_8(x.data.unsqueeze(0), policy);
  auto out = generator->forward(padded).narrow(2, 0, h).narrow(3, 0, w).squeeze(0).contiguous();
  return ImageTensor{out, x.source_id};
}

cv::Mat enhance_rgb(Generator& generator, const cv::Mat& rgb, PadPolicy policy) {
  return denormalize(enhance_image(generator, preprocess(rgb, std::nullopt), policy).data);
}

std::vector<fs::path> enhance(const fs::path& checkpoint, const fs::path& input_dir, const fs::path& output_dir,
                              const EnhanceOptions& options) {
  auto generator = load_generator(checkpoint, options.expected_config);
  generator->eval();
  const auto inputs = list_images(input_dir);
  fs::create_directories(output_dir);
  std::vector<fs::path> written;
  for (const auto& path : inputs) {
    const auto out_path = output_dir / (path.stem().string() + ".png");
    write_rgb(out_path, enhance_rgb(generator, read_rgb(path), options.policy));
    written.push_back(out_path);
  }
  return written;
}

bool BenchmarkReport::fps_consistent() const {
  if (!ok() || latency_mean_ms <= 0.0) return false;
  return std::abs(fps_mean - 1000.0 / latency_mean_ms) <= fps_std + 1e-9;
}

namespace {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd out;
  if (v.empty()) return out;
  out.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return out;
}

// Peak resident set size of this process in GB, from /proc.
std::optional<double> peak_rss_gb() {
  std::ifstream status("/proc/self/status");
  std::string line;
  while (std::getline(status, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      std::istringstream in(line.substr(6));
      double kb = 0.0;
      in >> kb;
      return kb / (1024.0 * 1024.0);
    }
  }
  return std::nullopt;
}

// Resets VmHWM so the next reading covers only what follows.
bool reset_peak_rss() {
  std::ofstream clear("/proc/self/clear_refs");
  if (!clear) return false;
  clear << "5";
  clear.flush();
  return static_cast<bool>(clear);
}

void synchronize(const torch::Device& device) {
  if (device.is_cuda()) torch::cuda::synchronize();
}

}  // namespace

std::vector<BenchmarkReport> benchmark(Generator& generator, const std::vector<Resolution>& resolutions,
                                       const BenchmarkOptions& options) {
  if (options.timed_runs <= 0) throw ConfigError("benchmark needs at least one timed run");
  if (options.warmup_runs < 0) throw ConfigError("warmup runs must be non-negative");
  const torch::Device device = torch::cuda::is_available() ? torch::kCUDA : torch::kCPU;
  generator->to(device);
  generator->eval();
  torch::NoGradGuard no_grad;

  std::vector<BenchmarkReport> reports;
  for (const auto& res : resolutions) {
    BenchmarkReport report;
    report.resolution = res;
    report.warmup_runs = options.warmup_runs;
    report.timed_runs = options.timed_runs;
    report.device = device.is_cuda() ? "cuda" : "cpu (" + std::to_string(at::get_num_threads()) + " threads)";
    try {
      check_generator_input(torch::empty({1, 3, res.height, res.width}, torch::kMeta));
      const bool scoped_peak = !device.is_cuda() && reset_peak_rss();
      report.memory_label = device.is_cuda() ? "unavailable (device allocator not exposed)"
                            : scoped_peak    ? "peak host RSS"
                                             : "peak host RSS (process lifetime)";
      auto gen = at::make_generator<at::CPUGeneratorImpl>(options.seed);
      auto input = torch::empty({1, 3, res.height, res.width});
      for (int i = 0; i < options.warmup_runs + options.timed_runs; ++i) {
        input.uniform_(-1.0, 1.0, gen);
        auto on_device = input.to(device);
        synchronize(device);
        const auto start = std::chrono::steady_clock::now();
        auto out = generator->forward(on_device);
        synchronize(device);
        const auto stop = std::chrono::steady_clock::now();
        if (i >= options.warmup_runs) {
          report.latencies_ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
        }
      }
      std::vector<double> fps;
      for (double ms : report.latencies_ms) fps.push_back(1000.0 / ms);
      const auto lat = mean_std(report.latencies_ms);
      const auto rate = mean_std(fps);
      report.latency_mean_ms = lat.mean;
      report.latency_std_ms = lat.std;
      report.fps_mean = rate.mean;
      report.fps_std = rate.std;
      report.peak_memory_gb = device.is_cuda() ? std::nan("") : peak_rss_gb().value_or(std::nan(""));
    } catch (const std::exception& e) {
      report.failure = e.what();
      report.latencies_ms.clear();
    }
    reports.push_back(std::move(report));
  }
  return reports;
}

std::vector<BenchmarkReport> benchmark(const fs::path& checkpoint, const std::vector<Resolution>& resolutions,
                                       const BenchmarkOptions& options) {
  auto generator = load_generator(checkpoint);
  return benchmark(generator, resolutions, options);
}

namespace {

std::string resolution_label(const Resolution& r) {
  if (r.width == 1280 && r.height == 720) return "720p";
  if (r.width == 1920 && r.height == 1080) return "1080p";
  return to_string(r);
}

}  // namespace

std::string format_benchmark_table(const std::vector<BenchmarkReport>& reports, bool include_reference) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "| %-10s | %-20s | %-16s | %-9s |\n", "Resolution", "Latency (ms)", "FPS",
                "VRAM (GB)");
  out << line << "|------------|----------------------|------------------|-----------|\n";
  for (const auto& r : reports) {
    if (!r.ok()) {
      std::snprintf(line, sizeof(line), "| %-10s | %-50s |\n", resolution_label(r.resolution).c_str(),
                    ("FAILED: " + r.failure->substr(0, 42)).c_str());
      out << line;
      continue;
    }
    char lat[64], fps[64];
    std::snprintf(lat, sizeof(lat), "%.3f ± %.3f", r.latency_mean_ms, r.latency_std_ms);
    std::snprintf(fps, sizeof(fps), "%.2f ± %.2f", r.fps_mean, r.fps_std);
    std::snprintf(line, sizeof(line), "| %-10s | %-21s | %-17s | %-9.2f |\n", resolution_label(r.resolution).c_str(),
                  lat, fps, r.peak_memory_gb);
    out << line;
  }
  out << "\n";
  for (const auto& r : reports) {
    if (!r.ok()) continue;
    out << "# " << resolution_label(r.resolution) << ": device=" << r.device << ", warmup=" << r.warmup_runs
        << ", timed=" << r.timed_runs << ", memory=" << r.memory_label
        << ", cv=" << r.latency_cv() << (r.stable() ? "" : " (UNSTABLE: cv >= 10%)")
        << ", fps/latency consistent=" << (r.fps_consistent() ? "yes" : "no") << "\n";
  }
  if (include_reference) {
    out << "# published reference, NVIDIA RTX 4070 Super (not a pass/fail threshold):\n"
        << "#   720p  | 12.347 ± 0.279 | 81.03 ± 1.80 | 0.8\n"
        << "#   1080p | 29.642 ± 0.175 | 33.74 ± 0.20 | 1.5\n";
  }
  return out.str();
}

}  // namespace hypergan
