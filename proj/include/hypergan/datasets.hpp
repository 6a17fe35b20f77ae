#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <opencv2/core.hpp>
#include <torch/torch.h>

namespace hypergan {

namespace fs = std::filesystem;

enum class DatasetKind { kSynthetic, kEnhanced, kReal };
enum class Split { kTrain, kVal, kTest };

std::string to_string(DatasetKind kind);
std::string to_string(Split split);
Split parse_split(const std::string& name);

struct Resolution {
  int64_t height = 512;
  int64_t width = 512;

  bool operator==(const Resolution&) const = default;
};

// Parses "WxH" (e.g. "1920x1080").
Resolution parse_resolution(const std::string& text);
std::string to_string(const Resolution& res);

// Per-channel normalization applied after resizing.
inline constexpr float kNormMean = 0.5f;
inline constexpr float kNormStd = 0.5f;

/// A dataset root laid out as `<root>/<split>/<stem>.<ext>`. Images are paired
/// across datasets by filename stem.
struct DatasetSpec {
  fs::path root;
  DatasetKind kind = DatasetKind::kSynthetic;
  Split split = Split::kTrain;

  // The split directory when it exists, otherwise the root itself (real-world
  // datasets are usually unsplit).
  fs::path image_dir() const;
};

/// A normalized 3xHxW float tensor with values in [-1, 1].
struct ImageTensor {
  torch::Tensor data;
  std::string source_id;

  int64_t height() const { return data.size(1); }
  int64_t width() const { return data.size(2); }
};

bool is_image_file(const fs::path& path);

// Image files directly under `dir`, sorted by filename.
std::vector<fs::path> list_images(const fs::path& dir);

// Decodes an 8-bit RGB image (HxWx3, channel order R,G,B). Throws IngestionError
// on unreadable files and ChannelCountError on non-3-channel images.
cv::Mat read_rgb(const fs::path& path);

void write_rgb(const fs::path& path, const cv::Mat& rgb);

// Bilinear, antialiased resize of an NxCxHxW (or CxHxW) float tensor. Identity
// when the size already matches.
torch::Tensor resize_bilinear(const torch::Tensor& image, Resolution size);

/// Resizes an 8-bit RGB image and maps each channel through v -> (v/255 - 0.5)/0.5.
/// A missing resolution keeps the native size.
ImageTensor preprocess(const cv::Mat& rgb, std::optional<Resolution> resolution = Resolution{},
                       std::string source_id = {});

ImageTensor load_image(const fs::path& path, std::optional<Resolution> resolution = Resolution{});

// Inverse of preprocess: clamp((v+1)/2, 0, 1) * 255 rounded half-to-even, as an
// 8-bit RGB matrix.
cv::Mat denormalize(const torch::Tensor& image);

struct PairingReport {
  struct Excluded {
    std::string stem;
    std::string reason;
  };
  std::vector<Excluded> excluded;
  std::vector<std::string> warnings;

  bool clean() const { return excluded.empty() && warnings.empty(); }
  void write(const fs::path& path) const;
};

struct PairEntry {
  std::string stem;
  fs::path synthetic;
  fs::path enhanced;
};

struct PairedSplitOptions {
  // One stem per line; when absent the stems found in the synthetic split
  // directory are used.
  std::optional<fs::path> manifest{};
  uint64_t seed = 0;
  bool shuffle = true;
  Resolution resolution{};
};

/// Aligned (x, target) pairs for one split. Images are decoded lazily by
/// `load`, so a split can be far larger than memory.
class PairedSplit {
 public:
  PairedSplit(std::vector<PairEntry> entries, PairingReport report, Resolution resolution);

  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const PairEntry& entry(size_t i) const { return entries_.at(i); }
  const std::vector<PairEntry>& entries() const { return entries_; }
  const PairingReport& report() const { return report_; }
  Resolution resolution() const { return resolution_; }

  std::pair<ImageTensor, ImageTensor> load(size_t i) const;

  // A deterministic permutation of [0, size) for the given epoch.
  std::vector<size_t> epoch_order(uint64_t seed, uint64_t epoch) const;

 private:
  std::vector<PairEntry> entries_;
  PairingReport report_;
  Resolution resolution_;
};

PairedSplit load_paired_split(const DatasetSpec& synthetic, const DatasetSpec& enhanced,
                              const PairedSplitOptions& options = {});

// Fisher-Yates shuffle driven by a 64-bit mt19937 stream; stable across runs.
void seeded_shuffle(std::vector<size_t>& order, uint64_t seed);

}  // namespace hypergan
