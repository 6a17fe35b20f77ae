#include "hypergan/datasets.hpp"

#include <algorithm>
#include <cstring>
#include <cctype>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "hypergan/errors.hpp"

namespace hypergan {

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::kSynthetic: return "synthetic";
    case DatasetKind::kEnhanced: return "enhanced";
    case DatasetKind::kReal: return "real";
  }
  return "unknown";
}

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "unknown";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw ConfigError("unknown split '" + name + "' (expected train, val or test)");
}

Resolution parse_resolution(const std::string& text) {
  const auto x = text.find_first_of("xX");
  if (x == std::string::npos) throw ConfigError("resolution '" + text + "' is not of the form WxH");
  try {
    size_t used_w = 0, used_h = 0;
    const std::string w_text = text.substr(0, x);
    const std::string h_text = text.substr(x + 1);
    Resolution res{std::stoll(h_text, &used_h), std::stoll(w_text, &used_w)};
    if (used_w != w_text.size() || used_h != h_text.size() || res.height <= 0 || res.width <= 0) {
      throw ConfigError("resolution '" + text + "' must be two positive integers");
    }
    return res;
  } catch (const std::logic_error&) {
    throw ConfigError("resolution '" + text + "' is not of the form WxH");
  }
}

std::string to_string(const Resolution& res) {
  return std::to_string(res.width) + "x" + std::to_string(res.height);
}

fs::path DatasetSpec::image_dir() const {
  const fs::path split_dir = root / to_string(split);
  return fs::is_directory(split_dir) ? split_dir : root;
}

bool is_image_file(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

std::vector<fs::path> list_images(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

cv::Mat read_rgb(const fs::path& path) {
  if (!fs::exists(path)) throw IngestionError(path.string(), "file does not exist");
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw IngestionError(path.string(), "not a decodable image");
  if (raw.channels() != 3) {
    throw ChannelCountError("'" + path.string() + "' has " + std::to_string(raw.channels()) +
                            " channels, expected 3");
  }
  if (raw.depth() != CV_8U) raw.convertTo(raw, CV_8U, raw.depth() == CV_16U ? 1.0 / 257.0 : 1.0);
  cv::Mat rgb;
  cv::cvtColor(raw, rgb, cv::COLOR_BGR2RGB);
  return rgb;
}

void write_rgb(const fs::path& path, const cv::Mat& rgb) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path.string(), bgr)) throw Error("failed to write image '" + path.string() + "'");
}

torch::Tensor resize_bilinear(const torch::Tensor& image, Resolution size) {
  const bool batched = image.dim() == 4;
  if (!batched && image.dim() != 3) throw ShapeError("resize expects a CxHxW or NxCxHxW tensor");
  if (image.size(-2) == size.height && image.size(-1) == size.width) return image;
  namespace F = torch::nn::functional;
  auto input = batched ? image : image.unsqueeze(0);
  auto out = F::interpolate(input, F::InterpolateFuncOptions()
                                       .size(std::vector<int64_t>{size.height, size.width})
                                       .mode(torch::kBilinear)
                                       .align_corners(false)
                                       .antialias(true));
  return batched ? out : out.squeeze(0);
}

ImageTensor preprocess(const cv::Mat& rgb, std::optional<Resolution> resolution, std::string source_id) {
  if (rgb.channels() != 3) {
    throw ChannelCountError("preprocess expects 3 channels, got " + std::to_string(rgb.channels()));
  }
  if (rgb.depth() != CV_8U) throw ShapeError("preprocess expects an 8-bit image");
  if (resolution && (resolution->height <= 0 || resolution->width <= 0)) {
    throw ShapeError("preprocess resolution must be positive");
  }
  cv::Mat contiguous = rgb.isContinuous() ? rgb : rgb.clone();
  auto hwc = torch::from_blob(contiguous.data, {contiguous.rows, contiguous.cols, 3}, torch::kUInt8);
  auto chw = hwc.permute({2, 0, 1}).to(torch::kFloat32).contiguous();
  if (resolution) chw = resize_bilinear(chw, *resolution).clamp(0.0, 255.0);
  auto normalized = (chw / 255.0f - kNormMean) / kNormStd;
  return ImageTensor{normalized.contiguous(), std::move(source_id)};
}

ImageTensor load_image(const fs::path& path, std::optional<Resolution> resolution) {
  return preprocess(read_rgb(path), resolution, path.string());
}

cv::Mat denormalize(const torch::Tensor& image) {
  auto chw = image.dim() == 4 ? image.squeeze(0) : image;
  if (chw.dim() != 3 || chw.size(0) != 3) throw ShapeError("denormalize expects a 3xHxW tensor");
  // torch::round rounds half to even.
  auto levels = torch::round(((chw.detach().to(torch::kCPU, torch::kFloat32) + 1.0f) / 2.0f).clamp(0.0, 1.0) * 255.0f);
  auto hwc = levels.to(torch::kUInt8).permute({1, 2, 0}).contiguous();
  cv::Mat out(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_8UC3);
  std::memcpy(out.data, hwc.data_ptr<uint8_t>(), hwc.numel());
  return out;
}

void PairingReport::write(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write pairing report '" + path.string() + "'");
  out << "# excluded stems: " << excluded.size() << "\n";
  for (const auto& w : warnings) out << "# warning: " << w << "\n";
  for (const auto& e : excluded) out << e.stem << "\t" << e.reason << "\n";
}

PairedSplit::PairedSplit(std::vector<PairEntry> entries, PairingReport report, Resolution resolution)
    : entries_(std::move(entries)), report_(std::move(report)), resolution_(resolution) {}

std::pair<ImageTensor, ImageTensor> PairedSplit::load(size_t i) const {
  const auto& e = entries_.at(i);
  return {load_image(e.synthetic, resolution_), load_image(e.enhanced, resolution_)};
}

std::vector<size_t> PairedSplit::epoch_order(uint64_t seed, uint64_t epoch) const {
  std::vector<size_t> order(entries_.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  seeded_shuffle(order, seed * 0x9E3779B97F4A7C15ull + epoch);
  return order;
}

void seeded_shuffle(std::vector<size_t>& order, uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (size_t i = order.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
}

namespace {

std::map<std::string, fs::path> index_by_stem(const fs::path& dir, PairingReport& report,
                                              const std::string& label) {
  std::map<std::string, fs::path> by_stem;
  for (const auto& path : list_images(dir)) {
    const std::string stem = path.stem().string();
    auto [it, inserted] = by_stem.emplace(stem, path);
    if (!inserted) {
      report.warnings.push_back(label + " stem '" + stem + "' has several files; using " +
                                it->second.filename().string());
    }
  }
  return by_stem;
}

std::vector<std::string> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError(path.string(), "cannot open split manifest");
  std::vector<std::string> stems;
  std::set<std::string> seen;
  std::string line;
  while (std::getline(in, line)) {
    const auto begin = line.find_first_not_of(" \t\r");
    if (begin == std::string::npos || line[begin] == '#') continue;
    const auto end = line.find_last_not_of(" \t\r");
    std::string stem = line.substr(begin, end - begin + 1);
    if (seen.insert(stem).second) stems.push_back(std::move(stem));
  }
  return stems;
}

}  // namespace

PairedSplit load_paired_split(const DatasetSpec& synthetic, const DatasetSpec& enhanced,
                              const PairedSplitOptions& options) {
  if (synthetic.split != enhanced.split) {
    throw ConfigError("synthetic and enhanced specs name different splits");
  }
  PairingReport report;
  for (const auto* spec : {&synthetic, &enhanced}) {
    if (!fs::is_directory(spec->root)) {
      throw IngestionError(spec->root.string(), "dataset root is not a directory");
    }
  }
  const auto syn = index_by_stem(synthetic.image_dir(), report, "synthetic");
  const auto enh = index_by_stem(enhanced.image_dir(), report, "enhanced");

  std::vector<std::string> stems;
  if (options.manifest) {
    stems = read_manifest(*options.manifest);
  } else {
    for (const auto& [stem, _] : syn) stems.push_back(stem);
  }
  std::sort(stems.begin(), stems.end());

  std::vector<PairEntry> entries;
  std::set<std::string> used;
  for (const auto& stem : stems) {
    const auto s = syn.find(stem);
    const auto e = enh.find(stem);
    if (s == syn.end()) {
      report.excluded.push_back({stem, "missing synthetic image"});
    } else if (e == enh.end()) {
      report.excluded.push_back({stem, "missing enhanced counterpart"});
    } else {
      entries.push_back({stem, s->second, e->second});
      used.insert(stem);
    }
  }
  // Enhanced images with no synthetic partner never enter the manifest-driven
  // loop above, so report them separately.
  if (!options.manifest) {
    for (const auto& [stem, _] : enh) {
      if (!syn.count(stem)) report.excluded.push_back({stem, "missing synthetic image"});
    }
  }
  if (entries.empty()) {
    report.warnings.push_back("no aligned pairs found for split '" + to_string(synthetic.split) + "'");
  }
  if (!report.clean()) {
    std::cerr << "[datasets] split '" << to_string(synthetic.split) << "': " << entries.size()
              << " pairs, " << report.excluded.size() << " excluded\n";
  }

  if (options.shuffle) {
    std::vector<size_t> order(entries.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    seeded_shuffle(order, options.seed);
    std::vector<PairEntry> shuffled;
    shuffled.reserve(entries.size());
    for (size_t i : order) shuffled.push_back(entries[i]);
    entries = std::move(shuffled);
  }
  return PairedSplit(std::move(entries), std::move(report), options.resolution);
}

}  // namespace hypergan
