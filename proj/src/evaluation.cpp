#include "hypergan/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

#include <json.hpp>
#include <opencv2/imgproc.hpp>

#include "hypergan/errors.hpp"
#include "hypergan/hashing.hpp"

namespace hypergan {

namespace {

constexpr char kFeatureMagic[8] = {'H', 'G', 'F', 'E', 'A', 'T', '0', '1'};

// `count` distinct indices from [0, n), partial Fisher-Yates.
std::vector<Eigen::Index> sample_without_replacement(Eigen::Index n, Eigen::Index count, std::mt19937_64& rng) {
  std::vector<Eigen::Index> pool(static_cast<size_t>(n));
  std::iota(pool.begin(), pool.end(), Eigen::Index{0});
  for (Eigen::Index i = 0; i < count; ++i) {
    const auto j = i + static_cast<Eigen::Index>(rng() % static_cast<uint64_t>(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(static_cast<size_t>(count));
  return pool;
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

Eigen::MatrixXd cubic_kernel_matrix(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  const double d = static_cast<double>(x.cols());
  Eigen::MatrixXd k = (x * y.transpose()).array() / d + 1.0;
  return k.array().cube();
}

}  // namespace

void FeatureSet::validate() const {
  if (features.rows() < 2) throw ContractError("a feature set needs at least two rows");
  if (!features.allFinite()) throw ContractError("feature set '" + extractor_id + "' has non-finite values");
}

uint64_t FeatureSet::fingerprint() const {
  uint64_t h = fnv1a(extractor_id);
  const Eigen::Index dims[2] = {features.rows(), features.cols()};
  h = fnv1a(dims, sizeof(dims), h);
  return fnv1a(features.data(), static_cast<size_t>(features.size()) * sizeof(double), h);
}

void save_features(const fs::path& path, const FeatureSet& set) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write features '" + path.string() + "'");
  const uint64_t rows = static_cast<uint64_t>(set.features.rows());
  const uint64_t cols = static_cast<uint64_t>(set.features.cols());
  const uint64_t id_len = set.extractor_id.size();
  out.write(kFeatureMagic, sizeof(kFeatureMagic));
  out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
  out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
  out.write(reinterpret_cast<const char*>(&id_len), sizeof(id_len));
  out.write(set.extractor_id.data(), static_cast<std::streamsize>(id_len));
  // Row-major on disk.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = set.features;
  out.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
}

FeatureSet load_features(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError(path.string(), "cannot open feature file");
  char magic[8];
  uint64_t rows = 0, cols = 0, id_len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
  in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
  in.read(reinterpret_cast<char*>(&id_len), sizeof(id_len));
  if (!in || std::memcmp(magic, kFeatureMagic, sizeof(magic)) != 0 || id_len > 4096) {
    throw IngestionError(path.string(), "not a feature file");
  }
  FeatureSet set;
  set.extractor_id.resize(id_len);
  in.read(set.extractor_id.data(), static_cast<std::streamsize>(id_len));
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
  in.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
  if (!in) throw IngestionError(path.string(), "feature file is truncated");
  set.features = rm;
  return set;
}

double polynomial_kernel(const Eigen::Ref<const Eigen::RowVectorXd>& x, const Eigen::Ref<const Eigen::RowVectorXd>& y) {
  const double v = x.dot(y) / static_cast<double>(x.size()) + 1.0;
  return v * v * v;
}

double mmd2_unbiased(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  if (x.rows() < 2 || y.rows() < 2) throw ContractError("MMD needs at least two samples per set");
  if (x.cols() != y.cols()) throw ContractError("MMD samples differ in dimension");
  const double m = static_cast<double>(x.rows());
  const double n = static_cast<double>(y.rows());
  const Eigen::MatrixXd kxx = cubic_kernel_matrix(x, x);
  const Eigen::MatrixXd kyy = cubic_kernel_matrix(y, y);
  const Eigen::MatrixXd kxy = cubic_kernel_matrix(x, y);
  const double xx = (kxx.sum() - kxx.trace()) / (m * (m - 1.0));
  const double yy = (kyy.sum() - kyy.trace()) / (n * (n - 1.0));
  return xx + yy - 2.0 * kxy.sum() / (m * n);
}

KidResult compute_kid(const FeatureSet& a, const FeatureSet& b, const KidOptions& options) {
  a.validate();
  b.validate();
  if (a.dimension() != b.dimension()) throw ContractError("feature sets differ in dimension");
  if (options.n_subsets < 1) throw ConfigError("KID needs at least one subset");
  if (options.subset_size < 2) throw ConfigError("KID subset size must be at least 2");
  if (options.subset_size > std::min(a.image_count(), b.image_count())) {
    throw ConfigError("KID subset size " + std::to_string(options.subset_size) + " exceeds the smaller set (" +
                      std::to_string(std::min(a.image_count(), b.image_count())) + " rows)");
  }
  // Order the pair by content so the result does not depend on argument order.
  const bool swap = a.fingerprint() > b.fingerprint();
  const FeatureSet& first = swap ? b : a;
  const FeatureSet& second = swap ? a : b;

  KidResult result;
  result.subset_size = options.subset_size;
  result.n_subsets = options.n_subsets;
  for (int k = 0; k < options.n_subsets; ++k) {
    std::mt19937_64 rng(options.seed * 0x9E3779B97F4A7C15ull + static_cast<uint64_t>(k));
    const auto ia = sample_without_replacement(first.image_count(), options.subset_size, rng);
    const auto ib = sample_without_replacement(second.image_count(), options.subset_size, rng);
    result.subset_values.push_back(mmd2_unbiased(gather_rows(first.features, ia), gather_rows(second.features, ib)));
  }
  const double count = static_cast<double>(result.subset_values.size());
  result.mean = std::accumulate(result.subset_values.begin(), result.subset_values.end(), 0.0) / count;
  double ss = 0.0;
  for (double v : result.subset_values) ss += (v - result.mean) * (v - result.mean);
  result.std = std::sqrt(ss / count);
  return result;
}

std::string format_kid(const KidResult& result, const std::string& label_a, const std::string& label_b) {
  nlohmann::json j = {
      {"set_a", label_a},
      {"set_b", label_b},
      {"kid_mean", result.mean},
      {"kid_std", result.std},
      {"kid_x100_mean", result.mean_x100()},
      {"kid_x100_std", result.std_x100()},
      {"scale_convention", "KID x 100"},
      {"subset_size", result.subset_size},
      {"n_subsets", result.n_subsets},
  };
  return j.dump(2);
}

TorchScriptExtractor::TorchScriptExtractor(const fs::path& module_path, int64_t input_size)
    : input_size_(input_size) {
  if (!fs::exists(module_path)) {
    throw SetupError("missing Inception pool-feature extractor (TorchScript) at '" + module_path.string() +
                     "'; export it with tools/export_inception.py");
  }
  try {
    module_ = torch::jit::load(module_path.string());
  } catch (const c10::Error& e) {
    throw SetupError("cannot load TorchScript extractor '" + module_path.string() + "': " + e.what_without_backtrace());
  }
  module_.eval();
  std::ifstream in(module_path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  id_ = "torchscript:" + to_hex(fnv1a(bytes));
}

Eigen::RowVectorXd TorchScriptExtractor::extract(const cv::Mat& rgb) {
  torch::NoGradGuard no_grad;
  auto image = preprocess(rgb, Resolution{input_size_, input_size_}).data;
  auto unit = ((image + 1.0f) / 2.0f).unsqueeze(0);
  auto out = module_.forward({unit}).toTensor().to(torch::kDouble).flatten().contiguous();
  return Eigen::Map<const Eigen::RowVectorXd>(out.data_ptr<double>(), out.numel());
}

uint64_t dataset_hash(const fs::path& dir) {
  uint64_t h = kFnvOffset;
  for (const auto& path : list_images(dir)) {
    h = fnv1a(path.filename().string(), h);
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    h = fnv1a(bytes, h);
  }
  return h;
}

FeatureSet extract_features(const fs::path& dir, FeatureExtractor& extractor, const std::optional<fs::path>& cache_dir) {
  std::optional<fs::path> cache_file;
  if (cache_dir) {
    std::string key = extractor.id() + "-" + to_hex(dataset_hash(dir));
    std::replace(key.begin(), key.end(), ':', '_');
    cache_file = *cache_dir / (key + ".feat");
    if (fs::exists(*cache_file)) return load_features(*cache_file);
  }
  const auto images = list_images(dir);
  if (images.empty()) throw IngestionError(dir.string(), "no images to extract features from");
  FeatureSet set;
  set.extractor_id = extractor.id();
  for (size_t i = 0; i < images.size(); ++i) {
    const auto row = extractor.extract(read_rgb(images[i]));
    if (i == 0) set.features.resize(static_cast<Eigen::Index>(images.size()), row.size());
    if (row.size() != set.features.cols()) throw ContractError("extractor returned inconsistent dimensions");
    set.features.row(static_cast<Eigen::Index>(i)) = row;
  }
  if (cache_file) save_features(*cache_file, set);
  return set;
}

std::string format_distance(double squared_distance) {
  char buf[64];
  if (std::abs(squared_distance) < 1e6) {
    std::snprintf(buf, sizeof(buf), "%.1f", squared_distance);
  } else {
    std::snprintf(buf, sizeof(buf), "%.3e", squared_distance);
  }
  return buf;
}

MatchSheet render_match_sheet(const ImageTensor& generated, const RealPatchMatcher& matcher, const fs::path& out_path) {
  const auto& geometry = matcher.index().metadata().geometry;
  const auto patches = extract_patches(generated, geometry);
  const int p = static_cast<int>(geometry.patch_size);
  const int gap = std::max(4, p / 16);
  const int band = std::max(18, p / 6);
  const int width = kPatchesPerImage * p + (kPatchesPerImage + 1) * gap;
  const int height = 2 * p + 2 * gap + band;
  cv::Mat sheet(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
  const double font_scale = std::max(0.35, band / 40.0);

  MatchSheet result;
  result.image_path = out_path;
  nlohmann::json sidecar = {{"sheet", out_path.filename().string()}, {"source", generated.source_id}};
  auto& rows = sidecar["matches"] = nlohmann::json::array();
  for (const auto& patch : patches) {
    const auto found = matcher.match(patch.data);
    const int x = gap + patch.grid_pos * (p + gap);
    denormalize(patch.data).copyTo(sheet(cv::Rect(x, gap, p, p)));
    denormalize(found.pixels).copyTo(sheet(cv::Rect(x, gap + p + band, p, p)));
    const std::string label = "d=" + format_distance(found.match.squared_distance);
    int baseline = 0;
    const auto size = cv::getTextSize(label, cv::FONT_HERSHEY_SIMPLEX, font_scale, 1, &baseline);
    cv::putText(sheet, label, cv::Point(x + std::max(0, (p - size.width) / 2), gap + p + (band + size.height) / 2),
                cv::FONT_HERSHEY_SIMPLEX, font_scale, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
    rows.push_back({{"grid_pos", patch.grid_pos},
                    {"squared_distance", found.match.squared_distance},
                    {"label", format_distance(found.match.squared_distance)},
                    {"matched_source", found.match.provenance.source_id},
                    {"matched_grid_pos", found.match.provenance.grid_pos},
                    {"matched_id", found.match.id}});
    result.matches.push_back(found.match);
  }
  write_rgb(out_path, sheet);
  auto json_path = out_path;
  json_path.replace_extension(".json");
  std::ofstream(json_path) << sidecar.dump(2) << "\n";
  return result;
}

std::vector<MatchSheet> match_report(const fs::path& checkpoint, const RealPatchMatcher& matcher,
                                     const fs::path& images_dir, const fs::path& out_dir) {
  auto generator = load_generator(checkpoint);
  const auto& geometry = matcher.index().metadata().geometry;
  std::vector<MatchSheet> sheets;
  torch::NoGradGuard no_grad;
  for (const auto& path : list_images(images_dir)) {
    const auto x = load_image(path, geometry.image_resolution());
    const auto fake = generator_forward(generator, x);
    sheets.push_back(render_match_sheet(fake, matcher, out_dir / (path.stem().string() + "_matches.png")));
  }
  return sheets;
}

}  // namespace hypergan
