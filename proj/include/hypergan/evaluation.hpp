#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <opencv2/core.hpp>
#include <torch/script.h>
#include <torch/torch.h>

#include "hypergan/checkpoint.hpp"
#include "hypergan/patch_index.hpp"
#include "hypergan/training.hpp"

namespace hypergan {

namespace fs = std::filesystem;

/// N x d feature matrix produced by one extractor.
struct FeatureSet {
  Eigen::MatrixXd features;
  std::string extractor_id;

  Eigen::Index image_count() const { return features.rows(); }
  Eigen::Index dimension() const { return features.cols(); }
  // Throws ContractError on non-finite rows or fewer than two rows.
  void validate() const;
  // Content fingerprint of the matrix and extractor id.
  uint64_t fingerprint() const;
};

void save_features(const fs::path& path, const FeatureSet& set);
FeatureSet load_features(const fs::path& path);

/// k(x, y) = (x.y / d + 1)^3
double polynomial_kernel(const Eigen::Ref<const Eigen::RowVectorXd>& x, const Eigen::Ref<const Eigen::RowVectorXd>& y);

/// Unbiased MMD^2 between two samples under the cubic polynomial kernel:
/// off-diagonal means of K_xx and K_yy minus twice the mean of K_xy.
double mmd2_unbiased(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

struct KidOptions {
  Eigen::Index subset_size = 100;
  int n_subsets = 100;
  uint64_t seed = 0;
};

struct KidResult {
  double mean = 0.0;  // raw MMD^2
  double std = 0.0;
  Eigen::Index subset_size = 0;
  int n_subsets = 0;
  std::vector<double> subset_values;

  // Reporting convention: KID x 100.
  double mean_x100() const { return mean * 100.0; }
  double std_x100() const { return std * 100.0; }
};

/// Mean and standard deviation of the unbiased estimator over random subsets
/// drawn without replacement. Subset draws are keyed on the sets' content, so
/// compute_kid(a, b) and compute_kid(b, a) see the same subsets.
KidResult compute_kid(const FeatureSet& a, const FeatureSet& b, const KidOptions& options = {});

std::string format_kid(const KidResult& result, const std::string& label_a, const std::string& label_b);

/// Maps an 8-bit RGB image to one feature row.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string id() const = 0;
  virtual Eigen::RowVectorXd extract(const cv::Mat& rgb) = 0;
};

/// A TorchScript module taking Nx3x299x299 RGB in [0, 1] and returning Nxd
/// pool features (see tools/export_inception.py).
class TorchScriptExtractor : public FeatureExtractor {
 public:
  explicit TorchScriptExtractor(const fs::path& module_path, int64_t input_size = 299);
  std::string id() const override { return id_; }
  Eigen::RowVectorXd extract(const cv::Mat& rgb) override;

 private:
  torch::jit::Module module_;
  std::string id_;
  int64_t input_size_;
};

/// Features of every image in `dir`. With a cache dir, results are stored as
/// `<cache>/<extractor>-<dataset hash>.feat` and reused.
FeatureSet extract_features(const fs::path& dir, FeatureExtractor& extractor,
                            const std::optional<fs::path>& cache_dir = std::nullopt);

// Hash over the names and bytes of the images in `dir`.
uint64_t dataset_hash(const fs::path& dir);

struct MatchSheet {
  fs::path image_path;
  std::vector<NearestMatch> matches;
};

std::string format_distance(double squared_distance);

/// Generated patches (top row) above their matched real patches (bottom row),
/// each pair labelled with its squared L2 feature distance. Writes the PNG and
/// a JSON sidecar next to it.
MatchSheet render_match_sheet(const ImageTensor& generated, const RealPatchMatcher& matcher,
                              const fs::path& out_path);

/// One sheet per image of `images_dir`, generated by the checkpoint's G.
std::vector<MatchSheet> match_report(const fs::path& checkpoint, const RealPatchMatcher& matcher,
                                     const fs::path& images_dir, const fs::path& out_dir);

}  // namespace hypergan
