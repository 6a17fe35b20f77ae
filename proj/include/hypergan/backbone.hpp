#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "hypergan/patches.hpp"

namespace hypergan {

/// Flat feature vector of one patch.
struct Embedding {
  std::vector<float> vector;
  std::optional<double> norm;

  size_t dimension() const { return vector.size(); }
};

/// The first ten convolutions of VGG-16 (blocks 1-4), ending at the ReLU after
/// the third convolution of block 4.
class Vgg16Block4Impl : public torch::nn::Module {
 public:
  Vgg16Block4Impl();
  torch::Tensor forward(torch::Tensor x);

  std::vector<torch::nn::Conv2d>& convs() { return convs_; }

 private:
  std::vector<torch::nn::Conv2d> convs_;
};
TORCH_MODULE(Vgg16Block4);

// Channel and kernel layout of the ten convolutions, in order.
struct ConvShape {
  int64_t in_channels;
  int64_t out_channels;
};
const std::vector<ConvShape>& vgg16_block4_layout();

/// Frozen perceptual embedding. Patches in [-1, 1] are mapped to ImageNet
/// statistics before the forward pass; the flattened relu4_3 activation is the
/// embedding.
class PerceptualEmbedder {
 public:
  static constexpr const char* kLayerName = "relu4_3";

  // Pretrained weights in the binary layout written by
  // tools/export_vgg16_weights.py. Throws SetupError naming the asset when the
  // file is missing or malformed.
  static PerceptualEmbedder from_weights(const std::filesystem::path& weights);

  // Gaussian-initialized backbone; the id records the seed so indices built
  // with it are never mixed with pretrained ones.
  static PerceptualEmbedder random(uint64_t seed);

  // "random:<seed>" or a weights path.
  static PerceptualEmbedder from_spec(const std::string& spec);

  const std::string& backbone_id() const { return backbone_id_; }
  std::string layer_name() const { return kLayerName; }

  Embedding embed(const Patch& patch) const;
  Embedding embed(const torch::Tensor& patch) const;

  // d = 512 * (s/8) * (s/8) with s = floor-halved three times through the pools.
  static int64_t dimension_for(int64_t patch_size);

  Vgg16Block4& network() { return net_; }

 private:
  PerceptualEmbedder(Vgg16Block4 net, std::string id);

  mutable Vgg16Block4 net_;
  std::string backbone_id_;
};

// Writes a backbone's weights in the layout read by from_weights.
void save_vgg16_weights(Vgg16Block4& net, const std::filesystem::path& path);

}  // namespace hypergan
