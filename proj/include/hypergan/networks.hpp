#pragma once

#include <array>
#include <cstdint>
#include <string>

#include <torch/torch.h>

#include "hypergan/datasets.hpp"

namespace hypergan {

/// U-Net style generator: three stride-2 encoder stages, a residual bottleneck
/// and a mirrored transposed-convolution decoder with concatenation skips.
struct GeneratorConfig {
  int64_t in_channels = 3;
  int64_t out_channels = 3;
  std::array<int64_t, 3> encoder_channels{64, 128, 256};
  int bottleneck_blocks = 4;
  std::array<int64_t, 2> decoder_channels{128, 64};
  bool affine_norm = true;

  std::string canonical() const;
  uint64_t hash() const;
};

/// PatchGAN discriminator: three stride-2 4x4 feature layers and a stride-1
/// 4x4 head producing a single-channel realism map.
struct DiscriminatorConfig {
  int64_t in_channels = 3;
  std::array<int64_t, 3> channels{64, 128, 256};
  double leaky_slope = 0.2;
  bool affine_norm = true;

  std::string canonical() const;
  uint64_t hash() const;
};

class ResidualBlockImpl : public torch::nn::Module {
 public:
  ResidualBlockImpl(int64_t channels, bool affine_norm);
  torch::Tensor forward(const torch::Tensor& z);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::InstanceNorm2d norm1{nullptr}, norm2{nullptr};
};
TORCH_MODULE(ResidualBlock);

// Intermediate activations of one generator pass.
struct GeneratorTrace {
  torch::Tensor e1, e2, e3, m, d3, d2, output;
};

// Replaces an encoder skip with zeros before concatenation (ablation probes).
struct SkipAblation {
  bool drop_e1 = false;
  bool drop_e2 = false;
};

class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(GeneratorConfig config = {});

  // NxCxHxW in [-1, 1] -> NxCxHxW in [-1, 1]. H and W must be divisible by 8.
  torch::Tensor forward(const torch::Tensor& x);
  GeneratorTrace trace(const torch::Tensor& x, SkipAblation ablation = {});

  const GeneratorConfig& config() const { return config_; }

  torch::nn::Conv2d enc1{nullptr}, enc2{nullptr}, enc3{nullptr};
  torch::nn::InstanceNorm2d enc2_norm{nullptr}, enc3_norm{nullptr};
  torch::nn::ModuleList bottleneck;
  torch::nn::ConvTranspose2d dec3{nullptr}, dec2{nullptr}, head{nullptr};
  torch::nn::InstanceNorm2d dec3_norm{nullptr}, dec2_norm{nullptr};

 private:
  GeneratorConfig config_;
};
TORCH_MODULE(Generator);

class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(DiscriminatorConfig config = {});

  // NxCxhxw (h, w >= 16) -> Nx1xh'xw' unbounded realism scores.
  torch::Tensor forward(const torch::Tensor& x);

  const DiscriminatorConfig& config() const { return config_; }

  // Spatial size of the realism map for an input side length.
  static int64_t output_size(int64_t input_size);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr}, head{nullptr};
  torch::nn::InstanceNorm2d norm2{nullptr}, norm3{nullptr};

 private:
  DiscriminatorConfig config_;
};
TORCH_MODULE(Discriminator);

// Throws ShapeError unless `x` is Nx3xHxW with H, W divisible by 8.
void check_generator_input(const torch::Tensor& x);

/// Runs G on one image and returns an image of the same shape.
ImageTensor generator_forward(Generator& generator, const ImageTensor& x);

/// Convolution kernels ~ N(0, 0.02), convolution biases 0, norm scale 1 and
/// shift 0, drawn from a generator seeded with `seed` only.
void init_weights(torch::nn::Module& net, uint64_t seed);

int64_t parameter_count(const torch::nn::Module& net);

// FNV-1a over the raw bytes of every parameter, in registration order.
uint64_t parameter_hash(const torch::nn::Module& net);

}  // namespace hypergan
