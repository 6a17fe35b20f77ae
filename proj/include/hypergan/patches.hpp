#pragma once

#include <array>
#include <cstdint>
#include <string>

#include <torch/torch.h>

#include "hypergan/datasets.hpp"

namespace hypergan {

inline constexpr int kPatchesPerImage = 4;

struct PixelOrigin {
  int64_t row = 0;
  int64_t col = 0;

  bool operator==(const PixelOrigin&) const = default;
};

/// Square patches on a 2x2 corner-anchored grid of a square image. The default
/// is four 196x196 patches of a 512x512 image at rows/cols {0, 316}.
struct PatchGeometry {
  int64_t image_size = 512;
  int64_t patch_size = 196;

  // Throws ConfigError unless 2 * patch_size <= image_size and patch_size > 0.
  void validate() const;
  PixelOrigin origin(int grid_pos) const;
  Resolution image_resolution() const { return {image_size, image_size}; }

  bool operator==(const PatchGeometry&) const = default;
};

struct Patch {
  torch::Tensor data;  // 3 x P x P, values in [-1, 1]
  std::string source_id;
  int grid_pos = 0;
  PixelOrigin origin;
};

using PatchSet = std::array<Patch, kPatchesPerImage>;

/// Crops the four grid patches. The crops are views, so gradients flow back to
/// `image` when it requires grad.
PatchSet extract_patches(const ImageTensor& image, const PatchGeometry& geometry = {});

// Single patch at one grid position.
Patch extract_patch(const ImageTensor& image, int grid_pos, const PatchGeometry& geometry = {});

// 4 x 3 x P x P stack of a patch set, in grid order.
torch::Tensor stack_patches(const PatchSet& patches);

}  // namespace hypergan
