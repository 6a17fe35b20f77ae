#include "hypergan/patches.hpp"

#include <vector>

#include "hypergan/errors.hpp"

namespace hypergan {

void PatchGeometry::validate() const {
  if (patch_size <= 0 || 2 * patch_size > image_size) {
    throw ConfigError("patch size " + std::to_string(patch_size) +
                      " does not fit twice in image size " + std::to_string(image_size));
  }
}

PixelOrigin PatchGeometry::origin(int grid_pos) const {
  if (grid_pos < 0 || grid_pos >= kPatchesPerImage) {
    throw ContractError("grid position " + std::to_string(grid_pos) + " outside [0, 4)");
  }
  const int64_t far = image_size - patch_size;
  return PixelOrigin{(grid_pos / 2) * far, (grid_pos % 2) * far};
}

Patch extract_patch(const ImageTensor& image, int grid_pos, const PatchGeometry& geometry) {
  geometry.validate();
  const auto& t = image.data;
  if (t.dim() != 3 || t.size(0) != 3) throw ShapeError("patch extraction expects a 3xHxW image");
  if (t.size(1) != geometry.image_size || t.size(2) != geometry.image_size) {
    throw ShapeError("patch extraction expects a " + std::to_string(geometry.image_size) + "x" +
                     std::to_string(geometry.image_size) + " image, got " + std::to_string(t.size(2)) +
                     "x" + std::to_string(t.size(1)));
  }
  const PixelOrigin o = geometry.origin(grid_pos);
  auto crop = t.narrow(1, o.row, geometry.patch_size).narrow(2, o.col, geometry.patch_size);
  return Patch{crop, image.source_id, grid_pos, o};
}

PatchSet extract_patches(const ImageTensor& image, const PatchGeometry& geometry) {
  PatchSet out;
  for (int i = 0; i < kPatchesPerImage; ++i) out[i] = extract_patch(image, i, geometry);
  return out;
}

torch::Tensor stack_patches(const PatchSet& patches) {
  std::vector<torch::Tensor> parts;
  parts.reserve(patches.size());
  for (const auto& p : patches) parts.push_back(p.data);
  return torch::stack(parts);
}

}  // namespace hypergan
