#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <list>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <torch/torch.h>

#include "hypergan/backbone.hpp"
#include "hypergan/datasets.hpp"
#include "hypergan/patches.hpp"

namespace hypergan {

/// Where a stored embedding came from.
struct Provenance {
  std::string source_id;  // path of the real image
  int grid_pos = 0;
  PixelOrigin origin;
};

struct IndexMetadata {
  std::string backbone_id;
  std::string layer_name = PerceptualEmbedder::kLayerName;
  PatchGeometry geometry;
};

struct NearestMatch {
  size_t id = 0;
  Provenance provenance;
  double squared_distance = 0.0;
};

/// Exact (flat) L2 nearest-neighbour store. Immutable once built; concurrent
/// queries are safe.
class PatchIndex {
 public:
  PatchIndex(size_t dimension, IndexMetadata metadata);
  PatchIndex(PatchIndex&& other) noexcept;
  PatchIndex& operator=(PatchIndex&& other) noexcept;

  // Appends an entry and returns its insertion id.
  size_t add(std::span<const float> vector, Provenance provenance);

  // argmin over stored entries of the squared L2 distance; ties resolve to the
  // lowest insertion id. Throws IndexError on an empty index or a dimension
  // mismatch.
  NearestMatch query_nearest(std::span<const float> query) const;
  NearestMatch query_nearest(const Embedding& query) const { return query_nearest(query.vector); }

  size_t size() const { return provenance_.size(); }
  bool empty() const { return provenance_.empty(); }
  size_t dimension() const { return dimension_; }
  const IndexMetadata& metadata() const { return metadata_; }
  const Provenance& provenance(size_t id) const { return provenance_.at(id); }
  std::span<const float> vector(size_t id) const;

  // Number of query_nearest calls served so far.
  size_t query_count() const { return queries_.load(); }

  // `<dir>/embeddings.bin` (row-major float32 matrix) and `<dir>/manifest.json`.
  void save(const std::filesystem::path& dir) const;
  static PatchIndex load(const std::filesystem::path& dir);

 private:
  size_t dimension_;
  IndexMetadata metadata_;
  std::vector<float> data_;
  std::vector<double> norms_;
  std::vector<Provenance> provenance_;
  mutable std::atomic<size_t> queries_{0};
};

using IndexProgress = std::function<void(size_t done, size_t total)>;

/// Embeds the four grid patches of every real image. Real images go through the
/// same preprocessing as training pairs, resized to the geometry's image size.
PatchIndex build_index(const DatasetSpec& real_dataset, const PerceptualEmbedder& embedder,
                       const PatchGeometry& geometry = {}, const IndexProgress& progress = {});

/// Re-crops stored patches from their source images, keeping a bounded LRU
/// cache of decoded images.
class PatchStore {
 public:
  explicit PatchStore(PatchGeometry geometry, size_t capacity_images = 64);

  torch::Tensor fetch(const Provenance& provenance);

 private:
  PatchGeometry geometry_;
  size_t capacity_;
  std::mutex mutex_;
  std::list<std::pair<std::string, torch::Tensor>> lru_;
  std::unordered_map<std::string, decltype(lru_)::iterator> lookup_;
};

}  // namespace hypergan
