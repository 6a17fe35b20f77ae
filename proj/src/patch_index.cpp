#include "hypergan/patch_index.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "hypergan/errors.hpp"

namespace hypergan {

namespace {

constexpr char kMatrixMagic[8] = {'H', 'G', 'I', 'D', 'X', '0', '0', '1'};
constexpr size_t kPartialBlock = 256;

double squared_norm(std::span<const float> v) {
  double acc = 0.0;
  for (float x : v) acc += static_cast<double>(x) * x;
  return acc;
}

// Squared distance, abandoned as soon as the running sum exceeds `bound`.
double bounded_squared_distance(const float* a, const float* b, size_t d, double bound) {
  double acc = 0.0;
  for (size_t start = 0; start < d; start += kPartialBlock) {
    const size_t end = std::min(d, start + kPartialBlock);
    for (size_t i = start; i < end; ++i) {
      const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
      acc += diff * diff;
    }
    if (acc > bound) return acc;
  }
  return acc;
}

}  // namespace

PatchIndex::PatchIndex(size_t dimension, IndexMetadata metadata)
    : dimension_(dimension), metadata_(std::move(metadata)) {
  if (dimension_ == 0) throw IndexError("index dimension must be positive");
}

PatchIndex::PatchIndex(PatchIndex&& other) noexcept
    : dimension_(other.dimension_),
      metadata_(std::move(other.metadata_)),
      data_(std::move(other.data_)),
      norms_(std::move(other.norms_)),
      provenance_(std::move(other.provenance_)),
      queries_(other.queries_.load()) {}

PatchIndex& PatchIndex::operator=(PatchIndex&& other) noexcept {
  dimension_ = other.dimension_;
  metadata_ = std::move(other.metadata_);
  data_ = std::move(other.data_);
  norms_ = std::move(other.norms_);
  provenance_ = std::move(other.provenance_);
  queries_.store(other.queries_.load());
  return *this;
}

size_t PatchIndex::add(std::span<const float> vector, Provenance provenance) {
  if (vector.size() != dimension_) {
    throw IndexError("embedding has dimension " + std::to_string(vector.size()) + ", index expects " +
                     std::to_string(dimension_));
  }
  for (float v : vector) {
    if (!std::isfinite(v)) throw IndexError("refusing to index a non-finite embedding");
  }
  data_.insert(data_.end(), vector.begin(), vector.end());
  norms_.push_back(std::sqrt(squared_norm(vector)));
  provenance_.push_back(std::move(provenance));
  return provenance_.size() - 1;
}

std::span<const float> PatchIndex::vector(size_t id) const {
  if (id >= size()) throw IndexError("entry " + std::to_string(id) + " out of range");
  return {data_.data() + id * dimension_, dimension_};
}

NearestMatch PatchIndex::query_nearest(std::span<const float> query) const {
  if (empty()) throw IndexError("query against an empty index");
  if (query.size() != dimension_) {
    throw IndexError("query has dimension " + std::to_string(query.size()) + ", index expects " +
                     std::to_string(dimension_));
  }
  queries_.fetch_add(1);
  const double query_norm = std::sqrt(squared_norm(query));
  size_t best_id = 0;
  double best = std::numeric_limits<double>::infinity();
  for (size_t id = 0; id < size(); ++id) {
    // (|q| - |x|)^2 <= |q - x|^2; the slack absorbs rounding in the norms.
    const double gap = query_norm - norms_[id];
    if (gap * gap > best * (1.0 + 1e-9) + 1e-12) continue;
    const double dist = bounded_squared_distance(query.data(), data_.data() + id * dimension_, dimension_, best);
    if (dist < best) {
      best = dist;
      best_id = id;
    }
  }
  return NearestMatch{best_id, provenance_[best_id], best};
}

void PatchIndex::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "embeddings.bin", std::ios::binary);
    if (!out) throw IndexError("cannot write index matrix in '" + dir.string() + "'");
    const uint64_t rows = size(), cols = dimension_;
    out.write(kMatrixMagic, sizeof(kMatrixMagic));
    out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
    out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
    out.write(reinterpret_cast<const char*>(data_.data()), static_cast<std::streamsize>(data_.size() * sizeof(float)));
  }
  nlohmann::json manifest;
  manifest["format"] = "hypergan-patch-index/1";
  manifest["metric"] = "L2";
  manifest["backbone"] = metadata_.backbone_id;
  manifest["layer"] = metadata_.layer_name;
  manifest["dimension"] = dimension_;
  manifest["count"] = size();
  manifest["image_size"] = metadata_.geometry.image_size;
  manifest["patch_size"] = metadata_.geometry.patch_size;
  auto& table = manifest["provenance"] = nlohmann::json::array();
  for (const auto& p : provenance_) {
    table.push_back({{"source", p.source_id}, {"grid_pos", p.grid_pos}, {"row", p.origin.row}, {"col", p.origin.col}});
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IndexError("cannot write index manifest in '" + dir.string() + "'");
  out << manifest.dump(1) << "\n";
}

PatchIndex PatchIndex::load(const std::filesystem::path& dir) {
  std::ifstream manifest_in(dir / "manifest.json");
  if (!manifest_in) throw IndexError("no index manifest in '" + dir.string() + "'");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(manifest_in);
  } catch (const nlohmann::json::exception& e) {
    throw IndexError("malformed index manifest in '" + dir.string() + "': " + e.what());
  }
  IndexMetadata meta;
  meta.backbone_id = manifest.at("backbone").get<std::string>();
  meta.layer_name = manifest.at("layer").get<std::string>();
  meta.geometry = {manifest.at("image_size").get<int64_t>(), manifest.at("patch_size").get<int64_t>()};
  const auto dimension = manifest.at("dimension").get<uint64_t>();
  const auto count = manifest.at("count").get<uint64_t>();

  std::ifstream in(dir / "embeddings.bin", std::ios::binary);
  char magic[8];
  uint64_t rows = 0, cols = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
  in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
  if (!in || std::memcmp(magic, kMatrixMagic, sizeof(magic)) != 0) {
    throw IndexError("bad index matrix in '" + dir.string() + "'");
  }
  if (rows != count || cols != dimension || manifest.at("provenance").size() != count) {
    throw IndexError("index matrix and manifest disagree in '" + dir.string() + "'");
  }
  PatchIndex index(dimension, meta);
  std::vector<float> row(dimension);
  for (uint64_t r = 0; r < rows; ++r) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(dimension * sizeof(float)));
    if (!in) throw IndexError("index matrix in '" + dir.string() + "' is truncated");
    const auto& p = manifest["provenance"][r];
    index.add(row, Provenance{p.at("source").get<std::string>(), p.at("grid_pos").get<int>(),
                              PixelOrigin{p.at("row").get<int64_t>(), p.at("col").get<int64_t>()}});
  }
  return index;
}

PatchIndex build_index(const DatasetSpec& real_dataset, const PerceptualEmbedder& embedder,
                       const PatchGeometry& geometry, const IndexProgress& progress) {
  geometry.validate();
  const auto images = list_images(real_dataset.image_dir());
  if (images.empty()) {
    throw IndexError("real dataset '" + real_dataset.image_dir().string() + "' contains no images");
  }
  PatchIndex index(static_cast<size_t>(PerceptualEmbedder::dimension_for(geometry.patch_size)),
                   IndexMetadata{embedder.backbone_id(), embedder.layer_name(), geometry});
  for (size_t i = 0; i < images.size(); ++i) {
    const auto image = load_image(std::filesystem::absolute(images[i]), geometry.image_resolution());
    for (const auto& patch : extract_patches(image, geometry)) {
      index.add(embedder.embed(patch).vector, Provenance{image.source_id, patch.grid_pos, patch.origin});
    }
    if (progress) progress(i + 1, images.size());
  }
  return index;
}

PatchStore::PatchStore(PatchGeometry geometry, size_t capacity_images)
    : geometry_(geometry), capacity_(std::max<size_t>(1, capacity_images)) {}

torch::Tensor PatchStore::fetch(const Provenance& provenance) {
  std::lock_guard lock(mutex_);
  torch::Tensor image;
  if (auto it = lookup_.find(provenance.source_id); it != lookup_.end()) {
    lru_.splice(lru_.begin(), lru_, it->second);
    image = it->second->second;
  } else {
    image = load_image(provenance.source_id, geometry_.image_resolution()).data;
    lru_.emplace_front(provenance.source_id, image);
    lookup_[provenance.source_id] = lru_.begin();
    if (lru_.size() > capacity_) {
      lookup_.erase(lru_.back().first);
      lru_.pop_back();
    }
  }
  return extract_patch(ImageTensor{image, provenance.source_id}, provenance.grid_pos, geometry_).data;
}

}  // namespace hypergan
