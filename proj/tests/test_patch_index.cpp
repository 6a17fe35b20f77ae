#include <gtest/gtest.h>

#include <fstream>
#include <limits>
#include <random>

#include "fixtures.hpp"
#include "hypergan/backbone.hpp"
#include "hypergan/errors.hpp"
#include "hypergan/patch_index.hpp"
#include "hypergan/patches.hpp"

namespace hypergan {
namespace {

using testing::TempDir;

const PatchGeometry kDesk{128, 49};

// Exhaustive argmin with first-wins ties, in long double.
size_t brute_force_nearest(const std::vector<std::vector<float>>& rows, const std::vector<float>& q) {
  size_t best = 0;
  long double best_d = std::numeric_limits<long double>::infinity();
  for (size_t r = 0; r < rows.size(); ++r) {
    long double d = 0;
    for (size_t i = 0; i < q.size(); ++i) {
      const long double diff = static_cast<long double>(rows[r][i]) - q[i];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = r;
    }
  }
  return best;
}

std::vector<std::vector<float>> random_rows(size_t n, size_t d, uint32_t seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::vector<std::vector<float>> rows(n, std::vector<float>(d));
  for (auto& r : rows)
    for (auto& v : r) v = g(rng);
  return rows;
}

PatchIndex index_of(const std::vector<std::vector<float>>& rows) {
  PatchIndex index(rows.front().size(), IndexMetadata{"test", "relu4_3", {}});
  for (size_t i = 0; i < rows.size(); ++i) index.add(rows[i], Provenance{"row" + std::to_string(i), 0, {}});
  return index;
}

TEST(PatchGeometry, DefaultOriginsAreTheFourCorners) {
  PatchGeometry g;
  EXPECT_EQ(g.image_size, 512);
  EXPECT_EQ(g.patch_size, 196);
  EXPECT_EQ(g.origin(0), (PixelOrigin{0, 0}));
  EXPECT_EQ(g.origin(1), (PixelOrigin{0, 316}));
  EXPECT_EQ(g.origin(2), (PixelOrigin{316, 0}));
  EXPECT_EQ(g.origin(3), (PixelOrigin{316, 316}));
  EXPECT_THROW(g.origin(4), ContractError);
}

TEST(PatchGeometry, PatchesArePairwiseDisjoint) {
  for (const PatchGeometry g : {PatchGeometry{}, kDesk, PatchGeometry{64, 32}}) {
    for (int i = 0; i < kPatchesPerImage; ++i) {
      for (int j = i + 1; j < kPatchesPerImage; ++j) {
        const auto a = g.origin(i), b = g.origin(j);
        const bool rows_overlap = a.row < b.row + g.patch_size && b.row < a.row + g.patch_size;
        const bool cols_overlap = a.col < b.col + g.patch_size && b.col < a.col + g.patch_size;
        EXPECT_FALSE(rows_overlap && cols_overlap) << i << " vs " << j;
      }
    }
  }
  EXPECT_THROW((PatchGeometry{100, 51}.validate()), ConfigError);
}

TEST(PatchGeometry, PixelSetsDoNotIntersect) {
  // Label every pixel by the patch covering it; no pixel may be claimed twice.
  const PatchGeometry g;
  auto owner = torch::zeros({g.image_size, g.image_size}, torch::kInt32);
  auto marker = torch::arange(g.image_size * g.image_size, torch::kFloat32).view({1, g.image_size, g.image_size});
  ImageTensor image{marker.expand({3, -1, -1}).contiguous(), "m"};
  for (const auto& p : extract_patches(image, g)) {
    auto ids = p.data[0].to(torch::kLong).flatten();
    owner.view(-1).index_add_(0, ids, torch::ones_like(ids, torch::kInt32));
  }
  EXPECT_EQ(owner.max().item<int>(), 1);
  EXPECT_EQ(owner.sum().item<int>(), 4 * 196 * 196);
}

TEST(Patches, ConstantImageGivesIdenticalPatchesAtDistinctOrigins) {
  ImageTensor image{torch::full({3, 512, 512}, 0.25f), "c"};
  auto patches = extract_patches(image);
  std::set<std::pair<int64_t, int64_t>> origins;
  for (const auto& p : patches) {
    EXPECT_EQ(p.data.sizes(), (std::vector<int64_t>{3, 196, 196}));
    EXPECT_TRUE(torch::equal(p.data, patches[0].data));
    origins.insert({p.origin.row, p.origin.col});
  }
  EXPECT_EQ(origins.size(), 4u);
}

TEST(Patches, CropsMatchSourcePixelsAndCarryGradients) {
  auto data = torch::randn({3, 128, 128}).requires_grad_(true);
  ImageTensor image{data, "r"};
  auto patches = extract_patches(image, kDesk);
  EXPECT_TRUE(torch::equal(patches[3].data, data.detach().slice(1, 79, 128).slice(2, 79, 128)));
  stack_patches(patches).sum().backward();
  EXPECT_EQ(data.grad().sum().item<float>(), 4.0f * 3 * 49 * 49);
  EXPECT_THROW(extract_patches(ImageTensor{torch::zeros({3, 120, 128}), "bad"}, kDesk), ShapeError);
}

TEST(Backbone, DimensionMatchesActivationShape) {
  // conv3x3/pad1 keeps size; each of the three pools floors n/2; relu4_3 has 512 channels.
  auto oracle = [](int64_t p) {
    int64_t s = p;
    for (int pool = 0; pool < 3; ++pool) s = s / 2;
    return 512 * s * s;
  };
  EXPECT_EQ(PerceptualEmbedder::dimension_for(196), 294912);
  EXPECT_EQ(PerceptualEmbedder::dimension_for(196), oracle(196));
  EXPECT_EQ(PerceptualEmbedder::dimension_for(49), oracle(49));
  auto embedder = PerceptualEmbedder::random(1);
  auto e = embedder.embed(torch::zeros({3, 196, 196}));
  EXPECT_EQ(static_cast<int64_t>(e.dimension()), oracle(196));
  auto act = embedder.network()->forward(torch::zeros({1, 3, 196, 196}));
  EXPECT_EQ(act.sizes(), (std::vector<int64_t>{1, 512, 24, 24}));
  EXPECT_EQ(embedder.layer_name(), "relu4_3");
}

TEST(Backbone, EmbeddingIsDeterministicAndSensitive) {
  auto embedder = PerceptualEmbedder::random(3);
  auto patch = torch::rand({3, 49, 49}) * 2 - 1;
  auto a = embedder.embed(patch), b = embedder.embed(patch);
  EXPECT_EQ(a.vector, b.vector);
  ASSERT_TRUE(a.norm.has_value());
  EXPECT_GT(*a.norm, 0.0);
  auto nudged = patch.clone();
  nudged[1][20][30] += 0.5f;
  EXPECT_NE(embedder.embed(nudged).vector, a.vector);
  EXPECT_THROW(embedder.embed(torch::zeros({3, 49, 48})), ShapeError);
}

TEST(Backbone, MissingWeightsNameTheAsset) {
  TempDir dir;
  try {
    PerceptualEmbedder::from_weights(dir / "vgg16.bin");
    FAIL() << "expected SetupError";
  } catch (const SetupError& e) {
    EXPECT_NE(std::string(e.what()).find("VGG-16"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("export_vgg16_weights.py"), std::string::npos);
  }
  std::ofstream(dir / "junk.bin") << "junk";
  EXPECT_THROW(PerceptualEmbedder::from_weights(dir / "junk.bin"), SetupError);
}

TEST(Backbone, WeightsFileRoundTrip) {
  TempDir dir;
  auto random = PerceptualEmbedder::random(8);
  save_vgg16_weights(random.network(), dir / "w.bin");
  auto loaded = PerceptualEmbedder::from_spec((dir / "w.bin").string());
  EXPECT_EQ(loaded.backbone_id().rfind("vgg16:", 0), 0u);
  auto patch = torch::rand({3, 49, 49}) * 2 - 1;
  EXPECT_EQ(loaded.embed(patch).vector, random.embed(patch).vector);
  EXPECT_EQ(PerceptualEmbedder::from_spec("random:8").backbone_id(), "vgg16-random:8");
  EXPECT_THROW(PerceptualEmbedder::from_spec("random:x"), ConfigError);
}

TEST(PatchIndex, SingleEntryAlwaysWins) {
  auto rows = random_rows(1, 16, 1);
  auto index = index_of(rows);
  for (const auto& q : random_rows(10, 16, 2)) EXPECT_EQ(index.query_nearest(q).id, 0u);
}

TEST(PatchIndex, StoredVectorQueriesItselfAtZero) {
  auto rows = random_rows(200, 64, 3);
  auto index = index_of(rows);
  for (size_t k = 0; k < rows.size(); ++k) {
    auto m = index.query_nearest(rows[k]);
    EXPECT_EQ(m.id, k);
    EXPECT_EQ(m.squared_distance, 0.0);
    EXPECT_EQ(m.provenance.source_id, "row" + std::to_string(k));
  }
}

TEST(PatchIndex, AgreesWithExhaustiveScanOn1000Entries) {
  auto rows = random_rows(1000, 96, 4);
  auto index = index_of(rows);
  size_t agree = 0;
  for (const auto& q : random_rows(100, 96, 5)) agree += index.query_nearest(q).id == brute_force_nearest(rows, q);
  EXPECT_EQ(agree, 100u);
}

TEST(PatchIndex, AgreesWithExhaustiveScanOnClusteredData) {
  // Near-duplicates stress the pruning bounds.
  auto base = random_rows(50, 300, 6);
  std::mt19937 rng(7);
  std::normal_distribution<float> jitter(0.0f, 1e-3f);
  std::vector<std::vector<float>> rows;
  for (int copy = 0; copy < 20; ++copy)
    for (auto r : base) {
      for (auto& v : r) v += jitter(rng);
      rows.push_back(r);
    }
  auto index = index_of(rows);
  for (size_t i = 0; i < 100; ++i) {
    auto q = rows[(i * 37) % rows.size()];
    for (auto& v : q) v += jitter(rng);
    EXPECT_EQ(index.query_nearest(q).id, brute_force_nearest(rows, q));
  }
}

TEST(PatchIndex, TiesResolveToLowestId) {
  std::vector<std::vector<float>> rows = {{1, 0}, {0, 1}, {1, 0}, {-1, 0}};
  auto index = index_of(rows);
  EXPECT_EQ(index.query_nearest(std::vector<float>{1, 0}).id, 0u);
  // Equidistant from rows 0, 1 and 2.
  EXPECT_EQ(index.query_nearest(std::vector<float>{0.5f, 0.5f}).id, 0u);
  EXPECT_EQ(index.query_nearest(std::vector<float>{0, 0}).id, 0u);
}

TEST(PatchIndex, ErrorsAndCounter) {
  PatchIndex index(4, {});
  EXPECT_THROW(index.query_nearest(std::vector<float>{0, 0, 0, 0}), IndexError);
  EXPECT_THROW(index.add(std::vector<float>{1, 2, 3}, {}), IndexError);
  EXPECT_THROW(index.add(std::vector<float>{1, 2, 3, std::nanf("")}, {}), IndexError);
  index.add(std::vector<float>{1, 2, 3, 4}, {});
  EXPECT_THROW(index.query_nearest(std::vector<float>{1, 2}), IndexError);
  EXPECT_EQ(index.query_count(), 0u);
  index.query_nearest(std::vector<float>{1, 2, 3, 4});
  index.query_nearest(std::vector<float>{1, 2, 3, 5});
  EXPECT_EQ(index.query_count(), 2u);
}

TEST(PatchIndex, SaveLoadRoundTrip) {
  TempDir dir;
  auto rows = random_rows(300, 40, 9);
  IndexMetadata meta{"vgg16-random:2", "relu4_3", kDesk};
  PatchIndex index(40, meta);
  for (size_t i = 0; i < rows.size(); ++i) {
    index.add(rows[i], Provenance{"/img/" + std::to_string(i / 4) + ".png", static_cast<int>(i % 4),
                                  kDesk.origin(static_cast<int>(i % 4))});
  }
  index.save(dir / "idx");
  auto loaded = PatchIndex::load(dir / "idx");
  EXPECT_EQ(loaded.size(), index.size());
  EXPECT_EQ(loaded.metadata().backbone_id, meta.backbone_id);
  EXPECT_EQ(loaded.metadata().geometry, kDesk);
  for (size_t i = 0; i < rows.size(); ++i) {
    EXPECT_TRUE(std::equal(loaded.vector(i).begin(), loaded.vector(i).end(), index.vector(i).begin()));
    EXPECT_EQ(loaded.provenance(i).source_id, index.provenance(i).source_id);
    EXPECT_EQ(loaded.provenance(i).origin, index.provenance(i).origin);
  }
  for (const auto& q : random_rows(50, 40, 10)) {
    auto a = index.query_nearest(q), b = loaded.query_nearest(q);
    EXPECT_EQ(a.id, b.id);
    EXPECT_EQ(a.squared_distance, b.squared_distance);
  }
  EXPECT_THROW(PatchIndex::load(dir / "nothing"), IndexError);
}

TEST(BuildIndex, ThreeImagesGiveTwelveEntries) {
  TempDir dir;
  auto fx = testing::write_paired_fixture(dir.path(), 0, 128, 3);
  auto embedder = PerceptualEmbedder::random(0);
  size_t last_progress = 0;
  auto index = build_index(fx.real, embedder, kDesk, [&](size_t done, size_t) { last_progress = done; });
  EXPECT_EQ(index.size(), 12u);
  EXPECT_EQ(last_progress, 3u);
  EXPECT_EQ(static_cast<int64_t>(index.dimension()), PerceptualEmbedder::dimension_for(49));
  EXPECT_EQ(index.metadata().backbone_id, embedder.backbone_id());
  for (size_t id = 0; id < index.size(); ++id) {
    EXPECT_EQ(index.provenance(id).grid_pos, static_cast<int>(id % 4));
    // Re-embedding the re-cropped stored patch finds the entry at distance 0,
    // or an earlier entry with identical pixels (ties go to the lowest id).
    PatchStore store(kDesk);
    auto pixels = store.fetch(index.provenance(id));
    auto m = index.query_nearest(embedder.embed(pixels));
    EXPECT_EQ(m.squared_distance, 0.0);
    EXPECT_LE(m.id, id);
    if (m.id != id) {
      EXPECT_TRUE(torch::equal(store.fetch(index.provenance(m.id)), pixels));
    }
  }
  fs::create_directories(dir / "empty");
  EXPECT_THROW(build_index({dir / "empty", DatasetKind::kReal, Split::kTrain}, embedder, kDesk), IndexError);
}

}  // namespace
}  // namespace hypergan
