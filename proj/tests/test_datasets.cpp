#include <gtest/gtest.h>

#include <fstream>
#include <numeric>
#include <set>

#include <opencv2/imgcodecs.hpp>

#include "fixtures.hpp"
#include "hypergan/datasets.hpp"
#include "hypergan/errors.hpp"

namespace hypergan {
namespace {

using testing::TempDir;

cv::Mat constant_image(int rows, int cols, uint8_t value) { return cv::Mat(rows, cols, CV_8UC3, cv::Scalar::all(value)); }

TEST(Preprocess, EndpointsMapToUnitInterval) {
  auto black = preprocess(constant_image(8, 8, 0), std::nullopt);
  auto white = preprocess(constant_image(8, 8, 255), std::nullopt);
  EXPECT_EQ(black.data.min().item<float>(), -1.0f);
  EXPECT_EQ(black.data.max().item<float>(), -1.0f);
  EXPECT_EQ(white.data.min().item<float>(), 1.0f);
  EXPECT_EQ(white.data.max().item<float>(), 1.0f);
}

TEST(Preprocess, MidpointMapsToZero) {
  // 127.5 is not an 8-bit level; average of 127 and 128 via a 2x1 -> 1x1 resize.
  cv::Mat img(1, 2, CV_8UC3);
  img.at<cv::Vec3b>(0, 0) = cv::Vec3b(127, 127, 127);
  img.at<cv::Vec3b>(0, 1) = cv::Vec3b(128, 128, 128);
  auto t = preprocess(img, Resolution{1, 1});
  EXPECT_NEAR(t.data.abs().max().item<float>(), 0.0f, 1e-6f);
  // And directly on the formula for every 8-bit level.
  for (int v = 0; v < 256; ++v) {
    const double expected = (v / 255.0 - 0.5) / 0.5;
    auto one = preprocess(constant_image(1, 1, static_cast<uint8_t>(v)), std::nullopt);
    EXPECT_NEAR(one.data[0][0][0].item<float>(), expected, 1e-6) << v;
  }
}

TEST(Preprocess, DefaultsTo512AndHalfNormalization) {
  EXPECT_EQ(Resolution{}.height, 512);
  EXPECT_EQ(Resolution{}.width, 512);
  EXPECT_FLOAT_EQ(kNormMean, 0.5f);
  EXPECT_FLOAT_EQ(kNormStd, 0.5f);
  auto t = preprocess(testing::make_scene(3, 100, 60));
  EXPECT_EQ(t.data.sizes(), (std::vector<int64_t>{3, 512, 512}));
  EXPECT_LE(t.data.max().item<float>(), 1.0f);
  EXPECT_GE(t.data.min().item<float>(), -1.0f);
}

TEST(Preprocess, RejectsWrongChannelCount) {
  cv::Mat gray(4, 4, CV_8UC1, cv::Scalar(3));
  EXPECT_THROW(preprocess(gray), ChannelCountError);
  cv::Mat rgba(4, 4, CV_8UC4, cv::Scalar::all(3));
  EXPECT_THROW(preprocess(rgba), ChannelCountError);
}

TEST(Preprocess, IdentityResizeAtSameSize) {
  auto img = testing::make_scene(11, 64, 48);
  auto native = preprocess(img, std::nullopt);
  auto same = preprocess(img, Resolution{48, 64});
  EXPECT_LE((native.data - same.data).abs().max().item<float>(), 1e-6f);
  auto again = resize_bilinear(same.data, Resolution{48, 64});
  EXPECT_LE((again - same.data).abs().max().item<float>(), 1e-6f);
}

TEST(Preprocess, DenormalizeRoundTripWithinOneLevel) {
  auto img = testing::make_scene(5, 73, 41);
  cv::Mat back = denormalize(preprocess(img, std::nullopt).data);
  ASSERT_EQ(back.size(), img.size());
  cv::Mat diff;
  cv::absdiff(img, back, diff);
  double max_diff = 0.0;
  cv::minMaxLoc(diff.reshape(1), nullptr, &max_diff);
  EXPECT_LE(max_diff, 1.0);
}

TEST(Preprocess, DenormalizeClampsAndRoundsHalfToEven) {
  auto t = torch::tensor({-3.0f, 3.0f, 0.0f}).view({3, 1, 1});
  cv::Mat m = denormalize(t);
  EXPECT_EQ(m.at<cv::Vec3b>(0, 0)[0], 0);
  EXPECT_EQ(m.at<cv::Vec3b>(0, 0)[1], 255);
  // 0 -> 127.5 -> 128 under half-to-even.
  EXPECT_EQ(m.at<cv::Vec3b>(0, 0)[2], 128);
}

TEST(Io, ReadRgbKeepsChannelOrder) {
  TempDir dir;
  cv::Mat rgb(2, 2, CV_8UC3, cv::Scalar(10, 20, 30));
  write_rgb(dir / "a.png", rgb);
  cv::Mat back = read_rgb(dir / "a.png");
  EXPECT_EQ(back.at<cv::Vec3b>(1, 1), cv::Vec3b(10, 20, 30));
  // On disk the file is BGR.
  cv::Mat raw = cv::imread((dir / "a.png").string());
  EXPECT_EQ(raw.at<cv::Vec3b>(0, 0), cv::Vec3b(30, 20, 10));
}

TEST(Io, ReadErrorsNameTheFile) {
  TempDir dir;
  try {
    read_rgb(dir / "missing.png");
    FAIL() << "expected IngestionError";
  } catch (const IngestionError& e) {
    EXPECT_NE(e.path().find("missing.png"), std::string::npos);
  }
  std::ofstream(dir / "junk.png") << "not an image";
  EXPECT_THROW(read_rgb(dir / "junk.png"), IngestionError);
  cv::imwrite((dir / "gray.png").string(), cv::Mat(4, 4, CV_8UC1, cv::Scalar(9)));
  EXPECT_THROW(read_rgb(dir / "gray.png"), ChannelCountError);
}

TEST(Resolution, ParsesWidthByHeight) {
  auto r = parse_resolution("1920x1080");
  EXPECT_EQ(r.width, 1920);
  EXPECT_EQ(r.height, 1080);
  EXPECT_EQ(to_string(r), "1920x1080");
  EXPECT_THROW(parse_resolution("1920"), ConfigError);
  EXPECT_THROW(parse_resolution("0x10"), ConfigError);
  EXPECT_THROW(parse_resolution("12x3a"), ConfigError);
}

TEST(PairedSplit, TenPairFixtureLoadsAligned) {
  TempDir dir;
  auto fx = testing::write_paired_fixture(dir.path(), 10, 40, 0);
  auto split = load_paired_split(fx.synthetic, fx.enhanced, {.resolution = {32, 32}});
  ASSERT_EQ(split.size(), 10u);
  EXPECT_TRUE(split.report().clean());
  for (size_t i = 0; i < split.size(); ++i) {
    const auto& e = split.entry(i);
    EXPECT_EQ(e.synthetic.stem(), e.enhanced.stem());
    auto [x, target] = split.load(i);
    EXPECT_EQ(x.data.sizes(), (std::vector<int64_t>{3, 32, 32}));
    EXPECT_EQ(target.data.sizes(), x.data.sizes());
  }
}

TEST(PairedSplit, EmptyDirectoryGivesEmptySplitAndWarning) {
  TempDir dir;
  fs::create_directories(dir / "syn" / "train");
  fs::create_directories(dir / "enh" / "train");
  auto split = load_paired_split({dir / "syn", DatasetKind::kSynthetic, Split::kTrain},
                                 {dir / "enh", DatasetKind::kEnhanced, Split::kTrain});
  EXPECT_TRUE(split.empty());
  EXPECT_FALSE(split.report().warnings.empty());
}

TEST(PairedSplit, UnpairedFilesAreReportedNotFatal) {
  TempDir dir;
  auto fx = testing::write_paired_fixture(dir.path(), 4, 24, 0);
  fs::remove(dir / "enhanced" / "train" / "pair_01.png");
  write_rgb(dir / "enhanced" / "train" / "orphan.png", testing::make_scene(1, 24, 24));
  auto split = load_paired_split(fx.synthetic, fx.enhanced);
  EXPECT_EQ(split.size(), 3u);
  ASSERT_EQ(split.report().excluded.size(), 2u);
  std::set<std::string> stems;
  for (const auto& e : split.report().excluded) stems.insert(e.stem);
  EXPECT_TRUE(stems.count("pair_01"));
  EXPECT_TRUE(stems.count("orphan"));
  split.report().write(dir / "report.tsv");
  EXPECT_TRUE(fs::exists(dir / "report.tsv"));
}

TEST(PairedSplit, ManifestSelectsStems) {
  TempDir dir;
  auto fx = testing::write_paired_fixture(dir.path(), 5, 24, 0);
  std::ofstream(dir / "val.txt") << "# chosen\npair_03\npair_00\n\nnot_there\n";
  auto split = load_paired_split(fx.synthetic, fx.enhanced, {.manifest = dir / "val.txt", .shuffle = false});
  ASSERT_EQ(split.size(), 2u);
  EXPECT_EQ(split.entry(0).stem, "pair_00");
  EXPECT_EQ(split.entry(1).stem, "pair_03");
  ASSERT_EQ(split.report().excluded.size(), 1u);
  EXPECT_EQ(split.report().excluded[0].stem, "not_there");
}

TEST(PairedSplit, SameSeedSameOrder) {
  TempDir dir;
  auto fx = testing::write_paired_fixture(dir.path(), 12, 16, 0);
  auto stems = [&](uint64_t seed) {
    std::vector<std::string> out;
    const auto split = load_paired_split(fx.synthetic, fx.enhanced, {.seed = seed});
    for (const auto& e : split.entries()) out.push_back(e.stem);
    return out;
  };
  EXPECT_EQ(stems(42), stems(42));
  EXPECT_NE(stems(42), stems(43));
  auto split = load_paired_split(fx.synthetic, fx.enhanced, {.seed = 1});
  EXPECT_EQ(split.epoch_order(5, 2), split.epoch_order(5, 2));
  EXPECT_NE(split.epoch_order(5, 2), split.epoch_order(5, 3));
}

TEST(PairedSplit, SeededShuffleIsAPermutation) {
  std::vector<size_t> order(100);
  std::iota(order.begin(), order.end(), 0);
  seeded_shuffle(order, 9);
  auto sorted = order;
  std::sort(sorted.begin(), sorted.end());
  for (size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
}

TEST(PairedSplit, MismatchedSplitsAndMissingRootsFail) {
  TempDir dir;
  auto fx = testing::write_paired_fixture(dir.path(), 1, 16, 0);
  DatasetSpec val = fx.enhanced;
  val.split = Split::kVal;
  EXPECT_THROW(load_paired_split(fx.synthetic, val), ConfigError);
  DatasetSpec missing{dir / "nope", DatasetKind::kEnhanced, Split::kTrain};
  EXPECT_THROW(load_paired_split(fx.synthetic, missing), IngestionError);
}

}  // namespace
}  // namespace hypergan
