#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "hypergan/checkpoint.hpp"
#include "hypergan/errors.hpp"
#include "hypergan/inference.hpp"

namespace hypergan {
namespace {

using testing::TempDir;

Generator seeded_generator(uint64_t seed) {
  Generator g;
  init_weights(*g, seed);
  g->eval();
  return g;
}

TEST(Padding, NextMultipleOfEight) {
  EXPECT_EQ(round_up(957, 8), 960);
  EXPECT_EQ(round_up(526, 8), 528);
  EXPECT_EQ(round_up(1080, 8), 1080);
  for (int64_t n = 1; n < 100; ++n) {
    const int64_t r = round_up(n, 8);
    EXPECT_EQ(r % 8, 0);
    EXPECT_GE(r, n);
    EXPECT_LT(r - n, 8);
  }
  auto padded = pad_to_multiple_of_8(torch::rand({1, 3, 526, 957}));
  EXPECT_EQ(padded.sizes(), (std::vector<int64_t>{1, 3, 528, 960}));
}

TEST(Padding, ReflectMirrorsAndKeepsOriginalTopLeft) {
  auto x = torch::arange(12, torch::kFloat32).view({1, 1, 3, 4}).expand({1, 3, 3, 4}).contiguous();
  auto padded = pad_to_multiple_of_8(x, PadPolicy::kReflect);
  EXPECT_EQ(padded.sizes(), (std::vector<int64_t>{1, 3, 8, 8}));
  EXPECT_TRUE(torch::equal(padded.slice(2, 0, 3).slice(3, 0, 4), x));
  auto rep = pad_to_multiple_of_8(torch::rand({1, 3, 20, 13}), PadPolicy::kReplicate);
  EXPECT_TRUE(torch::equal(rep.select(3, 15), rep.select(3, 12)));
  EXPECT_THROW(parse_pad_policy("wrap"), ConfigError);
}

TEST(Enhance, CropsBackToInputSize) {
  auto g = seeded_generator(0);
  ImageTensor x{torch::rand({3, 526, 957}) * 2 - 1, "odd"};
  auto y = enhance_image(g, x);
  EXPECT_EQ(y.data.sizes(), x.data.sizes());
  EXPECT_EQ(y.source_id, "odd");
}

TEST(Enhance, FullHdShapeIsPreserved) {
  auto g = seeded_generator(0);
  torch::NoGradGuard no_grad;
  auto y = g->forward(torch::zeros({1, 3, 1080, 1920}));
  EXPECT_EQ(y.sizes(), (std::vector<int64_t>{1, 3, 1080, 1920}));
}

TEST(Enhance, UntrainedGeneratorProducesValidImages) {
  auto g = seeded_generator(1);
  auto scene = testing::make_scene(4, 90, 70);
  cv::Mat out = enhance_rgb(g, scene);
  EXPECT_EQ(out.type(), CV_8UC3);
  EXPECT_EQ(out.rows, 70);
  EXPECT_EQ(out.cols, 90);
}

TEST(Enhance, RepeatRunsAreBitIdentical) {
  auto g = seeded_generator(2);
  auto scene = testing::make_scene(5, 64, 48);
  cv::Mat a = enhance_rgb(g, scene), b = enhance_rgb(g, scene);
  EXPECT_EQ(cv::norm(a, b, cv::NORM_INF), 0.0);
}

TEST(Enhance, DirectoryRunKeepsStemsAndSizes) {
  TempDir dir;
  auto g = seeded_generator(3);
  save_checkpoint(dir / "ck", g, nullptr, make_manifest(g, 3, 0, 0, "hybrid"));
  write_rgb(dir / "in" / "a.png", testing::make_scene(1, 40, 24));
  write_rgb(dir / "in" / "b.jpg", testing::make_scene(2, 17, 33));
  auto written = enhance(dir / "ck", dir / "in", dir / "out");
  ASSERT_EQ(written.size(), 2u);
  EXPECT_EQ(read_rgb(dir / "out" / "a.png").size(), cv::Size(40, 24));
  EXPECT_EQ(read_rgb(dir / "out" / "b.png").size(), cv::Size(17, 33));
  // Two runs over the same checkpoint agree bit for bit.
  enhance(dir / "ck", dir / "in", dir / "out2");
  EXPECT_EQ(cv::norm(read_rgb(dir / "out" / "a.png"), read_rgb(dir / "out2" / "a.png"), cv::NORM_INF), 0.0);

  GeneratorConfig other;
  other.encoder_channels = {32, 64, 128};
  EXPECT_THROW(enhance(dir / "ck", dir / "in", dir / "out3", {.expected_config = other}), ConfigError);
}

TEST(Benchmark, ReportsStatisticsOverTimedRunsOnly) {
  auto g = seeded_generator(4);
  auto reports = benchmark(g, {Resolution{32, 32}, Resolution{64, 64}}, {.timed_runs = 12, .warmup_runs = 3});
  ASSERT_EQ(reports.size(), 2u);
  for (const auto& r : reports) {
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r.latencies_ms.size(), 12u);
    EXPECT_EQ(r.warmup_runs, 3);
    double mean = 0.0;
    for (double ms : r.latencies_ms) mean += ms / 12.0;
    EXPECT_NEAR(r.latency_mean_ms, mean, 1e-9);
    double ss = 0.0;
    for (double ms : r.latencies_ms) ss += (ms - mean) * (ms - mean);
    EXPECT_NEAR(r.latency_std_ms, std::sqrt(ss / 11.0), 1e-9);
    EXPECT_GE(r.latency_std_ms, 0.0);
    EXPECT_GT(r.fps_mean, 0.0);
    EXPECT_FALSE(r.memory_label.empty());
  }
}

TEST(Benchmark, FailingResolutionIsRecordedAndOthersRun) {
  auto g = seeded_generator(5);
  auto reports = benchmark(g, {Resolution{30, 30}, Resolution{32, 32}}, {.timed_runs = 2, .warmup_runs = 0});
  ASSERT_EQ(reports.size(), 2u);
  EXPECT_FALSE(reports[0].ok());
  EXPECT_TRUE(reports[1].ok());
  const auto table = format_benchmark_table(reports);
  EXPECT_NE(table.find("FAILED"), std::string::npos);
  EXPECT_THROW(benchmark(g, {Resolution{32, 32}}, {.timed_runs = 0}), ConfigError);
}

TEST(Benchmark, TableCarriesColumnsAndReferenceRows) {
  BenchmarkReport r;
  r.resolution = {1080, 1920};
  r.latency_mean_ms = 30.0;
  r.latency_std_ms = 0.5;
  r.fps_mean = 33.3;
  r.fps_std = 0.6;
  r.timed_runs = 100;
  r.latencies_ms.assign(100, 30.0);
  const auto table = format_benchmark_table({r});
  for (const char* column : {"Resolution", "Latency (ms)", "FPS", "VRAM (GB)", "1080p", "29.642", "33.74", "12.347"}) {
    EXPECT_NE(table.find(column), std::string::npos) << column;
  }
  EXPECT_TRUE(r.fps_consistent());
  EXPECT_TRUE(r.stable());
  r.fps_mean = 40.0;
  EXPECT_FALSE(r.fps_consistent());
}

}  // namespace
}  // namespace hypergan
