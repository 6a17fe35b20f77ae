#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "hypergan/datasets.hpp"

namespace hypergan::testing {

namespace fs = std::filesystem;

/// Directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "hypergan") {
    std::random_device rd;
    path_ = fs::temp_directory_path() / (tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& child) const { return path_ / child; }

 private:
  fs::path path_;
};

// A street-ish scene: sky gradient, ground plane, a few coloured blocks.
inline cv::Mat make_scene(uint32_t seed, int width, int height) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> u(0, 255);
  cv::Mat img(height, width, CV_8UC3);
  const int horizon = height / 3 + static_cast<int>(rng() % std::max(1, height / 4));
  const cv::Vec3b sky_top(u(rng) / 4 + 60, u(rng) / 4 + 120, 230), ground(u(rng) / 3 + 60, u(rng) / 3 + 60, u(rng) / 3 + 60);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (y < horizon) {
        const double t = static_cast<double>(y) / std::max(1, horizon);
        img.at<cv::Vec3b>(y, x) = cv::Vec3b(static_cast<uint8_t>(sky_top[0] + t * 80), static_cast<uint8_t>(sky_top[1] + t * 60),
                                            static_cast<uint8_t>(std::min(255.0, sky_top[2] + t * 20)));
      } else {
        img.at<cv::Vec3b>(y, x) = ground;
      }
    }
  }
  const int blocks = 3 + static_cast<int>(rng() % 4);
  for (int i = 0; i < blocks; ++i) {
    const int w = width / 8 + static_cast<int>(rng() % std::max(1, width / 4));
    const int h = height / 6 + static_cast<int>(rng() % std::max(1, height / 3));
    const int x = static_cast<int>(rng() % std::max(1, width - w));
    const int y = std::max(0, horizon - h / 2 - static_cast<int>(rng() % std::max(1, height / 8)));
    cv::rectangle(img, cv::Rect(x, y, w, std::min(h, height - y)), cv::Scalar(u(rng), u(rng), u(rng)), cv::FILLED);
  }
  cv::circle(img, cv::Point(static_cast<int>(rng() % width), static_cast<int>(rng() % height)), std::max(2, width / 12),
             cv::Scalar(u(rng), u(rng), u(rng)), cv::FILLED);
  return img;
}

// Deterministic "enhancement": warmer tone curve and a slight blur.
inline cv::Mat make_enhanced(const cv::Mat& scene) {
  cv::Mat f;
  scene.convertTo(f, CV_32FC3, 1.0 / 255.0);
  std::vector<cv::Mat> ch;
  cv::split(f, ch);
  ch[0] = ch[0] * 0.85 + 0.12;  // R
  ch[1] = ch[1] * 0.9 + 0.04;   // G
  ch[2] = ch[2] * 0.75;         // B
  cv::merge(ch, f);
  cv::GaussianBlur(f, f, cv::Size(3, 3), 0.8);
  cv::Mat out;
  f.convertTo(out, CV_8UC3, 255.0);
  return out;
}

struct PairedFixture {
  DatasetSpec synthetic;
  DatasetSpec enhanced;
  DatasetSpec real;
};

/// `<root>/{synthetic,enhanced}/train/pair_NN.png` and `<root>/real/real_NN.png`.
inline PairedFixture write_paired_fixture(const fs::path& root, int pairs, int size, int reals = 3,
                                          uint32_t seed = 7) {
  PairedFixture fx{{root / "synthetic", DatasetKind::kSynthetic, Split::kTrain},
                   {root / "enhanced", DatasetKind::kEnhanced, Split::kTrain},
                   {root / "real", DatasetKind::kReal, Split::kTrain}};
  for (int i = 0; i < pairs; ++i) {
    char stem[32];
    std::snprintf(stem, sizeof(stem), "pair_%02d", i);
    const auto scene = make_scene(seed + static_cast<uint32_t>(i), size, size);
    write_rgb(root / "synthetic" / "train" / (std::string(stem) + ".png"), scene);
    write_rgb(root / "enhanced" / "train" / (std::string(stem) + ".png"), make_enhanced(scene));
  }
  for (int i = 0; i < reals; ++i) {
    char stem[32];
    std::snprintf(stem, sizeof(stem), "real_%02d", i);
    write_rgb(root / "real" / (std::string(stem) + ".png"), make_enhanced(make_scene(seed + 1000 + i, size, size)));
  }
  return fx;
}

}  // namespace hypergan::testing
