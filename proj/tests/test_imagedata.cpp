#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "hrssr/image.hpp"
#include "hrssr/synthetic.hpp"
#include "test_util.hpp"

using namespace hrssr::image;
namespace fs = std::filesystem;

namespace {

ImageTensor random_image(int c, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  ImageTensor img(c, h, w);
  for (float& v : img.data()) v = u(rng);
  return img;
}

}  // namespace

TEST_CASE("ImageTensor rejects empty shapes") {
  CHECK_THROWS_AS(ImageTensor(3, 0, 4), std::invalid_argument);
  CHECK_THROWS_AS(ImageTensor(3, 2, 2, std::vector<float>(5)), std::invalid_argument);
}

TEST_CASE("load_image maps 8-bit values by v/255") {
  hrssr::test::TempDir tmp;
  cv::Mat white(2, 2, CV_8UC3, cv::Scalar(255, 255, 255));
  cv::imwrite((tmp.path() / "white.png").string(), white);
  auto w = load_image(tmp.path() / "white.png");
  CHECK(w.channels() == 3);
  CHECK(w.height() == 2);
  for (float v : w.data()) CHECK(v == 1.0f);

  cv::Mat black(1, 1, CV_8UC3, cv::Scalar(0, 0, 0));
  cv::imwrite((tmp.path() / "black.png").string(), black);
  const auto black_img = load_image(tmp.path() / "black.png");
  for (float v : black_img.data()) CHECK(v == 0.0f);

  cv::Mat mid(1, 1, CV_8UC3, cv::Scalar(128, 128, 128));
  cv::imwrite((tmp.path() / "mid.png").string(), mid);
  CHECK(load_image(tmp.path() / "mid.png").at(0, 0, 0) == doctest::Approx(0.50196).epsilon(1e-5));

  // channel order: OpenCV BGR on disk, RGB in memory
  cv::Mat red(1, 1, CV_8UC3, cv::Scalar(0, 0, 255));
  cv::imwrite((tmp.path() / "red.png").string(), red);
  auto r = load_image(tmp.path() / "red.png");
  CHECK(r.at(0, 0, 0) == 1.0f);
  CHECK(r.at(2, 0, 0) == 0.0f);
}

TEST_CASE("load_image error paths") {
  hrssr::test::TempDir tmp;
  CHECK_THROWS_AS(load_image(tmp.path() / "missing.png"), std::runtime_error);
  std::ofstream(tmp.path() / "notes.txt") << "hello";
  CHECK_THROWS_AS(load_image(tmp.path() / "notes.txt"), std::runtime_error);
  std::ofstream(tmp.path() / "garbage.png") << "not a png";
  CHECK_THROWS_AS(load_image(tmp.path() / "garbage.png"), std::runtime_error);
  cv::Mat deep(2, 2, CV_16UC3, cv::Scalar(1000, 1000, 1000));
  cv::imwrite((tmp.path() / "deep.png").string(), deep);
  CHECK_THROWS_AS(load_image(tmp.path() / "deep.png"), std::runtime_error);
}

TEST_CASE("save_image quantizes and preserves shape") {
  hrssr::test::TempDir tmp;
  ImageTensor half(3, 4, 5, 0.5f);
  save_image(half, tmp.path() / "half.png");
  auto back = load_image(tmp.path() / "half.png");
  CHECK(back.height() == 4);
  CHECK(back.width() == 5);
  for (float v : back.data()) CHECK(std::abs(v - 0.5f) <= 1.0f / 510.0f + 1e-7f);

  ImageTensor seven(1, 1, 1, 0.7f);
  save_image(seven, tmp.path() / "seven.png");
  cv::Mat raw = cv::imread((tmp.path() / "seven.png").string(), cv::IMREAD_UNCHANGED);
  CHECK(static_cast<int>(raw.at<std::uint8_t>(0, 0)) == static_cast<int>(std::lround(0.7 * 255)));
  CHECK(static_cast<int>(raw.at<std::uint8_t>(0, 0)) == 179);

  CHECK_THROWS(save_image(half, tmp.path() / "no_such_dir" / "x.png"));
}

TEST_CASE("load(save(img)) is within quantization for random images") {
  hrssr::test::TempDir tmp;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto img = random_image(3, 7, 9, seed);
    save_image(img, tmp.path() / "r.png");
    auto back = load_image(tmp.path() / "r.png");
    REQUIRE(back.same_shape(img));
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(back.data()[i] - img.data()[i]) <= 1.0f / 255.0f);
    // a second round trip is exact
    save_image(back, tmp.path() / "r2.png");
    CHECK(load_image(tmp.path() / "r2.png").data() == back.data());
  }
}

TEST_CASE("rgb_to_y uses BT.601 full-range weights") {
  CHECK(rgb_to_y(ImageTensor(3, 1, 1, 1.0f)).at(0, 0, 0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(rgb_to_y(ImageTensor(3, 1, 1, 0.0f)).at(0, 0, 0) == 0.0f);
  ImageTensor red(3, 1, 1, 0.0f);
  red.at(0, 0, 0) = 1.0f;
  CHECK(rgb_to_y(red).at(0, 0, 0) == doctest::Approx(0.299).epsilon(1e-6));
  CHECK_THROWS_AS(rgb_to_y(ImageTensor(1, 2, 2)), std::invalid_argument);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto luma = rgb_to_y(random_image(3, 6, 6, seed));
    for (float v : luma.data()) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
}

TEST_CASE("bicubic_resize reproduces constants and identity") {
  ImageTensor c(3, 12, 10, 0.3f);
  for (auto [h, w] : {std::pair{24, 20}, {6, 5}, {3, 17}, {48, 40}, {1, 1}}) {
    auto r = bicubic_resize(c, h, w);
    CHECK(r.height() == h);
    CHECK(r.width() == w);
    for (float v : r.data()) CHECK(std::abs(v - 0.3f) <= 1e-6f);
  }
  auto img = random_image(3, 9, 11, 3);
  auto same = bicubic_resize(img, 9, 11);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(same.data()[i] - img.data()[i]) <= 1e-6f);
  CHECK_THROWS_AS(bicubic_resize(img, 0, 3), std::invalid_argument);
}

TEST_CASE("bicubic 2x upsample of a linear ramp matches the analytic ramp") {
  const int w = 16;
  ImageTensor ramp(1, 4, w);
  auto f = [](double x) { return 0.1 + 0.05 * x; };  // x in input pixel-center units
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < w; ++x) ramp.at(0, y, x) = static_cast<float>(f(x));
  auto up = bicubic_resize(ramp, 8, 2 * w);
  for (int x = 4; x < 2 * w - 4; ++x) {
    const double src = (x + 0.5) / 2.0 - 0.5;
    CHECK(std::abs(up.at(0, 3, x) - f(src)) <= 1e-3);
  }
}

TEST_CASE("bicubic downscale low-passes a checkerboard") {
  ImageTensor cb(1, 16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) cb.at(0, y, x) = static_cast<float>((x + y) % 2);
  auto small = bicubic_resize(cb, 4, 4);
  for (int y = 1; y < 3; ++y)
    for (int x = 1; x < 3; ++x) CHECK(std::abs(small.at(0, y, x) - 0.5f) < 0.05f);
}

TEST_CASE("crop_patch windows") {
  auto img = random_image(3, 8, 8, 7);
  auto full = crop_patch(img, 0, 0, 8);
  CHECK(full.data() == img.data());
  auto px = crop_patch(img, 0, 0, 1);
  CHECK(px.at(1, 0, 0) == img.at(1, 0, 0));
  CHECK_THROWS_AS(crop_patch(img, 4, 4, 5), std::out_of_range);
  CHECK_THROWS_AS(crop_patch(img, -1, 0, 2), std::out_of_range);

  auto lr = random_image(3, 32, 32, 1);
  auto hr = random_image(3, 128, 128, 2);
  auto pair = crop_aligned(lr, hr, 3, 5, 16, 4);
  CHECK(pair.lr.height() == 16);
  CHECK(pair.hr.height() == 64);
  CHECK(pair.lr.at(0, 0, 0) == lr.at(0, 3, 5));
  CHECK(pair.hr.at(0, 0, 0) == hr.at(0, 12, 20));
  CHECK(pair.hr.at(2, 63, 63) == hr.at(2, 12 + 63, 20 + 63));
}

TEST_CASE("hf_weight_map on constants, steps and checkerboards") {
  auto zero = hf_weight_map(ImageTensor(3, 6, 6, 0.4f));
  for (float v : zero.data()) CHECK(v == 0.0f);

  // step between columns 4 and 5 -> only the 2x2 blocks covering columns 4..5 respond
  const int k = 5;
  ImageTensor step(1, 8, 10, 0.0f);
  for (int y = 0; y < 8; ++y)
    for (int x = k; x < 10; ++x) step.at(0, y, x) = 1.0f;
  auto w = hf_weight_map(step);
  float peak = 0.0f;
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 10; ++x) {
      const bool straddles = x == k - 1 || x == k;
      if (straddles) {
        CHECK(w.at(0, y, x) == doctest::Approx(1.0));
      } else {
        CHECK(w.at(0, y, x) == 0.0f);
      }
      peak = std::max(peak, w.at(0, y, x));
    }
  }
  CHECK(peak == 1.0f);

  ImageTensor cb(3, 8, 8);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) cb.at(c, y, x) = static_cast<float>((x + y) % 2);
  const auto cb_map = hf_weight_map(cb);
  for (float v : cb_map.data()) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("hf_weight_map properties: range, odd sizes, constant offset invariance") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto img = random_image(3, 7 + static_cast<int>(seed % 3), 9, seed);
    for (float& v : img.data()) v = 0.2f + 0.5f * v;
    auto w = hf_weight_map(img);
    CHECK(w.height() == img.height());
    CHECK(w.width() == img.width());
    float peak = 0.0f;
    for (float v : w.data()) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
      peak = std::max(peak, v);
    }
    CHECK(peak == doctest::Approx(1.0));
    auto shifted = img;
    for (float& v : shifted.data()) v += 0.1f;
    auto ws = hf_weight_map(shifted);
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(std::abs(ws.data()[i] - w.data()[i]) <= 1e-5f);
  }
}

TEST_CASE("apply_weight multiplies every channel") {
  ImageTensor img(3, 2, 2, 0.5f);
  WeightMap w(1, 2, 2, 0.0f);
  w.at(0, 1, 1) = 1.0f;
  auto out = apply_weight(img, w);
  CHECK(out.at(2, 1, 1) == 0.5f);
  CHECK(out.at(2, 0, 1) == 0.0f);
  CHECK_THROWS(apply_weight(img, WeightMap(1, 3, 2)));
}

TEST_CASE("list_images is sorted and filters extensions") {
  hrssr::test::TempDir tmp;
  save_image(ImageTensor(3, 2, 2), tmp.path() / "b.png");
  save_image(ImageTensor(3, 2, 2), tmp.path() / "a.png");
  std::ofstream(tmp.path() / "c.txt") << "x";
  auto files = list_images(tmp.path());
  REQUIRE(files.size() == 2);
  CHECK(files[0].filename() == "a.png");
  CHECK_THROWS(list_images(tmp.path() / "nope"));
}

TEST_CASE("generate_scene is deterministic and has structure") {
  auto a = generate_scene(5, 32, 40);
  auto b = generate_scene(5, 32, 40);
  auto c = generate_scene(6, 32, 40);
  CHECK(a.data() == b.data());
  CHECK(a.data() != c.data());
  double mean = 0.0;
  for (float v : a.data()) mean += v;
  mean /= a.size();
  double var = 0.0;
  for (float v : a.data()) var += (v - mean) * (v - mean);
  CHECK(var / a.size() > 1e-3);
}
