#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "grad_check.hpp"
#include "hrssr/degrade.hpp"
#include "hrssr/metrics.hpp"
#include "hrssr/perceptual.hpp"
#include "hrssr/synthetic.hpp"
#include "hrssr/tensor_image.hpp"
#include "test_util.hpp"

using namespace hrssr;
using image::ImageTensor;

TEST_CASE("psnr closed forms") {
  auto a = image::generate_scene(1, 32, 32);
  CHECK(metrics::psnr(a, a) == metrics::kPsnrCap);

  ImageTensor g(1, 16, 16, 0.4f);
  ImageTensor h(1, 16, 16, 0.4f + 1.0f / 255.0f);
  CHECK(metrics::psnr(g, h) == doctest::Approx(20.0 * std::log10(255.0)).epsilon(1e-6));

  // uniform luma offset through RGB: equal offset on every channel shifts luma by the same amount
  ImageTensor rgb(3, 8, 8, 0.25f);
  ImageTensor rgb2(3, 8, 8, 0.25f + 1.0f / 255.0f);
  CHECK(std::abs(metrics::psnr(rgb, rgb2) - 48.1308) < 1e-3);

  CHECK(metrics::psnr(ImageTensor(3, 4, 4, 0.0f), ImageTensor(3, 4, 4, 1.0f)) == doctest::Approx(0.0));
  auto b = image::generate_scene(2, 32, 32);
  CHECK(metrics::psnr(a, b) == doctest::Approx(metrics::psnr(b, a)));
  CHECK_THROWS_AS(metrics::psnr(a, ImageTensor(3, 16, 32)), std::invalid_argument);
}

TEST_CASE("ssim") {
  auto a = image::generate_scene(3, 32, 32);
  CHECK(metrics::ssim(a, a) == doctest::Approx(1.0));
  ImageTensor c(1, 16, 16, 0.3f);
  CHECK(metrics::ssim(c, c) == doctest::Approx(1.0));

  ImageTensor cb(1, 24, 24);
  ImageTensor inv(1, 24, 24);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x) {
      cb.at(0, y, x) = ((x / 2 + y / 2) % 2) ? 0.9f : 0.1f;
      inv.at(0, y, x) = 1.0f - cb.at(0, y, x);
    }
  CHECK(metrics::ssim(cb, inv) < 0.5);
  CHECK_THROWS_AS(metrics::ssim(ImageTensor(1, 10, 20), ImageTensor(1, 10, 20)), std::invalid_argument);
  CHECK_THROWS_AS(metrics::ssim(cb, ImageTensor(1, 24, 25)), std::invalid_argument);
}

TEST_CASE("ssim matches a direct windowed evaluation") {
  // brute-force oracle at one window position
  auto a = image::rgb_to_y(image::generate_scene(4, 11, 11));
  auto b = image::rgb_to_y(image::generate_scene(5, 11, 11));
  double wsum = 0.0, mx = 0, my = 0;
  double wk[11][11];
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) {
      wk[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
      wsum += wk[i][j];
    }
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) {
      mx += wk[i][j] / wsum * a.at(0, i, j);
      my += wk[i][j] / wsum * b.at(0, i, j);
    }
  double vx = 0, vy = 0, cov = 0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) {
      const double w = wk[i][j] / wsum;
      vx += w * (a.at(0, i, j) - mx) * (a.at(0, i, j) - mx);
      vy += w * (b.at(0, i, j) - my) * (b.at(0, i, j) - my);
      cov += w * (a.at(0, i, j) - mx) * (b.at(0, i, j) - my);
    }
  const double c1 = 1e-4, c2 = 9e-4;
  const double expect = ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
  CHECK(metrics::ssim(a, b) == doctest::Approx(expect).epsilon(1e-5));
}

TEST_CASE("metric csv layout") {
  hrssr::test::TempDir tmp;
  metrics::MetricReport r;
  r.rows = {{"a.png", 30.0, 0.9, 0.1}, {"b.png", 20.0, 0.7, 0.3}};
  metrics::finalize_mean(r);
  CHECK(r.mean.psnr == doctest::Approx(25.0));
  metrics::write_metric_csv(r, tmp.path() / "m.csv");
  auto text = hrssr::test::read_file(tmp.path() / "m.csv");
  CHECK(text.rfind("image,psnr,ssim,lpips\na.png,30,", 0) == 0);
  CHECK(text.find("\nMEAN,25,") != std::string::npos);
}

TEST_CASE("random-cos perceptual distance contract") {
  perceptual::RandomCosMetric metric;
  auto a = to_tensor(image::generate_scene(6, 32, 32)).unsqueeze(0);
  auto b = to_tensor(image::generate_scene(7, 32, 32)).unsqueeze(0);
  CHECK(metric.distance(a, a).item<double>() <= 1e-6);
  const double ab = metric.distance(a, b).item<double>();
  CHECK(ab >= 0.0);
  CHECK(ab <= 1.0);
  CHECK(std::abs(ab - metric.distance(b, a).item<double>()) <= 1e-6);
  CHECK(metric.distance(torch::zeros({1, 3, 16, 16}), torch::ones({1, 3, 16, 16})).item<double>() <= 1.0);
  CHECK_THROWS_AS(metric.distance(a, torch::zeros({1, 3, 16, 16})), std::invalid_argument);
  CHECK(metric.name() == "random-cos");
}

TEST_CASE("stronger blur is perceptually farther on 20 patches") {
  perceptual::RandomCosMetric metric;
  int ordered = 0;
  for (int i = 0; i < 20; ++i) {
    auto clean = image::generate_scene(100 + i, 48, 48);
    auto strong = degrade::gaussian_blur(clean, 2.0);
    auto mild = degrade::gaussian_blur(clean, 0.5);
    const double ds = perceptual::perceptual_distance(metric, clean, strong);
    const double dm = perceptual::perceptual_distance(metric, clean, mild);
    if (ds > dm) ++ordered;
  }
  CHECK(ordered == 20);
}

TEST_CASE("perceptual gradient against finite differences") {
  perceptual::RandomCosMetric metric;
  metric.to(torch::kDouble);
  auto a = to_tensor(image::generate_scene(8, 12, 12)).unsqueeze(0).to(torch::kDouble);
  auto b = to_tensor(degrade::gaussian_blur(image::generate_scene(8, 12, 12), 1.5)).unsqueeze(0).to(torch::kDouble);
  auto ra = hrssr::test::grad_check([&](const torch::Tensor& x) { return metric.distance(x, b).sum(); }, a);
  INFO(ra.detail);
  CHECK(ra.max_rel_error <= 1e-3);
  auto rb = hrssr::test::grad_check([&](const torch::Tensor& x) { return metric.distance(a, x).sum(); }, b);
  INFO(rb.detail);
  CHECK(rb.max_rel_error <= 1e-3);
}

TEST_CASE("perceptual factory") {
  Config cfg;
  CHECK(perceptual::make_perceptual(cfg)->name() == "random-cos");
  cfg.set("perceptual.backend", "lpips-alex");
  cfg.set("perceptual.weights", "/nonexistent.pt");
  CHECK_THROWS_AS(perceptual::make_perceptual(cfg), std::runtime_error);
  cfg.set("perceptual.backend", "vgg");
  CHECK_THROWS_AS(perceptual::make_perceptual(cfg), std::invalid_argument);
}
