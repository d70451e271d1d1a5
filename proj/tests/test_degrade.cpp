#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "hrssr/degrade.hpp"
#include "hrssr/synthetic.hpp"
#include "test_util.hpp"

using namespace hrssr::degrade;
using hrssr::image::ImageTensor;
namespace fs = std::filesystem;

TEST_CASE("sample_recipe is deterministic and respects ranges") {
  const Ranges ranges;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    auto a = sample_recipe(seed, 4);
    auto b = sample_recipe(seed, 4);
    CHECK(a == b);
    CHECK(a.scale == 4);
    CHECK(a.rounds.size() == 2);
    for (const auto& round : a.rounds) {
      for (const auto& st : round) {
        switch (st.kind) {
          case StageKind::GaussianBlur:
            CHECK(st.param >= ranges.blur_min);
            CHECK(st.param <= ranges.blur_max);
            break;
          case StageKind::GaussianNoise:
            CHECK(st.param >= ranges.noise_min);
            CHECK(st.param <= ranges.noise_max);
            break;
          case StageKind::PoissonNoise:
            CHECK(st.param >= ranges.poisson_min);
            CHECK(st.param <= ranges.poisson_max);
            break;
          case StageKind::Jpeg:
            CHECK(st.param >= ranges.jpeg_min);
            CHECK(st.param <= ranges.jpeg_max);
            break;
        }
      }
    }
  }
  CHECK_THROWS_AS(sample_recipe(1, 3), std::invalid_argument);
}

TEST_CASE("each degradation type appears in about half of all rounds") {
  std::map<StageKind, int> counts;
  int rounds = 0;
  for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
    for (const auto& round : sample_recipe(seed, 2).rounds) {
      ++rounds;
      for (const auto& st : round) counts[st.kind]++;
    }
  }
  for (auto kind : {StageKind::GaussianBlur, StageKind::GaussianNoise, StageKind::PoissonNoise, StageKind::Jpeg}) {
    const double freq = static_cast<double>(counts[kind]) / rounds;
    INFO(to_string(kind), " frequency ", freq);
    CHECK(std::abs(freq - 0.5) <= 0.05);
  }
}

TEST_CASE("apply_recipe degenerate stages") {
  auto img = hrssr::image::generate_scene(3, 16, 16);
  DegradationRecipe empty;
  empty.rounds = {{}, {}};
  empty.scale = 1;
  auto same = apply_recipe(img, empty);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(same.data()[i] - img.data()[i]) <= 1e-6f);

  DegradationRecipe zero_noise = empty;
  zero_noise.rounds[0] = {{StageKind::GaussianNoise, 0.0}};
  CHECK(apply_recipe(img, zero_noise).data() == img.data());

  DegradationRecipe down = empty;
  down.scale = 4;
  auto small = apply_recipe(img, down);
  CHECK(small.height() == 4);
  CHECK(small.width() == 4);
  CHECK_THROWS_AS(apply_recipe(hrssr::image::generate_scene(3, 18, 16), down), std::invalid_argument);
}

TEST_CASE("blur of a delta matches the discretized Gaussian peak") {
  const double sigma = 1.0;
  const int r = blur_radius(sigma);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i)
    for (int j = -r; j <= r; ++j) sum += std::exp(-(i * i + j * j) / (2.0 * sigma * sigma));
  const double peak = 1.0 / sum;

  ImageTensor delta(1, 21, 21, 0.0f);
  delta.at(0, 10, 10) = 1.0f;
  DegradationRecipe rec;
  rec.rounds = {{{StageKind::GaussianBlur, sigma}}};
  auto out = apply_recipe(delta, rec);
  CHECK(std::abs(out.at(0, 10, 10) - peak) <= 1e-4);
  // first off-center tap
  const double side = std::exp(-1.0 / (2.0 * sigma * sigma)) / sum;
  CHECK(std::abs(out.at(0, 10, 11) - side) <= 1e-4);
}

TEST_CASE("gaussian blur preserves interior mean") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<float> u(-0.05f, 0.05f);
  ImageTensor img(1, 64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) img.at(0, y, x) = 0.2f + 0.008f * x + u(rng);
  auto blurred = gaussian_blur(img, 1.5);
  double a = 0.0, b = 0.0;
  for (int y = 16; y < 48; ++y)
    for (int x = 16; x < 48; ++x) {
      a += img.at(0, y, x);
      b += blurred.at(0, y, x);
    }
  CHECK(std::abs(a - b) / (32.0 * 32.0) <= 1e-3);
}

TEST_CASE("apply_recipe outputs stay in range and are reproducible") {
  auto img = hrssr::image::generate_scene(9, 32, 32);
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    auto rec = sample_recipe(seed, 2);
    auto a = apply_recipe(img, rec);
    auto b = apply_recipe(img, rec);
    CHECK(a.data() == b.data());
    CHECK(a.height() == 16);
    for (float v : a.data()) {
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
}

TEST_CASE("individual stages") {
  auto img = hrssr::image::generate_scene(4, 32, 32);
  auto j = jpeg_roundtrip(img, 30);
  CHECK(j.same_shape(img));
  CHECK(j.data() != img.data());

  ImageTensor flat(3, 64, 64, 0.5f);
  auto p = poisson_noise(flat, 1.0, 3);
  double mean = 0.0;
  for (float v : p.data()) mean += v;
  mean /= p.size();
  CHECK(std::abs(mean - 0.5) < 0.01);
  CHECK_THROWS(poisson_noise(flat, 0.0, 1));

  auto n1 = gaussian_noise(flat, 0.05, 1);
  auto n2 = gaussian_noise(flat, 0.05, 1);
  auto n3 = gaussian_noise(flat, 0.05, 2);
  CHECK(n1.data() == n2.data());
  CHECK(n1.data() != n3.data());
}

TEST_CASE("presets") {
  auto b = preset("blur2", 1);
  REQUIRE(b.rounds.size() == 1);
  CHECK(b.rounds[0][0].kind == StageKind::GaussianBlur);
  CHECK(b.rounds[0][0].param == 2.0);
  CHECK(preset("noise15", 4).rounds[0][0].param == doctest::Approx(15.0 / 255.0));
  CHECK(preset("jpeg40", 1).rounds[0][0].param == 40.0);
  CHECK_THROWS(preset("sepia", 1));
}

TEST_CASE("synth_dataset writes a manifest and deterministic files") {
  hrssr::test::TempDir tmp;
  hrssr::image::write_scene_set(tmp.path() / "hr", 3, 32, 36, 1);

  auto m0 = synth_dataset(tmp.path() / "hr", tmp.path() / "out0", 4, 0, 7);
  CHECK(m0.rows.empty());
  CHECK(read_manifest(tmp.path() / "out0" / "manifest.csv").rows.empty());
  CHECK_FALSE(fs::exists(tmp.path() / "out0" / "lr"));

  auto a = synth_dataset(tmp.path() / "hr", tmp.path() / "a", 4, 5, 7);
  auto b = synth_dataset(tmp.path() / "hr", tmp.path() / "b", 4, 5, 7);
  REQUIRE(a.rows.size() == 5);
  auto text = hrssr::test::read_file(tmp.path() / "a" / "manifest.csv");
  CHECK(std::count(text.begin(), text.end(), '\n') == 6);  // header + 5 rows
  CHECK(text.rfind("hr_path,lr_path,scale,recipe_seed\n", 0) == 0);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(hrssr::test::read_file(a.resolve(a.rows[i].lr_path)) ==
          hrssr::test::read_file(b.resolve(b.rows[i].lr_path)));
    auto lr = hrssr::image::load_image(a.resolve(a.rows[i].lr_path));
    CHECK(lr.height() == 8);
    CHECK(lr.width() == 9);
    auto hr = hrssr::image::load_image(a.resolve(a.rows[i].hr_path));
    CHECK(hr.height() == 32);
  }
  auto reread = read_manifest(tmp.path() / "a" / "manifest.csv");
  CHECK(reread.rows.size() == 5);
  CHECK(reread.rows[2].recipe_seed == a.rows[2].recipe_seed);
  CHECK(reread.rows[2].scale == 4);

  fs::create_directories(tmp.path() / "empty");
  CHECK_THROWS(synth_dataset(tmp.path() / "empty", tmp.path() / "c", 4, 2, 1));
}
