#include "hrssr/synthetic.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace hrssr::image {

namespace {

using Color = std::array<float, 3>;

Color random_color(std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.05f, 0.95f);
  return {u(rng), u(rng), u(rng)};
}

void blend(ImageTensor& img, int y, int x, const Color& c, float alpha) {
  for (int k = 0; k < 3; ++k) img.at(k, y, x) = (1.0f - alpha) * img.at(k, y, x) + alpha * c[k];
}

}  // namespace

ImageTensor generate_scene(std::uint64_t seed, int height, int width) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<float> u01(0.0f, 1.0f);
  ImageTensor img(3, height, width);

  const Color c0 = random_color(rng);
  const Color c1 = random_color(rng);
  const float angle = u01(rng) * 2.0f * std::numbers::pi_v<float>;
  const float dx = std::cos(angle);
  const float dy = std::sin(angle);
  const float diag = static_cast<float>(height + width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const float t = 0.5f + (dx * x + dy * y) / diag;
      for (int k = 0; k < 3; ++k) img.at(k, y, x) = c0[k] + (c1[k] - c0[k]) * t;
    }
  }

  // striped texture patches
  const int stripes = 1 + static_cast<int>(rng() % 3);
  for (int s = 0; s < stripes; ++s) {
    const int y0 = static_cast<int>(u01(rng) * height * 0.7f);
    const int x0 = static_cast<int>(u01(rng) * width * 0.7f);
    const int hh = std::max(4, static_cast<int>((0.2f + 0.4f * u01(rng)) * height));
    const int ww = std::max(4, static_cast<int>((0.2f + 0.4f * u01(rng)) * width));
    const float period = 3.0f + 9.0f * u01(rng);
    const float theta = u01(rng) * std::numbers::pi_v<float>;
    const Color ca = random_color(rng);
    const Color cb = random_color(rng);
    for (int y = y0; y < std::min(height, y0 + hh); ++y) {
      for (int x = x0; x < std::min(width, x0 + ww); ++x) {
        const float phase = (std::cos(theta) * x + std::sin(theta) * y) * 2.0f * std::numbers::pi_v<float> / period;
        const float t = 0.5f + 0.5f * std::sin(phase);
        for (int k = 0; k < 3; ++k) img.at(k, y, x) = ca[k] + (cb[k] - ca[k]) * t;
      }
    }
  }

  // hard-edged shapes
  const int shapes = 5 + static_cast<int>(rng() % 8);
  for (int s = 0; s < shapes; ++s) {
    const Color c = random_color(rng);
    const float cy = u01(rng) * height;
    const float cx = u01(rng) * width;
    const float r = (0.05f + 0.2f * u01(rng)) * std::min(height, width);
    const int kind = static_cast<int>(rng() % 3);
    const float alpha = 0.6f + 0.4f * u01(rng);
    const float rot = u01(rng) * std::numbers::pi_v<float>;
    for (int y = std::max(0, static_cast<int>(cy - 1.5f * r)); y < std::min(height, static_cast<int>(cy + 1.5f * r) + 1); ++y) {
      for (int x = std::max(0, static_cast<int>(cx - 1.5f * r)); x < std::min(width, static_cast<int>(cx + 1.5f * r) + 1); ++x) {
        const float py = y + 0.5f - cy;
        const float pxx = x + 0.5f - cx;
        bool inside = false;
        if (kind == 0) {
          inside = py * py + pxx * pxx <= r * r;
        } else if (kind == 1) {
          const float ry = std::cos(rot) * py - std::sin(rot) * pxx;
          const float rx = std::sin(rot) * py + std::cos(rot) * pxx;
          inside = std::abs(ry) <= r * 0.6f && std::abs(rx) <= r;
        } else {
          // ring
          const float d2 = py * py + pxx * pxx;
          inside = d2 <= r * r && d2 >= 0.45f * r * r;
        }
        if (inside) blend(img, y, x, c, alpha);
      }
    }
  }

  // sparse fine speckle
  const int dots = (height * width) / 64;
  for (int i = 0; i < dots; ++i) {
    const int y = static_cast<int>(rng() % static_cast<std::uint64_t>(height));
    const int x = static_cast<int>(rng() % static_cast<std::uint64_t>(width));
    const float v = u01(rng) < 0.5f ? 0.1f : 0.9f;
    blend(img, y, x, {v, v, v}, 0.5f);
  }

  img.clamp01();
  return img;
}

int write_scene_set(const std::filesystem::path& dir, int count, int height, int width, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%04d.png", i);
    save_image(generate_scene(seed * 1000003ULL + static_cast<std::uint64_t>(i), height, width), dir / name);
  }
  return count;
}

}  // namespace hrssr::image
