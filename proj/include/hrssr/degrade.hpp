#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hrssr/image.hpp"

namespace hrssr::degrade {

enum class StageKind { GaussianBlur, GaussianNoise, PoissonNoise, Jpeg };

std::string to_string(StageKind k);

struct Stage {
  StageKind kind;
  // blur sigma (px) | noise sigma ([0,1] units) | poisson scale | jpeg quality
  double param;
};

struct Ranges {
  double blur_min = 0.2, blur_max = 3.0;
  double noise_min = 0.0, noise_max = 25.0 / 255.0;
  double poisson_min = 0.05, poisson_max = 3.0;
  double jpeg_min = 30.0, jpeg_max = 95.0;
  double include_probability = 0.5;
};

// Two rounds of stages applied in order, then bicubic downsampling by `scale`.
struct DegradationRecipe {
  std::vector<std::vector<Stage>> rounds;
  int scale = 1;
  std::uint64_t rng_seed = 0;

  bool operator==(const DegradationRecipe&) const = default;
};

bool operator==(const Stage& a, const Stage& b);

DegradationRecipe sample_recipe(std::uint64_t seed, int scale, const Ranges& ranges = {});

// Named single-stage recipes used by the ablation harness: "clean",
// "blur2" (sigma 2), "noise15" (sigma 15/255), "jpeg40" (quality 40).
DegradationRecipe preset(const std::string& name, int scale, std::uint64_t seed = 0);

image::ImageTensor apply_recipe(const image::ImageTensor& y, const DegradationRecipe& r);

// Individual stages, exposed for tests and presets.
image::ImageTensor gaussian_blur(const image::ImageTensor& img, double sigma);
image::ImageTensor gaussian_noise(const image::ImageTensor& img, double sigma, std::uint64_t seed);
image::ImageTensor poisson_noise(const image::ImageTensor& img, double scale, std::uint64_t seed);
image::ImageTensor jpeg_roundtrip(const image::ImageTensor& img, int quality);

// Half-width of the discrete Gaussian kernel used by gaussian_blur.
int blur_radius(double sigma);

struct ManifestRow {
  std::filesystem::path hr_path;
  std::filesystem::path lr_path;
  int scale = 1;
  std::uint64_t recipe_seed = 0;
};

struct Manifest {
  std::filesystem::path location;  // the manifest file; rows are relative to its directory
  std::vector<ManifestRow> rows;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

void write_manifest(const Manifest& m, const std::filesystem::path& file);
Manifest read_manifest(const std::filesystem::path& file);

// Per-sample recipe seed derived from (seed, index).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// Writes <out_dir>/lr/*.png and <out_dir>/manifest.csv. HR images whose size is
// not a multiple of `scale` are consumed through their top-left aligned crop.
// A non-empty `preset_name` replaces the random recipe with that preset.
Manifest synth_dataset(const std::filesystem::path& hr_dir, const std::filesystem::path& out_dir, int scale,
                       int count, std::uint64_t seed, const Ranges& ranges = {}, const std::string& preset_name = "");

// Crops to the largest top-left window whose sides are multiples of scale.
image::ImageTensor crop_to_multiple(const image::ImageTensor& img, int scale);

}  // namespace hrssr::degrade
