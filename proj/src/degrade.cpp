#include "hrssr/degrade.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace hrssr::degrade {

namespace fs = std::filesystem;
using image::ImageTensor;

std::string to_string(StageKind k) {
  switch (k) {
    case StageKind::GaussianBlur: return "gaussian_blur";
    case StageKind::GaussianNoise: return "gaussian_noise";
    case StageKind::PoissonNoise: return "poisson_noise";
    case StageKind::Jpeg: return "jpeg";
  }
  return "unknown";
}

bool operator==(const Stage& a, const Stage& b) { return a.kind == b.kind && a.param == b.param; }

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 over the pair
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

DegradationRecipe sample_recipe(std::uint64_t seed, int scale, const Ranges& ranges) {
  if (scale != 1 && scale != 2 && scale != 4) {
    throw std::invalid_argument("sample_recipe: unsupported scale " + std::to_string(scale));
  }
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution include(ranges.include_probability);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  DegradationRecipe r;
  r.scale = scale;
  r.rng_seed = seed;
  for (int round = 0; round < 2; ++round) {
    std::vector<Stage> stages;
    if (include(rng)) stages.push_back({StageKind::GaussianBlur, uniform(ranges.blur_min, ranges.blur_max)});
    if (include(rng)) stages.push_back({StageKind::GaussianNoise, uniform(ranges.noise_min, ranges.noise_max)});
    if (include(rng)) stages.push_back({StageKind::PoissonNoise, uniform(ranges.poisson_min, ranges.poisson_max)});
    if (include(rng)) stages.push_back({StageKind::Jpeg, std::round(uniform(ranges.jpeg_min, ranges.jpeg_max))});
    r.rounds.push_back(std::move(stages));
  }
  return r;
}

DegradationRecipe preset(const std::string& name, int scale, std::uint64_t seed) {
  DegradationRecipe r;
  r.scale = scale;
  r.rng_seed = seed;
  if (name == "clean") {
    r.rounds = {{}};
  } else if (name == "blur2") {
    r.rounds = {{{StageKind::GaussianBlur, 2.0}}};
  } else if (name == "noise15") {
    r.rounds = {{{StageKind::GaussianNoise, 15.0 / 255.0}}};
  } else if (name == "jpeg40") {
    r.rounds = {{{StageKind::Jpeg, 40.0}}};
  } else {
    throw std::invalid_argument("unknown degradation preset: " + name);
  }
  return r;
}

int blur_radius(double sigma) { return std::max(1, static_cast<int>(std::ceil(3.0 * sigma))); }

namespace {

cv::Mat plane_view(ImageTensor& img, int c) {
  return cv::Mat(img.height(), img.width(), CV_32FC1, img.plane(c).data());
}

}  // namespace

ImageTensor gaussian_blur(const ImageTensor& img, double sigma) {
  if (sigma <= 0.0) return img;
  ImageTensor src = img;
  ImageTensor out(img.channels(), img.height(), img.width());
  const int k = 2 * blur_radius(sigma) + 1;
  for (int c = 0; c < img.channels(); ++c) {
    cv::Mat s = plane_view(src, c);
    cv::Mat d = plane_view(out, c);
    cv::GaussianBlur(s, d, cv::Size(k, k), sigma, sigma, cv::BORDER_REFLECT_101);
  }
  out.clamp01();
  return out;
}

ImageTensor gaussian_noise(const ImageTensor& img, double sigma, std::uint64_t seed) {
  if (sigma <= 0.0) return img;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  ImageTensor out = img;
  for (float& v : out.data()) v = static_cast<float>(v + n(rng));
  out.clamp01();
  return out;
}

ImageTensor poisson_noise(const ImageTensor& img, double scale, std::uint64_t seed) {
  if (scale <= 0.0) throw std::invalid_argument("poisson_noise: scale must be positive");
  std::mt19937_64 rng(seed);
  const double k = 255.0 * scale;
  ImageTensor out = img;
  for (float& v : out.data()) {
    const double lambda = std::max(0.0, static_cast<double>(v)) * k;
    if (lambda <= 0.0) {
      v = 0.0f;
      continue;
    }
    std::poisson_distribution<long> p(lambda);
    v = static_cast<float>(static_cast<double>(p(rng)) / k);
  }
  out.clamp01();
  return out;
}

ImageTensor jpeg_roundtrip(const ImageTensor& img, int quality) {
  const int c = img.channels();
  if (c != 1 && c != 3) throw std::invalid_argument("jpeg_roundtrip: expected 1 or 3 channels");
  cv::Mat m(img.height(), img.width(), c == 1 ? CV_8UC1 : CV_8UC3);
  for (int y = 0; y < img.height(); ++y) {
    auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width(); ++x) {
      for (int k = 0; k < c; ++k) row[x * c + k] = image::quantize_u8(img.at(c == 3 ? 2 - k : k, y, x));
    }
  }
  std::vector<std::uint8_t> buf;
  if (!cv::imencode(".jpg", m, buf, {cv::IMWRITE_JPEG_QUALITY, std::clamp(quality, 1, 100)})) {
    throw std::runtime_error("jpeg_roundtrip: encode failed");
  }
  cv::Mat dec = cv::imdecode(buf, c == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
  if (dec.empty()) throw std::runtime_error("jpeg_roundtrip: decode failed");
  ImageTensor out(c, img.height(), img.width());
  for (int y = 0; y < img.height(); ++y) {
    const auto* row = dec.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width(); ++x) {
      for (int k = 0; k < c; ++k) out.at(c == 3 ? 2 - k : k, y, x) = row[x * c + k] / 255.0f;
    }
  }
  return out;
}

ImageTensor apply_recipe(const ImageTensor& y, const DegradationRecipe& r) {
  if (r.scale < 1) throw std::invalid_argument("apply_recipe: scale must be >= 1");
  if (y.height() % r.scale != 0 || y.width() % r.scale != 0) {
    throw std::invalid_argument("apply_recipe: image size not divisible by scale");
  }
  ImageTensor x = y;
  for (std::size_t round = 0; round < r.rounds.size(); ++round) {
    for (std::size_t s = 0; s < r.rounds[round].size(); ++s) {
      const Stage& st = r.rounds[round][s];
      const std::uint64_t stream = derive_seed(r.rng_seed, round * 16 + s + 1);
      switch (st.kind) {
        case StageKind::GaussianBlur: x = gaussian_blur(x, st.param); break;
        case StageKind::GaussianNoise: x = gaussian_noise(x, st.param, stream); break;
        case StageKind::PoissonNoise: x = poisson_noise(x, st.param, stream); break;
        case StageKind::Jpeg: x = jpeg_roundtrip(x, static_cast<int>(st.param)); break;
      }
    }
  }
  if (r.scale != 1) x = image::bicubic_resize(x, y.height() / r.scale, y.width() / r.scale);
  x.clamp01();
  return x;
}

ImageTensor crop_to_multiple(const ImageTensor& img, int scale) {
  const int h = img.height() / scale * scale;
  const int w = img.width() / scale * scale;
  if (h < scale || w < scale) throw std::invalid_argument("image smaller than the scale factor");
  if (h == img.height() && w == img.width()) return img;
  return image::crop_rect(img, 0, 0, h, w);
}

fs::path Manifest::resolve(const fs::path& p) const {
  if (p.is_absolute()) return p;
  return location.parent_path() / p;
}

void write_manifest(const Manifest& m, const fs::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest " + file.string());
  out << "hr_path,lr_path,scale,recipe_seed\n";
  for (const auto& row : m.rows) {
    const std::string hr = row.hr_path.generic_string();
    const std::string lr = row.lr_path.generic_string();
    if (hr.find(',') != std::string::npos || lr.find(',') != std::string::npos) {
      throw std::invalid_argument("manifest paths must not contain commas");
    }
    out << hr << ',' << lr << ',' << row.scale << ',' << row.recipe_seed << '\n';
  }
}

Manifest read_manifest(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read manifest " + file.string());
  Manifest m;
  m.location = file;
  std::string line;
  if (!std::getline(in, line) || line.rfind("hr_path,lr_path,scale,recipe_seed", 0) != 0) {
    throw std::runtime_error("manifest header mismatch in " + file.string());
  }
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string hr, lr, scale, seed;
    if (!std::getline(ss, hr, ',') || !std::getline(ss, lr, ',') || !std::getline(ss, scale, ',') ||
        !std::getline(ss, seed, ',')) {
      throw std::runtime_error("malformed manifest line " + std::to_string(lineno));
    }
    m.rows.push_back({hr, lr, std::stoi(scale), std::stoull(seed)});
  }
  return m;
}

Manifest synth_dataset(const fs::path& hr_dir, const fs::path& out_dir, int scale, int count, std::uint64_t seed,
                       const Ranges& ranges, const std::string& preset_name) {
  if (count < 0) throw std::invalid_argument("synth_dataset: count must be >= 0");
  const auto sources = image::list_images(hr_dir);
  if (sources.empty()) throw std::runtime_error("synth_dataset: no images in " + hr_dir.string());

  fs::create_directories(out_dir);
  Manifest m;
  m.location = out_dir / "manifest.csv";
  if (count > 0) fs::create_directories(out_dir / "lr");
  for (int i = 0; i < count; ++i) {
    const fs::path& src = sources[static_cast<std::size_t>(i) % sources.size()];
    const std::uint64_t rs = derive_seed(seed, static_cast<std::uint64_t>(i));
    const ImageTensor hr = crop_to_multiple(image::load_image(src), scale);
    const auto recipe = preset_name.empty() ? sample_recipe(rs, scale, ranges) : preset(preset_name, scale, rs);
    const ImageTensor lr = apply_recipe(hr, recipe);
    char name[32];
    std::snprintf(name, sizeof(name), "_%05d.png", i);
    const fs::path lr_rel = fs::path("lr") / (src.stem().string() + name);
    image::save_image(lr, out_dir / lr_rel);
    m.rows.push_back({fs::absolute(src).lexically_relative(fs::absolute(out_dir)), lr_rel, scale, rs});
  }
  write_manifest(m, m.location);
  return m;
}

}  // namespace hrssr::degrade
