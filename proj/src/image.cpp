#include "hrssr/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace hrssr::image {

namespace fs = std::filesystem;

ImageTensor::ImageTensor(int channels, int height, int width, float fill)
    : channels_(channels), height_(height), width_(width) {
  if (channels < 1 || height < 1 || width < 1) {
    throw std::invalid_argument("ImageTensor: dimensions must be >= 1");
  }
  data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

ImageTensor::ImageTensor(int channels, int height, int width, std::vector<float> data)
    : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
  if (channels < 1 || height < 1 || width < 1) {
    throw std::invalid_argument("ImageTensor: dimensions must be >= 1");
  }
  if (data_.size() != static_cast<std::size_t>(channels) * height * width) {
    throw std::invalid_argument("ImageTensor: data size does not match shape");
  }
}

void ImageTensor::clamp01() {
  for (float& v : data_) {
    if (std::isnan(v)) {
      v = 0.0f;
    } else {
      v = std::clamp(v, 0.0f, 1.0f);
    }
  }
}

namespace {

bool has_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

ImageTensor load_image(const fs::path& path) {
  if (!fs::exists(path)) {
    throw std::runtime_error("load_image: no such file: " + path.string());
  }
  if (!has_image_extension(path)) {
    throw std::runtime_error("load_image: unsupported format: " + path.string());
  }
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) {
    throw std::runtime_error("load_image: failed to decode " + path.string());
  }
  if (m.depth() != CV_8U) {
    throw std::runtime_error("load_image: only 8-bit images are supported: " + path.string());
  }
  if (m.rows < 1 || m.cols < 1) {
    throw std::runtime_error("load_image: zero-sized image: " + path.string());
  }
  cv::Mat rgb;
  switch (m.channels()) {
    case 1: rgb = m; break;
    case 3: cv::cvtColor(m, rgb, cv::COLOR_BGR2RGB); break;
    case 4: cv::cvtColor(m, rgb, cv::COLOR_BGRA2RGB); break;
    default: throw std::runtime_error("load_image: unsupported channel count in " + path.string());
  }
  const int c = rgb.channels();
  ImageTensor img(c, rgb.rows, rgb.cols);
  for (int y = 0; y < rgb.rows; ++y) {
    const std::uint8_t* row = rgb.ptr<std::uint8_t>(y);
    for (int x = 0; x < rgb.cols; ++x) {
      for (int k = 0; k < c; ++k) {
        img.at(k, y, x) = static_cast<float>(row[x * c + k]) / 255.0f;
      }
    }
  }
  return img;
}

std::uint8_t quantize_u8(float v) {
  if (std::isnan(v)) return 0;
  const float q = std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f);
  return static_cast<std::uint8_t>(q);
}

void save_image(const ImageTensor& img, const fs::path& path) {
  if (img.empty()) throw std::invalid_argument("save_image: empty image");
  if (img.channels() != 1 && img.channels() != 3) {
    throw std::invalid_argument("save_image: expected 1 or 3 channels");
  }
  const int c = img.channels();
  cv::Mat m(img.height(), img.width(), c == 1 ? CV_8UC1 : CV_8UC3);
  for (int y = 0; y < img.height(); ++y) {
    std::uint8_t* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width(); ++x) {
      for (int k = 0; k < c; ++k) {
        // OpenCV stores BGR.
        const int src = c == 3 ? 2 - k : k;
        row[x * c + k] = quantize_u8(img.at(src, y, x));
      }
    }
  }
  if (path.has_parent_path() && !fs::exists(path.parent_path())) {
    throw std::runtime_error("save_image: directory does not exist: " + path.parent_path().string());
  }
  if (!cv::imwrite(path.string(), m)) {
    throw std::runtime_error("save_image: failed to write " + path.string());
  }
}

ImageTensor rgb_to_y(const ImageTensor& img) {
  if (img.channels() != 3) throw std::invalid_argument("rgb_to_y: expected 3 channels");
  ImageTensor y(1, img.height(), img.width());
  auto r = img.plane(0);
  auto g = img.plane(1);
  auto b = img.plane(2);
  auto out = y.plane(0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.299f * r[i] + 0.587f * g[i] + 0.114f * b[i];
  }
  y.clamp01();
  return y;
}

namespace {

constexpr double kCubicA = -0.5;

double cubic_kernel(double x) {
  x = std::abs(x);
  if (x <= 1.0) return ((kCubicA + 2.0) * x - (kCubicA + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * kCubicA;
  return 0.0;
}

struct Tap {
  int first;
  std::vector<double> weights;
};

// Resampling taps for one axis; support widens by the shrink factor so
// downscaling low-passes before decimating.
std::vector<Tap> make_taps(int in_size, int out_size) {
  const double scale = static_cast<double>(in_size) / out_size;
  const double support_scale = std::max(scale, 1.0);
  const double support = 2.0 * support_scale;
  std::vector<Tap> taps(out_size);
  for (int i = 0; i < out_size; ++i) {
    const double center = (i + 0.5) * scale;
    const int lo = static_cast<int>(std::floor(center - support));
    const int hi = static_cast<int>(std::ceil(center + support));
    Tap t;
    t.first = lo;
    double sum = 0.0;
    for (int j = lo; j <= hi; ++j) {
      const double w = cubic_kernel((j + 0.5 - center) / support_scale);
      t.weights.push_back(w);
      sum += w;
    }
    if (sum != 0.0) {
      for (double& w : t.weights) w /= sum;
    }
    taps[i] = std::move(t);
  }
  return taps;
}

}  // namespace

ImageTensor bicubic_resize(const ImageTensor& img, int target_h, int target_w) {
  if (target_h < 1 || target_w < 1) throw std::invalid_argument("bicubic_resize: target size must be >= 1");
  if (img.height() == target_h && img.width() == target_w) return img;

  const auto htaps = make_taps(img.width(), target_w);
  const auto vtaps = make_taps(img.height(), target_h);
  const int h = img.height();
  const int w = img.width();

  ImageTensor out(img.channels(), target_h, target_w);
  std::vector<double> tmp(static_cast<std::size_t>(h) * target_w);
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < target_w; ++x) {
        const Tap& t = htaps[x];
        double acc = 0.0;
        for (std::size_t k = 0; k < t.weights.size(); ++k) {
          const int sx = std::clamp(t.first + static_cast<int>(k), 0, w - 1);
          acc += t.weights[k] * img.at(c, y, sx);
        }
        tmp[static_cast<std::size_t>(y) * target_w + x] = acc;
      }
    }
    for (int y = 0; y < target_h; ++y) {
      const Tap& t = vtaps[y];
      for (int x = 0; x < target_w; ++x) {
        double acc = 0.0;
        for (std::size_t k = 0; k < t.weights.size(); ++k) {
          const int sy = std::clamp(t.first + static_cast<int>(k), 0, h - 1);
          acc += t.weights[k] * tmp[static_cast<std::size_t>(sy) * target_w + x];
        }
        out.at(c, y, x) = static_cast<float>(acc);
      }
    }
  }
  out.clamp01();
  return out;
}

ImageTensor crop_rect(const ImageTensor& img, int top, int left, int height, int width) {
  if (top < 0 || left < 0 || height < 1 || width < 1 || top + height > img.height() ||
      left + width > img.width()) {
    throw std::out_of_range("crop: window outside image");
  }
  ImageTensor out(img.channels(), height, width);
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) out.at(c, y, x) = img.at(c, top + y, left + x);
    }
  }
  return out;
}

ImageTensor crop_patch(const ImageTensor& img, int top, int left, int size) {
  return crop_rect(img, top, left, size, size);
}

AlignedCrop crop_aligned(const ImageTensor& lr, const ImageTensor& hr, int top, int left, int lr_size,
                         int scale) {
  if (scale < 1) throw std::invalid_argument("crop_aligned: scale must be >= 1");
  return {crop_patch(lr, top, left, lr_size), crop_patch(hr, top * scale, left * scale, lr_size * scale)};
}

WeightMap hf_weight_map(const ImageTensor& x_hat) {
  const int h = x_hat.height();
  const int w = x_hat.width();
  const int bh = (h + 1) / 2;
  const int bw = (w + 1) / 2;
  std::vector<double> energy(static_cast<std::size_t>(bh) * bw, 0.0);

  auto px = [&](int c, int y, int x) {
    // edge replication for odd sizes
    return static_cast<double>(x_hat.at(c, std::min(y, h - 1), std::min(x, w - 1)));
  };
  for (int c = 0; c < x_hat.channels(); ++c) {
    for (int by = 0; by < bh; ++by) {
      for (int bx = 0; bx < bw; ++bx) {
        const double a = px(c, 2 * by, 2 * bx);
        const double b = px(c, 2 * by, 2 * bx + 1);
        const double cc = px(c, 2 * by + 1, 2 * bx);
        const double d = px(c, 2 * by + 1, 2 * bx + 1);
        const double hl = 0.5 * (a - b + cc - d);
        const double lh = 0.5 * (a + b - cc - d);
        const double hh = 0.5 * (a - b - cc + d);
        energy[static_cast<std::size_t>(by) * bw + bx] += std::abs(hl) + std::abs(lh) + std::abs(hh);
      }
    }
  }
  const double peak = *std::max_element(energy.begin(), energy.end());
  WeightMap map(1, h, w, 0.0f);
  if (peak <= 0.0) return map;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      map.at(0, y, x) = static_cast<float>(energy[static_cast<std::size_t>(y / 2) * bw + x / 2] / peak);
    }
  }
  map.clamp01();
  return map;
}

ImageTensor apply_weight(const ImageTensor& img, const WeightMap& w) {
  if (w.channels() != 1 || w.height() != img.height() || w.width() != img.width()) {
    throw std::invalid_argument("apply_weight: weight map shape mismatch");
  }
  ImageTensor out = img;
  auto wm = w.plane(0);
  for (int c = 0; c < img.channels(); ++c) {
    auto p = out.plane(c);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] *= wm[i];
  }
  return out;
}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && has_image_extension(entry.path())) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace hrssr::image
