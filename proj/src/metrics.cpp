#include "hrssr/metrics.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace hrssr::metrics {

namespace {

ImageTensor luma(const ImageTensor& img) {
  if (img.channels() == 1) return img;
  return image::rgb_to_y(img);
}

void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

// Separable valid-mode filter of a single plane with a 1-D kernel.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = w - n + 1;
  const int oh = h - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

}  // namespace

double psnr(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "psnr");
  const auto ya = luma(a);
  const auto yb = luma(b);
  double mse = 0.0;
  for (std::size_t i = 0; i < ya.size(); ++i) {
    const double d = static_cast<double>(ya.data()[i]) - static_cast<double>(yb.data()[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(ya.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "ssim");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  if (a.height() < kWin || a.width() < kWin) throw std::invalid_argument("ssim: image smaller than 11x11 window");
  std::vector<double> k(kWin);
  double ks = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    k[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    ks += k[i];
  }
  for (auto& v : k) v /= ks;

  const auto ya = luma(a);
  const auto yb = luma(b);
  const int h = ya.height();
  const int w = ya.width();
  std::vector<double> x(ya.data().begin(), ya.data().end());
  std::vector<double> y(yb.data().begin(), yb.data().end());
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, h, w, k);
  const auto my = filter_valid(y, h, w, k);
  const auto sxx = filter_valid(xx, h, w, k);
  const auto syy = filter_valid(yy, h, w, k);
  const auto sxy = filter_valid(xy, h, w, k);
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

void finalize_mean(MetricReport& report) {
  MetricRow m;
  m.image = "MEAN";
  for (const auto& r : report.rows) {
    m.psnr += r.psnr;
    m.ssim += r.ssim;
    m.lpips += r.lpips;
  }
  if (!report.rows.empty()) {
    const double n = static_cast<double>(report.rows.size());
    m.psnr /= n;
    m.ssim /= n;
    m.lpips /= n;
  }
  report.mean = m;
}

void write_metric_csv(const MetricReport& report, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << "image,psnr,ssim,lpips\n" << std::setprecision(17);
  for (const auto& r : report.rows) out << r.image << ',' << r.psnr << ',' << r.ssim << ',' << r.lpips << '\n';
  out << "MEAN," << report.mean.psnr << ',' << report.mean.ssim << ',' << report.mean.lpips << '\n';
}

}  // namespace hrssr::metrics
