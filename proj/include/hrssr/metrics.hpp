#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hrssr/image.hpp"

namespace hrssr::metrics {

using image::ImageTensor;

inline constexpr double kPsnrCap = 100.0;

// PSNR in dB on luma (3-channel inputs are converted with BT.601 weights,
// 1-channel inputs are used directly). Zero MSE returns kPsnrCap.
double psnr(const ImageTensor& a, const ImageTensor& b);

// Mean SSIM on luma with an 11x11 Gaussian window (sigma 1.5), K1=0.01,
// K2=0.03, data range 1, valid-window evaluation (no padding).
double ssim(const ImageTensor& a, const ImageTensor& b);

struct MetricRow {
  std::string image;
  double psnr = 0.0;
  double ssim = 0.0;
  double lpips = 0.0;
};

struct MetricReport {
  std::string perceptual_backend;
  std::vector<MetricRow> rows;
  MetricRow mean;  // image == "MEAN"
};

// Fills report.mean with the arithmetic mean of the rows.
void finalize_mean(MetricReport& report);

// CSV `image,psnr,ssim,lpips` followed by a `MEAN,...` row.
void write_metric_csv(const MetricReport& report, const std::filesystem::path& file);

}  // namespace hrssr::metrics
