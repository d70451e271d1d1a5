#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include <torch/torch.h>

#include "hrssr/config.hpp"
#include "hrssr/image.hpp"

namespace hrssr::perceptual {

// Perceptual distance between image batches in [0,1] RGB. Differentiable
// w.r.t. both inputs; the network itself is frozen.
class PerceptualMetric {
 public:
  virtual ~PerceptualMetric() = default;
  // [B,3,H,W] x [B,3,H,W] -> [B], each entry in [0,1]
  virtual torch::Tensor distance(const torch::Tensor& a, const torch::Tensor& b) const = 0;
  virtual std::string name() const = 0;
  virtual void to(torch::Dtype dtype) = 0;
};

// Fixed random conv features (GELU, three taps), per-pixel unit-normalized
// across channels; distance = clamp(alpha * mean(1 - cos), 0, 1).
class RandomCosMetric final : public PerceptualMetric {
 public:
  // alpha calibrated so a sigma=2 Gaussian blur of natural-ish content lands near 0.3
  static constexpr double kDefaultAlpha = 3.0;

  explicit RandomCosMetric(std::uint64_t seed = 1337, double alpha = kDefaultAlpha);
  torch::Tensor distance(const torch::Tensor& a, const torch::Tensor& b) const override;
  std::string name() const override { return "random-cos"; }
  void to(torch::Dtype dtype) override { net_->to(dtype); }
  // unclamped, unscaled mean (1 - cos)
  torch::Tensor raw(const torch::Tensor& a, const torch::Tensor& b) const;

 private:
  double alpha_;
  torch::nn::ModuleList net_{nullptr};
};

// LPIPS with the AlexNet backbone. Weights: a torch.save'd dictionary with
// torchvision `features.{0,3,6,8,10}.{weight,bias}` and `lin{0..4}.weight`.
class LpipsAlexMetric final : public PerceptualMetric {
 public:
  explicit LpipsAlexMetric(const std::filesystem::path& weights);
  torch::Tensor distance(const torch::Tensor& a, const torch::Tensor& b) const override;
  std::string name() const override { return "lpips-alex"; }
  void to(torch::Dtype dtype) override;

 private:
  std::shared_ptr<torch::nn::Module> net_;
  torch::Tensor shift_, scale_;
};

// `perceptual.backend` = random-cos (default) | lpips-alex, with
// `perceptual.weights`, `perceptual.seed`, `perceptual.alpha`.
std::shared_ptr<PerceptualMetric> make_perceptual(const Config& cfg);

// Convenience for single images.
double perceptual_distance(const PerceptualMetric& metric, const image::ImageTensor& a, const image::ImageTensor& b);

}  // namespace hrssr::perceptual
