#pragma once

#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace hrssr::train {

// Shadow copies of a module's trainable parameters.
class EmaShadow {
 public:
  EmaShadow() = default;
  EmaShadow(torch::nn::Module& m, double decay);
  EmaShadow(std::vector<std::pair<std::string, torch::Tensor>> entries, double decay)
      : decay_(decay), entries_(std::move(entries)) {}

  double decay() const { return decay_; }
  const std::vector<std::pair<std::string, torch::Tensor>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, torch::Tensor>>& entries() { return entries_; }

  // shadow <- d * shadow + (1 - d) * current parameter value
  void update(torch::nn::Module& m);
  // Overwrites the module's matching parameters with the shadow values.
  void copy_to(torch::nn::Module& m) const;

 private:
  double decay_ = 0.999;
  std::vector<std::pair<std::string, torch::Tensor>> entries_;
};

// Elementwise shadow <- d * shadow + (1 - d) * params; shapes must match.
void ema_update(std::vector<torch::Tensor>& shadow, const std::vector<torch::Tensor>& params, double decay);

// Swaps the shadow into the module for the guard's lifetime.
class EmaSwap {
 public:
  EmaSwap(torch::nn::Module& m, const EmaShadow& ema);
  ~EmaSwap();
  EmaSwap(const EmaSwap&) = delete;
  EmaSwap& operator=(const EmaSwap&) = delete;

 private:
  torch::nn::Module& module_;
  std::vector<std::pair<std::string, torch::Tensor>> saved_;
};

}  // namespace hrssr::train
