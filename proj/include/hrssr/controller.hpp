#pragma once

#include <optional>
#include <string>

#include <torch/torch.h>

#include "hrssr/config.hpp"
#include "hrssr/image.hpp"
#include "hrssr/perceptual.hpp"

namespace hrssr::controller {

enum class Stage { Pretrain, Finetune };

Stage parse_stage(const std::string& tag);
std::string to_string(Stage stage);

// Which scalar is added to the noise. Auto follows the stage: 1 - HQI in
// pretraining, HQI in finetuning. The explicit rules exist for comparing
// variants.
enum class Rule { Auto, Hqi, OneMinusHqi };

struct ControllerOptions {
  bool enabled = true;  // false: s is all ones
  bool noise = true;    // false: deterministic test mode, n = 0
  Rule rule = Rule::Auto;
};

ControllerOptions controller_options_from(const Config& cfg);

// 1 - d(bicubic(x_lr -> size of y_hr), y_hr), clamped to [0,1]; one value per
// sample, no gradient. y_hr must be an integer multiple of x_lr in both axes.
torch::Tensor hqi(const perceptual::PerceptualMetric& metric, const torch::Tensor& x_lr, const torch::Tensor& y_hr);
double hqi(const perceptual::PerceptualMetric& metric, const image::ImageTensor& x_lr, const image::ImageTensor& y_hr);

// Additive scalar c for a given stage/rule and HQI value.
double controller_offset(Stage stage, Rule rule, double hqi_value);

// s = n + c, shape [B, dim], where c comes from controller_offset per sample
// and n ~ N(0, I) drawn from `gen` (or the global generator).
torch::Tensor make_controller(Stage stage, const torch::Tensor& hqi_values, int dim, const ControllerOptions& opts,
                              std::optional<at::Generator> gen = std::nullopt);

// s * e_d; s is treated as a constant.
torch::Tensor modulate(const torch::Tensor& e_d, const torch::Tensor& s);

}  // namespace hrssr::controller
