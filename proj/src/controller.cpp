#include "hrssr/controller.hpp"

#include <stdexcept>

#include "hrssr/tensor_image.hpp"

namespace hrssr::controller {

Stage parse_stage(const std::string& tag) {
  if (tag == "pretrain") return Stage::Pretrain;
  if (tag == "finetune") return Stage::Finetune;
  throw std::invalid_argument("invalid controller stage '" + tag + "'");
}

std::string to_string(Stage stage) { return stage == Stage::Pretrain ? "pretrain" : "finetune"; }

ControllerOptions controller_options_from(const Config& cfg) {
  ControllerOptions o;
  o.enabled = cfg.get_bool("controller.enabled", o.enabled);
  o.noise = cfg.get_bool("controller.noise", o.noise);
  const auto rule = cfg.get_string("controller.rule", "auto");
  if (rule == "auto") {
    o.rule = Rule::Auto;
  } else if (rule == "hqi") {
    o.rule = Rule::Hqi;
  } else if (rule == "one-minus-hqi") {
    o.rule = Rule::OneMinusHqi;
  } else {
    throw std::invalid_argument("controller.rule must be auto, hqi or one-minus-hqi, got '" + rule + "'");
  }
  return o;
}

torch::Tensor hqi(const perceptual::PerceptualMetric& metric, const torch::Tensor& x_lr, const torch::Tensor& y_hr) {
  if (x_lr.dim() != 4 || y_hr.dim() != 4 || x_lr.size(0) != y_hr.size(0)) {
    throw std::invalid_argument("hqi: expected matching [B,3,h,w] and [B,3,H,W]");
  }
  const auto h = x_lr.size(2), w = x_lr.size(3);
  const auto hh = y_hr.size(2), ww = y_hr.size(3);
  if (hh % h != 0 || ww % w != 0 || hh / h != ww / w) {
    throw std::invalid_argument("hqi: HR size " + std::to_string(hh) + "x" + std::to_string(ww) +
                                " is not a scaled copy of LR size " + std::to_string(h) + "x" + std::to_string(w));
  }
  torch::NoGradGuard no_grad;
  auto y = y_hr.detach();
  auto up = bicubic_batch(x_lr.detach(), static_cast<int>(hh), static_cast<int>(ww)).to(y.dtype());
  return torch::clamp(1.0 - metric.distance(up, y), 0.0, 1.0);
}

double hqi(const perceptual::PerceptualMetric& metric, const image::ImageTensor& x_lr,
           const image::ImageTensor& y_hr) {
  return hqi(metric, to_tensor(x_lr).unsqueeze(0), to_tensor(y_hr).unsqueeze(0)).item<double>();
}

double controller_offset(Stage stage, Rule rule, double hqi_value) {
  if (!(hqi_value >= 0.0 && hqi_value <= 1.0)) throw std::invalid_argument("controller: hqi must be in [0,1]");
  if (rule == Rule::Auto) rule = stage == Stage::Pretrain ? Rule::OneMinusHqi : Rule::Hqi;
  return rule == Rule::Hqi ? hqi_value : 1.0 - hqi_value;
}

torch::Tensor make_controller(Stage stage, const torch::Tensor& hqi_values, int dim, const ControllerOptions& opts,
                              std::optional<at::Generator> gen) {
  if (hqi_values.dim() != 1) throw std::invalid_argument("make_controller: hqi must be [B]");
  const auto b = hqi_values.size(0);
  auto options = torch::TensorOptions().dtype(hqi_values.dtype());
  if (!opts.enabled) return torch::ones({b, dim}, options);
  auto h = hqi_values.detach().to(torch::kDouble).contiguous();
  std::vector<double> offsets(b);
  for (int64_t i = 0; i < b; ++i) offsets[i] = controller_offset(stage, opts.rule, h[i].item<double>());
  auto c = torch::tensor(offsets, torch::kDouble).to(options.dtype()).view({b, 1});
  auto s = c.expand({b, dim}).clone();
  if (opts.noise) s = s + (gen ? torch::randn({b, dim}, *gen, options) : torch::randn({b, dim}, options));
  return s;
}

torch::Tensor modulate(const torch::Tensor& e_d, const torch::Tensor& s) {
  if (e_d.sizes() != s.sizes()) throw std::invalid_argument("modulate: dimension mismatch");
  return e_d * s.detach();
}

}  // namespace hrssr::controller
