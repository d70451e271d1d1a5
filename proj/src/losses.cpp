#include "hrssr/losses.hpp"

#include <stdexcept>

#include "hrssr/far.hpp"

namespace hrssr::losses {

namespace F = torch::nn::functional;

LossWeights loss_weights_from(const Config& cfg, controller::Stage stage) {
  LossWeights w;
  const bool ft = stage == controller::Stage::Finetune;
  w.lambda_l1 = cfg.get_double("loss.lambda_l1", w.lambda_l1);
  w.lambda_lpips = cfg.get_double("loss.lambda_lpips", w.lambda_lpips);
  w.lambda_far = cfg.get_double(ft ? "far.weight_finetune" : "far.weight_pretrain", 0.1);
  w.hf_weighting = cfg.get_bool("loss.hf_weighting", ft);
  if (w.lambda_l1 < 0 || w.lambda_lpips < 0 || w.lambda_far < 0) {
    throw std::invalid_argument("loss weights must be >= 0");
  }
  return w;
}

torch::Tensor hf_weight_map(const torch::Tensor& x) {
  if (x.dim() != 4) throw std::invalid_argument("hf_weight_map: expected [B,C,H,W]");
  torch::NoGradGuard no_grad;
  const auto h = x.size(2), w = x.size(3);
  auto p = F::pad(x.detach(), F::PadFuncOptions({0, w % 2, 0, h % 2}).mode(torch::kReplicate));
  using torch::indexing::None;
  using torch::indexing::Slice;
  auto a = p.index({Slice(), Slice(), Slice(0, None, 2), Slice(0, None, 2)});
  auto b = p.index({Slice(), Slice(), Slice(0, None, 2), Slice(1, None, 2)});
  auto c = p.index({Slice(), Slice(), Slice(1, None, 2), Slice(0, None, 2)});
  auto d = p.index({Slice(), Slice(), Slice(1, None, 2), Slice(1, None, 2)});
  auto energy = (0.5 * (a - b + c - d)).abs() + (0.5 * (a + b - c - d)).abs() + (0.5 * (a - b - c + d)).abs();
  energy = energy.sum(1, true);  // [B,1,h/2,w/2]
  auto peak = std::get<0>(energy.flatten(1).max(1)).view({-1, 1, 1, 1});
  auto map = torch::where(peak > 0, energy / peak.clamp_min(1e-30), torch::zeros_like(energy));
  map = map.repeat_interleave(2, 2).repeat_interleave(2, 3);
  return map.index({Slice(), Slice(), Slice(0, h), Slice(0, w)}).clamp(0.0, 1.0).contiguous();
}

torch::Tensor rec_loss(const torch::Tensor& x_hat, const torch::Tensor& x, const LossWeights& w,
                       const perceptual::PerceptualMetric& metric, const std::optional<torch::Tensor>& weight_map) {
  if (x_hat.sizes() != x.sizes()) throw std::invalid_argument("rec_loss: shape mismatch");
  auto a = x_hat;
  auto b = x;
  if (w.hf_weighting) {
    auto map = weight_map ? weight_map->detach() : hf_weight_map(x_hat);
    if (map.size(0) != x.size(0) || map.size(2) != x.size(2) || map.size(3) != x.size(3)) {
      throw std::invalid_argument("rec_loss: weight map shape mismatch");
    }
    a = map * a;
    b = map * b;
  }
  auto loss = w.lambda_l1 * (a - b).abs().mean();
  if (w.lambda_lpips > 0) loss = loss + w.lambda_lpips * metric.distance(a.clamp(0.0, 1.0), b).mean();
  return loss;
}

namespace {

const perceptual::PerceptualMetric& metric_of(const LossContext& ctx) {
  if (ctx.perceptual == nullptr || ctx.reference == nullptr) {
    throw std::invalid_argument("loss context needs a perceptual metric and a reference encoder");
  }
  return *ctx.perceptual;
}

torch::Tensor far_term(const torch::Tensor& y, LrnImpl& lrn, const LossContext& ctx) {
  if (ctx.weights.lambda_far <= 0) return torch::zeros({}, y.options());
  return far::phi_far(y, *lrn.e_img, *ctx.reference, *lrn.maps).mean();
}

}  // namespace

LossParts pretrain_loss(const torch::Tensor& x_s, const torch::Tensor& y_gt, LrnImpl& lrn, const LossContext& ctx,
                        const DetachedSignals* fixed) {
  const auto& metric = metric_of(ctx);
  LossParts parts;
  if (fixed) {
    parts.signals = *fixed;
  } else {
    parts.signals.hqi = ctx.controller.enabled ? controller::hqi(metric, x_s, y_gt)
                                               : torch::ones({x_s.size(0)}, x_s.options());
    parts.signals.s = controller::make_controller(controller::Stage::Pretrain, parts.signals.hqi, lrn.embed_dim(),
                                                  ctx.controller, ctx.generator);
  }
  auto x_hat = lrn.forward(x_s, y_gt, parts.signals.s.to(x_s.dtype()));
  if (ctx.weights.hf_weighting && !parts.signals.weight_map.defined()) {
    parts.signals.weight_map = hf_weight_map(x_hat);
  }
  parts.rec = rec_loss(x_hat, x_s, ctx.weights, metric,
                       ctx.weights.hf_weighting ? std::optional<torch::Tensor>(parts.signals.weight_map)
                                                : std::nullopt);
  parts.far = far_term(y_gt, lrn, ctx);
  parts.total = parts.rec + ctx.weights.lambda_far * parts.far;
  return parts;
}

LossParts finetune_loss(const torch::Tensor& x_r, const SrForward& sr, LrnImpl& lrn, const LossContext& ctx,
                        const DetachedSignals* fixed) {
  const auto& metric = metric_of(ctx);
  auto y = sr(x_r).clamp(0.0, 1.0);
  LossParts parts;
  if (fixed) {
    parts.signals = *fixed;
  } else {
    parts.signals.hqi = ctx.controller.enabled ? controller::hqi(metric, x_r, y)
                                               : torch::ones({x_r.size(0)}, x_r.options());
    parts.signals.s = controller::make_controller(controller::Stage::Finetune, parts.signals.hqi, lrn.embed_dim(),
                                                  ctx.controller, ctx.generator);
  }
  auto x_hat = lrn.forward(x_r, y, parts.signals.s.to(x_r.dtype()));
  if (ctx.weights.hf_weighting && !parts.signals.weight_map.defined()) {
    parts.signals.weight_map = hf_weight_map(x_hat);
  }
  parts.rec = rec_loss(x_hat, x_r, ctx.weights, metric,
                       ctx.weights.hf_weighting ? std::optional<torch::Tensor>(parts.signals.weight_map)
                                                : std::nullopt);
  parts.far = far_term(y, lrn, ctx);
  parts.total = parts.rec + ctx.weights.lambda_far * parts.far;
  return parts;
}

}  // namespace hrssr::losses
