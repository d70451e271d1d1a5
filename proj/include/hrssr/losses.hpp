#pragma once

#include <functional>
#include <optional>

#include <torch/torch.h>

#include "hrssr/config.hpp"
#include "hrssr/controller.hpp"
#include "hrssr/lrn.hpp"
#include "hrssr/models.hpp"
#include "hrssr/perceptual.hpp"

namespace hrssr::losses {

struct LossWeights {
  double lambda_l1 = 1.0;
  double lambda_lpips = 0.2;
  double lambda_far = 0.1;
  bool hf_weighting = false;
};

// Stage defaults (hf weighting only when finetuning), overridable by
// loss.lambda_l1, loss.lambda_lpips, far.weight_pretrain / far.weight_finetune,
// loss.hf_weighting.
LossWeights loss_weights_from(const Config& cfg, controller::Stage stage);

// Haar high-frequency map of a batch, [B,C,H,W] -> [B,1,H,W] in [0,1],
// normalized per sample by its maximum. No gradient.
torch::Tensor hf_weight_map(const torch::Tensor& x);

// lambda_l1 * mean|x_hat - x| + lambda_lpips * d(clamp(x_hat), x), batch mean.
// With hf_weighting both terms see W * x_hat and W * x, W = hf_weight_map(x_hat)
// unless a map is supplied.
torch::Tensor rec_loss(const torch::Tensor& x_hat, const torch::Tensor& x, const LossWeights& w,
                       const perceptual::PerceptualMetric& metric,
                       const std::optional<torch::Tensor>& weight_map = std::nullopt);

struct LossContext {
  const models::ReferenceEncoder* reference = nullptr;
  const perceptual::PerceptualMetric* perceptual = nullptr;
  controller::ControllerOptions controller;
  LossWeights weights;
  std::optional<at::Generator> generator;
};

// Signals that enter the objective without gradient. Supplying them pins the
// surrogate so it can be differentiated numerically.
struct DetachedSignals {
  torch::Tensor hqi;         // [B]
  torch::Tensor weight_map;  // [B,1,h,w], finetuning only
  torch::Tensor s;           // [B, embed_dim]
};

struct LossParts {
  torch::Tensor total;
  torch::Tensor rec;
  torch::Tensor far;  // batch mean of Phi_far, zero tensor when lambda_far == 0
  DetachedSignals signals;
};

// L_rec(R(s * E_deg(x_s), E_img(y_gt)), x_s) + lambda * Phi_far(y_gt)
LossParts pretrain_loss(const torch::Tensor& x_s, const torch::Tensor& y_gt, LrnImpl& lrn, const LossContext& ctx,
                        const DetachedSignals* fixed = nullptr);

using SrForward = std::function<torch::Tensor(const torch::Tensor&)>;

// L_rec_hf(R(s * E_deg(x_r), E_img(M(x_r))), x_r) + lambda * Phi_far(M(x_r))
LossParts finetune_loss(const torch::Tensor& x_r, const SrForward& sr, LrnImpl& lrn, const LossContext& ctx,
                        const DetachedSignals* fixed = nullptr);

}  // namespace hrssr::losses
