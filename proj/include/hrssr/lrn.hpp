#pragma once

#include <torch/torch.h>

#include "hrssr/config.hpp"
#include "hrssr/far.hpp"
#include "hrssr/models.hpp"

namespace hrssr {

// The LR reconstruction network with its FAR alignment maps: everything that
// pretraining optimizes and finetuning keeps frozen.
class LrnImpl : public torch::nn::Module {
 public:
  LrnImpl(const models::DegradationEncoderConfig& edeg, const models::ImageEncoderConfig& eimg,
          const models::ReconstructorConfig& recon, int reference_channels);

  // R(s * E_deg(x_lr), E_img(y_hr))
  torch::Tensor forward(const torch::Tensor& x_lr, const torch::Tensor& y_hr, const torch::Tensor& s);

  int embed_dim() const { return e_deg->config().embed_dim; }
  int scale() const { return recon->config().scale; }

  models::DegradationEncoder e_deg{nullptr};
  models::ImageEncoder e_img{nullptr};
  models::Reconstructor recon{nullptr};
  far::AlignmentMaps maps{nullptr};
};
TORCH_MODULE(Lrn);

Lrn make_lrn(const Config& cfg, int reference_channels);

}  // namespace hrssr
