#pragma once

#include <torch/torch.h>

#include "hrssr/models.hpp"

namespace hrssr::far {

// G_jk = (1 / HW) sum_p e_j[p] e_k[p]. [B,C,H,W] -> [B,C,C]; [C,H,W] -> [C,C].
torch::Tensor gram(const torch::Tensor& e);

struct StatDescriptor {
  torch::Tensor s_avg;  // row means of the Gram matrix, [B,C] (or [C])
  torch::Tensor s_max;  // row maxima
};

StatDescriptor descriptor(const torch::Tensor& e);

// T_a, T_m: C_i -> C_c linear maps with bias.
class AlignmentMapsImpl : public torch::nn::Module {
 public:
  AlignmentMapsImpl(int image_channels, int reference_channels);

  torch::nn::Linear t_a{nullptr}, t_m{nullptr};
  int image_channels() const { return c_i_; }
  int reference_channels() const { return c_c_; }

 private:
  int c_i_, c_c_;
};
TORCH_MODULE(AlignmentMaps);

// |T_a s_avg(e_im) - s_avg(e_cl)| + |T_m s_max(e_im) - s_max(e_cl)|, one value per sample.
torch::Tensor far_loss(const torch::Tensor& e_im, const torch::Tensor& e_cl, AlignmentMapsImpl& maps);

// far_loss(E_img(y), E_clip(y)), per sample.
torch::Tensor phi_far(const torch::Tensor& y, models::ImageEncoderImpl& e_img,
                      const models::ReferenceEncoder& reference, AlignmentMapsImpl& maps);

}  // namespace hrssr::far
