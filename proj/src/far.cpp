#include "hrssr/far.hpp"

#include <stdexcept>

namespace hrssr::far {

torch::Tensor gram(const torch::Tensor& e) {
  if (e.dim() == 3) return gram(e.unsqueeze(0)).squeeze(0);
  if (e.dim() != 4) throw std::invalid_argument("gram: expected [B,C,H,W] or [C,H,W]");
  const auto hw = e.size(2) * e.size(3);
  if (hw < 1) throw std::invalid_argument("gram: empty feature map");
  auto f = e.flatten(2);  // [B,C,HW]
  return torch::bmm(f, f.transpose(1, 2)) / static_cast<double>(hw);
}

StatDescriptor descriptor(const torch::Tensor& e) {
  auto g = gram(e);
  return {g.mean(-1), std::get<0>(g.max(-1))};
}

AlignmentMapsImpl::AlignmentMapsImpl(int image_channels, int reference_channels)
    : c_i_(image_channels), c_c_(reference_channels) {
  t_a = register_module("t_a", torch::nn::Linear(image_channels, reference_channels));
  t_m = register_module("t_m", torch::nn::Linear(image_channels, reference_channels));
}

torch::Tensor far_loss(const torch::Tensor& e_im, const torch::Tensor& e_cl, AlignmentMapsImpl& maps) {
  auto im = e_im.dim() == 3 ? e_im.unsqueeze(0) : e_im;
  auto cl = e_cl.dim() == 3 ? e_cl.unsqueeze(0) : e_cl;
  if (im.size(1) != maps.image_channels() || cl.size(1) != maps.reference_channels()) {
    throw std::invalid_argument("far_loss: feature channels (" + std::to_string(im.size(1)) + ", " +
                                std::to_string(cl.size(1)) + ") do not match alignment maps (" +
                                std::to_string(maps.image_channels()) + ", " +
                                std::to_string(maps.reference_channels()) + ")");
  }
  if (im.size(0) != cl.size(0)) throw std::invalid_argument("far_loss: batch mismatch");
  const auto di = descriptor(im);
  const auto dc = descriptor(cl);
  auto avg = (maps.t_a(di.s_avg) - dc.s_avg).norm(2, -1);
  auto mx = (maps.t_m(di.s_max) - dc.s_max).norm(2, -1);
  return avg + mx;
}

torch::Tensor phi_far(const torch::Tensor& y, models::ImageEncoderImpl& e_img,
                      const models::ReferenceEncoder& reference, AlignmentMapsImpl& maps) {
  return far_loss(e_img.forward(y), reference(y), maps);
}

}  // namespace hrssr::far
