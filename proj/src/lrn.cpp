#include "hrssr/lrn.hpp"

#include <stdexcept>

#include "hrssr/controller.hpp"

namespace hrssr {

LrnImpl::LrnImpl(const models::DegradationEncoderConfig& edeg, const models::ImageEncoderConfig& eimg,
                 const models::ReconstructorConfig& recon_cfg, int reference_channels) {
  if (recon_cfg.feature_channels != eimg.channels) {
    throw std::invalid_argument("reconstructor feature channels must equal image encoder channels");
  }
  if (recon_cfg.embed_dim != edeg.embed_dim) {
    throw std::invalid_argument("reconstructor embed_dim must equal degradation encoder embed_dim");
  }
  e_deg = register_module("e_deg", models::DegradationEncoder(edeg));
  e_img = register_module("e_img", models::ImageEncoder(eimg));
  recon = register_module("recon", models::Reconstructor(recon_cfg));
  maps = register_module("maps", far::AlignmentMaps(eimg.channels, reference_channels));
}

torch::Tensor LrnImpl::forward(const torch::Tensor& x_lr, const torch::Tensor& y_hr, const torch::Tensor& s) {
  if (y_hr.size(2) != x_lr.size(2) * scale() || y_hr.size(3) != x_lr.size(3) * scale()) {
    throw std::invalid_argument("LRN: HR size must be " + std::to_string(scale()) + "x the LR size");
  }
  return recon->forward(controller::modulate(e_deg->forward(x_lr), s), e_img->forward(y_hr));
}

Lrn make_lrn(const Config& cfg, int reference_channels) {
  return Lrn(models::degradation_encoder_config_from(cfg), models::image_encoder_config_from(cfg),
             models::reconstructor_config_from(cfg), reference_channels);
}

}  // namespace hrssr
