#include "hrssr/tensor_image.hpp"

#include <stdexcept>

namespace hrssr {

torch::Tensor to_tensor(const image::ImageTensor& img) {
  auto t = torch::empty({img.channels(), img.height(), img.width()}, torch::kFloat32);
  std::copy(img.data().begin(), img.data().end(), t.data_ptr<float>());
  return t;
}

torch::Tensor to_batch(const std::vector<image::ImageTensor>& imgs) {
  if (imgs.empty()) throw std::invalid_argument("to_batch: no images");
  std::vector<torch::Tensor> ts;
  ts.reserve(imgs.size());
  for (const auto& img : imgs) {
    if (!img.same_shape(imgs.front())) throw std::invalid_argument("to_batch: shape mismatch");
    ts.push_back(to_tensor(img));
  }
  return torch::stack(ts);
}

image::ImageTensor from_tensor(const torch::Tensor& t) {
  auto x = t.detach();
  if (x.dim() == 4) {
    if (x.size(0) != 1) throw std::invalid_argument("from_tensor: batch of more than one image");
    x = x.squeeze(0);
  }
  if (x.dim() != 3) throw std::invalid_argument("from_tensor: expected [C,H,W]");
  x = x.to(torch::kCPU, torch::kFloat32).contiguous();
  std::vector<float> data(x.data_ptr<float>(), x.data_ptr<float>() + x.numel());
  image::ImageTensor img(static_cast<int>(x.size(0)), static_cast<int>(x.size(1)), static_cast<int>(x.size(2)),
                         std::move(data));
  img.clamp01();
  return img;
}

std::vector<image::ImageTensor> from_batch(const torch::Tensor& t) {
  if (t.dim() != 4) throw std::invalid_argument("from_batch: expected [B,C,H,W]");
  std::vector<image::ImageTensor> out;
  for (int64_t i = 0; i < t.size(0); ++i) out.push_back(from_tensor(t[i]));
  return out;
}

torch::Tensor bicubic_batch(const torch::Tensor& x, int height, int width) {
  if (x.dim() != 4) throw std::invalid_argument("bicubic_batch: expected [B,C,H,W]");
  std::vector<torch::Tensor> out;
  for (int64_t i = 0; i < x.size(0); ++i) {
    auto img = from_tensor(x[i]);
    out.push_back(to_tensor(image::bicubic_resize(img, height, width)));
  }
  return torch::stack(out).to(x.dtype());
}

}  // namespace hrssr
