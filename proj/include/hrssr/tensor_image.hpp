#pragma once

#include <vector>

#include <torch/torch.h>

#include "hrssr/image.hpp"

namespace hrssr {

// [C,H,W] float32 copy of the image.
torch::Tensor to_tensor(const image::ImageTensor& img);
// [B,C,H,W]; all images must share a shape.
torch::Tensor to_batch(const std::vector<image::ImageTensor>& imgs);
// Accepts [C,H,W] or [1,C,H,W]; clamps to [0,1].
image::ImageTensor from_tensor(const torch::Tensor& t);
std::vector<image::ImageTensor> from_batch(const torch::Tensor& t);

// Per-sample image::bicubic_resize of a [B,C,h,w] batch; no gradient, keeps dtype.
torch::Tensor bicubic_batch(const torch::Tensor& x, int height, int width);

}  // namespace hrssr
