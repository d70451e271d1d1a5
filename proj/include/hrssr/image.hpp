#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace hrssr::image {

// C x H x W float image, channel-major, values in [0,1].
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(int channels, int height, int width, float fill = 0.0f);
  ImageTensor(int channels, int height, int width, std::vector<float> data);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t plane_size() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& at(int c, int y, int x) { return data_[(c * plane_size()) + static_cast<std::size_t>(y) * width_ + x]; }
  float at(int c, int y, int x) const { return data_[(c * plane_size()) + static_cast<std::size_t>(y) * width_ + x]; }

  std::span<float> plane(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const float> plane(int c) const { return {data_.data() + c * plane_size(), plane_size()}; }

  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  bool same_shape(const ImageTensor& o) const {
    return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
  }

  // Clamps to [0,1]; NaN becomes 0.
  void clamp01();

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

// Same layout as a single-channel ImageTensor, values in [0,1].
using WeightMap = ImageTensor;

ImageTensor load_image(const std::filesystem::path& path);
void save_image(const ImageTensor& img, const std::filesystem::path& path);

// 8-bit quantization used by save_image.
std::uint8_t quantize_u8(float v);

// BT.601 full-range luma.
ImageTensor rgb_to_y(const ImageTensor& img);

// Catmull-Rom bicubic (a = -0.5), antialiased when shrinking.
ImageTensor bicubic_resize(const ImageTensor& img, int target_h, int target_w);

ImageTensor crop_patch(const ImageTensor& img, int top, int left, int size);
ImageTensor crop_rect(const ImageTensor& img, int top, int left, int height, int width);

struct AlignedCrop {
  ImageTensor lr;
  ImageTensor hr;
};

// LR window (top, left, lr_size) paired with the HR window scaled by `scale`.
AlignedCrop crop_aligned(const ImageTensor& lr, const ImageTensor& hr, int top, int left,
                         int lr_size, int scale);

// One-level Haar DWT per channel; normalized sum of |HL|+|LH|+|HH|,
// replicated back to the input resolution.
WeightMap hf_weight_map(const ImageTensor& x_hat);

// Multiplies each channel of img by the single-channel map.
ImageTensor apply_weight(const ImageTensor& img, const WeightMap& w);

// Sorted list of .png/.jpg/.jpeg files directly inside dir.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace hrssr::image
