#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "hrssr/config.hpp"

namespace hrssr::models {

struct DegradationEncoderConfig {
  int channels = 64;
  int blocks = 16;
  // a stride-2 reduction follows every `blocks_per_stage` residual blocks
  int blocks_per_stage = 4;
  int embed_dim = 512;
};

struct ImageEncoderConfig {
  int channels = 64;
  int blocks = 6;
};

struct ReconstructorConfig {
  int feature_channels = 64;  // must match the image encoder output
  int channels = 64;
  int blocks = 16;
  int embed_dim = 512;
  int scale = 4;
};

struct SrModelConfig {
  int channels = 64;
  int blocks = 8;
  int scale = 4;
};

// Residual block without normalization: x + conv(relu(conv(x))).
class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
};
TORCH_MODULE(ResidualBlock);

// Models exposing a stem convolution followed by an ordered residual trunk.
class BlockStructured {
 public:
  virtual ~BlockStructured() = default;
  virtual torch::nn::Module& stem() = 0;
  virtual std::vector<std::shared_ptr<torch::nn::Module>> residual_blocks() = 0;
};

// E_deg: LR image -> degradation embedding [B, embed_dim].
class DegradationEncoderImpl : public torch::nn::Module, public BlockStructured {
 public:
  explicit DegradationEncoderImpl(const DegradationEncoderConfig& cfg);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Module& stem() override { return *head_; }
  std::vector<std::shared_ptr<torch::nn::Module>> residual_blocks() override;
  const DegradationEncoderConfig& config() const { return cfg_; }

 private:
  DegradationEncoderConfig cfg_;
  torch::nn::Conv2d head_{nullptr};
  torch::nn::ModuleList body_{nullptr};
  torch::nn::Linear fc_{nullptr};
};
TORCH_MODULE(DegradationEncoder);

// E_img: HR image -> full-resolution feature [B, channels, H, W].
class ImageEncoderImpl : public torch::nn::Module, public BlockStructured {
 public:
  explicit ImageEncoderImpl(const ImageEncoderConfig& cfg);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Module& stem() override { return *head_; }
  std::vector<std::shared_ptr<torch::nn::Module>> residual_blocks() override;
  const ImageEncoderConfig& config() const { return cfg_; }

 private:
  ImageEncoderConfig cfg_;
  torch::nn::Conv2d head_{nullptr};
  torch::nn::ModuleList body_{nullptr};
};
TORCH_MODULE(ImageEncoder);

// Convolution whose kernel is scaled per input channel by an affine projection
// of a conditioning vector, then demodulated per output channel.
class ModulatedConv2dImpl : public torch::nn::Module {
 public:
  static constexpr double kDemodEps = 1e-8;

  ModulatedConv2dImpl(int in_channels, int out_channels, int kernel, int embed_dim, bool demodulate = true);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& embedding);

 private:
  int in_, out_, kernel_;
  bool demodulate_;
  torch::Tensor weight_, bias_;
  torch::nn::Linear affine_{nullptr};
};
TORCH_MODULE(ModulatedConv2d);

class ModulatedResBlockImpl : public torch::nn::Module {
 public:
  ModulatedResBlockImpl(int channels, int embed_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& embedding);

 private:
  ModulatedConv2d conv1_{nullptr}, conv2_{nullptr};
};
TORCH_MODULE(ModulatedResBlock);

// R: (modulated embedding, image feature) -> LR image at 1/scale resolution.
class ReconstructorImpl : public torch::nn::Module {
 public:
  explicit ReconstructorImpl(const ReconstructorConfig& cfg);
  torch::Tensor forward(const torch::Tensor& embedding, const torch::Tensor& feature);
  const ReconstructorConfig& config() const { return cfg_; }

 private:
  ReconstructorConfig cfg_;
  torch::nn::Conv2d head_{nullptr};
  std::vector<ModulatedResBlock> trunk_;
  std::vector<ModulatedConv2d> down_;
  torch::nn::Conv2d tail_{nullptr};
};
TORCH_MODULE(Reconstructor);

// Stand-in SR model: SRResNet-style trunk, pixel-shuffle upsampling and a
// bicubic global skip.
class SrModelImpl : public torch::nn::Module, public BlockStructured {
 public:
  explicit SrModelImpl(const SrModelConfig& cfg);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Module& stem() override { return *head_; }
  std::vector<std::shared_ptr<torch::nn::Module>> residual_blocks() override;
  const SrModelConfig& config() const { return cfg_; }

 private:
  SrModelConfig cfg_;
  torch::nn::Conv2d head_{nullptr};
  torch::nn::ModuleList body_{nullptr};
  torch::nn::Conv2d body_tail_{nullptr};
  torch::nn::ModuleList up_{nullptr};
  torch::nn::Conv2d tail_{nullptr};
};
TORCH_MODULE(SrModel);

struct FreezeReport {
  int blocks_frozen = 0;
  int tensors_frozen = 0;
  std::int64_t elements_frozen = 0;
};

// Marks the stem and the first floor(fraction * num_blocks) residual blocks
// non-trainable. Throws if the module has no block structure.
FreezeReport freeze_shallow(torch::nn::Module& m, double fraction);

void set_trainable(torch::nn::Module& m, bool trainable);
std::vector<torch::Tensor> trainable_parameters(torch::nn::Module& m);

// FNV-1a over the raw bytes of every named parameter (and buffer), in name order.
std::uint64_t hash_parameters(const torch::nn::Module& m);
// Hash restricted to parameters with requires_grad == false.
std::uint64_t hash_frozen_parameters(const torch::nn::Module& m);
std::uint64_t hash_tensor(const torch::Tensor& t, std::uint64_t seed = 1469598103934665603ULL);

// Fixed initialization of every parameter from a private generator, so the
// result does not depend on the global torch RNG state.
void init_fixed(torch::nn::Module& m, std::uint64_t seed);

enum class ReferenceMode { Random, ClipRN50 };

struct ReferenceOptions {
  ReferenceMode mode = ReferenceMode::Random;
  std::filesystem::path weights;  // required for ClipRN50
  std::uint64_t seed = 20240613;
};

// Frozen reference encoder E_clip. Input is plain [0,1] RGB; any
// encoder-specific normalization happens inside. Parameters never receive
// gradients; gradients do flow to the input.
class ReferenceEncoder {
 public:
  explicit ReferenceEncoder(const ReferenceOptions& opts);

  torch::Tensor forward(const torch::Tensor& x) const;
  torch::Tensor operator()(const torch::Tensor& x) const { return forward(x); }

  int channels() const { return channels_; }
  int stride() const { return stride_; }
  std::string name() const;
  void to(torch::Dtype dtype);
  torch::nn::Module& module() { return *net_; }

 private:
  ReferenceMode mode_;
  int channels_;
  int stride_;
  std::shared_ptr<torch::nn::Module> net_;
  torch::Tensor mean_, std_;
};

ReferenceOptions reference_options_from(const Config& cfg);

// Copies tensors from a torch.save'd {name: tensor} dictionary into the module's
// parameters and buffers. Every module tensor must be present with a matching shape.
void load_state_dict(torch::nn::Module& m, const std::filesystem::path& file);
void save_state_dict(const torch::nn::Module& m, const std::filesystem::path& file);

DegradationEncoderConfig degradation_encoder_config_from(const Config& cfg);
ImageEncoderConfig image_encoder_config_from(const Config& cfg);
ReconstructorConfig reconstructor_config_from(const Config& cfg);
SrModelConfig sr_model_config_from(const Config& cfg);

}  // namespace hrssr::models
