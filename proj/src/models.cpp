#include "hrssr/models.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

namespace hrssr::models {

namespace F = torch::nn::functional;

namespace {

torch::nn::Conv2d conv3x3(int in, int out, int stride = 1) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

torch::Tensor lrelu(const torch::Tensor& x) { return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.2)); }

void require_positive(int v, const char* what) {
  if (v < 1) throw std::invalid_argument(std::string("invalid model config: ") + what + " must be >= 1");
}

int log2_scale(int scale) {
  if (scale < 1 || !std::has_single_bit(static_cast<unsigned>(scale))) {
    throw std::invalid_argument("scale must be a power of two, got " + std::to_string(scale));
  }
  return std::countr_zero(static_cast<unsigned>(scale));
}

}  // namespace

ResidualBlockImpl::ResidualBlockImpl(int channels)
    : conv1_(register_module("conv1", conv3x3(channels, channels))),
      conv2_(register_module("conv2", conv3x3(channels, channels))) {}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  return x + conv2_(torch::relu(conv1_(x)));
}

// ---------------------------------------------------------------------------

DegradationEncoderImpl::DegradationEncoderImpl(const DegradationEncoderConfig& cfg) : cfg_(cfg) {
  require_positive(cfg.channels, "edeg.channels");
  require_positive(cfg.blocks, "edeg.blocks");
  require_positive(cfg.blocks_per_stage, "edeg.blocks_per_stage");
  require_positive(cfg.embed_dim, "embed_dim");
  head_ = register_module("head", conv3x3(3, cfg.channels));
  body_ = register_module("body", torch::nn::ModuleList());
  for (int i = 0; i < cfg.blocks; ++i) {
    body_->push_back(ResidualBlock(cfg.channels));
    if ((i + 1) % cfg.blocks_per_stage == 0) body_->push_back(conv3x3(cfg.channels, cfg.channels, 2));
  }
  fc_ = register_module("fc", torch::nn::Linear(cfg.channels, cfg.embed_dim));
}

torch::Tensor DegradationEncoderImpl::forward(const torch::Tensor& x) {
  auto h = lrelu(head_(x));
  for (const auto& m : *body_) {
    if (auto* block = m->as<ResidualBlockImpl>()) {
      h = block->forward(h);
    } else {
      h = lrelu(m->as<torch::nn::Conv2dImpl>()->forward(h));
    }
  }
  h = F::adaptive_avg_pool2d(h, F::AdaptiveAvgPool2dFuncOptions(1)).flatten(1);
  return fc_(h);
}

std::vector<std::shared_ptr<torch::nn::Module>> DegradationEncoderImpl::residual_blocks() {
  std::vector<std::shared_ptr<torch::nn::Module>> out;
  for (const auto& m : *body_) {
    if (m->as<ResidualBlockImpl>()) out.push_back(m);
  }
  return out;
}

// ---------------------------------------------------------------------------

ImageEncoderImpl::ImageEncoderImpl(const ImageEncoderConfig& cfg) : cfg_(cfg) {
  require_positive(cfg.channels, "eimg.channels");
  require_positive(cfg.blocks, "eimg.blocks");
  head_ = register_module("head", conv3x3(3, cfg.channels));
  body_ = register_module("body", torch::nn::ModuleList());
  for (int i = 0; i < cfg.blocks; ++i) body_->push_back(ResidualBlock(cfg.channels));
}

torch::Tensor ImageEncoderImpl::forward(const torch::Tensor& x) {
  auto h = head_(x);
  for (const auto& m : *body_) h = m->as<ResidualBlockImpl>()->forward(h);
  return h;
}

std::vector<std::shared_ptr<torch::nn::Module>> ImageEncoderImpl::residual_blocks() {
  return {body_->begin(), body_->end()};
}

// ---------------------------------------------------------------------------

ModulatedConv2dImpl::ModulatedConv2dImpl(int in_channels, int out_channels, int kernel, int embed_dim,
                                         bool demodulate)
    : in_(in_channels), out_(out_channels), kernel_(kernel), demodulate_(demodulate) {
  weight_ = register_parameter("weight", torch::randn({out_channels, in_channels, kernel, kernel}) /
                                             std::sqrt(static_cast<double>(in_channels * kernel * kernel)));
  bias_ = register_parameter("bias", torch::zeros({out_channels}));
  affine_ = register_module("affine", torch::nn::Linear(embed_dim, in_channels));
  torch::NoGradGuard no_grad;
  affine_->weight.normal_(0.0, 1.0 / std::sqrt(static_cast<double>(embed_dim)));
  affine_->bias.fill_(1.0);
}

torch::Tensor ModulatedConv2dImpl::forward(const torch::Tensor& x, const torch::Tensor& embedding) {
  const auto b = x.size(0);
  const auto h = x.size(2);
  const auto w = x.size(3);
  if (embedding.size(0) != b) throw std::invalid_argument("ModulatedConv2d: batch mismatch");
  auto style = affine_(embedding);                                    // [B, in]
  auto wt = weight_.unsqueeze(0) * style.view({b, 1, in_, 1, 1});    // [B, out, in, k, k]
  if (demodulate_) {
    auto d = torch::rsqrt(wt.pow(2).sum({2, 3, 4}) + kDemodEps);      // [B, out]
    wt = wt * d.view({b, out_, 1, 1, 1});
  }
  auto y = F::conv2d(x.reshape({1, b * in_, h, w}), wt.reshape({b * out_, in_, kernel_, kernel_}),
                     F::Conv2dFuncOptions().padding(kernel_ / 2).groups(b));
  return y.view({b, out_, h, w}) + bias_.view({1, out_, 1, 1});
}

ModulatedResBlockImpl::ModulatedResBlockImpl(int channels, int embed_dim)
    : conv1_(register_module("conv1", ModulatedConv2d(channels, channels, 3, embed_dim))),
      conv2_(register_module("conv2", ModulatedConv2d(channels, channels, 3, embed_dim))) {}

torch::Tensor ModulatedResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& embedding) {
  return x + conv2_(lrelu(conv1_(x, embedding)), embedding);
}

// ---------------------------------------------------------------------------

ReconstructorImpl::ReconstructorImpl(const ReconstructorConfig& cfg) : cfg_(cfg) {
  require_positive(cfg.feature_channels, "feature_channels");
  require_positive(cfg.channels, "recon.channels");
  require_positive(cfg.blocks, "recon.blocks");
  require_positive(cfg.embed_dim, "embed_dim");
  const int downs = log2_scale(cfg.scale);
  head_ = register_module("head", conv3x3(cfg.feature_channels, cfg.channels));
  for (int i = 0; i < cfg.blocks; ++i) {
    trunk_.push_back(register_module("trunk" + std::to_string(i), ModulatedResBlock(cfg.channels, cfg.embed_dim)));
  }
  for (int i = 0; i < downs; ++i) {
    down_.push_back(register_module("down" + std::to_string(i),
                                    ModulatedConv2d(cfg.channels, cfg.channels, 3, cfg.embed_dim)));
  }
  tail_ = register_module("tail", conv3x3(cfg.channels, 3));
}

torch::Tensor ReconstructorImpl::forward(const torch::Tensor& embedding, const torch::Tensor& feature) {
  if (feature.size(2) % cfg_.scale != 0 || feature.size(3) % cfg_.scale != 0) {
    throw std::invalid_argument("Reconstructor: feature size not divisible by scale " + std::to_string(cfg_.scale));
  }
  if (embedding.dim() != 2 || embedding.size(1) != cfg_.embed_dim) {
    throw std::invalid_argument("Reconstructor: embedding must be [B, " + std::to_string(cfg_.embed_dim) + "]");
  }
  auto h = lrelu(head_(feature));
  auto r = h;
  for (auto& block : trunk_) r = block(r, embedding);
  h = h + r;
  for (auto& down : down_) {
    h = F::avg_pool2d(h, F::AvgPool2dFuncOptions(2));
    h = lrelu(down(h, embedding));
  }
  return tail_(h);
}

// ---------------------------------------------------------------------------

SrModelImpl::SrModelImpl(const SrModelConfig& cfg) : cfg_(cfg) {
  if (cfg.scale != 2 && cfg.scale != 4) throw std::invalid_argument("SrModel: scale must be 2 or 4");
  require_positive(cfg.channels, "sr.channels");
  require_positive(cfg.blocks, "sr.blocks");
  head_ = register_module("head", conv3x3(3, cfg.channels));
  body_ = register_module("body", torch::nn::ModuleList());
  for (int i = 0; i < cfg.blocks; ++i) body_->push_back(ResidualBlock(cfg.channels));
  body_tail_ = register_module("body_tail", conv3x3(cfg.channels, cfg.channels));
  up_ = register_module("up", torch::nn::ModuleList());
  for (int i = 0; i < log2_scale(cfg.scale); ++i) up_->push_back(conv3x3(cfg.channels, 4 * cfg.channels));
  tail_ = register_module("tail", conv3x3(cfg.channels, 3));
  // start close to the bicubic skip
  torch::NoGradGuard no_grad;
  tail_->weight.mul_(0.1);
  tail_->bias.zero_();
}

torch::Tensor SrModelImpl::forward(const torch::Tensor& x) {
  auto base = F::interpolate(x, F::InterpolateFuncOptions()
                                    .scale_factor(std::vector<double>{double(cfg_.scale), double(cfg_.scale)})
                                    .mode(torch::kBicubic)
                                    .align_corners(false));
  auto f = lrelu(head_(x));
  auto r = f;
  for (const auto& m : *body_) r = m->as<ResidualBlockImpl>()->forward(r);
  f = f + body_tail_(r);
  for (const auto& m : *up_) {
    f = lrelu(F::pixel_shuffle(m->as<torch::nn::Conv2dImpl>()->forward(f), F::PixelShuffleFuncOptions(2)));
  }
  return tail_(f) + base;
}

std::vector<std::shared_ptr<torch::nn::Module>> SrModelImpl::residual_blocks() {
  return {body_->begin(), body_->end()};
}

// ---------------------------------------------------------------------------

void set_trainable(torch::nn::Module& m, bool trainable) {
  for (auto& p : m.parameters()) p.set_requires_grad(trainable);
}

std::vector<torch::Tensor> trainable_parameters(torch::nn::Module& m) {
  std::vector<torch::Tensor> out;
  for (auto& p : m.parameters()) {
    if (p.requires_grad()) out.push_back(p);
  }
  return out;
}

FreezeReport freeze_shallow(torch::nn::Module& m, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("freeze_shallow: fraction must be in [0,1]");
  auto* structured = dynamic_cast<BlockStructured*>(&m);
  if (structured == nullptr) throw std::invalid_argument("freeze_shallow: model has no residual block structure");

  FreezeReport report;
  auto freeze = [&](torch::nn::Module& sub) {
    for (auto& p : sub.parameters()) {
      if (p.requires_grad()) {
        p.set_requires_grad(false);
        ++report.tensors_frozen;
        report.elements_frozen += p.numel();
      }
    }
  };
  freeze(structured->stem());
  auto blocks = structured->residual_blocks();
  const int n = static_cast<int>(std::floor(fraction * static_cast<double>(blocks.size()) + 1e-9));
  for (int i = 0; i < n; ++i) freeze(*blocks[i]);
  report.blocks_frozen = n;
  return report;
}

std::uint64_t hash_tensor(const torch::Tensor& t, std::uint64_t h) {
  auto c = t.detach().to(torch::kCPU).contiguous();
  const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
  const std::size_t n = c.numel() * c.element_size();
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

std::uint64_t hash_string(const std::string& s, std::uint64_t h) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::uint64_t hash_parameters(const torch::nn::Module& m) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& item : m.named_parameters()) h = hash_tensor(item.value(), hash_string(item.key(), h));
  for (const auto& item : m.named_buffers()) h = hash_tensor(item.value(), hash_string(item.key(), h));
  return h;
}

std::uint64_t hash_frozen_parameters(const torch::nn::Module& m) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& item : m.named_parameters()) {
    if (!item.value().requires_grad()) h = hash_tensor(item.value(), hash_string(item.key(), h));
  }
  return h;
}

void init_fixed(torch::nn::Module& m, std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  torch::NoGradGuard no_grad;
  for (auto& item : m.named_parameters()) {
    auto& p = item.value();
    if (p.dim() > 1) {
      const double fan_in = static_cast<double>(p.numel() / p.size(0));
      p.copy_(torch::randn(p.sizes(), gen, p.options()) * std::sqrt(2.0 / fan_in));
    } else {
      p.zero_();
    }
  }
}

void save_state_dict(const torch::nn::Module& m, const std::filesystem::path& file) {
  c10::Dict<std::string, at::Tensor> dict;
  for (const auto& item : m.named_parameters()) dict.insert(item.key(), item.value().detach().clone());
  for (const auto& item : m.named_buffers()) dict.insert(item.key(), item.value().detach().clone());
  const auto bytes = torch::pickle_save(c10::IValue(dict));
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void load_state_dict(torch::nn::Module& m, const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read weights " + file.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto value = torch::pickle_load(bytes);
  if (!value.isGenericDict()) throw std::runtime_error("weights file is not a name->tensor dictionary: " + file.string());
  std::map<std::string, torch::Tensor> tensors;
  for (const auto& entry : value.toGenericDict()) {
    tensors[entry.key().toStringRef()] = entry.value().toTensor();
  }
  torch::NoGradGuard no_grad;
  auto assign = [&](const std::string& name, torch::Tensor& dst) {
    auto it = tensors.find(name);
    if (it == tensors.end()) {
      if (name.ends_with("num_batches_tracked")) return;
      throw std::runtime_error("weights file " + file.string() + " lacks tensor " + name);
    }
    if (it->second.sizes() != dst.sizes()) {
      throw std::runtime_error("shape mismatch for " + name + " in " + file.string());
    }
    dst.copy_(it->second);
  };
  for (auto& item : m.named_parameters()) assign(item.key(), item.value());
  for (auto& item : m.named_buffers()) assign(item.key(), item.value());
}

DegradationEncoderConfig degradation_encoder_config_from(const Config& cfg) {
  DegradationEncoderConfig c;
  c.channels = static_cast<int>(cfg.get_int("edeg.channels", c.channels));
  c.blocks = static_cast<int>(cfg.get_int("edeg.blocks", c.blocks));
  c.blocks_per_stage = static_cast<int>(cfg.get_int("edeg.blocks_per_stage", c.blocks_per_stage));
  c.embed_dim = static_cast<int>(cfg.get_int("embed_dim", c.embed_dim));
  return c;
}

ImageEncoderConfig image_encoder_config_from(const Config& cfg) {
  ImageEncoderConfig c;
  c.channels = static_cast<int>(cfg.get_int("eimg.channels", c.channels));
  c.blocks = static_cast<int>(cfg.get_int("eimg.blocks", c.blocks));
  return c;
}

ReconstructorConfig reconstructor_config_from(const Config& cfg) {
  ReconstructorConfig c;
  c.feature_channels = image_encoder_config_from(cfg).channels;
  c.channels = static_cast<int>(cfg.get_int("recon.channels", c.channels));
  c.blocks = static_cast<int>(cfg.get_int("recon.blocks", c.blocks));
  c.embed_dim = static_cast<int>(cfg.get_int("embed_dim", c.embed_dim));
  c.scale = static_cast<int>(cfg.get_int("scale", c.scale));
  return c;
}

SrModelConfig sr_model_config_from(const Config& cfg) {
  SrModelConfig c;
  c.channels = static_cast<int>(cfg.get_int("sr.channels", c.channels));
  c.blocks = static_cast<int>(cfg.get_int("sr.blocks", c.blocks));
  c.scale = static_cast<int>(cfg.get_int("scale", c.scale));
  return c;
}

}  // namespace hrssr::models
