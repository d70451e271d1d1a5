#include <stdexcept>

#include "hrssr/models.hpp"

namespace hrssr::models {

namespace F = torch::nn::functional;

namespace {

// Layout and parameter names follow CLIP's ModifiedResNet so that an exported
// state dict loads by name.
class BottleneckImpl : public torch::nn::Module {
 public:
  BottleneckImpl(int inplanes, int planes, int stride) : stride_(stride) {
    conv1 = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(inplanes, planes, 1).bias(false)));
    bn1 = register_module("bn1", torch::nn::BatchNorm2d(planes));
    conv2 = register_module("conv2",
                            torch::nn::Conv2d(torch::nn::Conv2dOptions(planes, planes, 3).padding(1).bias(false)));
    bn2 = register_module("bn2", torch::nn::BatchNorm2d(planes));
    conv3 = register_module("conv3", torch::nn::Conv2d(torch::nn::Conv2dOptions(planes, planes * 4, 1).bias(false)));
    bn3 = register_module("bn3", torch::nn::BatchNorm2d(planes * 4));
    if (stride > 1 || inplanes != planes * 4) {
      downsample = register_module("downsample", torch::nn::ModuleDict());
      downsample->update({
          {"0", torch::nn::Conv2d(torch::nn::Conv2dOptions(inplanes, planes * 4, 1).bias(false)).ptr()},
          {"1", torch::nn::BatchNorm2d(planes * 4).ptr()},
      });
    }
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto out = torch::relu(bn1(conv1(x)));
    out = torch::relu(bn2(conv2(out)));
    if (stride_ > 1) out = F::avg_pool2d(out, F::AvgPool2dFuncOptions(stride_));
    out = bn3(conv3(out));
    auto identity = x;
    if (downsample) {
      if (stride_ > 1) identity = F::avg_pool2d(identity, F::AvgPool2dFuncOptions(stride_));
      identity = (*downsample)["0"]->as<torch::nn::Conv2dImpl>()->forward(identity);
      identity = (*downsample)["1"]->as<torch::nn::BatchNorm2dImpl>()->forward(identity);
    }
    return torch::relu(out + identity);
  }

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr}, bn3{nullptr};
  torch::nn::ModuleDict downsample{nullptr};

 private:
  int stride_;
};
TORCH_MODULE(Bottleneck);

// ModifiedResNet (RN50 widths) truncated after layer3.
class ClipTrunkImpl : public torch::nn::Module {
 public:
  ClipTrunkImpl() {
    auto conv = [](int in, int out, int stride) {
      return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false));
    };
    conv1 = register_module("conv1", conv(3, 32, 2));
    bn1 = register_module("bn1", torch::nn::BatchNorm2d(32));
    conv2 = register_module("conv2", conv(32, 32, 1));
    bn2 = register_module("bn2", torch::nn::BatchNorm2d(32));
    conv3 = register_module("conv3", conv(32, 64, 1));
    bn3 = register_module("bn3", torch::nn::BatchNorm2d(64));
    int inplanes = 64;
    auto make_layer = [&](int planes, int blocks, int stride) {
      torch::nn::Sequential layer;
      layer->push_back(Bottleneck(inplanes, planes, stride));
      inplanes = planes * 4;
      for (int i = 1; i < blocks; ++i) layer->push_back(Bottleneck(inplanes, planes, 1));
      return layer;
    };
    layer1 = register_module("layer1", make_layer(64, 3, 1));
    layer2 = register_module("layer2", make_layer(128, 4, 2));
    layer3 = register_module("layer3", make_layer(256, 6, 2));
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto h = torch::relu(bn1(conv1(x)));
    h = torch::relu(bn2(conv2(h)));
    h = torch::relu(bn3(conv3(h)));
    h = F::avg_pool2d(h, F::AvgPool2dFuncOptions(2));
    return layer3->forward(layer2->forward(layer1->forward(h)));
  }

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr}, bn3{nullptr};
  torch::nn::Sequential layer1{nullptr}, layer2{nullptr}, layer3{nullptr};
};
TORCH_MODULE(ClipTrunk);

class RandomTrunkImpl : public torch::nn::Module {
 public:
  RandomTrunkImpl() {
    auto conv = [](int in, int out, int stride) {
      return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
    };
    net = register_module("net", torch::nn::Sequential(conv(3, 32, 2), torch::nn::GELU(), conv(32, 64, 2),
                                                       torch::nn::GELU(), conv(64, 128, 2), torch::nn::GELU(),
                                                       conv(128, 128, 1), torch::nn::GELU()));
  }
  torch::Tensor forward(const torch::Tensor& x) { return net->forward(x); }

  torch::nn::Sequential net{nullptr};
};
TORCH_MODULE(RandomTrunk);

}  // namespace

ReferenceEncoder::ReferenceEncoder(const ReferenceOptions& opts) : mode_(opts.mode) {
  if (mode_ == ReferenceMode::ClipRN50) {
    if (opts.weights.empty() || !std::filesystem::exists(opts.weights)) {
      throw std::runtime_error("reference encoder: CLIP RN50 weights not found at '" + opts.weights.string() +
                               "' (export them with tools/export_weights.py or set reference.mode = random)");
    }
    auto trunk = ClipTrunk();
    load_state_dict(*trunk, opts.weights);
    net_ = trunk.ptr();
    channels_ = 1024;
    stride_ = 16;
  } else {
    auto trunk = RandomTrunk();
    init_fixed(*trunk, opts.seed);
    net_ = trunk.ptr();
    channels_ = 128;
    stride_ = 8;
  }
  net_->eval();
  set_trainable(*net_, false);
  // CLIP image normalization, used by both modes so features see the same input statistics
  mean_ = torch::tensor({0.48145466, 0.4578275, 0.40821073}).view({1, 3, 1, 1});
  std_ = torch::tensor({0.26862954, 0.26130258, 0.27577711}).view({1, 3, 1, 1});
}

torch::Tensor ReferenceEncoder::forward(const torch::Tensor& x) const {
  if (x.dim() != 4 || x.size(1) != 3) throw std::invalid_argument("reference encoder expects [B,3,H,W]");
  auto z = (x - mean_.to(x.dtype())) / std_.to(x.dtype());
  if (mode_ == ReferenceMode::ClipRN50) return std::static_pointer_cast<ClipTrunkImpl>(net_)->forward(z);
  return std::static_pointer_cast<RandomTrunkImpl>(net_)->forward(z);
}

std::string ReferenceEncoder::name() const { return mode_ == ReferenceMode::ClipRN50 ? "clip-rn50" : "random"; }

void ReferenceEncoder::to(torch::Dtype dtype) {
  net_->to(dtype);
  mean_ = mean_.to(dtype);
  std_ = std_.to(dtype);
}

ReferenceOptions reference_options_from(const Config& cfg) {
  ReferenceOptions o;
  const auto mode = cfg.get_string("reference.mode", "random");
  if (mode == "random") {
    o.mode = ReferenceMode::Random;
  } else if (mode == "clip-rn50") {
    o.mode = ReferenceMode::ClipRN50;
  } else {
    throw std::invalid_argument("reference.mode must be 'random' or 'clip-rn50', got '" + mode + "'");
  }
  o.weights = cfg.get_string("reference.weights", "");
  o.seed = static_cast<std::uint64_t>(cfg.get_int("reference.seed", static_cast<long long>(o.seed)));
  return o;
}

}  // namespace hrssr::models
