#include "hrssr/perceptual.hpp"

#include <stdexcept>

#include "hrssr/models.hpp"
#include "hrssr/tensor_image.hpp"

namespace hrssr::perceptual {

namespace F = torch::nn::functional;

namespace {

torch::Tensor unit_normalize(const torch::Tensor& f) {
  return f * torch::rsqrt(f.pow(2).sum(1, true) + 1e-10);
}

void require_pair(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) throw std::invalid_argument("perceptual distance: shape mismatch");
  if (a.dim() != 4 || a.size(1) != 3) throw std::invalid_argument("perceptual distance: expected [B,3,H,W]");
}

class LpipsNetImpl : public torch::nn::Module {
 public:
  LpipsNetImpl() {
    using torch::nn::Conv2d;
    using torch::nn::Conv2dOptions;
    auto pool = [] { return torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(3).stride(2)); };
    features = register_module(
        "features",
        torch::nn::Sequential(Conv2d(Conv2dOptions(3, 64, 11).stride(4).padding(2)), torch::nn::ReLU(), pool(),
                              Conv2d(Conv2dOptions(64, 192, 5).padding(2)), torch::nn::ReLU(), pool(),
                              Conv2d(Conv2dOptions(192, 384, 3).padding(1)), torch::nn::ReLU(),
                              Conv2d(Conv2dOptions(384, 256, 3).padding(1)), torch::nn::ReLU(),
                              Conv2d(Conv2dOptions(256, 256, 3).padding(1)), torch::nn::ReLU()));
    const int widths[] = {64, 192, 384, 256, 256};
    for (int i = 0; i < 5; ++i) {
      lins.push_back(register_module("lin" + std::to_string(i),
                                     Conv2d(Conv2dOptions(widths[i], 1, 1).bias(false))));
    }
  }

  torch::Tensor forward(const torch::Tensor& a, const torch::Tensor& b) {
    static constexpr int kTaps[] = {1, 4, 7, 9, 11};
    auto ha = a;
    auto hb = b;
    torch::Tensor total;
    int tap = 0;
    int i = 0;
    for (auto& m : *features) {
      ha = m.forward(ha);
      hb = m.forward(hb);
      if (tap < 5 && i == kTaps[tap]) {
        auto d = (unit_normalize(ha) - unit_normalize(hb)).pow(2);
        auto term = lins[tap](d).mean({1, 2, 3});
        total = total.defined() ? total + term : term;
        ++tap;
      }
      ++i;
    }
    return total;
  }

  torch::nn::Sequential features{nullptr};
  std::vector<torch::nn::Conv2d> lins;
};
TORCH_MODULE(LpipsNet);

}  // namespace

RandomCosMetric::RandomCosMetric(std::uint64_t seed, double alpha) : alpha_(alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("perceptual.alpha must be > 0");
  net_ = torch::nn::ModuleList();
  auto conv = [](int in, int out, int stride) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
  };
  net_->push_back(conv(3, 16, 1));
  net_->push_back(conv(16, 32, 2));
  net_->push_back(conv(32, 64, 2));
  models::init_fixed(*net_, seed);
  models::set_trainable(*net_, false);
}

torch::Tensor RandomCosMetric::raw(const torch::Tensor& a, const torch::Tensor& b) const {
  require_pair(a, b);
  auto ha = a * 2.0 - 1.0;
  auto hb = b * 2.0 - 1.0;
  torch::Tensor total;
  for (const auto& m : *net_) {
    auto* conv = m->as<torch::nn::Conv2dImpl>();
    ha = F::gelu(conv->forward(ha));
    hb = F::gelu(conv->forward(hb));
    // 0.5 * |a^ - b^|^2 == 1 - cos for unit vectors
    auto term = 0.5 * (unit_normalize(ha) - unit_normalize(hb)).pow(2).sum(1).mean({1, 2});
    total = total.defined() ? total + term : term;
  }
  return total / static_cast<double>(net_->size());
}

torch::Tensor RandomCosMetric::distance(const torch::Tensor& a, const torch::Tensor& b) const {
  return torch::clamp(alpha_ * raw(a, b), 0.0, 1.0);
}

LpipsAlexMetric::LpipsAlexMetric(const std::filesystem::path& weights) {
  if (weights.empty() || !std::filesystem::exists(weights)) {
    throw std::runtime_error("LPIPS weights not found at '" + weights.string() +
                             "' (export them with tools/export_weights.py or set perceptual.backend = random-cos)");
  }
  auto net = LpipsNet();
  models::load_state_dict(*net, weights);
  net->eval();
  models::set_trainable(*net, false);
  net_ = net.ptr();
  shift_ = torch::tensor({-0.030, -0.088, -0.188}).view({1, 3, 1, 1});
  scale_ = torch::tensor({0.458, 0.448, 0.450}).view({1, 3, 1, 1});
}

torch::Tensor LpipsAlexMetric::distance(const torch::Tensor& a, const torch::Tensor& b) const {
  require_pair(a, b);
  auto prep = [&](const torch::Tensor& x) { return ((x * 2.0 - 1.0) - shift_.to(x.dtype())) / scale_.to(x.dtype()); };
  auto d = std::static_pointer_cast<LpipsNetImpl>(net_)->forward(prep(a), prep(b));
  return torch::clamp(d, 0.0, 1.0);
}

void LpipsAlexMetric::to(torch::Dtype dtype) {
  net_->to(dtype);
  shift_ = shift_.to(dtype);
  scale_ = scale_.to(dtype);
}

std::shared_ptr<PerceptualMetric> make_perceptual(const Config& cfg) {
  const auto backend = cfg.get_string("perceptual.backend", "random-cos");
  if (backend == "random-cos") {
    return std::make_shared<RandomCosMetric>(static_cast<std::uint64_t>(cfg.get_int("perceptual.seed", 1337)),
                                             cfg.get_double("perceptual.alpha", RandomCosMetric::kDefaultAlpha));
  }
  if (backend == "lpips-alex") {
    return std::make_shared<LpipsAlexMetric>(cfg.get_string("perceptual.weights", ""));
  }
  throw std::invalid_argument("perceptual.backend must be 'random-cos' or 'lpips-alex', got '" + backend + "'");
}

double perceptual_distance(const PerceptualMetric& metric, const image::ImageTensor& a, const image::ImageTensor& b) {
  torch::NoGradGuard no_grad;
  return metric.distance(to_tensor(a).unsqueeze(0), to_tensor(b).unsqueeze(0)).item<double>();
}

}  // namespace hrssr::perceptual
