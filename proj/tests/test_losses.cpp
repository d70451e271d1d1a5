#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "grad_check.hpp"
#include "hrssr/image.hpp"
#include "hrssr/losses.hpp"
#include "hrssr/synthetic.hpp"
#include "hrssr/tensor_image.hpp"

using namespace hrssr;
using namespace hrssr::losses;

namespace {

Config tiny_config() {
  Config cfg;
  cfg.set("edeg.channels", "8");
  cfg.set("edeg.blocks", "2");
  cfg.set("edeg.blocks_per_stage", "2");
  cfg.set("embed_dim", "16");
  cfg.set("eimg.channels", "8");
  cfg.set("eimg.blocks", "2");
  cfg.set("recon.channels", "8");
  cfg.set("recon.blocks", "2");
  cfg.set("scale", "2");
  return cfg;
}

struct Fixture {
  models::ReferenceEncoder reference{models::ReferenceOptions{}};
  perceptual::RandomCosMetric metric;
  LossContext ctx(const LossWeights& w, bool controller_on) {
    LossContext c;
    c.reference = &reference;
    c.perceptual = &metric;
    c.weights = w;
    c.controller.enabled = controller_on;
    c.generator = at::make_generator<at::CPUGeneratorImpl>(3);
    return c;
  }
};

}  // namespace

TEST_CASE("rec_loss basics") {
  perceptual::RandomCosMetric metric;
  auto x = to_tensor(image::generate_scene(1, 16, 16)).unsqueeze(0);
  LossWeights w;
  CHECK(rec_loss(x, x, w, metric).item<double>() <= 1e-6);

  LossWeights l1only;
  l1only.lambda_lpips = 0.0;
  auto c = torch::full({1, 3, 8, 8}, 0.3);
  CHECK(rec_loss(c + 0.1, c, l1only, metric).item<double>() == doctest::Approx(0.1).epsilon(1e-5));

  LossWeights hf;
  hf.hf_weighting = true;
  CHECK(rec_loss(c + 0.1, c, hf, metric).item<double>() == 0.0);
  CHECK(rec_loss(x, x * 0.5, w, metric).item<double>() > 0.0);
  CHECK_THROWS_AS(rec_loss(x, c, w, metric), std::invalid_argument);
}

TEST_CASE("torch Haar map agrees with the image implementation") {
  for (auto [h, w] : {std::pair{16, 16}, std::pair{17, 23}}) {
    auto img = image::generate_scene(4, h, w);
    auto expect = image::hf_weight_map(img);
    auto got = hf_weight_map(to_tensor(img).unsqueeze(0));
    CHECK(got.sizes() == torch::IntArrayRef({1, 1, h, w}));
    auto diff = (got.squeeze() - to_tensor(expect).squeeze()).abs().max().item<double>();
    CHECK(diff <= 1e-5);
  }
  CHECK(hf_weight_map(torch::full({2, 3, 6, 6}, 0.5)).abs().sum().item<double>() == 0.0);
}

TEST_CASE("loss weight config") {
  Config cfg;
  auto pt = loss_weights_from(cfg, controller::Stage::Pretrain);
  CHECK(pt.lambda_l1 == 1.0);
  CHECK(pt.lambda_lpips == 0.2);
  CHECK(pt.lambda_far == 0.1);
  CHECK_FALSE(pt.hf_weighting);
  CHECK(loss_weights_from(cfg, controller::Stage::Finetune).hf_weighting);
  cfg.set("far.weight_finetune", "0.3");
  CHECK(loss_weights_from(cfg, controller::Stage::Finetune).lambda_far == 0.3);
  cfg.set("loss.lambda_l1", "-1");
  CHECK_THROWS(loss_weights_from(cfg, controller::Stage::Pretrain));
}

TEST_CASE("pretrain loss: baseline reduction and finiteness") {
  torch::manual_seed(1);
  Fixture fx;
  auto lrn = make_lrn(tiny_config(), fx.reference.channels());
  auto y = torch::rand({4, 3, 16, 16});
  auto x = torch::rand({4, 3, 8, 8});
  LossWeights w;
  w.lambda_far = 0.0;
  auto parts = pretrain_loss(x, y, *lrn, fx.ctx(w, false));
  CHECK(std::isfinite(parts.total.item<double>()));
  // baseline: exactly the plain reconstruction objective with s = 1
  auto x_hat = lrn->forward(x, y, torch::ones({4, 16}));
  auto expect = rec_loss(x_hat, x, w, fx.metric);
  CHECK(parts.total.item<double>() == doctest::Approx(expect.item<double>()).epsilon(1e-6));

  LossWeights full;
  auto with = pretrain_loss(x, y, *lrn, fx.ctx(full, true));
  CHECK(std::isfinite(with.total.item<double>()));
  CHECK(with.far.item<double>() > 0.0);
  CHECK(with.signals.s.sizes() == torch::IntArrayRef({4, 16}));
}

TEST_CASE("finetune loss reaches only the SR model") {
  torch::manual_seed(2);
  Fixture fx;
  auto lrn = make_lrn(tiny_config(), fx.reference.channels());
  models::set_trainable(*lrn, false);
  models::SrModel sr(models::SrModelConfig{8, 2, 2});
  auto x = torch::rand({2, 3, 8, 8});
  LossWeights w;
  w.hf_weighting = true;
  auto parts = finetune_loss(x, [&](const torch::Tensor& t) { return sr->forward(t); }, *lrn, fx.ctx(w, true));
  CHECK(std::isfinite(parts.total.item<double>()));
  CHECK(parts.total.item<double>() > 0.0);
  parts.total.backward();
  for (auto& p : lrn->parameters()) CHECK_FALSE(p.grad().defined());
  double g = 0.0;
  for (auto& p : sr->parameters()) g += p.grad().abs().sum().item<double>();
  CHECK(g > 0.0);

  // baseline reduction: lambda 0, controller off
  LossWeights base;
  base.hf_weighting = true;
  base.lambda_far = 0.0;
  auto b = finetune_loss(x, [&](const torch::Tensor& t) { return sr->forward(t); }, *lrn, fx.ctx(base, false));
  torch::NoGradGuard ng;
  auto y = sr->forward(x).clamp(0, 1);
  auto x_hat = lrn->forward(x, y, torch::ones({2, 16}));
  CHECK(b.total.item<double>() == doctest::Approx(rec_loss(x_hat, x, base, fx.metric).item<double>()).epsilon(1e-6));
}

TEST_CASE("full finetune graph gradient through a two-parameter probe") {
  torch::manual_seed(3);
  Fixture fx;
  fx.metric.to(torch::kDouble);
  fx.reference.to(torch::kDouble);
  auto lrn = make_lrn(tiny_config(), fx.reference.channels());
  lrn->to(torch::kDouble);
  models::set_trainable(*lrn, false);
  models::SrModel sr(models::SrModelConfig{8, 2, 2});
  sr->to(torch::kDouble);
  auto x = to_tensor(image::generate_scene(5, 8, 8)).unsqueeze(0).to(torch::kDouble) * 0.8 + 0.1;
  LossWeights w;
  w.hf_weighting = true;
  auto ctx = fx.ctx(w, true);
  // small probe gain keeps an h-step well inside the piecewise-smooth regions of L1/ReLU/clamp
  auto probe_forward = [&](const torch::Tensor& probe) {
    return [&, probe](const torch::Tensor& t) { return sr->forward(t) * (0.9 + 0.01 * probe[0]) + 0.01 * probe[1]; };
  };
  auto p0 = torch::tensor({0.05, 0.02}, torch::kDouble);
  // detached signals (HQI, s, weight map) pinned at the base point
  auto base = finetune_loss(x, probe_forward(p0), *lrn, ctx);
  auto r = test::grad_check(
      [&](const torch::Tensor& p) { return finetune_loss(x, probe_forward(p), *lrn, ctx, &base.signals).total; }, p0,
      10);
  INFO(r.detail);
  CHECK(r.max_rel_error <= 1e-3);
}
