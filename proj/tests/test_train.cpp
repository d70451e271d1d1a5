#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hrssr/checkpoint.hpp"
#include "hrssr/degrade.hpp"
#include "hrssr/synthetic.hpp"
#include "hrssr/tensor_image.hpp"
#include "hrssr/train.hpp"
#include "test_util.hpp"

using namespace hrssr;
using namespace hrssr::train;
namespace fs = std::filesystem;

namespace {

Config toy_config() {
  Config cfg;
  cfg.set("edeg.channels", "8");
  cfg.set("edeg.blocks", "2");
  cfg.set("edeg.blocks_per_stage", "2");
  cfg.set("embed_dim", "16");
  cfg.set("eimg.channels", "8");
  cfg.set("eimg.blocks", "2");
  cfg.set("recon.channels", "8");
  cfg.set("recon.blocks", "2");
  cfg.set("sr.channels", "8");
  cfg.set("sr.blocks", "4");
  cfg.set("scale", "2");
  cfg.set("seed", "11");
  cfg.set("pretrain.batch_size", "2");
  cfg.set("pretrain.patch_size", "32");
  cfg.set("pretrain.ema_decay", "0.9");
  cfg.set("pretrain.eval_every", "5");
  cfg.set("finetune.batch_size", "2");
  cfg.set("finetune.patch_size", "32");
  cfg.set("finetune.ema_decay", "0.9");
  cfg.set("finetune.val_fraction", "0.34");
  cfg.set("finetune.freeze_fraction", "0.5");
  return cfg;
}

// HR scenes plus a degraded LR set with its manifest.
struct ToyData {
  test::TempDir dir;
  fs::path manifest;
  fs::path lr_dir;
  ToyData() {
    image::write_scene_set(dir.path() / "hr", 6, 48, 48, 5);
    degrade::synth_dataset(dir.path() / "hr", dir.path() / "data", 2, 6, 9);
    manifest = dir.path() / "data" / "manifest.csv";
    lr_dir = dir.path() / "data" / "lr";
  }
};

double mean_rec(const std::vector<LogRow>& rows, std::size_t begin, std::size_t end) {
  double s = 0;
  for (std::size_t i = begin; i < end; ++i) s += rows[i].loss_rec;
  return s / static_cast<double>(end - begin);
}

}  // namespace

TEST_CASE("ema update matches closed form") {
  std::vector<torch::Tensor> shadow{torch::zeros({3}, torch::kDouble)};
  const std::vector<torch::Tensor> params{torch::ones({3}, torch::kDouble)};
  ema_update(shadow, params, 0.999);
  CHECK(shadow[0][0].item<double>() == doctest::Approx(0.001).epsilon(1e-12));
  for (int i = 1; i < 100; ++i) ema_update(shadow, params, 0.999);
  CHECK(shadow[0][1].item<double>() == doctest::Approx(1.0 - std::pow(0.999, 100)).epsilon(1e-10));
  CHECK(shadow[0][1].item<double>() == doctest::Approx(0.09521).epsilon(1e-4));

  std::vector<torch::Tensor> fixed{torch::full({2}, 0.25, torch::kDouble)};
  ema_update(fixed, {torch::full({2}, 0.25, torch::kDouble)}, 0.9);
  CHECK(fixed[0][0].item<double>() == 0.25);

  std::vector<torch::Tensor> bad{torch::zeros({2})};
  CHECK_THROWS(ema_update(bad, {torch::zeros({3})}, 0.9));
}

TEST_CASE("ema shadow tracks trainable parameters and swaps back") {
  torch::nn::Linear lin(2, 2);
  lin->bias.set_requires_grad(false);
  EmaShadow ema(*lin, 0.5);
  CHECK(ema.entries().size() == 1);
  auto before = lin->weight.detach().clone();
  {
    torch::NoGradGuard g;
    lin->weight.add_(2.0);
  }
  ema.update(*lin);
  CHECK(torch::allclose(ema.entries()[0].second, before + 1.0));
  {
    EmaSwap swap(*lin, ema);
    CHECK(torch::allclose(lin->weight, before + 1.0));
  }
  CHECK(torch::allclose(lin->weight, before + 2.0));
  CHECK_THROWS(EmaShadow(*lin, 1.0));
}

TEST_CASE("cosine schedule endpoints") {
  CHECK(cosine_lr(2e-4, 0, 100) == doctest::Approx(2e-4));
  CHECK(cosine_lr(2e-4, 50, 100) == doctest::Approx(1e-4));
  CHECK(cosine_lr(2e-4, 100, 100) == doctest::Approx(0.0));
  CHECK(cosine_lr(2e-4, 25, 100) == doctest::Approx(2e-4 * 0.5 * (1 + std::sqrt(0.5))));
  TrainConfig tc;
  tc.schedule = Schedule::Constant;
  CHECK(scheduled_lr(tc, 700) == tc.lr);
}

TEST_CASE("train config validation") {
  auto cfg = toy_config();
  auto tc = train_config_from(cfg, "pretrain", 2);
  CHECK(tc.patch_size == 32);
  CHECK(tc.seed == 11);
  cfg.set("pretrain.seed", "4");
  CHECK(train_config_from(cfg, "pretrain", 2).seed == 4);
  CHECK_THROWS(train_config_from(cfg, "pretrain", 3));
  cfg.set("pretrain.lr", "-1");
  CHECK_THROWS(train_config_from(cfg, "pretrain", 2));
  cfg.set("pretrain.lr", "1e-4");
  cfg.set("pretrain.schedule", "step");
  CHECK_THROWS(train_config_from(cfg, "pretrain", 2));
}

TEST_CASE("validation split holds out every k-th file") {
  std::vector<fs::path> files;
  for (int i = 0; i < 10; ++i) files.emplace_back("f" + std::to_string(i));
  auto s = validation_split(files, 0.25);
  REQUIRE(s.val.size() == 3);
  CHECK(s.val[0] == "f0");
  CHECK(s.val[1] == "f4");
  CHECK(s.val[2] == "f8");
  CHECK(s.train.size() == 7);
  CHECK(validation_split(files, 0.1).val.size() == 1);
}

TEST_CASE("lrn pretraining reduces the reconstruction loss") {
  ToyData data;
  auto cfg = toy_config();
  cfg.set("pretrain.iters", "200");
  cfg.set("pretrain.lr", "2e-3");
  cfg.set("pretrain.eval_every", "100");
  auto res = pretrain(cfg, data.manifest, data.dir.path() / "run");
  REQUIRE(res.rows.size() == 200);
  const double first = mean_rec(res.rows, 0, 20);
  const double last = mean_rec(res.rows, 180, 200);
  MESSAGE("rec loss first20=" << first << " last20=" << last);
  CHECK(last < 0.5 * first);
  CHECK(fs::exists(res.checkpoint));
  CHECK(fs::exists(data.dir.path() / "run" / "checkpoints" / "step_000100.pt"));
  CHECK(fs::exists(res.log));
  auto meta = read_checkpoint_meta(res.checkpoint);
  CHECK(meta.kind == "lrn");
  CHECK(meta.step == 200);
}

TEST_CASE("pretraining is reproducible for a fixed seed") {
  ToyData data;
  auto cfg = toy_config();
  cfg.set("pretrain.iters", "6");
  auto a = pretrain(cfg, data.manifest, data.dir.path() / "a");
  auto b = pretrain(cfg, data.manifest, data.dir.path() / "b");
  for (std::size_t i = 0; i < a.rows.size(); ++i) CHECK(a.rows[i].loss_rec == b.rows[i].loss_rec);
  // archives carry a random serialization id, so compare the restored weights
  models::ReferenceEncoder reference{models::ReferenceOptions{}};
  auto la = build_lrn(read_checkpoint_meta(a.checkpoint).arch, reference);
  auto lb = build_lrn(read_checkpoint_meta(b.checkpoint).arch, reference);
  load_checkpoint(a.checkpoint, *la, false);
  load_checkpoint(b.checkpoint, *lb, false);
  CHECK(models::hash_parameters(*la) == models::hash_parameters(*lb));
  load_checkpoint(a.checkpoint, *la, true);
  load_checkpoint(b.checkpoint, *lb, true);
  CHECK(models::hash_parameters(*la) == models::hash_parameters(*lb));
  cfg.set("seed", "12");
  auto c = pretrain(cfg, data.manifest, data.dir.path() / "c");
  CHECK(c.rows[0].loss_rec != a.rows[0].loss_rec);
}

TEST_CASE("sr checkpoint round trip reproduces the forward pass bitwise") {
  ToyData data;
  auto cfg = toy_config();
  cfg.set("pretrain.model", "sr");
  cfg.set("pretrain.iters", "5");
  auto res = pretrain(cfg, data.manifest, data.dir.path() / "sr");
  auto meta = read_checkpoint_meta(res.checkpoint);
  CHECK(meta.kind == "sr");
  auto a = build_sr(meta.arch);
  auto b = build_sr(meta.arch);
  load_checkpoint(res.checkpoint, *a);
  load_checkpoint(res.checkpoint, *b);
  a->eval();
  b->eval();
  auto x = to_tensor(image::generate_scene(3, 16, 16)).unsqueeze(0);
  torch::NoGradGuard g;
  CHECK(torch::equal(a->forward(x), b->forward(x)));
  CHECK(models::hash_parameters(*a) == models::hash_parameters(*b));

  // live model against its reloaded copy
  test::TempDir dir;
  models::SrModel live(models::sr_model_config_from(meta.arch));
  live->eval();
  save_checkpoint(dir.path() / "live.pt", {"sr", meta.arch, 0, 0}, *live);
  auto reloaded = build_sr(meta.arch);
  load_checkpoint(dir.path() / "live.pt", *reloaded);
  reloaded->eval();
  CHECK(torch::equal(live->forward(x), reloaded->forward(x)));

  Config other = meta.arch;
  other.set("sr.channels", "12");
  auto c = build_sr(other);
  CHECK_THROWS_WITH_AS(load_checkpoint(res.checkpoint, *c), doctest::Contains("architecture mismatch"),
                       std::runtime_error);
}

TEST_CASE("finetuning keeps the lrn and shallow layers fixed and retains the best checkpoint") {
  ToyData data;
  auto cfg = toy_config();
  cfg.set("pretrain.iters", "5");
  auto lrn = pretrain(cfg, data.manifest, data.dir.path() / "lrn");
  cfg.set("pretrain.model", "sr");
  auto sr = pretrain(cfg, data.manifest, data.dir.path() / "sr");

  cfg.set("finetune.iters", "12");
  cfg.set("finetune.eval_every", "3");
  cfg.set("finetune.lr", "1e-3");
  auto ft = finetune(cfg, lrn.checkpoint, sr.checkpoint, data.lr_dir, data.dir.path() / "ft");
  CHECK(ft.lrn_hash_before == ft.lrn_hash_after);
  CHECK(ft.sr_frozen_hash_before == ft.sr_frozen_hash_after);
  CHECK(ft.last_step == 12);
  double best = 1e30;
  int evaluated = 0;
  for (const auto& r : ft.rows) {
    if (r.val_score) {
      best = std::min(best, *r.val_score);
      ++evaluated;
    }
  }
  CHECK(evaluated == 5);
  CHECK(ft.best_val == best);
  CHECK(fs::exists(ft.checkpoint));
  CHECK(fs::exists(ft.last_checkpoint));
  CHECK(read_checkpoint_meta(ft.checkpoint).step == ft.best_step);

  // the trainable part did move
  auto before = build_sr(read_checkpoint_meta(sr.checkpoint).arch);
  auto after = build_sr(read_checkpoint_meta(ft.last_checkpoint).arch);
  load_checkpoint(sr.checkpoint, *before);
  load_checkpoint(ft.last_checkpoint, *after);
  CHECK(models::hash_parameters(*before) != models::hash_parameters(*after));

  SUBCASE("empty domain") {
    test::TempDir empty;
    CHECK_THROWS_WITH_AS(finetune(cfg, lrn.checkpoint, sr.checkpoint, empty.path(), data.dir.path() / "e"),
                         doctest::Contains("empty domain"), std::runtime_error);
  }
  SUBCASE("swapped checkpoints") {
    CHECK_THROWS_WITH_AS(finetune(cfg, sr.checkpoint, lrn.checkpoint, data.lr_dir, data.dir.path() / "s"),
                         doctest::Contains("architecture mismatch"), std::runtime_error);
  }
}

TEST_CASE("early stopping and non-finite abort") {
  ToyData data;
  auto cfg = toy_config();
  cfg.set("pretrain.iters", "3");
  auto lrn = pretrain(cfg, data.manifest, data.dir.path() / "lrn");
  cfg.set("pretrain.model", "sr");
  auto sr = pretrain(cfg, data.manifest, data.dir.path() / "sr");

  SUBCASE("patience") {
    cfg.set("finetune.iters", "40");
    cfg.set("finetune.eval_every", "1");
    cfg.set("finetune.early_stop_patience", "1");
    cfg.set("finetune.lr", "0.5");
    auto ft = finetune(cfg, lrn.checkpoint, sr.checkpoint, data.lr_dir, data.dir.path() / "p");
    CHECK(ft.last_step < 40);
  }
  SUBCASE("nan") {
    cfg.set("pretrain.lr", "1e30");
    cfg.set("pretrain.iters", "20");
    cfg.set("pretrain.grad_clip", "0");
    const auto out = data.dir.path() / "nan";
    CHECK_THROWS_WITH_AS(pretrain(cfg, data.manifest, out), doctest::Contains("non-finite"), std::runtime_error);
    CHECK(fs::exists(out / "nan_batch.txt"));
  }
}
