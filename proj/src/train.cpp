#include "hrssr/train.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "hrssr/checkpoint.hpp"
#include "hrssr/controller.hpp"
#include "hrssr/losses.hpp"
#include "hrssr/lrn.hpp"
#include "hrssr/tensor_image.hpp"

namespace hrssr::train {

namespace fs = std::filesystem;
using image::ImageTensor;

// ---------------------------------------------------------------------------
// EMA

EmaShadow::EmaShadow(torch::nn::Module& m, double decay) : decay_(decay) {
  if (!(decay > 0.0 && decay < 1.0)) throw std::invalid_argument("ema decay must be in (0,1)");
  for (const auto& item : m.named_parameters()) {
    if (item.value().requires_grad()) entries_.emplace_back(item.key(), item.value().detach().clone());
  }
}

void EmaShadow::update(torch::nn::Module& m) {
  torch::NoGradGuard no_grad;
  auto params = m.named_parameters();
  for (auto& [name, shadow] : entries_) {
    const auto* p = params.find(name);
    if (p == nullptr) throw std::invalid_argument("ema: module lacks parameter " + name);
    shadow.mul_(decay_).add_(*p, 1.0 - decay_);
  }
}

void EmaShadow::copy_to(torch::nn::Module& m) const {
  torch::NoGradGuard no_grad;
  auto params = m.named_parameters();
  for (const auto& [name, shadow] : entries_) {
    auto* p = params.find(name);
    if (p == nullptr) throw std::invalid_argument("ema: module lacks parameter " + name);
    p->copy_(shadow);
  }
}

void ema_update(std::vector<torch::Tensor>& shadow, const std::vector<torch::Tensor>& params, double decay) {
  if (shadow.size() != params.size()) throw std::invalid_argument("ema_update: parameter count mismatch");
  torch::NoGradGuard no_grad;
  for (std::size_t i = 0; i < shadow.size(); ++i) {
    if (shadow[i].sizes() != params[i].sizes()) throw std::invalid_argument("ema_update: shape mismatch");
    shadow[i].mul_(decay).add_(params[i], 1.0 - decay);
  }
}

EmaSwap::EmaSwap(torch::nn::Module& m, const EmaShadow& ema) : module_(m) {
  auto params = m.named_parameters();
  for (const auto& [name, shadow] : ema.entries()) {
    (void)shadow;
    saved_.emplace_back(name, params[name].detach().clone());
  }
  ema.copy_to(m);
}

EmaSwap::~EmaSwap() {
  torch::NoGradGuard no_grad;
  auto params = module_.named_parameters();
  for (const auto& [name, value] : saved_) params[name].copy_(value);
}

// ---------------------------------------------------------------------------
// configuration and bookkeeping

TrainConfig train_config_from(const Config& cfg, const std::string& stage, int scale) {
  TrainConfig tc;
  if (stage == "finetune") {
    tc.lr = 5e-6;
    tc.total_iters = 300;
    tc.eval_every = 25;
  }
  auto key = [&](const char* k) { return stage + "." + k; };
  tc.lr = cfg.get_double(key("lr"), tc.lr);
  tc.beta1 = cfg.get_double(key("beta1"), tc.beta1);
  tc.beta2 = cfg.get_double(key("beta2"), tc.beta2);
  tc.total_iters = static_cast<int>(cfg.get_int(key("iters"), tc.total_iters));
  tc.batch_size = static_cast<int>(cfg.get_int(key("batch_size"), tc.batch_size));
  tc.patch_size = static_cast<int>(cfg.get_int(key("patch_size"), tc.patch_size));
  tc.ema_decay = cfg.get_double(key("ema_decay"), tc.ema_decay);
  tc.seed = static_cast<std::uint64_t>(cfg.get_int(key("seed"), cfg.get_int("seed", 0)));
  const auto sched = cfg.get_string(key("schedule"), "cosine");
  if (sched == "cosine") {
    tc.schedule = Schedule::Cosine;
  } else if (sched == "constant") {
    tc.schedule = Schedule::Constant;
  } else {
    throw std::invalid_argument(key("schedule") + " must be cosine or constant");
  }
  tc.freeze_fraction = cfg.get_double(key("freeze_fraction"), tc.freeze_fraction);
  tc.eval_every = static_cast<int>(cfg.get_int(key("eval_every"), tc.eval_every));
  tc.early_stop_patience = static_cast<int>(cfg.get_int(key("early_stop_patience"), tc.early_stop_patience));
  tc.grad_clip = cfg.get_double(key("grad_clip"), tc.grad_clip);
  tc.val_fraction = cfg.get_double(key("val_fraction"), tc.val_fraction);

  if (!(tc.lr > 0)) throw std::invalid_argument(key("lr") + " must be > 0");
  if (!(tc.ema_decay > 0 && tc.ema_decay < 1)) throw std::invalid_argument(key("ema_decay") + " must be in (0,1)");
  if (tc.total_iters < 0) throw std::invalid_argument(key("iters") + " must be >= 0");
  if (tc.batch_size < 1) throw std::invalid_argument(key("batch_size") + " must be >= 1");
  if (tc.eval_every < 1) throw std::invalid_argument(key("eval_every") + " must be >= 1");
  if (scale < 1 || tc.patch_size < scale || tc.patch_size % scale != 0) {
    throw std::invalid_argument(key("patch_size") + " must be a positive multiple of scale " + std::to_string(scale));
  }
  if (!(tc.val_fraction > 0 && tc.val_fraction < 1)) throw std::invalid_argument(key("val_fraction") + " must be in (0,1)");
  if (!(tc.freeze_fraction >= 0 && tc.freeze_fraction <= 1)) {
    throw std::invalid_argument(key("freeze_fraction") + " must be in [0,1]");
  }
  return tc;
}

double cosine_lr(double lr0, int t, int total) {
  if (total <= 0) return lr0;
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) / static_cast<double>(total)));
}

double scheduled_lr(const TrainConfig& tc, int t) {
  return tc.schedule == Schedule::Cosine ? cosine_lr(tc.lr, t, tc.total_iters) : tc.lr;
}

void write_log(const std::vector<LogRow>& rows, const fs::path& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << "step,loss_rec,loss_far,lr,val_score\n" << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.step << ',' << r.loss_rec << ',' << r.loss_far << ',' << r.lr << ',';
    if (r.val_score) out << *r.val_score;
    out << '\n';
  }
}

bool deterministic_mode() {
  const char* v = std::getenv("HRSSR_DETERMINISTIC");
  return v != nullptr && std::string(v) == "1";
}

void seed_everything(std::uint64_t seed) {
  if (deterministic_mode()) {
    torch::set_num_threads(1);
    at::globalContext().setDeterministicAlgorithms(true, false);
  }
  torch::manual_seed(seed);
}

Split validation_split(const std::vector<fs::path>& sorted, double fraction) {
  if (!(fraction > 0 && fraction < 1)) throw std::invalid_argument("validation fraction must be in (0,1)");
  const auto k = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(1.0 / fraction)));
  Split s;
  for (std::size_t i = 0; i < sorted.size(); ++i) (i % k == 0 ? s.val : s.train).push_back(sorted[i]);
  return s;
}

namespace {

struct Pair {
  ImageTensor lr;
  ImageTensor hr;
};

std::vector<Pair> load_pairs(const degrade::Manifest& m, int scale, int lr_patch) {
  if (m.rows.empty()) throw std::runtime_error("empty dataset: " + m.location.string());
  std::vector<Pair> pairs;
  for (const auto& row : m.rows) {
    if (row.scale != scale) {
      throw std::runtime_error("manifest row scale " + std::to_string(row.scale) + " differs from model scale " +
                               std::to_string(scale));
    }
    auto hr = degrade::crop_to_multiple(image::load_image(m.resolve(row.hr_path)), scale);
    auto lr = image::load_image(m.resolve(row.lr_path));
    if (lr.height() * scale != hr.height() || lr.width() * scale != hr.width()) {
      throw std::runtime_error("LR/HR size mismatch for " + row.lr_path.string());
    }
    if (lr.height() < lr_patch || lr.width() < lr_patch) {
      throw std::runtime_error("image smaller than the training patch: " + row.lr_path.string());
    }
    pairs.push_back({std::move(lr), std::move(hr)});
  }
  return pairs;
}

struct Batch {
  torch::Tensor lr, hr;
  std::vector<int> indices;
};

Batch sample_pairs(const std::vector<Pair>& pairs, int batch, int lr_patch, int scale, std::mt19937_64& rng) {
  std::vector<ImageTensor> lrs, hrs;
  Batch b;
  std::uniform_int_distribution<int> pick(0, static_cast<int>(pairs.size()) - 1);
  for (int i = 0; i < batch; ++i) {
    const int k = pick(rng);
    const auto& p = pairs[k];
    std::uniform_int_distribution<int> top(0, p.lr.height() - lr_patch);
    std::uniform_int_distribution<int> left(0, p.lr.width() - lr_patch);
    const int t = top(rng);
    const int l = left(rng);
    auto crop = image::crop_aligned(p.lr, p.hr, t, l, lr_patch, scale);
    lrs.push_back(std::move(crop.lr));
    hrs.push_back(std::move(crop.hr));
    b.indices.push_back(k);
  }
  b.lr = to_batch(lrs);
  b.hr = to_batch(hrs);
  return b;
}

torch::Tensor sample_crops(const std::vector<ImageTensor>& images, int batch, int patch, std::mt19937_64& rng,
                           std::vector<int>& indices) {
  std::vector<ImageTensor> crops;
  std::uniform_int_distribution<int> pick(0, static_cast<int>(images.size()) - 1);
  indices.clear();
  for (int i = 0; i < batch; ++i) {
    const int k = pick(rng);
    const auto& img = images[k];
    std::uniform_int_distribution<int> top(0, img.height() - patch);
    std::uniform_int_distribution<int> left(0, img.width() - patch);
    const int t = top(rng);
    const int l = left(rng);
    crops.push_back(image::crop_patch(img, t, l, patch));
    indices.push_back(k);
  }
  return to_batch(crops);
}

[[noreturn]] void abort_non_finite(int step, const std::vector<int>& indices, const fs::path& out_dir) {
  std::ostringstream msg;
  msg << "non-finite loss at step " << step << "; batch indices:";
  for (int i : indices) msg << ' ' << i;
  std::ofstream(out_dir / "nan_batch.txt") << msg.str() << '\n';
  throw std::runtime_error(msg.str());
}

void apply_step(torch::optim::Adam& opt, const std::vector<torch::Tensor>& params, double lr, double clip,
                const torch::Tensor& loss) {
  for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
  opt.zero_grad();
  loss.backward();
  if (clip > 0) torch::nn::utils::clip_grad_norm_(params, clip);
  opt.step();
}

torch::optim::Adam make_adam(const std::vector<torch::Tensor>& params, const TrainConfig& tc) {
  return torch::optim::Adam(params, torch::optim::AdamOptions(tc.lr).betas({tc.beta1, tc.beta2}));
}

void write_effective_config(const Config& cfg, const fs::path& out_dir) {
  std::ofstream(out_dir / "effective_config.txt") << cfg.to_text();
}

std::string checkpoint_name(int step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "step_%06d.pt", step);
  return buf;
}

RunResult pretrain_lrn(const Config& cfg, const degrade::Manifest& manifest, const fs::path& out_dir,
                       const StepCallback& on_step) {
  const int scale = static_cast<int>(cfg.get_int("scale", 4));
  const auto tc = train_config_from(cfg, "pretrain", scale);
  const int lr_patch = tc.patch_size / scale;
  seed_everything(tc.seed);
  const auto pairs = load_pairs(manifest, scale, lr_patch);

  models::ReferenceEncoder reference(models::reference_options_from(cfg));
  auto metric = perceptual::make_perceptual(cfg);
  auto lrn = make_lrn(cfg, reference.channels());
  const auto params = lrn->parameters();
  auto opt = make_adam(params, tc);
  EmaShadow ema(*lrn, tc.ema_decay);

  losses::LossContext ctx;
  ctx.reference = &reference;
  ctx.perceptual = metric.get();
  ctx.controller = controller::controller_options_from(cfg);
  ctx.weights = losses::loss_weights_from(cfg, controller::Stage::Pretrain);
  ctx.generator = at::make_generator<at::CPUGeneratorImpl>(degrade::derive_seed(tc.seed, 1));
  std::mt19937_64 rng(degrade::derive_seed(tc.seed, 2));

  CheckpointMeta meta{"lrn", lrn_architecture(cfg, reference), 0, tc.seed};
  fs::create_directories(out_dir / "checkpoints");
  write_effective_config(cfg, out_dir);

  RunResult res;
  for (int step = 1; step <= tc.total_iters; ++step) {
    const double lr = scheduled_lr(tc, step - 1);
    auto batch = sample_pairs(pairs, tc.batch_size, lr_patch, scale, rng);
    auto parts = losses::pretrain_loss(batch.lr, batch.hr, *lrn, ctx);
    if (!torch::isfinite(parts.total).item<bool>()) abort_non_finite(step, batch.indices, out_dir);
    apply_step(opt, params, lr, tc.grad_clip, parts.total);
    ema.update(*lrn);
    LogRow row{step, parts.rec.item<double>(), parts.far.item<double>(), lr, std::nullopt};
    res.rows.push_back(row);
    if (on_step) on_step(row);
    if (step % tc.eval_every == 0 || step == tc.total_iters) {
      meta.step = step;
      save_checkpoint(out_dir / "checkpoints" / checkpoint_name(step), meta, *lrn, &ema, &opt);
    }
  }
  meta.step = tc.total_iters;
  res.checkpoint = out_dir / "lrn.pt";
  save_checkpoint(res.checkpoint, meta, *lrn, &ema, &opt);
  res.last_checkpoint = res.checkpoint;
  res.last_step = tc.total_iters;
  res.log = out_dir / "log.csv";
  write_log(res.rows, res.log);
  return res;
}

RunResult pretrain_sr(const Config& cfg, const degrade::Manifest& manifest, const fs::path& out_dir,
                      const StepCallback& on_step) {
  const auto sr_cfg = models::sr_model_config_from(cfg);
  const int scale = sr_cfg.scale;
  const auto tc = train_config_from(cfg, "pretrain", scale);
  const int lr_patch = tc.patch_size / scale;
  seed_everything(tc.seed);
  const auto pairs = load_pairs(manifest, scale, lr_patch);

  models::SrModel sr(sr_cfg);
  const auto params = sr->parameters();
  auto opt = make_adam(params, tc);
  EmaShadow ema(*sr, tc.ema_decay);
  std::mt19937_64 rng(degrade::derive_seed(tc.seed, 2));
  CheckpointMeta meta{"sr", sr_architecture(sr_cfg), 0, tc.seed};
  fs::create_directories(out_dir / "checkpoints");
  write_effective_config(cfg, out_dir);

  RunResult res;
  for (int step = 1; step <= tc.total_iters; ++step) {
    const double lr = scheduled_lr(tc, step - 1);
    auto batch = sample_pairs(pairs, tc.batch_size, lr_patch, scale, rng);
    auto loss = (sr->forward(batch.lr) - batch.hr).abs().mean();
    if (!torch::isfinite(loss).item<bool>()) abort_non_finite(step, batch.indices, out_dir);
    apply_step(opt, params, lr, tc.grad_clip, loss);
    ema.update(*sr);
    LogRow row{step, loss.item<double>(), 0.0, lr, std::nullopt};
    res.rows.push_back(row);
    if (on_step) on_step(row);
    if (step % tc.eval_every == 0 || step == tc.total_iters) {
      meta.step = step;
      save_checkpoint(out_dir / "checkpoints" / checkpoint_name(step), meta, *sr, &ema, &opt);
    }
  }
  meta.step = tc.total_iters;
  res.checkpoint = out_dir / "sr.pt";
  save_checkpoint(res.checkpoint, meta, *sr, &ema, &opt);
  res.last_checkpoint = res.checkpoint;
  res.last_step = tc.total_iters;
  res.log = out_dir / "log.csv";
  write_log(res.rows, res.log);
  return res;
}

}  // namespace

RunResult pretrain(const Config& cfg, const fs::path& manifest, const fs::path& out_dir, const StepCallback& on_step) {
  const auto m = degrade::read_manifest(manifest);
  const auto model = cfg.get_string("pretrain.model", "lrn");
  if (model == "lrn") return pretrain_lrn(cfg, m, out_dir, on_step);
  if (model == "sr") return pretrain_sr(cfg, m, out_dir, on_step);
  throw std::invalid_argument("pretrain.model must be lrn or sr, got '" + model + "'");
}

RunResult finetune(const Config& cfg, const fs::path& lrn_checkpoint, const fs::path& sr_checkpoint,
                   const fs::path& lr_dir, const fs::path& out_dir, const StepCallback& on_step) {
  models::ReferenceEncoder reference(models::reference_options_from(cfg));
  auto metric = perceptual::make_perceptual(cfg);

  const auto lrn_meta = read_checkpoint_meta(lrn_checkpoint);
  auto lrn = build_lrn(lrn_meta.arch, reference);
  load_checkpoint(lrn_checkpoint, *lrn, true);
  models::set_trainable(*lrn, false);
  lrn->eval();

  const auto sr_meta = read_checkpoint_meta(sr_checkpoint);
  auto sr = build_sr(sr_meta.arch);
  load_checkpoint(sr_checkpoint, *sr, true);
  const int scale = sr->config().scale;
  if (lrn->scale() != scale) {
    throw std::runtime_error("architecture mismatch: LRN scale " + std::to_string(lrn->scale()) +
                             " vs SR scale " + std::to_string(scale));
  }
  const auto tc = train_config_from(cfg, "finetune", scale);
  const int lr_patch = tc.patch_size / scale;
  seed_everything(tc.seed);

  if (!fs::is_directory(lr_dir)) throw std::runtime_error("LR directory not found: " + lr_dir.string());
  const auto files = image::list_images(lr_dir);
  if (files.size() < 2) throw std::runtime_error("empty domain: need at least 2 LR images in " + lr_dir.string());
  const auto split = validation_split(files, tc.val_fraction);
  std::vector<ImageTensor> train_imgs, val_imgs;
  for (const auto& f : split.train) {
    train_imgs.push_back(image::load_image(f));
    if (train_imgs.back().height() < lr_patch || train_imgs.back().width() < lr_patch) {
      throw std::runtime_error("LR image smaller than the finetuning patch: " + f.string());
    }
  }
  for (const auto& f : split.val) val_imgs.push_back(image::load_image(f));

  models::set_trainable(*sr, true);
  models::freeze_shallow(*sr, tc.freeze_fraction);
  const auto params = models::trainable_parameters(*sr);
  auto opt = make_adam(params, tc);
  EmaShadow ema(*sr, tc.ema_decay);

  losses::LossContext ctx;
  ctx.reference = &reference;
  ctx.perceptual = metric.get();
  ctx.controller = controller::controller_options_from(cfg);
  ctx.weights = losses::loss_weights_from(cfg, controller::Stage::Finetune);
  ctx.generator = at::make_generator<at::CPUGeneratorImpl>(degrade::derive_seed(tc.seed, 1));
  std::mt19937_64 rng(degrade::derive_seed(tc.seed, 2));

  // validation: rec_loss on full held-out LR images, controller noise off, EMA weights
  losses::LossContext val_ctx = ctx;
  val_ctx.controller.noise = false;
  val_ctx.generator.reset();
  auto sr_fn = [&](const torch::Tensor& t) { return sr->forward(t); };
  auto validate = [&] {
    EmaSwap swap(*sr, ema);
    torch::NoGradGuard no_grad;
    sr->eval();
    double total = 0.0;
    for (const auto& img : val_imgs) {
      total += losses::finetune_loss(to_tensor(img).unsqueeze(0), sr_fn, *lrn, val_ctx).rec.item<double>();
    }
    sr->train();
    return total / static_cast<double>(val_imgs.size());
  };

  RunResult res;
  res.lrn_hash_before = models::hash_parameters(*lrn);
  res.sr_frozen_hash_before = models::hash_frozen_parameters(*sr);
  fs::create_directories(out_dir);
  write_effective_config(cfg, out_dir);
  CheckpointMeta meta{"sr", sr_meta.arch, 0, tc.seed};
  const bool snapshots = cfg.get_bool("finetune.snapshots", false);
  res.checkpoint = out_dir / "best.pt";
  res.last_checkpoint = out_dir / "last.pt";

  res.best_val = validate();
  res.best_step = 0;
  save_checkpoint(res.checkpoint, meta, *sr, &ema, nullptr);
  if (snapshots) save_checkpoint(out_dir / "checkpoints" / checkpoint_name(0), meta, *sr, &ema, nullptr);
  res.rows.push_back({0, 0.0, 0.0, 0.0, res.best_val});
  int stale = 0;
  std::vector<int> indices;
  int step = 1;
  for (; step <= tc.total_iters; ++step) {
    const double lr = scheduled_lr(tc, step - 1);
    auto x = sample_crops(train_imgs, tc.batch_size, lr_patch, rng, indices);
    auto parts = losses::finetune_loss(x, sr_fn, *lrn, ctx);
    if (!torch::isfinite(parts.total).item<bool>()) abort_non_finite(step, indices, out_dir);
    apply_step(opt, params, lr, tc.grad_clip, parts.total);
    ema.update(*sr);
    LogRow row{step, parts.rec.item<double>(), parts.far.item<double>(), lr, std::nullopt};
    bool stop = false;
    if (step % tc.eval_every == 0 || step == tc.total_iters) {
      const double v = validate();
      row.val_score = v;
      if (snapshots) {
        meta.step = step;
        save_checkpoint(out_dir / "checkpoints" / checkpoint_name(step), meta, *sr, &ema, nullptr);
      }
      if (v < res.best_val) {
        res.best_val = v;
        res.best_step = step;
        meta.step = step;
        save_checkpoint(res.checkpoint, meta, *sr, &ema, nullptr);
        stale = 0;
      } else if (tc.early_stop_patience > 0 && ++stale >= tc.early_stop_patience) {
        stop = true;
      }
    }
    res.rows.push_back(row);
    if (on_step) on_step(row);
    if (stop) break;
  }
  res.last_step = std::min(step, tc.total_iters);
  meta.step = res.last_step;
  save_checkpoint(res.last_checkpoint, meta, *sr, &ema, &opt);
  res.lrn_hash_after = models::hash_parameters(*lrn);
  res.sr_frozen_hash_after = models::hash_frozen_parameters(*sr);
  res.log = out_dir / "log.csv";
  write_log(res.rows, res.log);
  return res;
}

}  // namespace hrssr::train
