#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hrssr/config.hpp"
#include "hrssr/degrade.hpp"
#include "hrssr/ema.hpp"
#include "hrssr/models.hpp"
#include "hrssr/perceptual.hpp"

namespace hrssr::train {

enum class Schedule { Cosine, Constant };

struct TrainConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int total_iters = 1000;
  int batch_size = 4;
  int patch_size = 64;  // HR side; the LR crop is patch_size / scale
  double ema_decay = 0.999;
  std::uint64_t seed = 0;
  Schedule schedule = Schedule::Cosine;
  double freeze_fraction = 0.2;
  int eval_every = 100;
  int early_stop_patience = 0;  // evaluations without improvement; 0 disables
  double grad_clip = 1.0;       // global L2 norm; <= 0 disables
  double val_fraction = 0.1;
};

// Reads `<stage>.lr`, `<stage>.iters`, `<stage>.batch_size`, `<stage>.patch_size`,
// `<stage>.ema_decay`, `<stage>.schedule`, `<stage>.freeze_fraction`,
// `<stage>.eval_every`, `<stage>.early_stop_patience`, `<stage>.grad_clip`,
// `<stage>.val_fraction` and `<stage>.seed` (falling back to `seed`).
// Validates ranges; `scale` must divide patch_size.
TrainConfig train_config_from(const Config& cfg, const std::string& stage, int scale);

// lr0 * 0.5 * (1 + cos(pi * t / T))
double cosine_lr(double lr0, int t, int total);
double scheduled_lr(const TrainConfig& tc, int t);

struct LogRow {
  int step = 0;
  double loss_rec = 0.0;
  double loss_far = 0.0;
  double lr = 0.0;
  std::optional<double> val_score;
};

// CSV `step,loss_rec,loss_far,lr,val_score`; val_score is empty when not evaluated.
void write_log(const std::vector<LogRow>& rows, const std::filesystem::path& file);

// HRSSR_DETERMINISTIC=1 in the environment.
bool deterministic_mode();
// Seeds torch and, in deterministic mode, pins torch to one thread.
void seed_everything(std::uint64_t seed);

// Training/validation partition of sorted files: every k-th file (k =
// round(1 / fraction)), starting with the first, is held out.
struct Split {
  std::vector<std::filesystem::path> train;
  std::vector<std::filesystem::path> val;
};
Split validation_split(const std::vector<std::filesystem::path>& sorted, double fraction);

struct RunResult {
  std::filesystem::path checkpoint;       // pretrain: final; finetune: best validation
  std::filesystem::path last_checkpoint;  // state at the last executed step
  std::filesystem::path log;
  std::vector<LogRow> rows;
  int best_step = -1;
  double best_val = 0.0;
  int last_step = 0;
  std::uint64_t lrn_hash_before = 0;
  std::uint64_t lrn_hash_after = 0;
  std::uint64_t sr_frozen_hash_before = 0;
  std::uint64_t sr_frozen_hash_after = 0;
};

using StepCallback = std::function<void(const LogRow&)>;

// Pretraining on manifest pairs. `pretrain.model` selects what is trained:
// "lrn" (default) optimizes E_deg, E_img, R and the alignment maps on L_pt;
// "sr" trains the stand-in SR model supervised (L1) on the same pairs.
RunResult pretrain(const Config& cfg, const std::filesystem::path& manifest, const std::filesystem::path& out_dir,
                   const StepCallback& on_step = {});

// Self-supervised adaptation of an SR checkpoint to the LR images in lr_dir.
// With `finetune.snapshots` = true every evaluated state is also kept as
// checkpoints/step_XXXXXX.pt.
RunResult finetune(const Config& cfg, const std::filesystem::path& lrn_checkpoint,
                   const std::filesystem::path& sr_checkpoint, const std::filesystem::path& lr_dir,
                   const std::filesystem::path& out_dir, const StepCallback& on_step = {});

}  // namespace hrssr::train
