#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "hrssr/config.hpp"
#include "hrssr/controller.hpp"
#include "hrssr/image.hpp"
#include "hrssr/lrn.hpp"
#include "hrssr/metrics.hpp"
#include "hrssr/models.hpp"
#include "hrssr/perceptual.hpp"

namespace hrssr::evalbench {

namespace fs = std::filesystem;
using image::ImageTensor;

struct Series {
  std::string name;
  std::vector<double> values;
};

struct AblationReport {
  std::string experiment;
  std::string x_label;
  std::vector<double> x;
  std::vector<Series> series;                        // one value per x
  std::vector<Series> samples;                       // free-length raw values (e.g. per-patch FAR)
  std::vector<std::pair<std::string, double>> summary;
  std::vector<std::string> row_labels;               // optional, one per x
  std::vector<fs::path> outputs;

  const Series& at(const std::string& name) const;
  double value(const std::string& summary_key) const;
};

// Throws if a series length differs from x or any value is non-finite.
void check_report(const AblationReport& report);

// `x,<series...>` rows, then `# key,value` summary lines.
void write_report_csv(const AblationReport& report, const fs::path& file);
void write_line_svg(const AblationReport& report, const std::vector<std::string>& series, const std::string& y_label,
                    const fs::path& file);
// Overlaid step histograms; every series is a count per bin (x = bin centres).
void write_histogram_svg(const AblationReport& report, const fs::path& file);

// Rank correlation with average ranks for ties. NaN when either side is constant.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

// --- SR inference and directory evaluation ---------------------------------

ImageTensor upscale(models::SrModelImpl& sr, const ImageTensor& lr);

// Loads an SR checkpoint (EMA weights) and writes <out_dir>/<stem>.png per LR
// image. Returns the written files in sorted input order.
std::vector<fs::path> sr_infer(const fs::path& sr_checkpoint, const fs::path& lr_dir, const fs::path& out_dir);

// Pairs every image in sr_dir with the ground-truth image of the same stem.
metrics::MetricReport evaluate_dir(const fs::path& sr_dir, const fs::path& gt_dir,
                                   const perceptual::PerceptualMetric& metric);

// A target domain with known ground truth: <dir>/gt/scene_XXXX.png and the
// degraded <dir>/lr/scene_XXXX.png (preset degradation, then downscale).
struct Domain {
  fs::path lr_dir;
  fs::path gt_dir;
};
Domain make_domain(const fs::path& dir, int count, int hr_size, int scale, const std::string& preset,
                   std::uint64_t seed);
// Same layout from existing HR images (cropped to a multiple of scale). An
// empty preset samples a random two-round recipe per image.
Domain make_domain_from(const fs::path& hr_dir, const fs::path& dir, int scale, const std::string& preset,
                        std::uint64_t seed);

// (lr, gt) images matched by stem.
std::vector<std::pair<ImageTensor, ImageTensor>> load_matched(const fs::path& lr_dir, const fs::path& gt_dir);

// --- interpolation study ------------------------------------------------------

// i * bicubic_up(x) + (1 - i) * y_gt, on [B,3,h,w] / [B,3,H,W] batches.
torch::Tensor interpolate_hr(const torch::Tensor& x_lr, const torch::Tensor& y_gt, double i);

struct SweepOptions {
  std::vector<double> ratios{0.0, 0.25, 0.5, 0.75, 1.0};
  // s for the with-s network is the noiseless controller of this stage,
  // driven by HQI(x, Y_i); the without-s network always sees s = 1.
  controller::Stage stage = controller::Stage::Finetune;
};

// Series psnr_with_s, psnr_without_s, lpips_with_s, lpips_without_s (means over
// the pairs); summary spearman_with_s / spearman_without_s between i and PSNR.
AblationReport interpolation_sweep(const std::vector<std::pair<ImageTensor, ImageTensor>>& pairs, LrnImpl& with_s,
                                   LrnImpl& without_s, const perceptual::PerceptualMetric& metric,
                                   const SweepOptions& opts = {});

// --- FAR distribution shift ---------------------------------------------------

struct Corpus {
  std::string name;
  fs::path dir;
};

// Writes a same-resolution degraded copy of clean_dir to <out_dir>/lr using a
// degradation preset; returns that directory.
fs::path degraded_corpus(const fs::path& clean_dir, const fs::path& out_dir, const std::string& preset,
                         std::uint64_t seed);

// Phi_far over non-overlapping patch x patch tiles of every image. Samples hold
// the per-patch values, series the bin counts on a shared range; summary has
// mean_<name> and patches_<name>. The first corpus is the reference one.
AblationReport far_shift_histogram(const std::vector<Corpus>& corpora, LrnImpl& lrn,
                                   const models::ReferenceEncoder& reference, int patch, int bins = 20);

// --- finetuning experiments ---------------------------------------------------

// Finetunes the stand-in under each controller rule with the same seed and
// reports held-out PSNR/SSIM/LPIPS of the kept checkpoint. Row 0 is the
// unadapted model.
AblationReport controller_variant_compare(const Config& cfg, const fs::path& lrn_checkpoint,
                                          const fs::path& sr_checkpoint, const Domain& domain,
                                          const std::vector<controller::Rule>& variants, const fs::path& out_dir);

// Controller on/off x FAR on/off: each row pretrains its own LRN on the
// manifest, finetunes the stand-in and evaluates it against the ground truth.
AblationReport ablation_table(const Config& cfg, const fs::path& manifest, const fs::path& sr_checkpoint,
                              const Domain& domain, const fs::path& out_dir);

// Finetunes with snapshots and scores held-out LPIPS at every evaluation.
// Summary: best_step, lpips_before, lpips_best, lpips_last, val_best, val_last.
AblationReport iteration_probe(const Config& cfg, const fs::path& lrn_checkpoint, const fs::path& sr_checkpoint,
                               const Domain& domain, const fs::path& out_dir);

std::string rule_label(controller::Rule rule);

}  // namespace hrssr::evalbench
