#include "hrssr/cli.hpp"

#include <CLI11.hpp>

#include <ostream>
#include <sstream>
#include <stdexcept>

#include "hrssr/checkpoint.hpp"
#include "hrssr/config.hpp"
#include "hrssr/controller.hpp"
#include "hrssr/degrade.hpp"
#include "hrssr/evalbench.hpp"
#include "hrssr/losses.hpp"
#include "hrssr/run_manifest.hpp"
#include "hrssr/synthetic.hpp"
#include "hrssr/train.hpp"

namespace hrssr::cli {

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config_file;
  std::vector<std::string> overrides;
  bool dry_run = false;
};

Config effective_config(const Globals& g) {
  Config cfg = g.config_file.empty() ? Config{} : Config::load(g.config_file);
  for (const auto& a : g.overrides) cfg.set_assignment(a);
  return cfg;
}

void require_dir(const fs::path& p, const std::string& what) {
  if (!fs::is_directory(p)) throw std::runtime_error(what + " not found: " + p.string());
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw std::runtime_error(what + " not found: " + p.string());
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) v.push_back(std::stod(item));
  return v;
}

std::vector<std::string> split_names(const std::string& text) {
  std::vector<std::string> v;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) v.push_back(item);
  return v;
}

// Shared checks for anything that builds the LRN and its losses.
void validate_model_config(const Config& cfg) {
  models::reference_options_from(cfg);
  controller::controller_options_from(cfg);
  losses::loss_weights_from(cfg, controller::Stage::Pretrain);
  losses::loss_weights_from(cfg, controller::Stage::Finetune);
  models::degradation_encoder_config_from(cfg);
  models::image_encoder_config_from(cfg);
  models::reconstructor_config_from(cfg);
}

void record_backends(RunManifest& m, const Config& cfg) {
  m.set_backend("perceptual", cfg.get_string("perceptual.backend", "random-cos"));
  m.set_backend("reference", cfg.get_string("reference.mode", "random"));
  m.set_backend("torch_threads", std::to_string(torch::get_num_threads()));
}

void report_metrics(std::ostream& out, const metrics::MetricRow& mean) {
  out << "mean psnr " << mean.psnr << " dB, ssim " << mean.ssim << ", lpips " << mean.lpips << '\n';
}

void save_report(const evalbench::AblationReport& r, const fs::path& dir, RunManifest& m) {
  const auto csv = dir / (r.experiment + ".csv");
  evalbench::write_report_csv(r, csv);
  m.add_artifact(r.experiment + ".csv", csv);
}

evalbench::Domain domain_of(const std::string& lr_dir, const std::string& gt_dir) {
  require_dir(lr_dir, "LR directory");
  require_dir(gt_dir, "ground-truth directory");
  return {lr_dir, gt_dir};
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"hrssr: self-supervised real-world SR finetuning with HR-aware LR reconstruction", "hrssr"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_file, "key = value configuration file");
  app.add_option("--set", g.overrides, "override a configuration key (key=value); repeatable")->take_all();
  app.add_flag("--dry-run", g.dry_run, "validate configuration and inputs, write nothing");

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "degrade HR images into an LR training set with a manifest");
  std::string s_hr, s_out, s_preset;
  int s_scale = 4, s_count = 0, s_scenes = 0, s_size = 128;
  std::uint64_t s_seed = 0;
  synth->add_option("--hr-dir", s_hr, "directory of HR images");
  synth->add_option("--scenes", s_scenes, "generate this many procedural HR scenes into <out>/hr instead");
  synth->add_option("--scene-size", s_size, "side of generated scenes");
  synth->add_option("--out", s_out, "output directory")->required();
  synth->add_option("--scale", s_scale, "downscaling factor");
  synth->add_option("--count", s_count, "number of LR images (default: one per HR image)");
  synth->add_option("--seed", s_seed, "recipe seed");
  synth->add_option("--preset", s_preset, "fixed degradation: clean|blur2|noise15|jpeg40");
  bool s_domain = false;
  synth->add_flag("--domain", s_domain, "write matching <out>/lr and <out>/gt (one LR per HR image) for evaluation");

  auto* pre = app.add_subcommand("pretrain", "pretrain the LR reconstruction network (or the stand-in SR model)");
  std::string p_manifest, p_out;
  pre->add_option("--manifest", p_manifest, "dataset manifest from synth-data")->required();
  pre->add_option("--out", p_out, "run directory")->required();

  auto* fine = app.add_subcommand("finetune", "adapt an SR checkpoint to target-domain LR images");
  std::string f_lrn, f_sr, f_lr, f_out;
  fine->add_option("--lrn", f_lrn, "pretrained LRN checkpoint")->required();
  fine->add_option("--sr", f_sr, "SR checkpoint to adapt")->required();
  fine->add_option("--lr-dir", f_lr, "target-domain LR images")->required();
  fine->add_option("--out", f_out, "run directory")->required();

  auto* srcmd = app.add_subcommand("sr", "super-resolve a directory with an SR checkpoint (EMA weights)");
  std::string r_ckpt, r_lr, r_out;
  srcmd->add_option("--checkpoint", r_ckpt, "SR checkpoint")->required();
  srcmd->add_option("--lr-dir", r_lr, "LR images")->required();
  srcmd->add_option("--out", r_out, "output directory")->required();

  auto* eval = app.add_subcommand("evaluate", "PSNR/SSIM/LPIPS of SR outputs against ground truth");
  std::string e_sr, e_gt, e_out;
  eval->add_option("--sr-dir", e_sr, "SR outputs")->required();
  eval->add_option("--gt-dir", e_gt, "ground-truth images with matching names")->required();
  eval->add_option("--out", e_out, "directory for metrics.csv");

  auto* abl = app.add_subcommand("ablate", "ablation experiments");
  abl->require_subcommand(1);
  auto* interp = abl->add_subcommand("interp", "reconstruction quality over HR images interpolated toward f_up(x)");
  std::string i_with, i_without, i_lr, i_gt, i_out;
  interp->add_option("--with-s", i_with, "LRN pretrained with the controller")->required();
  interp->add_option("--without-s", i_without, "LRN pretrained without the controller")->required();
  interp->add_option("--lr-dir", i_lr, "LR images")->required();
  interp->add_option("--gt-dir", i_gt, "matching HR ground truth")->required();
  interp->add_option("--out", i_out, "run directory")->required();

  auto* hist = abl->add_subcommand("far-hist", "Phi_far distributions on clean and degraded corpora");
  std::string h_lrn, h_clean, h_out;
  hist->add_option("--lrn", h_lrn, "pretrained LRN checkpoint")->required();
  hist->add_option("--clean-dir", h_clean, "clean HR images")->required();
  hist->add_option("--out", h_out, "run directory")->required();

  auto* ctrl = abl->add_subcommand("controller", "finetune under n+HQI and n+1-HQI");
  std::string c_lrn, c_sr, c_lr, c_gt, c_out;
  ctrl->add_option("--lrn", c_lrn, "pretrained LRN checkpoint")->required();
  ctrl->add_option("--sr", c_sr, "SR checkpoint")->required();
  ctrl->add_option("--lr-dir", c_lr, "target-domain LR images")->required();
  ctrl->add_option("--gt-dir", c_gt, "held-out ground truth")->required();
  ctrl->add_option("--out", c_out, "run directory")->required();

  auto* table = abl->add_subcommand("table", "controller x FAR grid: pretrain, finetune and score each row");
  std::string t_manifest, t_sr, t_lr, t_gt, t_out;
  table->add_option("--manifest", t_manifest, "pretraining manifest")->required();
  table->add_option("--sr", t_sr, "SR checkpoint")->required();
  table->add_option("--lr-dir", t_lr, "target-domain LR images")->required();
  table->add_option("--gt-dir", t_gt, "held-out ground truth")->required();
  table->add_option("--out", t_out, "run directory")->required();

  auto* iters = abl->add_subcommand("iterations", "held-out LPIPS across finetuning iterations");
  std::string it_lrn, it_sr, it_lr, it_gt, it_out;
  iters->add_option("--lrn", it_lrn, "pretrained LRN checkpoint")->required();
  iters->add_option("--sr", it_sr, "SR checkpoint")->required();
  iters->add_option("--lr-dir", it_lr, "target-domain LR images")->required();
  iters->add_option("--gt-dir", it_gt, "held-out ground truth")->required();
  iters->add_option("--out", it_out, "run directory")->required();

  std::vector<std::string> args;
  for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return kExitUsage;
  }

  std::string command;
  for (int i = 1; i < argc; ++i) command += (i > 1 ? " " : "") + std::string(argv[i]);

  try {
    const Config cfg = effective_config(g);
    if (train::deterministic_mode()) torch::set_num_threads(1);

    if (synth->parsed()) {
      if (s_hr.empty() == (s_scenes == 0)) throw std::invalid_argument("give exactly one of --hr-dir and --scenes");
      if (!s_hr.empty()) require_dir(s_hr, "HR directory");
      if (g.dry_run) return out << "dry run ok\n", kExitOk;
      RunManifest m(s_out, command, cfg);
      m.set_seed("recipe", s_seed);
      fs::path hr = s_hr;
      if (s_scenes > 0) {
        hr = fs::path(s_out) / "hr";
        image::write_scene_set(hr, s_scenes, s_size, s_size, s_seed);
      }
      if (s_domain) {
        const auto d = evalbench::make_domain_from(hr, s_out, s_scale, s_preset, s_seed);
        m.add_artifact("lr", d.lr_dir);
        m.add_artifact("gt", d.gt_dir);
        m.finish(true);
        out << "wrote domain " << d.lr_dir.string() << " / " << d.gt_dir.string() << '\n';
        return kExitOk;
      }
      const int count = s_count > 0 ? s_count : static_cast<int>(image::list_images(hr).size());
      const auto manifest = degrade::synth_dataset(hr, s_out, s_scale, count, s_seed, {}, s_preset);
      m.add_artifact("manifest", manifest.location);
      m.finish(true);
      out << "wrote " << manifest.rows.size() << " pairs to " << manifest.location << '\n';
      return kExitOk;
    }

    if (pre->parsed()) {
      require_file(p_manifest, "manifest");
      const auto model = cfg.get_string("pretrain.model", "lrn");
      if (model == "lrn") validate_model_config(cfg);
      const int scale = model == "sr" ? models::sr_model_config_from(cfg).scale : static_cast<int>(cfg.get_int("scale", 4));
      const auto tc = train::train_config_from(cfg, "pretrain", scale);
      if (g.dry_run) return out << "dry run ok\n", kExitOk;
      RunManifest m(p_out, command, cfg);
      m.set_seed("pretrain", tc.seed);
      record_backends(m, cfg);
      try {
        const auto res = train::pretrain(cfg, p_manifest, p_out, [&](const train::LogRow& r) {
          if (r.step % tc.eval_every == 0) out << "step " << r.step << " rec " << r.loss_rec << " far " << r.loss_far << '\n';
        });
        m.add_checkpoint(model, res.checkpoint);
        m.add_artifact("log", res.log);
        m.finish(true);
        out << "checkpoint " << res.checkpoint.string() << '\n';
      } catch (const std::exception& e) {
        m.finish(false, e.what());
        throw;
      }
      return kExitOk;
    }

    if (fine->parsed()) {
      require_file(f_lrn, "LRN checkpoint");
      require_file(f_sr, "SR checkpoint");
      require_dir(f_lr, "LR directory");
      validate_model_config(cfg);
      const auto arch = read_checkpoint_meta(f_sr).arch;
      const auto tc = train::train_config_from(cfg, "finetune", static_cast<int>(arch.get_int("scale", 4)));
      if (g.dry_run) return out << "dry run ok\n", kExitOk;
      RunManifest m(f_out, command, cfg);
      m.set_seed("finetune", tc.seed);
      record_backends(m, cfg);
      m.add_checkpoint("lrn_input", f_lrn);
      m.add_checkpoint("sr_input", f_sr);
      try {
        const auto res = train::finetune(cfg, f_lrn, f_sr, f_lr, f_out, [&](const train::LogRow& r) {
          if (r.val_score) out << "step " << r.step << " val " << *r.val_score << '\n';
        });
        m.add_checkpoint("best", res.checkpoint);
        m.add_checkpoint("last", res.last_checkpoint);
        m.add_artifact("log", res.log);
        m.finish(true);
        out << "best step " << res.best_step << " (val " << res.best_val << "), checkpoint " << res.checkpoint.string()
            << '\n';
      } catch (const std::exception& e) {
        m.finish(false, e.what());
        throw;
      }
      return kExitOk;
    }

    if (srcmd->parsed()) {
      require_file(r_ckpt, "SR checkpoint");
      require_dir(r_lr, "LR directory");
      if (g.dry_run) return out << "dry run ok\n", kExitOk;
      const auto written = evalbench::sr_infer(r_ckpt, r_lr, r_out);
      out << "wrote " << written.size() << " images to " << r_out << '\n';
      return kExitOk;
    }

    if (eval->parsed()) {
      require_dir(e_sr, "SR directory");
      require_dir(e_gt, "ground-truth directory");
      auto metric = perceptual::make_perceptual(cfg);
      if (g.dry_run) return out << "dry run ok\n", kExitOk;
      const auto rep = evalbench::evaluate_dir(e_sr, e_gt, *metric);
      if (!e_out.empty()) {
        RunManifest m(e_out, command, cfg);
        m.set_backend("perceptual", rep.perceptual_backend);
        metrics::write_metric_csv(rep, fs::path(e_out) / "metrics.csv");
        m.add_artifact("metrics", fs::path(e_out) / "metrics.csv");
        m.finish(true);
      }
      report_metrics(out, rep.mean);
      return kExitOk;
    }

    if (interp->parsed()) {
      require_file(i_with, "with-s LRN checkpoint");
      require_file(i_without, "without-s LRN checkpoint");
      const auto pairs_dir = domain_of(i_lr, i_gt);
      evalbench::SweepOptions opts;
      if (cfg.has("ablate.ratios")) opts.ratios = parse_list(cfg.get_string("ablate.ratios", ""));
      if (g.dry_run) return out << "dry run ok\n", kExitOk;
      RunManifest m(i_out, command, cfg);
      record_backends(m, cfg);
      models::ReferenceEncoder reference(models::reference_options_from(cfg));
      auto metric = perceptual::make_perceptual(cfg);
      auto with_s = build_lrn(read_checkpoint_meta(i_with).arch, reference);
      auto without_s = build_lrn(read_checkpoint_meta(i_without).arch, reference);
      load_checkpoint(i_with, *with_s);
      load_checkpoint(i_without, *without_s);
      m.add_checkpoint("with_s", i_with);
      m.add_checkpoint("without_s", i_without);
      const auto r = evalbench::interpolation_sweep(evalbench::load_matched(pairs_dir.lr_dir, pairs_dir.gt_dir),
                                                    *with_s, *without_s, *metric, opts);
      save_report(r, i_out, m);
      evalbench::write_line_svg(r, {"psnr_with_s", "psnr_without_s"}, "PSNR(x, x_hat) dB", fs::path(i_out) / "psnr.svg");
      evalbench::write_line_svg(r, {"lpips_with_s", "lpips_without_s"}, "LPIPS(x, x_hat)", fs::path(i_out) / "lpips.svg");
      m.add_artifact("psnr.svg", fs::path(i_out) / "psnr.svg");
      m.add_artifact("lpips.svg", fs::path(i_out) / "lpips.svg");
      m.finish(true);
      out << "spearman(i, psnr): with s " << r.value("spearman_with_s") << ", without s "
          << r.value("spearman_without_s") << '\n';
      return kExitOk;
    }

    if (hist->parsed()) {
      require_file(h_lrn, "LRN checkpoint");
      require_dir(h_clean, "clean directory");
      const auto presets = split_names(cfg.get_string("ablate.presets", "blur2,noise15,jpeg40"));
      const int patch = static_cast<int>(cfg.get_int("ablate.patch", 32));
      for (const auto& p : presets) degrade::preset(p, 1);
      if (g.dry_run) return out << "dry run ok\n", kExitOk;
      RunManifest m(h_out, command, cfg);
      record_backends(m, cfg);
      const auto seed = static_cast<std::uint64_t>(cfg.get_int("seed", 0));
      m.set_seed("corpora", seed);
      models::ReferenceEncoder reference(models::reference_options_from(cfg));
      auto lrn = build_lrn(read_checkpoint_meta(h_lrn).arch, reference);
      load_checkpoint(h_lrn, *lrn);
      m.add_checkpoint("lrn", h_lrn);
      std::vector<evalbench::Corpus> corpora{{"clean", h_clean}};
      for (const auto& p : presets) {
        corpora.push_back({p, evalbench::degraded_corpus(h_clean, fs::path(h_out) / "corpora" / p, p, seed)});
      }
      const auto r = evalbench::far_shift_histogram(corpora, *lrn, reference, patch,
                                                    static_cast<int>(cfg.get_int("ablate.bins", 20)));
      save_report(r, h_out, m);
      evalbench::write_histogram_svg(r, fs::path(h_out) / "far_hist.svg");
      m.add_artifact("far_hist.svg", fs::path(h_out) / "far_hist.svg");
      m.finish(true);
      for (const auto& [k, v] : r.summary) out << k << ' ' << v << '\n';
      return kExitOk;
    }

    if (ctrl->parsed() || iters->parsed()) {
      const bool is_ctrl = ctrl->parsed();
      const auto& lrn = is_ctrl ? c_lrn : it_lrn;
      const auto& sr = is_ctrl ? c_sr : it_sr;
      const auto& run_dir = is_ctrl ? c_out : it_out;
      require_file(lrn, "LRN checkpoint");
      require_file(sr, "SR checkpoint");
      const auto domain = is_ctrl ? domain_of(c_lr, c_gt) : domain_of(it_lr, it_gt);
      validate_model_config(cfg);
      if (g.dry_run) return out << "dry run ok\n", kExitOk;
      RunManifest m(run_dir, command, cfg);
      record_backends(m, cfg);
      m.add_checkpoint("lrn", lrn);
      m.add_checkpoint("sr", sr);
      const auto r = is_ctrl ? evalbench::controller_variant_compare(
                                   cfg, lrn, sr, domain, {controller::Rule::Hqi, controller::Rule::OneMinusHqi}, run_dir)
                             : evalbench::iteration_probe(cfg, lrn, sr, domain, run_dir);
      save_report(r, run_dir, m);
      if (!is_ctrl) {
        evalbench::write_line_svg(r, {"lpips"}, "held-out LPIPS", fs::path(run_dir) / "lpips.svg");
        m.add_artifact("lpips.svg", fs::path(run_dir) / "lpips.svg");
      }
      m.finish(true);
      for (std::size_t i = 0; i < r.x.size(); ++i) {
        out << (r.row_labels.empty() ? std::to_string(static_cast<long long>(r.x[i])) : r.row_labels[i]);
        for (const auto& s : r.series) out << ' ' << s.name << ' ' << s.values[i];
        out << '\n';
      }
      return kExitOk;
    }

    if (table->parsed()) {
      require_file(t_manifest, "manifest");
      require_file(t_sr, "SR checkpoint");
      const auto domain = domain_of(t_lr, t_gt);
      validate_model_config(cfg);
      if (g.dry_run) return out << "dry run ok\n", kExitOk;
      RunManifest m(t_out, command, cfg);
      record_backends(m, cfg);
      m.add_checkpoint("sr", t_sr);
      const auto r = evalbench::ablation_table(cfg, t_manifest, t_sr, domain, t_out);
      save_report(r, t_out, m);
      m.finish(true);
      for (std::size_t i = 0; i < r.x.size(); ++i) {
        out << r.row_labels[i] << " psnr " << r.at("psnr").values[i] << " ssim " << r.at("ssim").values[i]
            << " lpips " << r.at("lpips").values[i] << '\n';
      }
      return kExitOk;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  err << "error: no subcommand\n";
  return kExitUsage;
}

}  // namespace hrssr::cli
