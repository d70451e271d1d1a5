#include "hrssr/evalbench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "hrssr/checkpoint.hpp"
#include "hrssr/degrade.hpp"
#include "hrssr/far.hpp"
#include "hrssr/synthetic.hpp"
#include "hrssr/tensor_image.hpp"
#include "hrssr/train.hpp"

namespace hrssr::evalbench {

const Series& AblationReport::at(const std::string& name) const {
  for (const auto& s : series)
    if (s.name == name) return s;
  throw std::out_of_range("report " + experiment + " has no series " + name);
}

double AblationReport::value(const std::string& key) const {
  for (const auto& [k, v] : summary)
    if (k == key) return v;
  throw std::out_of_range("report " + experiment + " has no summary value " + key);
}

void check_report(const AblationReport& report) {
  for (const auto& s : report.series) {
    if (s.values.size() != report.x.size()) {
      throw std::logic_error("series " + s.name + " has " + std::to_string(s.values.size()) + " values for " +
                             std::to_string(report.x.size()) + " x positions");
    }
    for (double v : s.values)
      if (!std::isfinite(v)) throw std::runtime_error("non-finite value in series " + s.name);
  }
  for (double v : report.x)
    if (!std::isfinite(v)) throw std::runtime_error("non-finite x value");
  if (!report.row_labels.empty() && report.row_labels.size() != report.x.size()) {
    throw std::logic_error("row label count differs from x");
  }
}

void write_report_csv(const AblationReport& report, const fs::path& file) {
  check_report(report);
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << std::setprecision(10);
  if (!report.row_labels.empty()) out << "label,";
  out << report.x_label;
  for (const auto& s : report.series) out << ',' << s.name;
  out << '\n';
  for (std::size_t i = 0; i < report.x.size(); ++i) {
    if (!report.row_labels.empty()) out << report.row_labels[i] << ',';
    out << report.x[i];
    for (const auto& s : report.series) out << ',' << s.values[i];
    out << '\n';
  }
  for (const auto& [k, v] : report.summary) out << "# " << k << ',' << v << '\n';
}

namespace {

constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

struct Frame {
  double x0, x1, y0, y1;
  static constexpr double W = 640, H = 400, L = 70, R = 170, T = 30, B = 50;
  double px(double x) const { return L + (x1 > x0 ? (x - x0) / (x1 - x0) : 0.5) * (W - L - R); }
  double py(double y) const { return H - B - (y1 > y0 ? (y - y0) / (y1 - y0) : 0.5) * (H - T - B); }
};

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(4) << v;
  return s.str();
}

void svg_open(std::ostream& out, const Frame& f, const std::string& title, const std::string& xl,
              const std::string& yl) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << Frame::W << "\" height=\"" << Frame::H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << Frame::W / 2 << "\" y=\"18\" text-anchor=\"middle\">" << title << "</text>\n";
  const double xa = Frame::L, xb = Frame::W - Frame::R, ya = Frame::T, yb = Frame::H - Frame::B;
  out << "<path d=\"M" << xa << ',' << ya << " L" << xa << ',' << yb << " L" << xb << ',' << yb
      << "\" stroke=\"black\" fill=\"none\"/>\n";
  out << "<text x=\"" << xa << "\" y=\"" << yb + 16 << "\" text-anchor=\"middle\">" << fmt(f.x0) << "</text>\n"
      << "<text x=\"" << xb << "\" y=\"" << yb + 16 << "\" text-anchor=\"middle\">" << fmt(f.x1) << "</text>\n"
      << "<text x=\"" << xa - 6 << "\" y=\"" << yb << "\" text-anchor=\"end\">" << fmt(f.y0) << "</text>\n"
      << "<text x=\"" << xa - 6 << "\" y=\"" << ya + 10 << "\" text-anchor=\"end\">" << fmt(f.y1) << "</text>\n"
      << "<text x=\"" << (xa + xb) / 2 << "\" y=\"" << Frame::H - 12 << "\" text-anchor=\"middle\">" << xl
      << "</text>\n"
      << "<text x=\"16\" y=\"" << (ya + yb) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << (ya + yb) / 2 << ")\">" << yl << "</text>\n";
}

void svg_legend(std::ostream& out, std::size_t k, const std::string& name) {
  const double x = Frame::W - Frame::R + 12;
  const double y = Frame::T + 16 + 18 * static_cast<double>(k);
  out << "<line x1=\"" << x << "\" y1=\"" << y - 4 << "\" x2=\"" << x + 20 << "\" y2=\"" << y - 4
      << "\" stroke=\"" << kColors[k % 6] << "\" stroke-width=\"2\"/>\n"
      << "<text x=\"" << x + 26 << "\" y=\"" << y << "\">" << name << "</text>\n";
}

std::pair<double, double> padded_range(double lo, double hi) {
  if (!(hi > lo)) return {lo - 0.5, hi + 0.5};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

}  // namespace

void write_line_svg(const AblationReport& report, const std::vector<std::string>& names, const std::string& y_label,
                    const fs::path& file) {
  check_report(report);
  if (report.x.empty()) throw std::invalid_argument("nothing to plot");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& n : names) {
    for (double v : report.at(n).values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  const auto [y0, y1] = padded_range(lo, hi);
  const auto [xmin, xmax] = std::minmax_element(report.x.begin(), report.x.end());
  Frame f{*xmin, *xmax, y0, y1};
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  svg_open(out, f, report.experiment, report.x_label, y_label);
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto& s = report.at(names[k]);
    out << "<polyline fill=\"none\" stroke=\"" << kColors[k % 6] << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < report.x.size(); ++i) out << f.px(report.x[i]) << ',' << f.py(s.values[i]) << ' ';
    out << "\"/>\n";
    for (std::size_t i = 0; i < report.x.size(); ++i) {
      out << "<circle cx=\"" << f.px(report.x[i]) << "\" cy=\"" << f.py(s.values[i]) << "\" r=\"3\" fill=\""
          << kColors[k % 6] << "\"/>\n";
    }
    svg_legend(out, k, names[k]);
  }
  out << "</svg>\n";
}

void write_histogram_svg(const AblationReport& report, const fs::path& file) {
  check_report(report);
  if (report.x.size() < 2) throw std::invalid_argument("histogram needs at least two bins");
  const double width = report.x[1] - report.x[0];
  double hi = 0;
  for (const auto& s : report.series)
    for (double v : s.values) hi = std::max(hi, v);
  Frame f{report.x.front() - width / 2, report.x.back() + width / 2, 0.0, hi > 0 ? hi * 1.05 : 1.0};
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  svg_open(out, f, report.experiment, report.x_label, "patches");
  for (std::size_t k = 0; k < report.series.size(); ++k) {
    const auto& s = report.series[k];
    out << "<polyline fill=\"none\" stroke=\"" << kColors[k % 6] << "\" stroke-width=\"2\" points=\"";
    out << f.px(f.x0) << ',' << f.py(0) << ' ';
    for (std::size_t i = 0; i < report.x.size(); ++i) {
      const double a = report.x[i] - width / 2, b = report.x[i] + width / 2;
      out << f.px(a) << ',' << f.py(s.values[i]) << ' ' << f.px(b) << ',' << f.py(s.values[i]) << ' ';
    }
    out << f.px(f.x1) << ',' << f.py(0) << "\"/>\n";
    svg_legend(out, k, s.name);
  }
  out << "</svg>\n";
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman: need two equal series of length >= 2");
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0 || sbb == 0) return std::numeric_limits<double>::quiet_NaN();
  return sab / std::sqrt(saa * sbb);
}

// ---------------------------------------------------------------------------

ImageTensor upscale(models::SrModelImpl& sr, const ImageTensor& lr) {
  torch::NoGradGuard no_grad;
  auto y = sr.forward(to_tensor(lr).unsqueeze(0));
  return from_tensor(y.squeeze(0));
}

std::vector<fs::path> sr_infer(const fs::path& sr_checkpoint, const fs::path& lr_dir, const fs::path& out_dir) {
  const auto meta = read_checkpoint_meta(sr_checkpoint);
  if (meta.kind != "sr") throw std::runtime_error("architecture mismatch: " + sr_checkpoint.string() + " is not an SR checkpoint");
  auto sr = build_sr(meta.arch);
  load_checkpoint(sr_checkpoint, *sr, true);
  sr->eval();
  const auto files = image::list_images(lr_dir);
  if (files.empty()) throw std::runtime_error("no LR images in " + lr_dir.string());
  const int scale = sr->config().scale;
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  for (const auto& f : files) {
    const auto lr = image::load_image(f);
    const auto hr = upscale(*sr, lr);
    if (hr.height() != lr.height() * scale || hr.width() != lr.width() * scale) {
      throw std::runtime_error("scale mismatch producing " + f.filename().string());
    }
    written.push_back(out_dir / (f.stem().string() + ".png"));
    image::save_image(hr, written.back());
  }
  return written;
}

namespace {

std::map<std::string, fs::path> by_stem(const fs::path& dir) {
  std::map<std::string, fs::path> m;
  for (const auto& f : image::list_images(dir)) m.emplace(f.stem().string(), f);
  return m;
}

}  // namespace

metrics::MetricReport evaluate_dir(const fs::path& sr_dir, const fs::path& gt_dir,
                                   const perceptual::PerceptualMetric& metric) {
  if (!fs::is_directory(sr_dir)) throw std::runtime_error("SR directory not found: " + sr_dir.string());
  if (!fs::is_directory(gt_dir)) throw std::runtime_error("ground-truth directory not found: " + gt_dir.string());
  const auto gts = by_stem(gt_dir);
  const auto outputs = image::list_images(sr_dir);
  if (outputs.empty()) throw std::runtime_error("no images in " + sr_dir.string());
  metrics::MetricReport report;
  report.perceptual_backend = metric.name();
  for (const auto& f : outputs) {
    const auto it = gts.find(f.stem().string());
    if (it == gts.end()) throw std::runtime_error("missing ground truth for " + f.filename().string());
    const auto a = image::load_image(f);
    const auto b = image::load_image(it->second);
    if (a.height() != b.height() || a.width() != b.width()) {
      throw std::runtime_error("size mismatch between " + f.string() + " and " + it->second.string());
    }
    report.rows.push_back({f.filename().string(), metrics::psnr(a, b), metrics::ssim(a, b),
                           perceptual::perceptual_distance(metric, a, b)});
  }
  metrics::finalize_mean(report);
  return report;
}

Domain make_domain_from(const fs::path& hr_dir, const fs::path& dir, int scale, const std::string& preset,
                        std::uint64_t seed) {
  const auto files = image::list_images(hr_dir);
  if (files.empty()) throw std::runtime_error("no HR images in " + hr_dir.string());
  Domain d{dir / "lr", dir / "gt"};
  fs::create_directories(d.lr_dir);
  fs::create_directories(d.gt_dir);
  for (std::size_t i = 0; i < files.size(); ++i) {
    const auto rs = degrade::derive_seed(seed, i);
    const auto recipe = preset.empty() ? degrade::sample_recipe(rs, scale) : degrade::preset(preset, scale, rs);
    const auto gt = degrade::crop_to_multiple(image::load_image(files[i]), scale);
    const auto name = files[i].stem().string() + ".png";
    image::save_image(gt, d.gt_dir / name);
    image::save_image(degrade::apply_recipe(gt, recipe), d.lr_dir / name);
  }
  return d;
}

Domain make_domain(const fs::path& dir, int count, int hr_size, int scale, const std::string& preset,
                   std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("domain needs at least one image");
  if (hr_size % scale != 0) throw std::invalid_argument("domain image size must be a multiple of the scale");
  image::write_scene_set(dir / "gt", count, hr_size, hr_size, seed);
  return make_domain_from(dir / "gt", dir, scale, preset, seed);
}

std::vector<std::pair<ImageTensor, ImageTensor>> load_matched(const fs::path& lr_dir, const fs::path& gt_dir) {
  const auto gts = by_stem(gt_dir);
  std::vector<std::pair<ImageTensor, ImageTensor>> out;
  for (const auto& f : image::list_images(lr_dir)) {
    const auto it = gts.find(f.stem().string());
    if (it == gts.end()) throw std::runtime_error("missing ground truth for " + f.filename().string());
    out.emplace_back(image::load_image(f), image::load_image(it->second));
  }
  if (out.empty()) throw std::runtime_error("no LR images in " + lr_dir.string());
  return out;
}

// ---------------------------------------------------------------------------

torch::Tensor interpolate_hr(const torch::Tensor& x_lr, const torch::Tensor& y_gt, double i) {
  if (!(i >= 0.0 && i <= 1.0)) throw std::invalid_argument("interpolation ratio must be in [0,1]");
  if (i == 0.0) return y_gt.clone();
  auto up = bicubic_batch(x_lr, static_cast<int>(y_gt.size(2)), static_cast<int>(y_gt.size(3))).to(y_gt.dtype());
  if (i == 1.0) return up;
  return up * i + y_gt * (1.0 - i);
}

AblationReport interpolation_sweep(const std::vector<std::pair<ImageTensor, ImageTensor>>& pairs, LrnImpl& with_s,
                                   LrnImpl& without_s, const perceptual::PerceptualMetric& metric,
                                   const SweepOptions& opts) {
  if (pairs.empty()) throw std::invalid_argument("interpolation sweep needs at least one pair");
  for (double i : opts.ratios)
    if (!(i >= 0.0 && i <= 1.0)) throw std::invalid_argument("interpolation ratio must be in [0,1]");
  torch::NoGradGuard no_grad;
  with_s.eval();
  without_s.eval();
  controller::ControllerOptions copts;
  copts.noise = false;

  AblationReport r;
  r.experiment = "interpolation";
  r.x_label = "ratio";
  r.x = opts.ratios;
  Series pw{"psnr_with_s", {}}, po{"psnr_without_s", {}}, lw{"lpips_with_s", {}}, lo{"lpips_without_s", {}};
  Series sw{"s_with", {}};
  for (double i : opts.ratios) {
    double psnr_w = 0, psnr_o = 0, lp_w = 0, lp_o = 0, s_mean = 0;
    for (const auto& [lr, gt] : pairs) {
      auto x = to_tensor(lr).unsqueeze(0);
      auto y = interpolate_hr(x, to_tensor(gt).unsqueeze(0), i);
      const auto h = controller::hqi(metric, x, y);
      auto s = controller::make_controller(opts.stage, h, with_s.embed_dim(), copts);
      auto rec_w = with_s.forward(x, y, s).clamp(0.0, 1.0);
      auto rec_o = without_s.forward(x, y, torch::ones({1, without_s.embed_dim()})).clamp(0.0, 1.0);
      psnr_w += metrics::psnr(lr, from_tensor(rec_w.squeeze(0)));
      psnr_o += metrics::psnr(lr, from_tensor(rec_o.squeeze(0)));
      lp_w += metric.distance(x, rec_w).item<double>();
      lp_o += metric.distance(x, rec_o).item<double>();
      s_mean += s.mean().item<double>();
    }
    const double n = static_cast<double>(pairs.size());
    pw.values.push_back(psnr_w / n);
    po.values.push_back(psnr_o / n);
    lw.values.push_back(lp_w / n);
    lo.values.push_back(lp_o / n);
    sw.values.push_back(s_mean / n);
  }
  r.series = {pw, po, lw, lo, sw};
  if (r.x.size() >= 2) {
    r.summary.emplace_back("spearman_with_s", spearman(r.x, pw.values));
    r.summary.emplace_back("spearman_without_s", spearman(r.x, po.values));
  }
  r.summary.emplace_back("pairs", static_cast<double>(pairs.size()));
  return r;
}

// ---------------------------------------------------------------------------

fs::path degraded_corpus(const fs::path& clean_dir, const fs::path& out_dir, const std::string& preset,
                         std::uint64_t seed) {
  const auto count = static_cast<int>(image::list_images(clean_dir).size());
  if (count == 0) throw std::runtime_error("empty corpus: " + clean_dir.string());
  degrade::synth_dataset(clean_dir, out_dir, 1, count, seed, {}, preset);
  return out_dir / "lr";
}

AblationReport far_shift_histogram(const std::vector<Corpus>& corpora, LrnImpl& lrn,
                                   const models::ReferenceEncoder& reference, int patch, int bins) {
  if (corpora.empty()) throw std::invalid_argument("far histogram needs at least one corpus");
  if (patch < 1 || bins < 2) throw std::invalid_argument("far histogram: patch >= 1 and bins >= 2 required");
  torch::NoGradGuard no_grad;
  lrn.eval();
  AblationReport r;
  r.experiment = "far-shift";
  r.x_label = "phi_far";
  for (const auto& c : corpora) {
    const auto files = image::list_images(c.dir);
    Series values{c.name, {}};
    for (const auto& f : files) {
      const auto img = image::load_image(f);
      std::vector<ImageTensor> tiles;
      for (int t = 0; t + patch <= img.height(); t += patch)
        for (int l = 0; l + patch <= img.width(); l += patch) tiles.push_back(image::crop_patch(img, t, l, patch));
      if (tiles.empty()) continue;
      auto phi = far::phi_far(to_batch(tiles), *lrn.e_img, reference, *lrn.maps).contiguous();
      for (std::int64_t k = 0; k < phi.size(0); ++k) values.values.push_back(phi[k].item<double>());
    }
    if (values.values.empty()) throw std::runtime_error("empty corpus (no full patches): " + c.dir.string());
    r.samples.push_back(std::move(values));
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : r.samples)
    for (double v : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double width = (hi - lo) / bins;
  for (int b = 0; b < bins; ++b) r.x.push_back(lo + (b + 0.5) * width);
  for (const auto& s : r.samples) {
    Series counts{s.name, std::vector<double>(bins, 0.0)};
    for (double v : s.values) counts.values[std::clamp(static_cast<int>((v - lo) / width), 0, bins - 1)] += 1.0;
    r.series.push_back(std::move(counts));
    r.summary.emplace_back("mean_" + s.name,
                           std::accumulate(s.values.begin(), s.values.end(), 0.0) / static_cast<double>(s.values.size()));
    r.summary.emplace_back("patches_" + s.name, static_cast<double>(s.values.size()));
  }
  return r;
}

// ---------------------------------------------------------------------------

std::string rule_label(controller::Rule rule) {
  switch (rule) {
    case controller::Rule::Auto: return "auto";
    case controller::Rule::Hqi: return "hqi";
    case controller::Rule::OneMinusHqi: return "one-minus-hqi";
  }
  return "?";
}

namespace {

metrics::MetricRow score(const fs::path& checkpoint, const Domain& domain, const fs::path& out_dir,
                         const perceptual::PerceptualMetric& metric) {
  sr_infer(checkpoint, domain.lr_dir, out_dir);
  auto rep = evaluate_dir(out_dir, domain.gt_dir, metric);
  metrics::write_metric_csv(rep, out_dir.parent_path() / (out_dir.filename().string() + "_metrics.csv"));
  return rep.mean;
}

void push_metrics(AblationReport& r, const metrics::MetricRow& m) {
  r.series[0].values.push_back(m.psnr);
  r.series[1].values.push_back(m.ssim);
  r.series[2].values.push_back(m.lpips);
}

}  // namespace

AblationReport controller_variant_compare(const Config& cfg, const fs::path& lrn_checkpoint,
                                          const fs::path& sr_checkpoint, const Domain& domain,
                                          const std::vector<controller::Rule>& variants, const fs::path& out_dir) {
  if (variants.empty()) throw std::invalid_argument("no controller variants given");
  auto metric = perceptual::make_perceptual(cfg);
  AblationReport r;
  r.experiment = "controller-variants";
  r.x_label = "row";
  r.series = {{"psnr", {}}, {"ssim", {}}, {"lpips", {}}};
  r.x.push_back(0);
  r.row_labels.push_back("pretrained");
  push_metrics(r, score(sr_checkpoint, domain, out_dir / "pretrained", *metric));
  for (std::size_t k = 0; k < variants.size(); ++k) {
    const auto label = rule_label(variants[k]);
    Config c = cfg;
    c.set("controller.rule", label);
    c.set("controller.enabled", "true");
    const auto run_dir = out_dir / ("ft_" + std::to_string(k) + "_" + label);
    const auto res = train::finetune(c, lrn_checkpoint, sr_checkpoint, domain.lr_dir, run_dir);
    r.x.push_back(static_cast<double>(k + 1));
    r.row_labels.push_back(label);
    push_metrics(r, score(res.checkpoint, domain, run_dir / "sr", *metric));
  }
  return r;
}

AblationReport ablation_table(const Config& cfg, const fs::path& manifest, const fs::path& sr_checkpoint,
                              const Domain& domain, const fs::path& out_dir) {
  auto metric = perceptual::make_perceptual(cfg);
  const double far_pt = cfg.get_double("far.weight_pretrain", 0.1);
  const double far_ft = cfg.get_double("far.weight_finetune", 0.1);
  AblationReport r;
  r.experiment = "controller-far-ablation";
  r.x_label = "row";
  r.series = {{"psnr", {}}, {"ssim", {}}, {"lpips", {}}, {"controller", {}}, {"far", {}}};
  const std::pair<bool, bool> grid[] = {{false, false}, {true, false}, {false, true}, {true, true}};
  int row = 0;
  for (const auto& [use_s, use_far] : grid) {
    Config c = cfg;
    c.set("pretrain.model", "lrn");
    c.set("controller.enabled", use_s ? "true" : "false");
    c.set("far.weight_pretrain", use_far ? std::to_string(far_pt) : "0");
    c.set("far.weight_finetune", use_far ? std::to_string(far_ft) : "0");
    const std::string label = std::string(use_s ? "s" : "no-s") + "_" + (use_far ? "far" : "no-far");
    const auto run_dir = out_dir / label;
    const auto lrn = train::pretrain(c, manifest, run_dir / "pretrain");
    const auto ft = train::finetune(c, lrn.checkpoint, sr_checkpoint, domain.lr_dir, run_dir / "finetune");
    const auto m = score(ft.checkpoint, domain, run_dir / "sr", *metric);
    r.x.push_back(row++);
    r.row_labels.push_back(label);
    push_metrics(r, m);
    r.series[3].values.push_back(use_s ? 1 : 0);
    r.series[4].values.push_back(use_far ? 1 : 0);
  }
  return r;
}

AblationReport iteration_probe(const Config& cfg, const fs::path& lrn_checkpoint, const fs::path& sr_checkpoint,
                               const Domain& domain, const fs::path& out_dir) {
  auto metric = perceptual::make_perceptual(cfg);
  Config c = cfg;
  c.set("finetune.snapshots", "true");
  const auto run_dir = out_dir / "finetune";
  const auto res = train::finetune(c, lrn_checkpoint, sr_checkpoint, domain.lr_dir, run_dir);
  AblationReport r;
  r.experiment = "finetune-iterations";
  r.x_label = "step";
  Series lp{"lpips", {}}, val{"val_score", {}};
  for (const auto& row : res.rows) {
    if (!row.val_score) continue;
    char name[32];
    std::snprintf(name, sizeof(name), "step_%06d", row.step);
    const auto m = score(run_dir / "checkpoints" / (std::string(name) + ".pt"), domain, out_dir / "sr" / name, *metric);
    r.x.push_back(row.step);
    lp.values.push_back(m.lpips);
    val.values.push_back(*row.val_score);
  }
  if (r.x.empty()) throw std::runtime_error("finetuning produced no evaluations");
  const auto best = std::find(r.x.begin(), r.x.end(), static_cast<double>(res.best_step)) - r.x.begin();
  r.summary = {{"best_step", static_cast<double>(res.best_step)},
               {"lpips_before", lp.values.front()},
               {"lpips_best", lp.values[best]},
               {"lpips_last", lp.values.back()},
               {"val_best", res.best_val},
               {"val_last", val.values.back()}};
  r.series = {lp, val};
  return r;
}

}  // namespace hrssr::evalbench
