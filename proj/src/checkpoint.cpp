#include "hrssr/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace hrssr {

namespace {

torch::Tensor encode_string(const std::string& s) {
  auto t = torch::empty({static_cast<std::int64_t>(s.size())}, torch::kUInt8);
  std::memcpy(t.data_ptr<std::uint8_t>(), s.data(), s.size());
  return t;
}

std::string decode_string(const torch::Tensor& t) {
  auto c = t.contiguous();
  return {reinterpret_cast<const char*>(c.data_ptr<std::uint8_t>()), static_cast<std::size_t>(c.numel())};
}

// archive keys may not contain '.'
std::string archive_key(std::string name) {
  for (auto& ch : name)
    if (ch == '.') ch = '|';
  return name;
}

std::string require_string(torch::serialize::InputArchive& ar, const std::string& key,
                           const std::filesystem::path& file) {
  torch::Tensor t;
  if (!ar.try_read(key, t)) throw std::runtime_error("checkpoint " + file.string() + " lacks '" + key + "'");
  return decode_string(t);
}

std::int64_t require_int(torch::serialize::InputArchive& ar, const std::string& key,
                         const std::filesystem::path& file) {
  torch::Tensor t;
  if (!ar.try_read(key, t)) throw std::runtime_error("checkpoint " + file.string() + " lacks '" + key + "'");
  return t.item<std::int64_t>();
}

}  // namespace

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Config sr_architecture(const models::SrModelConfig& cfg) {
  Config a;
  a.set("model", "sr");
  a.set("sr.channels", std::to_string(cfg.channels));
  a.set("sr.blocks", std::to_string(cfg.blocks));
  a.set("scale", std::to_string(cfg.scale));
  return a;
}

Config lrn_architecture(const Config& cfg, const models::ReferenceEncoder& reference) {
  const auto ed = models::degradation_encoder_config_from(cfg);
  const auto ei = models::image_encoder_config_from(cfg);
  const auto rc = models::reconstructor_config_from(cfg);
  Config a;
  a.set("model", "lrn");
  a.set("edeg.channels", std::to_string(ed.channels));
  a.set("edeg.blocks", std::to_string(ed.blocks));
  a.set("edeg.blocks_per_stage", std::to_string(ed.blocks_per_stage));
  a.set("embed_dim", std::to_string(ed.embed_dim));
  a.set("eimg.channels", std::to_string(ei.channels));
  a.set("eimg.blocks", std::to_string(ei.blocks));
  a.set("recon.channels", std::to_string(rc.channels));
  a.set("recon.blocks", std::to_string(rc.blocks));
  a.set("scale", std::to_string(rc.scale));
  a.set("reference.mode", reference.name());
  a.set("reference.channels", std::to_string(reference.channels()));
  return a;
}

models::SrModel build_sr(const Config& arch) {
  if (arch.get_string("model", "") != "sr") throw std::runtime_error("architecture mismatch: not an SR model");
  return models::SrModel(models::sr_model_config_from(arch));
}

Lrn build_lrn(const Config& arch, const models::ReferenceEncoder& reference) {
  if (arch.get_string("model", "") != "lrn") throw std::runtime_error("architecture mismatch: not an LRN checkpoint");
  if (arch.get_string("reference.mode", "") != reference.name() ||
      arch.get_int("reference.channels", -1) != reference.channels()) {
    throw std::runtime_error("architecture mismatch: LRN was pretrained with reference encoder '" +
                             arch.get_string("reference.mode", "?") + "', current is '" + reference.name() + "'");
  }
  return make_lrn(arch, reference.channels());
}

void save_checkpoint(const std::filesystem::path& file, const CheckpointMeta& meta, torch::nn::Module& model,
                     const train::EmaShadow* ema, torch::optim::Optimizer* optimizer) {
  torch::serialize::OutputArchive ar;
  ar.write("meta_kind", encode_string(meta.kind));
  ar.write("meta_arch", encode_string(meta.arch.to_text()));
  ar.write("meta_step", torch::tensor(meta.step, torch::kInt64));
  ar.write("meta_seed", torch::tensor(static_cast<std::int64_t>(meta.seed), torch::kInt64));

  torch::serialize::OutputArchive model_ar;
  model.save(model_ar);
  ar.write("model", model_ar);

  if (ema != nullptr) {
    torch::serialize::OutputArchive ema_ar;
    std::string names;
    for (const auto& [name, t] : ema->entries()) {
      ema_ar.write(archive_key(name), t);
      names += name + "\n";
    }
    ema_ar.write("names", encode_string(names));
    ema_ar.write("decay", torch::tensor(ema->decay(), torch::kDouble));
    ar.write("ema", ema_ar);
  }
  if (optimizer != nullptr) {
    torch::serialize::OutputArchive opt_ar;
    optimizer->save(opt_ar);
    ar.write("optim", opt_ar);
  }
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  ar.save_to(file.string());
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& file) {
  if (!std::filesystem::exists(file)) throw std::runtime_error("checkpoint not found: " + file.string());
  torch::serialize::InputArchive ar;
  ar.load_from(file.string());
  CheckpointMeta meta;
  meta.kind = require_string(ar, "meta_kind", file);
  meta.arch = Config::parse(require_string(ar, "meta_arch", file));
  meta.step = require_int(ar, "meta_step", file);
  meta.seed = static_cast<std::uint64_t>(require_int(ar, "meta_seed", file));
  return meta;
}

CheckpointMeta load_checkpoint(const std::filesystem::path& file, torch::nn::Module& model, bool use_ema,
                               train::EmaShadow* ema, torch::optim::Optimizer* optimizer) {
  auto meta = read_checkpoint_meta(file);
  torch::serialize::InputArchive ar;
  ar.load_from(file.string());
  torch::serialize::InputArchive model_ar;
  if (!ar.try_read("model", model_ar)) throw std::runtime_error("checkpoint " + file.string() + " has no model");
  // Module::load replaces tensors without comparing shapes
  std::vector<std::pair<std::string, std::vector<std::int64_t>>> shapes;
  for (const auto& item : model.named_parameters()) shapes.emplace_back(item.key(), item.value().sizes().vec());
  for (const auto& item : model.named_buffers()) shapes.emplace_back(item.key(), item.value().sizes().vec());
  try {
    model.load(model_ar);
  } catch (const c10::Error& e) {
    throw std::runtime_error("architecture mismatch loading " + file.string() + ": " + e.what_without_backtrace());
  }
  auto params = model.named_parameters();
  auto buffers = model.named_buffers();
  for (const auto& [name, shape] : shapes) {
    const auto* t = params.find(name);
    if (t == nullptr) t = buffers.find(name);
    if (t == nullptr || t->sizes().vec() != shape) {
      throw std::runtime_error("architecture mismatch loading " + file.string() + ": tensor " + name);
    }
  }

  torch::serialize::InputArchive ema_ar;
  if (ar.try_read("ema", ema_ar)) {
    std::istringstream names(require_string(ema_ar, "names", file));
    std::vector<std::pair<std::string, torch::Tensor>> entries;
    for (std::string name; std::getline(names, name);) {
      torch::Tensor t;
      ema_ar.read(archive_key(name), t);
      entries.emplace_back(name, t);
    }
    torch::Tensor decay;
    ema_ar.read("decay", decay);
    if (ema != nullptr) *ema = train::EmaShadow(entries, decay.item<double>());
    if (use_ema) {
      torch::NoGradGuard no_grad;
      for (const auto& [name, t] : entries) {
        auto* p = params.find(name);
        if (p == nullptr || p->sizes() != t.sizes()) {
          throw std::runtime_error("architecture mismatch: EMA entry " + name + " in " + file.string());
        }
        p->copy_(t);
      }
    }
  }
  if (optimizer != nullptr) {
    torch::serialize::InputArchive opt_ar;
    if (ar.try_read("optim", opt_ar)) optimizer->load(opt_ar);
  }
  return meta;
}

}  // namespace hrssr
