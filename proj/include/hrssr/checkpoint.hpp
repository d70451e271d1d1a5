#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <torch/torch.h>

#include "hrssr/config.hpp"
#include "hrssr/ema.hpp"
#include "hrssr/lrn.hpp"
#include "hrssr/models.hpp"

namespace hrssr {

// kind: "lrn" or "sr". `arch` holds only the keys needed to rebuild the
// network, so two checkpoints with the same arch text are interchangeable.
struct CheckpointMeta {
  std::string kind;
  Config arch;
  std::int64_t step = 0;
  std::uint64_t seed = 0;
};

Config sr_architecture(const models::SrModelConfig& cfg);
Config lrn_architecture(const Config& cfg, const models::ReferenceEncoder& reference);

models::SrModel build_sr(const Config& arch);
// Throws if the reference encoder does not match the recorded one.
Lrn build_lrn(const Config& arch, const models::ReferenceEncoder& reference);

// Single torch archive: metadata, model parameters, EMA shadow (optional)
// and optimizer state (optional).
void save_checkpoint(const std::filesystem::path& file, const CheckpointMeta& meta, torch::nn::Module& model,
                     const train::EmaShadow* ema = nullptr, torch::optim::Optimizer* optimizer = nullptr);

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& file);

// Loads the raw parameters, then (if present and `use_ema`) the EMA shadow on
// top. Restores optimizer/EMA state when pointers are given.
CheckpointMeta load_checkpoint(const std::filesystem::path& file, torch::nn::Module& model, bool use_ema = true,
                               train::EmaShadow* ema = nullptr, torch::optim::Optimizer* optimizer = nullptr);

std::string hex64(std::uint64_t v);

}  // namespace hrssr
