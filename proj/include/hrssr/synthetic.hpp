#pragma once

#include <cstdint>
#include <filesystem>

#include "hrssr/image.hpp"

namespace hrssr::image {

// Procedural RGB scene (gradient background, striped textures, hard-edged
// shapes). Stand-in for natural HR imagery in toy experiments and tests;
// fully determined by the seed.
ImageTensor generate_scene(std::uint64_t seed, int height, int width);

// Writes `count` scenes as <dir>/scene_XXXX.png; returns number written.
int write_scene_set(const std::filesystem::path& dir, int count, int height, int width,
                    std::uint64_t seed);

}  // namespace hrssr::image
