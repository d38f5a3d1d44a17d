// Synthetic scene generator: textured box-in-skybox geometry sampled into
// pixel-aligned Gaussian maps from orbiting context cameras, plus held-out
// target views rendered from the uncorrupted scene.

#pragma once

#include "airsplat/scene.hpp"

namespace airsplat {

// Deterministic in (config, seed). A fraction floater_fraction of primitives
// (exactly floor(f * V * H * W)) is displaced along its own camera ray.
// Floater cells are chosen so that, for a noiseless teacher on the freshly
// generated scene: every floater has a valid partner projection with
// normalized error above the L_geo clamp (rating far below 1), and no
// non-floater's bilinear sample ever touches a floater cell or shifts the
// pair's median depth, so every valid non-floater keeps rating exactly 1.
Scene generate_scene(const SceneConfig& config, uint64_t seed);

}  // namespace airsplat
