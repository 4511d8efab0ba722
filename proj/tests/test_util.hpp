// Shared helpers for the test suites: micro-scale model configurations small
// enough to lift onto a tape, with non-degenerate branches for gradient tests.
#pragma once

#include "nslam/fields.hpp"
#include "nslam/model.hpp"
#include "nslam/rng.hpp"

inline nslam::ModelConfig micro_config() { return nslam::ModelConfig::micro(); }

// init_model leaves the fine/color branches exactly neutral; for gradient
// tests we want every path active.
inline void randomize_branches(nslam::SceneModel& m, uint64_t seed) {
    nslam::Rng rng(seed);
    for (auto& v : m.fine_grids.values) v = rng.uniform(-0.1, 0.1);
    for (auto& v : m.color_grids.values) v = rng.uniform(-0.1, 0.1);
    nslam::Rng r2 = rng.fork(1);
    m.decoder_fine.init_uniform_fan_in(r2);
    // keep the residual small so the SDF stays sphere-like
    for (auto& v : m.decoder_fine.params) v *= 0.1;
}

// One shared sphere pre-fit per test binary; the seed only varies the branch
// randomization (the pre-fit is the expensive part).
inline nslam::SceneModel micro_model(uint64_t seed, bool active_branches = true) {
    static const nslam::SceneModel base = nslam::init_model(micro_config(), 42);
    nslam::SceneModel m = base;
    if (active_branches) randomize_branches(m, seed + 17);
    return m;
}
