#pragma once

#include <cstdint>
#include <string>

#include "diffmine/core_model.hpp"
#include "diffmine/tensor.hpp"

namespace diffmine {

// Monte-Carlo settings for the typicality estimator. The default t range is
// the restricted [0.1, 0.7]; paired sampling reuses the same (eps, t) draw
// for both conditionings of a sample.
struct TypicalityConfig {
    double t_min = 0.1;
    double t_max = 0.7;
    int n_samples = 32;
    uint64_t seed = 0;
    bool paired = true;

    void validate() const;
    // Cache key component: digests the config, the schedule and the backend
    // identity. Anything that changes the estimate changes this hash.
    std::string config_hash(const std::string& backend_id, const NoiseSchedule& sched) const;
};

// Pixel-resolution typicality field of one (image, label) pair.
struct TypicalityMap {
    Grid values;
    std::string image_id;
    std::string label;
    int n_samples = 0;
    std::string config_hash;
};

enum class UpsampleAlign {
    // Output samples at pixel centers, edges clamped. Preserves the mean
    // exactly for integer factors; the default on the estimation path.
    half_pixel,
    // Endpoints of the output grid coincide with the input corners.
    corners,
};

Grid upsample_map(const Grid& m, int scale_factor,
                  UpsampleAlign align = UpsampleAlign::half_pixel);

struct TypicalityResult {
    double scalar = 0.0;
    TypicalityMap map;
};

// Mean over n_samples draws of [loss(x,eps,t,null) - loss(x,eps,t,cond)] per
// latent location, upsampled to pixel resolution. Draws are derived from
// (seed, content hash, sample index), so results are independent of
// evaluation order and of the worker count, and identical pixel content
// yields identical estimates.
TypicalityResult estimate_typicality(const ImageRecord& x, const Conditioning& cond,
                                     const Conditioning& null_cond, DenoiserBackend& backend,
                                     const NoiseSchedule& sched, const TypicalityConfig& cfg,
                                     int n_threads = 1);

}  // namespace diffmine
