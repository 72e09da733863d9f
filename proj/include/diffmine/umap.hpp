#pragma once

#include <cstdint>
#include <utility>

#include "diffmine/tensor.hpp"

namespace diffmine {

// Neighborhood-preserving nonlinear reduction (UMAP): exact kNN, fuzzy
// membership graph, then attraction/repulsion SGD with negative sampling.
// Single-threaded and seeded, so output is a pure function of (input, opts).
struct UmapOptions {
    int target_dim = 32;
    int n_neighbors = 15;
    double min_dist = 0.1;
    double spread = 1.0;
    int n_epochs = 300;
    double learning_rate = 1.0;
    int negative_sample_rate = 5;
    uint64_t seed = 0;
    // Passthrough switch: requires input dim == target_dim and returns the
    // input unchanged.
    bool disabled = false;
};

Matrix reduce_dim(const Matrix& features, const UmapOptions& opts);

// Least-squares fit of 1/(1 + a*d^(2b)) to the (min_dist, spread) membership
// curve; exposed for testing.
std::pair<double, double> umap_fit_ab(double min_dist, double spread);

}  // namespace diffmine
