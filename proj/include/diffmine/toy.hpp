#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffmine/core_model.hpp"
#include "diffmine/tensor.hpp"

namespace diffmine {

// Desk-scale labeled dataset: each class draws its own marker shape in a
// fixed region over label-independent background clutter, so the class label
// is informative exactly at the marker.
enum class MarkerShape { square, cross, circle, blob, none };

MarkerShape marker_shape_from_name(const std::string& name);

struct ToyDatasetSpec {
    int n_images = 1000;
    int image_size = 32;
    int channels = 1;
    std::vector<std::string> classes = {"square", "blob"};
    Box marker_region{20, 20, 8, 8};
    double noise_level = 0.03;
    int jitter = 0;          // max +-offset of the marker box per image
    int clutter_count = 3;   // random rectangles outside the marker region
    double clutter_amp = 0.45;

    void validate() const;
};

struct ToyDataset {
    std::vector<ImageRecord> records;
    // Actual marker box per record (zero-sized for the "none" class).
    std::vector<Box> marker_boxes;
    ToyDatasetSpec spec;
};

// Classes assigned round-robin; deterministic given seed. Pixels are
// quantized to 8-bit levels so that PNG round-trips are lossless.
ToyDataset generate_toy_dataset(const ToyDatasetSpec& spec, uint64_t seed);

}  // namespace diffmine
