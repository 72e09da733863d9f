#pragma once

#include <string>
#include <utility>
#include <vector>

#include "diffmine/tensor.hpp"
#include "diffmine/typicality.hpp"

namespace diffmine {

// A scored rectangular region of a specific image; the mining unit.
struct PatchRef {
    std::string image_id;
    Box box;
    double score = 0.0;
    std::string label;
};

struct MinerConfig {
    int patch_w = 64;
    int patch_h = 64;
    int stride = 16;
    int per_image_k = 5;
    int global_k = 1000;

    void validate() const;
};

// Mean typicality inside every stride-grid box, enumerated row-major.
std::vector<std::pair<Box, double>> patch_scores(const TypicalityMap& map,
                                                 const MinerConfig& cfg);

// Greedy by descending score; a candidate is kept iff its box shares no pixel
// with any previously kept box. Ties broken in scan order (y0, then x0).
// May return fewer than k.
std::vector<PatchRef> select_top_patches(const std::vector<std::pair<Box, double>>& scores, int k,
                                         const std::string& image_id, const std::string& label);

// Pool of per-image selections, sorted by descending score with ties broken
// by (image_id, y0, x0), truncated to global_k.
std::vector<PatchRef> global_top(const std::vector<std::vector<PatchRef>>& per_image,
                                 int global_k);

bool any_overlap(const std::vector<PatchRef>& patches);

}  // namespace diffmine
