#include "diffmine/patch_miner.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace diffmine {

void MinerConfig::validate() const {
    if (patch_w <= 0 || patch_h <= 0) throw std::invalid_argument("MinerConfig: patch size <= 0");
    if (stride < 1) throw std::invalid_argument("MinerConfig: stride must be >= 1");
    if (per_image_k < 1) throw std::invalid_argument("MinerConfig: per_image_k must be >= 1");
    if (global_k < per_image_k)
        throw std::invalid_argument("MinerConfig: global_k must be >= per_image_k");
}

std::vector<std::pair<Box, double>> patch_scores(const TypicalityMap& map,
                                                 const MinerConfig& cfg) {
    cfg.validate();
    const Grid& g = map.values;
    if (cfg.patch_w > g.w || cfg.patch_h > g.h)
        throw std::invalid_argument("patch_scores: patch " + std::to_string(cfg.patch_w) + "x" +
                                    std::to_string(cfg.patch_h) + " larger than map " +
                                    std::to_string(g.w) + "x" + std::to_string(g.h));

    // Summed-area table; box means come out exact to fp rounding.
    std::vector<double> sat(size_t(g.h + 1) * (g.w + 1), 0.0);
    const auto sat_at = [&](int y, int x) -> double& { return sat[size_t(y) * (g.w + 1) + x]; };
    for (int y = 0; y < g.h; ++y)
        for (int x = 0; x < g.w; ++x)
            sat_at(y + 1, x + 1) =
                g.at(y, x) + sat_at(y, x + 1) + sat_at(y + 1, x) - sat_at(y, x);

    const double inv_area = 1.0 / (double(cfg.patch_w) * cfg.patch_h);
    std::vector<std::pair<Box, double>> out;
    for (int y0 = 0; y0 + cfg.patch_h <= g.h; y0 += cfg.stride) {
        for (int x0 = 0; x0 + cfg.patch_w <= g.w; x0 += cfg.stride) {
            const int y1 = y0 + cfg.patch_h, x1 = x0 + cfg.patch_w;
            const double s =
                sat_at(y1, x1) - sat_at(y0, x1) - sat_at(y1, x0) + sat_at(y0, x0);
            out.push_back({Box{x0, y0, cfg.patch_w, cfg.patch_h}, s * inv_area});
        }
    }
    return out;
}

std::vector<PatchRef> select_top_patches(const std::vector<std::pair<Box, double>>& scores, int k,
                                         const std::string& image_id, const std::string& label) {
    if (scores.empty()) throw std::invalid_argument("select_top_patches: no candidates");
    if (k < 1) throw std::invalid_argument("select_top_patches: k must be >= 1");

    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (scores[a].second != scores[b].second) return scores[a].second > scores[b].second;
        if (scores[a].first.y0 != scores[b].first.y0) return scores[a].first.y0 < scores[b].first.y0;
        return scores[a].first.x0 < scores[b].first.x0;
    });

    std::vector<PatchRef> kept;
    for (size_t idx : order) {
        if (static_cast<int>(kept.size()) >= k) break;
        const Box& b = scores[idx].first;
        bool clash = false;
        for (const auto& p : kept)
            if (p.box.intersects(b)) {
                clash = true;
                break;
            }
        if (!clash) kept.push_back({image_id, b, scores[idx].second, label});
    }
    return kept;
}

std::vector<PatchRef> global_top(const std::vector<std::vector<PatchRef>>& per_image,
                                 int global_k) {
    std::vector<PatchRef> pool;
    for (const auto& v : per_image) pool.insert(pool.end(), v.begin(), v.end());
    std::sort(pool.begin(), pool.end(), [](const PatchRef& a, const PatchRef& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.image_id != b.image_id) return a.image_id < b.image_id;
        if (a.box.y0 != b.box.y0) return a.box.y0 < b.box.y0;
        return a.box.x0 < b.box.x0;
    });
    if (static_cast<int>(pool.size()) > global_k) pool.resize(size_t(global_k));
    return pool;
}

bool any_overlap(const std::vector<PatchRef>& patches) {
    for (size_t i = 0; i < patches.size(); ++i)
        for (size_t j = i + 1; j < patches.size(); ++j)
            if (patches[i].box.intersects(patches[j].box)) return true;
    return false;
}

}  // namespace diffmine
