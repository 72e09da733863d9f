// Independent test oracles: small brute-force implementations kept separate
// from the library code paths they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include "diffmine/patch_miner.hpp"
#include "diffmine/tensor.hpp"

namespace oracles {

using diffmine::Box;
using diffmine::Grid;

// Direct per-output-pixel bilinear interpolation, corner-aligned.
inline Grid bilinear_corners(const Grid& in, int factor) {
    const int oh = in.h * factor, ow = in.w * factor;
    Grid out(oh, ow);
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
            const double sy = oh == 1 ? 0.0 : double(oy) * (in.h - 1) / double(oh - 1);
            const double sx = ow == 1 ? 0.0 : double(ox) * (in.w - 1) / double(ow - 1);
            const int y0 = std::min(int(std::floor(sy)), in.h - 1);
            const int x0 = std::min(int(std::floor(sx)), in.w - 1);
            const int y1 = std::min(y0 + 1, in.h - 1);
            const int x1 = std::min(x0 + 1, in.w - 1);
            const double fy = sy - y0, fx = sx - x0;
            out.at(oy, ox) = (1 - fy) * ((1 - fx) * in.at(y0, x0) + fx * in.at(y0, x1)) +
                             fy * ((1 - fx) * in.at(y1, x0) + fx * in.at(y1, x1));
        }
    return out;
}

// Average precision by explicit re-counting at every distinct threshold.
inline double brute_force_average_precision(const std::vector<double>& scores,
                                            const std::vector<char>& positive) {
    std::vector<double> thresholds(scores);
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    const long long total_pos = std::count(positive.begin(), positive.end(), char(1));
    double ap = 0.0, prev_recall = 0.0;
    for (double th : thresholds) {
        long long tp = 0, fp = 0;
        for (size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] >= th) (positive[i] ? tp : fp)++;
        }
        const double recall = double(tp) / double(total_pos);
        const double precision = double(tp) / double(tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

// Best total score over all subsets of <= k pairwise non-overlapping boxes.
inline double exhaustive_best_selection(const std::vector<std::pair<Box, double>>& cands,
                                        int k) {
    const int n = static_cast<int>(cands.size());
    double best = 0.0;
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
        if (__builtin_popcount(mask) > k) continue;
        bool ok = true;
        double total = 0.0;
        for (int i = 0; i < n && ok; ++i) {
            if (!(mask & (1u << i))) continue;
            total += cands[size_t(i)].second;
            for (int j = i + 1; j < n && ok; ++j)
                if ((mask & (1u << j)) && cands[size_t(i)].first.intersects(cands[size_t(j)].first))
                    ok = false;
        }
        if (ok) best = std::max(best, total);
    }
    return best;
}

// Direct O(n^2 k^2) 2D Gaussian convolution with symmetric reflection.
inline Grid reference_gaussian_blur(const Grid& in, double sigma) {
    if (sigma <= 0) return in;
    const int radius = std::max(1, int(std::ceil(3.0 * sigma)));
    const int ks = 2 * radius + 1;
    std::vector<double> kernel(size_t(ks) * ks);
    double sum = 0.0;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
            const double v = std::exp(-0.5 * (dy * dy + dx * dx) / (sigma * sigma));
            kernel[size_t(dy + radius) * ks + (dx + radius)] = v;
            sum += v;
        }
    for (auto& v : kernel) v /= sum;
    auto reflect = [](int i, int n) {
        if (n == 1) return 0;
        const int period = 2 * n;
        i = ((i % period) + period) % period;
        return i < n ? i : period - 1 - i;
    };
    Grid out(in.h, in.w);
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x) {
            double s = 0.0;
            for (int dy = -radius; dy <= radius; ++dy)
                for (int dx = -radius; dx <= radius; ++dx)
                    s += kernel[size_t(dy + radius) * ks + (dx + radius)] *
                         in.at(reflect(y + dy, in.h), reflect(x + dx, in.w));
            out.at(y, x) = s;
        }
    return out;
}

inline double median_oracle(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace oracles
