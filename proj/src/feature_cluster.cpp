#include "diffmine/feature_cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "diffmine/concurrency.hpp"
#include "diffmine/rng.hpp"

namespace diffmine {

std::vector<double> FeatureEmbedder::embed(const Tensor& image, const Box& box, double t) {
    return embed_patch(crop(image, box), t);
}

std::vector<double> IdentityEmbedder::embed_patch(const Tensor& patch_pixels, double /*t*/) {
    if (patch_pixels.w != pw_ || patch_pixels.h != ph_ || patch_pixels.c != c_)
        throw std::invalid_argument("IdentityEmbedder: crop shape does not match declared size");
    return patch_pixels.v;
}

Matrix embed_patches(const std::vector<PatchRef>& patches,
                     const std::function<const Tensor&(const std::string&)>& image_lookup,
                     FeatureEmbedder& embedder, double t, int n_threads) {
    Matrix out(static_cast<int>(patches.size()), embedder.dim());
    parallel_for(static_cast<int>(patches.size()), n_threads, [&](int i) {
        const PatchRef& p = patches[size_t(i)];
        std::vector<double> f;
        try {
            f = embedder.embed(image_lookup(p.image_id), p.box, t);
        } catch (const std::exception& e) {
            throw std::runtime_error("embed_patches: failed for patch of image " + p.image_id +
                                     " at (" + std::to_string(p.box.x0) + "," +
                                     std::to_string(p.box.y0) + "): " + e.what());
        }
        if (static_cast<int>(f.size()) != out.cols)
            throw std::runtime_error("embed_patches: embedder returned wrong dimension for image " +
                                     p.image_id);
        std::copy(f.begin(), f.end(), out.row(i));
    });
    return out;
}

namespace {

double sq_dist(const double* a, const double* b, int d) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        s += diff * diff;
    }
    return s;
}

}  // namespace

KmeansResult kmeans(const Matrix& features, int k, uint64_t seed, int max_iters) {
    const int n = features.rows, d = features.cols;
    if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
    if (n < k)
        throw std::invalid_argument("kmeans: " + std::to_string(n) + " rows < k=" +
                                    std::to_string(k));

    Rng rng(mix64(seed, 0x6b6d65616e73ULL));
    KmeansResult res;
    res.centroids = Matrix(k, d);

    // k-means++ seeding.
    std::vector<int> chosen;
    chosen.push_back(rng.uniform_int(n));
    std::vector<double> dist2(size_t(n), std::numeric_limits<double>::max());
    while (static_cast<int>(chosen.size()) < k) {
        const double* last = features.row(chosen.back());
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            dist2[size_t(i)] = std::min(dist2[size_t(i)], sq_dist(features.row(i), last, d));
            total += dist2[size_t(i)];
        }
        int pick;
        if (total <= 0.0) {
            pick = rng.uniform_int(n);
        } else {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (int i = 0; i < n; ++i) {
                acc += dist2[size_t(i)];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        }
        chosen.push_back(pick);
    }
    for (int c = 0; c < k; ++c)
        std::copy(features.row(chosen[size_t(c)]), features.row(chosen[size_t(c)]) + d,
                  res.centroids.row(c));

    res.assignments.assign(size_t(n), -1);
    std::vector<int> counts(size_t(k), 0);

    for (int iter = 0; iter < max_iters; ++iter) {
        // Assignment step (ties to the lowest centroid index).
        bool changed = false;
        double objective = 0.0;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double best_d = sq_dist(features.row(i), res.centroids.row(0), d);
            for (int c = 1; c < k; ++c) {
                const double dd = sq_dist(features.row(i), res.centroids.row(c), d);
                if (dd < best_d) {
                    best_d = dd;
                    best = c;
                }
            }
            objective += best_d;
            if (res.assignments[size_t(i)] != best) {
                res.assignments[size_t(i)] = best;
                changed = true;
            }
        }
        res.objective_history.push_back(objective);
        res.iterations = iter + 1;
        if (!changed) break;

        // Update step.
        std::fill(res.centroids.v.begin(), res.centroids.v.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (int i = 0; i < n; ++i) {
            const int c = res.assignments[size_t(i)];
            counts[size_t(c)]++;
            double* cr = res.centroids.row(c);
            const double* fr = features.row(i);
            for (int j = 0; j < d; ++j) cr[j] += fr[j];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[size_t(c)] > 0) {
                const double inv = 1.0 / counts[size_t(c)];
                double* cr = res.centroids.row(c);
                for (int j = 0; j < d; ++j) cr[j] *= inv;
            }
        }
        // Re-seed empty clusters from the farthest point (lowest index wins
        // among equals), one point per empty cluster.
        for (int c = 0; c < k; ++c) {
            if (counts[size_t(c)] > 0) continue;
            int far_i = -1;
            double far_d = -1.0;
            for (int i = 0; i < n; ++i) {
                const int a = res.assignments[size_t(i)];
                if (counts[size_t(a)] <= 1) continue;  // keep donor clusters non-empty
                const double dd = sq_dist(features.row(i), res.centroids.row(a), d);
                if (dd > far_d) {
                    far_d = dd;
                    far_i = i;
                }
            }
            if (far_i < 0) continue;
            counts[size_t(res.assignments[size_t(far_i)])]--;
            res.assignments[size_t(far_i)] = c;
            counts[size_t(c)] = 1;
            std::copy(features.row(far_i), features.row(far_i) + d, res.centroids.row(c));
        }
    }
    return res;
}

std::vector<ClusterSummary> rank_clusters(const std::vector<int>& assignments,
                                          const Matrix& features, const Matrix& centroids,
                                          const std::vector<PatchRef>& patches) {
    if (assignments.size() != patches.size())
        throw std::invalid_argument("rank_clusters: assignments do not cover all patches");
    if (features.rows != static_cast<int>(patches.size()) || features.cols != centroids.cols)
        throw std::invalid_argument("rank_clusters: feature matrix shape mismatch");
    const int k = centroids.rows;
    for (int a : assignments)
        if (a < 0 || a >= k) throw std::invalid_argument("rank_clusters: assignment out of range");

    std::vector<ClusterSummary> clusters;
    clusters.reserve(size_t(k));
    for (int c = 0; c < k; ++c) {
        ClusterSummary cs;
        cs.cluster_id = c;
        cs.centroid.assign(centroids.row(c), centroids.row(c) + centroids.cols);

        std::vector<std::pair<double, int>> members;  // (centroid distance, input index)
        std::vector<double> scores;
        for (size_t i = 0; i < patches.size(); ++i) {
            if (assignments[i] != c) continue;
            members.push_back({sq_dist(features.row(static_cast<int>(i)), centroids.row(c),
                                       centroids.cols),
                               static_cast<int>(i)});
            scores.push_back(patches[i].score);
        }
        if (members.empty()) continue;
        // Ascending distance; equal distances keep input (manifest) order.
        std::stable_sort(members.begin(), members.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        for (const auto& [dist, idx] : members) {
            cs.member_rows.push_back(idx);
            cs.members.push_back(patches[size_t(idx)]);
        }
        cs.median_typicality = median(scores);
        clusters.push_back(std::move(cs));
    }
    // Descending median typicality; ties keep cluster id order.
    std::stable_sort(clusters.begin(), clusters.end(), [](const auto& a, const auto& b) {
        return a.median_typicality > b.median_typicality;
    });
    return clusters;
}

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median: empty input");
    std::sort(values.begin(), values.end());
    const size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

Matrix l2_normalize_rows(Matrix m) {
    for (int i = 0; i < m.rows; ++i) {
        double* r = m.row(i);
        double norm2 = 0.0;
        for (int j = 0; j < m.cols; ++j) norm2 += r[j] * r[j];
        if (norm2 > 0.0) {
            const double inv = 1.0 / std::sqrt(norm2);
            for (int j = 0; j < m.cols; ++j) r[j] *= inv;
        }
    }
    return m;
}

}  // namespace diffmine
