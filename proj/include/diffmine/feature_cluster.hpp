#pragma once

#include <functional>
#include <string>
#include <vector>

#include "diffmine/patch_miner.hpp"
#include "diffmine/tensor.hpp"

namespace diffmine {

// Patch descriptor extractor. The default path feeds the full image and
// pools over the box; crop-only embedders implement embed_patch and inherit
// the cropping adapter.
struct FeatureEmbedder {
    virtual ~FeatureEmbedder() = default;
    virtual int dim() const = 0;
    virtual std::vector<double> embed_patch(const Tensor& patch_pixels, double t) = 0;
    virtual std::vector<double> embed(const Tensor& image, const Box& box, double t);
};

// Flattened raw pixels of a fixed-size crop; the test embedder.
class IdentityEmbedder : public FeatureEmbedder {
public:
    IdentityEmbedder(int patch_w, int patch_h, int channels)
        : pw_(patch_w), ph_(patch_h), c_(channels) {}
    int dim() const override { return pw_ * ph_ * c_; }
    std::vector<double> embed_patch(const Tensor& patch_pixels, double t) override;

private:
    int pw_, ph_, c_;
};

// Row i holds the embedding of patches[i]; image pixels come from the lookup.
Matrix embed_patches(const std::vector<PatchRef>& patches,
                     const std::function<const Tensor&(const std::string&)>& image_lookup,
                     FeatureEmbedder& embedder, double t = 0.161, int n_threads = 1);

struct KmeansResult {
    std::vector<int> assignments;
    Matrix centroids;
    int iterations = 0;
    // Objective (sum of squared distances to assigned centroid) after every
    // assignment step; non-increasing.
    std::vector<double> objective_history;
    double objective() const {
        return objective_history.empty() ? 0.0 : objective_history.back();
    }
};

// Lloyd iterations from a k-means++ start with a fixed seed. Converged when
// assignments are stable or after max_iters. Empty clusters are re-seeded
// from the point farthest from its assigned centroid.
KmeansResult kmeans(const Matrix& features, int k, uint64_t seed, int max_iters = 300);

// A ranked group of patches: members ordered by ascending centroid distance.
struct ClusterSummary {
    int cluster_id = 0;
    std::vector<PatchRef> members;
    std::vector<int> member_rows;  // row indices into the feature matrix
    std::vector<double> centroid;
    double median_typicality = 0.0;
};

// Clusters sorted by descending median member typicality; members within a
// cluster by ascending distance to the centroid; ties by input order.
// features holds one row per patch, aligned with assignments.
std::vector<ClusterSummary> rank_clusters(const std::vector<int>& assignments,
                                          const Matrix& features, const Matrix& centroids,
                                          const std::vector<PatchRef>& patches);

// Mean-of-middle-two convention for even counts.
double median(std::vector<double> values);

Matrix l2_normalize_rows(Matrix m);

}  // namespace diffmine
