#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "diffmine/core_model.hpp"
#include "diffmine/tensor.hpp"
#include "diffmine/typicality.hpp"

namespace diffmine {

// Expert ROI boxes for one (image, disease) pair.
struct RoiAnnotation {
    std::string image_id;
    std::string disease;
    std::vector<Box> boxes;
};

// Separable Gaussian with a normalized kernel and reflected borders.
// sigma <= 0 is the identity.
Grid gaussian_blur(const Grid& m, double sigma);

// Per-latent typicality for a disease prompt against the null conditioning,
// interpolated to pixel resolution and blurred.
Grid disease_heatmap(const ImageRecord& x, const std::string& disease, const LabelSet& labels,
                     DenoiserBackend& backend, const NoiseSchedule& sched,
                     const TypicalityConfig& cfg, const TextEmbedder& embedder, double blur_sigma,
                     int n_threads = 1);

// Area under the precision-recall curve as average precision: thresholds at
// every distinct score descending, tied scores processed as one group,
// AP = sum over groups of (recall step) * precision. Pixels inside any ROI
// box are the positives. All-positive and all-negative masks are rejected.
double auc_pr(const Grid& heatmap, const RoiAnnotation& rois);

struct LocalizationRow {
    std::string disease;
    std::vector<double> mean_auc_pr;  // one entry per backend column
    int n_images = 0;
    int skipped = 0;
};

struct LocalizationTable {
    std::vector<std::string> backend_names;
    std::vector<LocalizationRow> per_disease;
    std::vector<double> overall;  // one entry per backend column

    std::string format() const;
};

// Mean AUC-PR per disease and overall; one column per supplied backend
// (pretrained vs finetuned when two are given). Images without an annotation
// for a disease are skipped and counted.
LocalizationTable evaluate_localization(const std::vector<ImageRecord>& test_set,
                                        const std::vector<RoiAnnotation>& annotations,
                                        const LabelSet& labels,
                                        const std::vector<DenoiserBackend*>& backends,
                                        const std::vector<std::string>& backend_names,
                                        const NoiseSchedule& sched, const TypicalityConfig& cfg,
                                        const TextEmbedder& embedder, double blur_sigma,
                                        int n_threads = 1);

// Delimited text table: image_id <tab> disease <tab> x <tab> y <tab> w <tab> h,
// one box per line; boxes of the same (image, disease) pair are merged.
std::vector<RoiAnnotation> load_roi_table(const std::filesystem::path& path);
void save_roi_table(const std::filesystem::path& path, const std::vector<RoiAnnotation>& rois);

}  // namespace diffmine
