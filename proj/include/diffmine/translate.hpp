#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "diffmine/core_model.hpp"
#include "diffmine/feature_cluster.hpp"
#include "diffmine/patch_miner.hpp"
#include "diffmine/typicality.hpp"
#include "diffmine/umap.hpp"

namespace diffmine {

// Label-to-label image translation behind an interface; the production
// translator (feature-injection diffusion translation) lives out of process,
// the implementations here are deterministic stand-ins.
struct TranslationBackend {
    virtual ~TranslationBackend() = default;
    virtual Tensor translate(const Tensor& pixels, const std::string& source_label,
                             const std::string& target_label) = 0;
    virtual std::string id() const = 0;
    virtual bool concurrent() const { return true; }
};

struct IdentityTranslator : TranslationBackend {
    Tensor translate(const Tensor& pixels, const std::string&, const std::string&) override {
        return pixels;
    }
    std::string id() const override { return "identity"; }
};

// Tints a fixed horizontal stripe with a deterministic per-label color; a
// synthetic translator with an exact output oracle.
class StripeTintTranslator : public TranslationBackend {
public:
    StripeTintTranslator(int stripe_y0, int stripe_h, double strength = 0.5)
        : y0_(stripe_y0), h_(stripe_h), strength_(strength) {}
    Tensor translate(const Tensor& pixels, const std::string& source_label,
                     const std::string& target_label) override;
    std::string id() const override { return "stripe-tint"; }

    static double label_tint(const std::string& label);

private:
    int y0_, h_;
    double strength_;
};

// Directory store of translated images, keyed (image_id, source, target);
// layout <image_id>/<source>__<target>.png plus a manifest.
class ParallelStore {
public:
    explicit ParallelStore(std::filesystem::path dir);

    const std::filesystem::path& dir() const { return dir_; }
    std::filesystem::path entry_path(const std::string& image_id, const std::string& source,
                                     const std::string& target) const;
    bool has(const std::string& image_id, const std::string& source,
             const std::string& target) const;
    Tensor load(const std::string& image_id, const std::string& source,
                const std::string& target) const;
    void put(const std::string& image_id, const std::string& source, const std::string& target,
             const Tensor& pixels) const;

    void write_manifest(const std::vector<std::array<std::string, 4>>& rows) const;
    std::filesystem::path manifest_path() const { return dir_ / "manifest.tsv"; }

private:
    std::filesystem::path dir_;
};

struct ParallelBuildReport {
    int expected = 0;
    int written = 0;
    int reused = 0;
    int failed = 0;
    std::vector<std::string> failures;

    bool complete() const { return failed == 0; }
};

// Every image translated to every label (self-translation included, through
// the backend). Failures are recorded per (image, target) and skipped.
ParallelBuildReport build_parallel_dataset(const std::vector<ImageRecord>& images,
                                           const LabelSet& labels, TranslationBackend& backend,
                                           const ParallelStore& store, int n_threads = 1);

// Median over the label set of per-label typicality values. Every label must
// be present.
double co_typicality(const std::map<std::string, double>& per_label, const LabelSet& labels);

// One source patch with its translations to every label.
struct TranslationSequence {
    PatchRef source;
    std::string source_label;
    std::map<std::string, double> per_label_typicality;
    double co_typicality = 0.0;
    std::vector<double> features;  // |C| x reduced-dim, label order
};

struct SequenceCluster {
    int cluster_id = 0;
    double median_co_typicality = 0.0;
    std::vector<int> members;  // indices into sequences, distance-ranked
};

struct SequenceMiningResult {
    std::vector<TranslationSequence> sequences;  // ranked by co-typicality
    std::vector<SequenceCluster> clusters;       // ranked by median co-typicality
    int excluded_incomplete = 0;
    int feature_dim = 0;
};

// Scores every inherited patch box of every source image across all label
// translations, ranks by co-typicality, embeds the top_n sequences as
// concatenations of per-variant reduced features and clusters them.
SequenceMiningResult mine_sequences(const ParallelStore& store,
                                    const std::vector<ImageRecord>& sources,
                                    const std::map<std::string, std::vector<PatchRef>>& boxes,
                                    const LabelSet& labels, DenoiserBackend& backend,
                                    const NoiseSchedule& sched, const TypicalityConfig& cfg,
                                    const TextEmbedder& text_embedder,
                                    FeatureEmbedder& feature_embedder, const UmapOptions& reducer,
                                    int top_n, int k, uint64_t seed, int n_threads = 1);

double box_mean(const Grid& g, const Box& b);

}  // namespace diffmine
