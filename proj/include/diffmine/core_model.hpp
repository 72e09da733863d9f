#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "diffmine/tensor.hpp"

namespace diffmine {

enum class Split { train, mine, eval };

std::string split_name(Split s);
Split split_from_name(const std::string& s);

// One labeled image; the unit of dataset ingestion. Pixel values live in
// [0,1] with 1 or 3 channels.
struct ImageRecord {
    std::string id;
    Tensor pixels;
    std::string label;
    Split split = Split::train;
    std::string file;  // source path, informational

    void validate() const;
};

// Class vocabulary plus the prompt templates of a dataset. domain_template
// holds exactly one "{}" placeholder; null_template is a fixed string and may
// be empty.
struct LabelSet {
    std::vector<std::string> labels;
    std::string domain_template;
    std::string null_template;

    void validate() const;
    bool has(const std::string& label) const;
    int index_of(const std::string& label) const;  // -1 if absent
};

// With a label: domain_template with the placeholder substituted. Without:
// null_template verbatim.
std::string render_prompt(const LabelSet& labels, const std::optional<std::string>& label);

struct Conditioning {
    std::string text;
    std::vector<double> embedding;
    bool is_null = false;
};

// Maps prompt text to the conditioning vector a backend consumes.
struct TextEmbedder {
    virtual ~TextEmbedder() = default;
    virtual int dim() const = 0;
    virtual std::vector<double> embed(const std::string& text) const = 0;
};

// Deterministic stand-in for a learned text encoder: a seeded pseudo-random
// unit vector per distinct string.
class HashTextEmbedder : public TextEmbedder {
public:
    explicit HashTextEmbedder(int dim, uint64_t seed = 0) : dim_(dim), seed_(seed) {}
    int dim() const override { return dim_; }
    std::vector<double> embed(const std::string& text) const override;

private:
    int dim_;
    uint64_t seed_;
};

Conditioning make_conditioning(const LabelSet& labels, const std::optional<std::string>& label,
                               const TextEmbedder& embedder);

// Eq-literal mixing uses (1 - sqrt(alpha_bar)) on the noise; the variance
// preserving form uses sqrt(1 - alpha_bar). Both are kept selectable.
enum class ScheduleForm { paper_literal, standard_variance_preserving };

struct NoiseSchedule {
    ScheduleForm form = ScheduleForm::standard_variance_preserving;
    std::string name = "custom";
    std::function<double(double)> alpha_bar;

    double signal_coeff(double t) const;  // sqrt(alpha_bar(t))
    double noise_coeff(double t) const;   // form-dependent coefficient on eps

    // Checks alpha_bar(0) == 1, monotone non-increasing on a sample grid,
    // alpha_bar(1) in [0, 1). Throws std::invalid_argument on violation.
    void validate(int grid_points = 257) const;

    static NoiseSchedule cosine(ScheduleForm form = ScheduleForm::standard_variance_preserving);
    // alpha_bar(t) = 1 - t. Handy in tests: any target alpha_bar value is
    // reachable by picking t directly.
    static NoiseSchedule linear(ScheduleForm form = ScheduleForm::standard_variance_preserving);
    static NoiseSchedule named(const std::string& name,
                               ScheduleForm form = ScheduleForm::standard_variance_preserving);
};

// h x w x d grid in the space the denoiser operates on. scale_factor is the
// pixel-to-latent resolution ratio per axis (1 for pixel-space backends).
struct LatentImage {
    Tensor values;
    int scale_factor = 1;
};

// Denoiser plus autoencoder pair behind the estimation code. Implementations
// declare via concurrent_predict() whether predict may be called from several
// threads at once; every caller must also work with a serialized backend.
struct DenoiserBackend {
    virtual ~DenoiserBackend() = default;
    // Predicted noise for a noised latent at fractional timestep t.
    virtual LatentImage predict(const LatentImage& noised, double t, const Conditioning& cond) = 0;
    virtual LatentImage encode(const Tensor& pixels);
    virtual Tensor decode(const LatentImage& latent);
    virtual int cond_dim() const = 0;
    virtual bool concurrent_predict() const { return false; }
    // Stable identifier folded into cache keys; must change when the model
    // parameters change.
    virtual std::string id() const = 0;
};

LatentImage forward_noise(const LatentImage& x, const LatentImage& eps, double t,
                          const NoiseSchedule& sched);

// Per-location squared prediction error, summed over channels, so that the
// sum over the map equals the scalar squared-error norm.
struct LossMap {
    Grid values;
};

LossMap loss_map(const LatentImage& x, const LatentImage& eps, double t, const Conditioning& cond,
                 DenoiserBackend& backend, const NoiseSchedule& sched,
                 const std::string& image_id = {});

}  // namespace diffmine
