#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "diffmine/core_model.hpp"
#include "diffmine/feature_cluster.hpp"

namespace diffmine {

// A denoiser with directly accessible parameters and analytic gradients of
// the reconstruction loss.
struct TrainableDenoiser : DenoiserBackend {
    virtual size_t param_count() const = 0;
    virtual std::vector<double>& params() = 0;
    virtual const std::vector<double>& params() const = 0;
    // Squared prediction error summed over locations and channels for one
    // already-noised sample; accumulates d(loss)/d(params) into *grad when
    // given. The trainer owns the (eps, t) draws and the forward noising.
    virtual double sample_loss(const Tensor& noised, const Tensor& eps, double t,
                               const std::vector<double>& cond,
                               std::vector<double>* grad) const = 0;
    virtual void save(const std::filesystem::path& path) const = 0;
    virtual void load(const std::filesystem::path& path) = 0;
};

// Small pixel-space convolutional noise predictor: two hidden tanh layers
// with additive timestep and conditioning injection after the first
// convolution, plus a time-gated residual path from the input (the per-t
// noise gain is learned directly there). CPU-trainable in minutes; all
// oracles stay exact because encode/decode are the identity.
class ConvDenoiser : public TrainableDenoiser {
public:
    struct Config {
        int channels = 1;
        int hidden = 16;
        int cond_dim = 16;
        uint64_t init_seed = 1;
    };

    explicit ConvDenoiser(const Config& cfg);

    // DenoiserBackend
    LatentImage predict(const LatentImage& noised, double t, const Conditioning& cond) override;
    int cond_dim() const override { return cfg_.cond_dim; }
    bool concurrent_predict() const override { return true; }
    std::string id() const override;

    // TrainableDenoiser
    size_t param_count() const override { return params_.size(); }
    std::vector<double>& params() override { return params_; }
    const std::vector<double>& params() const override { return params_; }
    double sample_loss(const Tensor& noised, const Tensor& eps, double t,
                       const std::vector<double>& cond, std::vector<double>* grad) const override;
    void save(const std::filesystem::path& path) const override;
    void load(const std::filesystem::path& path) override;

    const Config& config() const { return cfg_; }

    // Hidden activations for feature extraction.
    struct FeatureMaps {
        Tensor h1;
        Tensor h2;
    };
    FeatureMaps feature_maps(const Tensor& z, double t, const std::vector<double>& cond) const;

    Tensor forward(const Tensor& z, double t, const std::vector<double>& cond) const;

private:
    struct Offsets {
        size_t w1, b1, wt, wc, w2, b2, wc2, w3, b3, sk, total;
    };
    static Offsets layout(const Config& cfg);

    Config cfg_;
    Offsets off_;
    std::vector<double> params_;
};

// Pooled hidden activations of a ConvDenoiser at a fixed timestep: box means
// of both hidden layers plus 2x2 quadrant means of the second. Plays the
// diffusion-feature role for patch clustering.
class ConvFeatureEmbedder : public FeatureEmbedder {
public:
    ConvFeatureEmbedder(const ConvDenoiser& net, const NoiseSchedule& sched,
                        const Conditioning& cond, uint64_t seed);

    int dim() const override { return 6 * net_.config().hidden; }
    std::vector<double> embed(const Tensor& image, const Box& box, double t) override;
    std::vector<double> embed_patch(const Tensor& patch_pixels, double t) override;

private:
    const ConvDenoiser& net_;
    NoiseSchedule sched_;
    Conditioning cond_;
    uint64_t seed_;
};

}  // namespace diffmine
