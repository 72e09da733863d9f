#pragma once

#include <string>

#include "diffmine/core_model.hpp"

namespace diffmine {

// Analytic pixel-space backends (scale_factor 1) with closed-form loss maps.
// They anchor the estimation code to exact oracles.

// Prediction ignores the conditioning entirely: predict = 0.5 * noised.
// Under paired sampling the typicality of any image is exactly zero.
class BlindDenoiser : public DenoiserBackend {
public:
    explicit BlindDenoiser(int cond_dim = 4) : cond_dim_(cond_dim) {}
    LatentImage predict(const LatentImage& noised, double t, const Conditioning& cond) override;
    int cond_dim() const override { return cond_dim_; }
    bool concurrent_predict() const override { return true; }
    std::string id() const override { return "analytic-blind"; }

private:
    int cond_dim_;
};

// Recovers the exact noise from the noised input given the clean latent and
// the schedule, then adds a subclass-defined offset. predict - eps equals the
// offset exactly, so the loss map is the offset's squared magnitude.
class EpsilonOracleDenoiser : public DenoiserBackend {
public:
    EpsilonOracleDenoiser(const Tensor& clean_pixels, const NoiseSchedule& sched, int cond_dim = 4);

    void set_clean(const Tensor& clean_pixels);

    LatentImage predict(const LatentImage& noised, double t, const Conditioning& cond) override;
    int cond_dim() const override { return cond_dim_; }
    bool concurrent_predict() const override { return true; }

protected:
    // Added to the recovered noise, same shape as the latent.
    virtual Tensor offset(const LatentImage& noised, double t, const Conditioning& cond) const = 0;

    Tensor clean_;
    NoiseSchedule sched_;
    int cond_dim_;
};

// offset = delta_null or delta_cond, constant over locations and channels.
class OffsetDenoiser : public EpsilonOracleDenoiser {
public:
    OffsetDenoiser(const Tensor& clean, const NoiseSchedule& sched, double delta_null,
                   double delta_cond, int cond_dim = 4)
        : EpsilonOracleDenoiser(clean, sched, cond_dim),
          delta_null_(delta_null),
          delta_cond_(delta_cond) {}
    std::string id() const override;

protected:
    Tensor offset(const LatentImage& noised, double t, const Conditioning& cond) const override;

    double delta_null_;
    double delta_cond_;
};

// offset = delta * t. The per-sample typicality depends on the sampled t, so
// Monte-Carlo estimates converge to the analytic integral over U[t_min,t_max].
class TScaledOffsetDenoiser : public OffsetDenoiser {
public:
    using OffsetDenoiser::OffsetDenoiser;
    std::string id() const override;

protected:
    Tensor offset(const LatentImage& noised, double t, const Conditioning& cond) const override;
};

// offset = delta + amp * eta(noised, t), with eta a deterministic pseudo-random
// field of the inputs. Both conditionings of a paired draw see the same eta,
// which is what paired sampling exploits.
class NoisyOffsetDenoiser : public OffsetDenoiser {
public:
    NoisyOffsetDenoiser(const Tensor& clean, const NoiseSchedule& sched, double delta_null,
                        double delta_cond, double noise_amp, int cond_dim = 4)
        : OffsetDenoiser(clean, sched, delta_null, delta_cond, cond_dim), amp_(noise_amp) {}
    std::string id() const override;

protected:
    Tensor offset(const LatentImage& noised, double t, const Conditioning& cond) const override;

private:
    double amp_;
};

}  // namespace diffmine
