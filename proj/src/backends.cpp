#include "diffmine/backends.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "diffmine/rng.hpp"

namespace diffmine {

LatentImage BlindDenoiser::predict(const LatentImage& noised, double /*t*/,
                                   const Conditioning& /*cond*/) {
    LatentImage out = noised;
    for (auto& v : out.values.v) v *= 0.5;
    return out;
}

EpsilonOracleDenoiser::EpsilonOracleDenoiser(const Tensor& clean_pixels,
                                             const NoiseSchedule& sched, int cond_dim)
    : clean_(clean_pixels), sched_(sched), cond_dim_(cond_dim) {}

void EpsilonOracleDenoiser::set_clean(const Tensor& clean_pixels) { clean_ = clean_pixels; }

LatentImage EpsilonOracleDenoiser::predict(const LatentImage& noised, double t,
                                           const Conditioning& cond) {
    if (!noised.values.same_shape(clean_))
        throw std::runtime_error("EpsilonOracleDenoiser: noised shape differs from clean image");
    const double a = sched_.signal_coeff(t);
    const double b = sched_.noise_coeff(t);
    if (std::abs(b) < 1e-12)
        throw std::runtime_error("EpsilonOracleDenoiser: noise coefficient ~0 at t=" +
                                 std::to_string(t) + ", eps not recoverable");
    LatentImage out;
    out.scale_factor = noised.scale_factor;
    out.values = Tensor(noised.values.h, noised.values.w, noised.values.c);
    for (size_t i = 0; i < out.values.v.size(); ++i)
        out.values.v[i] = (noised.values.v[i] - a * clean_.v[i]) / b;
    const Tensor off = offset(noised, t, cond);
    for (size_t i = 0; i < out.values.v.size(); ++i) out.values.v[i] += off.v[i];
    return out;
}

std::string OffsetDenoiser::id() const {
    return "analytic-offset(" + std::to_string(delta_null_) + "," + std::to_string(delta_cond_) +
           ")";
}

Tensor OffsetDenoiser::offset(const LatentImage& noised, double /*t*/,
                              const Conditioning& cond) const {
    const double d = cond.is_null ? delta_null_ : delta_cond_;
    return Tensor(noised.values.h, noised.values.w, noised.values.c, d);
}

std::string TScaledOffsetDenoiser::id() const {
    return "analytic-tscaled(" + std::to_string(delta_null_) + "," + std::to_string(delta_cond_) +
           ")";
}

Tensor TScaledOffsetDenoiser::offset(const LatentImage& noised, double t,
                                     const Conditioning& cond) const {
    const double d = (cond.is_null ? delta_null_ : delta_cond_) * t;
    return Tensor(noised.values.h, noised.values.w, noised.values.c, d);
}

std::string NoisyOffsetDenoiser::id() const {
    return "analytic-noisy(" + std::to_string(delta_null_) + "," + std::to_string(delta_cond_) +
           "," + std::to_string(amp_) + ")";
}

Tensor NoisyOffsetDenoiser::offset(const LatentImage& noised, double t,
                                   const Conditioning& cond) const {
    const double d = cond.is_null ? delta_null_ : delta_cond_;
    uint64_t tb;
    static_assert(sizeof(tb) == sizeof(t));
    std::memcpy(&tb, &t, sizeof(tb));
    Rng rng(mix64(content_hash64(noised.values), tb));
    Tensor out(noised.values.h, noised.values.w, noised.values.c);
    for (auto& v : out.v) v = d + amp_ * rng.gaussian();
    return out;
}

}  // namespace diffmine
