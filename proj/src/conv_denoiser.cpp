#include "diffmine/conv_denoiser.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "diffmine/rng.hpp"
#include "diffmine/sha256.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace diffmine {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

void time_features(double t, double tau[3]) {
    tau[0] = t;
    tau[1] = std::sin(kTwoPi * t);
    tau[2] = std::cos(kTwoPi * t);
}

// Basis of the learned per-channel input gain.
void skip_basis(const double tau[3], double basis[4]) {
    basis[0] = 1.0;
    basis[1] = tau[0];
    basis[2] = tau[1];
    basis[3] = tau[2];
}

// w layout: [cout][cin][3][3]; zero padding, stride 1.
void conv_fwd(const Tensor& in, const double* w, int cin, int cout, Tensor& out) {
    const int h = in.h, wd = in.w;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < wd; ++x) {
            for (int co = 0; co < cout; ++co) {
                double acc = 0.0;
                const double* wc = w + size_t(co) * cin * 9;
                for (int ci = 0; ci < cin; ++ci) {
                    const double* wk = wc + size_t(ci) * 9;
                    for (int dy = 0; dy < 3; ++dy) {
                        const int yy = y + dy - 1;
                        if (yy < 0 || yy >= h) continue;
                        for (int dx = 0; dx < 3; ++dx) {
                            const int xx = x + dx - 1;
                            if (xx < 0 || xx >= wd) continue;
                            acc += in.at(yy, xx, ci) * wk[dy * 3 + dx];
                        }
                    }
                }
                out.at(y, x, co) = acc;
            }
        }
    }
}

void conv_bwd_input(const Tensor& g, const double* w, int cin, int cout, Tensor& din) {
    const int h = g.h, wd = g.w;
    std::fill(din.v.begin(), din.v.end(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < wd; ++x) {
            for (int co = 0; co < cout; ++co) {
                const double gv = g.at(y, x, co);
                if (gv == 0.0) continue;
                const double* wc = w + size_t(co) * cin * 9;
                for (int ci = 0; ci < cin; ++ci) {
                    const double* wk = wc + size_t(ci) * 9;
                    for (int dy = 0; dy < 3; ++dy) {
                        const int yy = y + dy - 1;
                        if (yy < 0 || yy >= h) continue;
                        for (int dx = 0; dx < 3; ++dx) {
                            const int xx = x + dx - 1;
                            if (xx < 0 || xx >= wd) continue;
                            din.at(yy, xx, ci) += gv * wk[dy * 3 + dx];
                        }
                    }
                }
            }
        }
    }
}

void conv_bwd_weights(const Tensor& g, const Tensor& in, double* dw, double* db, int cin,
                      int cout) {
    const int h = g.h, wd = g.w;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < wd; ++x) {
            for (int co = 0; co < cout; ++co) {
                const double gv = g.at(y, x, co);
                if (gv == 0.0) continue;
                db[co] += gv;
                double* wc = dw + size_t(co) * cin * 9;
                for (int ci = 0; ci < cin; ++ci) {
                    double* wk = wc + size_t(ci) * 9;
                    for (int dy = 0; dy < 3; ++dy) {
                        const int yy = y + dy - 1;
                        if (yy < 0 || yy >= h) continue;
                        for (int dx = 0; dx < 3; ++dx) {
                            const int xx = x + dx - 1;
                            if (xx < 0 || xx >= wd) continue;
                            wk[dy * 3 + dx] += gv * in.at(yy, xx, ci);
                        }
                    }
                }
            }
        }
    }
}


// Input augmented with two normalized coordinate planes, so absolute
// position is available to the otherwise translation-equivariant stack.
Tensor with_coords(const Tensor& z) {
    Tensor out(z.h, z.w, z.c + 2);
    for (int y = 0; y < z.h; ++y)
        for (int x = 0; x < z.w; ++x) {
            for (int c = 0; c < z.c; ++c) out.at(y, x, c) = z.at(y, x, c);
            out.at(y, x, z.c) = z.h > 1 ? 2.0 * y / (z.h - 1) - 1.0 : 0.0;
            out.at(y, x, z.c + 1) = z.w > 1 ? 2.0 * x / (z.w - 1) - 1.0 : 0.0;
        }
    return out;
}

}  // namespace

ConvDenoiser::Offsets ConvDenoiser::layout(const Config& cfg) {
    Offsets o{};
    const size_t C = size_t(cfg.channels), F = size_t(cfg.hidden), E = size_t(cfg.cond_dim);
    o.w1 = 0;
    o.b1 = o.w1 + F * (C + 2) * 9;
    o.wt = o.b1 + F;
    o.wc = o.wt + F * 3;
    o.w2 = o.wc + F * E;
    o.b2 = o.w2 + F * F * 9;
    o.wc2 = o.b2 + F;
    o.w3 = o.wc2 + F * E;
    o.b3 = o.w3 + C * F * 9;
    o.sk = o.b3 + C;
    o.total = o.sk + C * 4;
    return o;
}

ConvDenoiser::ConvDenoiser(const Config& cfg) : cfg_(cfg), off_(layout(cfg)) {
    if (cfg.channels != 1 && cfg.channels != 3)
        throw std::invalid_argument("ConvDenoiser: channels must be 1 or 3");
    if (cfg.hidden < 1 || cfg.cond_dim < 1)
        throw std::invalid_argument("ConvDenoiser: hidden and cond_dim must be >= 1");
    params_.assign(off_.total, 0.0);
    Rng rng(mix64(cfg.init_seed, 0x636f6e76ULL));
    const double s1 = 1.0 / std::sqrt(double(cfg.channels + 2) * 9.0);
    const double s2 = 1.0 / std::sqrt(double(cfg.hidden) * 9.0);
    const double st = 0.3 / std::sqrt(3.0);
    const double sc = 0.3 / std::sqrt(double(cfg.cond_dim));
    for (size_t i = off_.w1; i < off_.b1; ++i) params_[i] = s1 * rng.gaussian();
    for (size_t i = off_.wt; i < off_.wc; ++i) params_[i] = st * rng.gaussian();
    for (size_t i = off_.wc; i < off_.w2; ++i) params_[i] = sc * rng.gaussian();
    for (size_t i = off_.wc2; i < off_.w3; ++i) params_[i] = sc * rng.gaussian();
    for (size_t i = off_.w2; i < off_.b2; ++i) params_[i] = s2 * rng.gaussian();
    for (size_t i = off_.w3; i < off_.b3; ++i) params_[i] = s2 * rng.gaussian();
}

Tensor ConvDenoiser::forward(const Tensor& z, double t, const std::vector<double>& cond) const {
    if (z.c != cfg_.channels)
        throw std::invalid_argument("ConvDenoiser: input has " + std::to_string(z.c) +
                                    " channels, expected " + std::to_string(cfg_.channels));
    if (static_cast<int>(cond.size()) != cfg_.cond_dim)
        throw std::invalid_argument("ConvDenoiser: conditioning dim " +
                                    std::to_string(cond.size()) + ", expected " +
                                    std::to_string(cfg_.cond_dim));
    const int F = cfg_.hidden, C = cfg_.channels, E = cfg_.cond_dim;
    const double* p = params_.data();
    double tau[3];
    time_features(t, tau);

    const Tensor zc = with_coords(z);
    Tensor h1(z.h, z.w, F);
    conv_fwd(zc, p + off_.w1, C + 2, F, h1);
    for (int f = 0; f < F; ++f) {
        double inj = p[off_.b1 + size_t(f)];
        for (int k = 0; k < 3; ++k) inj += p[off_.wt + size_t(f) * 3 + k] * tau[k];
        for (int e = 0; e < E; ++e) inj += p[off_.wc + size_t(f) * E + e] * cond[size_t(e)];
        for (int y = 0; y < z.h; ++y)
            for (int x = 0; x < z.w; ++x) h1.at(y, x, f) = std::tanh(h1.at(y, x, f) + inj);
    }

    Tensor h2(z.h, z.w, F);
    conv_fwd(h1, p + off_.w2, F, F, h2);
    for (int f = 0; f < F; ++f) {
        double inj2 = p[off_.b2 + size_t(f)];
        for (int e = 0; e < E; ++e) inj2 += p[off_.wc2 + size_t(f) * E + e] * cond[size_t(e)];
        for (int y = 0; y < z.h; ++y)
            for (int x = 0; x < z.w; ++x) h2.at(y, x, f) = std::tanh(h2.at(y, x, f) + inj2);
    }

    Tensor out(z.h, z.w, C);
    conv_fwd(h2, p + off_.w3, F, C, out);
    double basis[4];
    skip_basis(tau, basis);
    for (int c = 0; c < C; ++c) {
        const double b = p[off_.b3 + size_t(c)];
        double gain = 0.0;
        for (int k = 0; k < 4; ++k) gain += p[off_.sk + size_t(c) * 4 + k] * basis[k];
        for (int y = 0; y < z.h; ++y)
            for (int x = 0; x < z.w; ++x) out.at(y, x, c) += b + gain * z.at(y, x, c);
    }
    return out;
}

LatentImage ConvDenoiser::predict(const LatentImage& noised, double t, const Conditioning& cond) {
    LatentImage out;
    out.scale_factor = noised.scale_factor;
    out.values = forward(noised.values, t, cond.embedding);
    return out;
}

ConvDenoiser::FeatureMaps ConvDenoiser::feature_maps(const Tensor& z, double t,
                                                     const std::vector<double>& cond) const {
    // Re-runs the first two layers; fine at this scale.
    const int F = cfg_.hidden, C = cfg_.channels, E = cfg_.cond_dim;
    const double* p = params_.data();
    double tau[3];
    time_features(t, tau);

    FeatureMaps fm;
    const Tensor zc = with_coords(z);
    fm.h1 = Tensor(z.h, z.w, F);
    conv_fwd(zc, p + off_.w1, C + 2, F, fm.h1);
    for (int f = 0; f < F; ++f) {
        double inj = p[off_.b1 + size_t(f)];
        for (int k = 0; k < 3; ++k) inj += p[off_.wt + size_t(f) * 3 + k] * tau[k];
        for (int e = 0; e < E; ++e) inj += p[off_.wc + size_t(f) * E + e] * cond[size_t(e)];
        for (int y = 0; y < z.h; ++y)
            for (int x = 0; x < z.w; ++x) fm.h1.at(y, x, f) = std::tanh(fm.h1.at(y, x, f) + inj);
    }
    fm.h2 = Tensor(z.h, z.w, F);
    conv_fwd(fm.h1, p + off_.w2, F, F, fm.h2);
    for (int f = 0; f < F; ++f) {
        double inj2 = p[off_.b2 + size_t(f)];
        for (int e = 0; e < E; ++e) inj2 += p[off_.wc2 + size_t(f) * E + e] * cond[size_t(e)];
        for (int y = 0; y < z.h; ++y)
            for (int x = 0; x < z.w; ++x) fm.h2.at(y, x, f) = std::tanh(fm.h2.at(y, x, f) + inj2);
    }
    return fm;
}

double ConvDenoiser::sample_loss(const Tensor& noised, const Tensor& eps, double t,
                                 const std::vector<double>& cond,
                                 std::vector<double>* grad) const {
    if (!noised.same_shape(eps))
        throw std::invalid_argument("sample_loss: noised/eps shape mismatch");
    const int F = cfg_.hidden, C = cfg_.channels, E = cfg_.cond_dim;
    const double* p = params_.data();
    double tau[3];
    time_features(t, tau);

    const Tensor& z = noised;
    const Tensor zc = with_coords(z);

    Tensor h1(z.h, z.w, F);
    conv_fwd(zc, p + off_.w1, C + 2, F, h1);
    for (int f = 0; f < F; ++f) {
        double inj = p[off_.b1 + size_t(f)];
        for (int k = 0; k < 3; ++k) inj += p[off_.wt + size_t(f) * 3 + k] * tau[k];
        for (int e = 0; e < E; ++e) inj += p[off_.wc + size_t(f) * E + e] * cond[size_t(e)];
        for (int y = 0; y < z.h; ++y)
            for (int xx = 0; xx < z.w; ++xx) h1.at(y, xx, f) = std::tanh(h1.at(y, xx, f) + inj);
    }
    Tensor h2(z.h, z.w, F);
    conv_fwd(h1, p + off_.w2, F, F, h2);
    for (int f = 0; f < F; ++f) {
        double inj2 = p[off_.b2 + size_t(f)];
        for (int e = 0; e < E; ++e) inj2 += p[off_.wc2 + size_t(f) * E + e] * cond[size_t(e)];
        for (int y = 0; y < z.h; ++y)
            for (int xx = 0; xx < z.w; ++xx) h2.at(y, xx, f) = std::tanh(h2.at(y, xx, f) + inj2);
    }
    Tensor out(z.h, z.w, C);
    conv_fwd(h2, p + off_.w3, F, C, out);
    double basis[4];
    skip_basis(tau, basis);
    double loss = 0.0;
    Tensor g3(z.h, z.w, C);
    for (int c = 0; c < C; ++c) {
        double gain = 0.0;
        for (int k = 0; k < 4; ++k) gain += p[off_.sk + size_t(c) * 4 + k] * basis[k];
        for (int y = 0; y < z.h; ++y)
            for (int xx = 0; xx < z.w; ++xx) {
                const double r = out.at(y, xx, c) + p[off_.b3 + size_t(c)] +
                                 gain * z.at(y, xx, c) - eps.at(y, xx, c);
                loss += r * r;
                g3.at(y, xx, c) = 2.0 * r;
            }
    }
    if (!grad) return loss;
    if (grad->size() != params_.size())
        throw std::invalid_argument("sample_loss: gradient buffer size mismatch");
    double* gp = grad->data();

    // Output layer: conv weights/bias plus the gated input path.
    conv_bwd_weights(g3, h2, gp + off_.w3, gp + off_.b3, F, C);
    for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int y = 0; y < z.h; ++y)
            for (int xx = 0; xx < z.w; ++xx) acc += g3.at(y, xx, c) * z.at(y, xx, c);
        for (int k = 0; k < 4; ++k) gp[off_.sk + size_t(c) * 4 + k] += acc * basis[k];
    }
    Tensor dh2(z.h, z.w, F);
    conv_bwd_input(g3, p + off_.w3, F, C, dh2);

    // Second hidden layer.
    for (int y = 0; y < z.h; ++y)
        for (int xx = 0; xx < z.w; ++xx)
            for (int f = 0; f < F; ++f) {
                const double h = h2.at(y, xx, f);
                dh2.at(y, xx, f) *= (1.0 - h * h);
            }
    conv_bwd_weights(dh2, h1, gp + off_.w2, gp + off_.b2, F, F);
    for (int f = 0; f < F; ++f) {
        double dinj2 = 0.0;
        for (int y = 0; y < z.h; ++y)
            for (int xx = 0; xx < z.w; ++xx) dinj2 += dh2.at(y, xx, f);
        for (int e = 0; e < E; ++e)
            gp[off_.wc2 + size_t(f) * E + e] += dinj2 * cond[size_t(e)];
    }
    Tensor dh1(z.h, z.w, F);
    conv_bwd_input(dh2, p + off_.w2, F, F, dh1);

    // First hidden layer and injections.
    for (int y = 0; y < z.h; ++y)
        for (int xx = 0; xx < z.w; ++xx)
            for (int f = 0; f < F; ++f) {
                const double h = h1.at(y, xx, f);
                dh1.at(y, xx, f) *= (1.0 - h * h);
            }
    {
        // b1 collects the full spatial sum; Wt/Wc scale it by the features.
        std::vector<double> dinj(size_t(F), 0.0);
        for (int y = 0; y < z.h; ++y)
            for (int xx = 0; xx < z.w; ++xx)
                for (int f = 0; f < F; ++f) dinj[size_t(f)] += dh1.at(y, xx, f);
        for (int f = 0; f < F; ++f) {
            gp[off_.b1 + size_t(f)] += dinj[size_t(f)];
            for (int k = 0; k < 3; ++k) gp[off_.wt + size_t(f) * 3 + k] += dinj[size_t(f)] * tau[k];
            for (int e = 0; e < E; ++e)
                gp[off_.wc + size_t(f) * E + e] += dinj[size_t(f)] * cond[size_t(e)];
        }
    }
    std::vector<double> dummy_bias(size_t(F), 0.0);
    conv_bwd_weights(dh1, zc, gp + off_.w1, dummy_bias.data(), C + 2, F);
    return loss;
}

std::string ConvDenoiser::id() const {
    Sha256 h;
    const int32_t dims[3] = {cfg_.channels, cfg_.hidden, cfg_.cond_dim};
    h.update(dims, sizeof(dims));
    h.update(params_.data(), params_.size() * sizeof(double));
    return "conv-denoiser/" + h.hex_digest().substr(0, 12);
}

namespace {
constexpr char kCkptMagic[4] = {'D', 'M', 'C', 'K'};
constexpr uint32_t kCkptVersion = 1;
}  // namespace

void ConvDenoiser::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("ConvDenoiser::save: cannot write " + path.string());
    out.write(kCkptMagic, 4);
    const uint32_t version = kCkptVersion;
    out.write(reinterpret_cast<const char*>(&version), 4);
    const int32_t dims[3] = {cfg_.channels, cfg_.hidden, cfg_.cond_dim};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    const uint64_t n = params_.size();
    out.write(reinterpret_cast<const char*>(&n), 8);
    out.write(reinterpret_cast<const char*>(params_.data()),
              static_cast<std::streamsize>(n * sizeof(double)));
    if (!out) throw std::runtime_error("ConvDenoiser::save: short write to " + path.string());
}

void ConvDenoiser::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("ConvDenoiser::load: cannot open " + path.string());
    char magic[4];
    uint32_t version;
    int32_t dims[3];
    uint64_t n;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    in.read(reinterpret_cast<char*>(&n), 8);
    if (!in || std::memcmp(magic, kCkptMagic, 4) != 0 || version != kCkptVersion)
        throw std::runtime_error("ConvDenoiser::load: bad checkpoint header in " + path.string());
    if (dims[0] != cfg_.channels || dims[1] != cfg_.hidden || dims[2] != cfg_.cond_dim)
        throw std::runtime_error("ConvDenoiser::load: checkpoint dims mismatch in " +
                                 path.string());
    if (n != params_.size())
        throw std::runtime_error("ConvDenoiser::load: parameter count mismatch in " +
                                 path.string());
    in.read(reinterpret_cast<char*>(params_.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw std::runtime_error("ConvDenoiser::load: truncated checkpoint " + path.string());
}

ConvFeatureEmbedder::ConvFeatureEmbedder(const ConvDenoiser& net, const NoiseSchedule& sched,
                                         const Conditioning& cond, uint64_t seed)
    : net_(net), sched_(sched), cond_(cond), seed_(seed) {}

std::vector<double> ConvFeatureEmbedder::embed(const Tensor& image, const Box& box, double t) {
    if (!box.inside(image.w, image.h))
        throw std::invalid_argument("ConvFeatureEmbedder: box outside image");
    // Deterministic per content: the same image always gets the same noise.
    Rng rng(mix64(seed_, content_hash64(image), 0x64696674ULL));
    Tensor eps(image.h, image.w, image.c);
    for (auto& v : eps.v) v = rng.gaussian();
    LatentImage xz;
    xz.values = image;
    LatentImage ez;
    ez.values = std::move(eps);
    const Tensor noised = forward_noise(xz, ez, t, sched_).values;
    const ConvDenoiser::FeatureMaps fm = net_.feature_maps(noised, t, cond_.embedding);

    const int F = net_.config().hidden;
    std::vector<double> out(size_t(6) * F, 0.0);

    auto box_mean = [&](const Tensor& m, const Box& b, double* dst) {
        if (b.w <= 0 || b.h <= 0) return;
        const double inv = 1.0 / (double(b.w) * b.h);
        for (int f = 0; f < m.c; ++f) {
            double s = 0.0;
            for (int y = b.y0; y < b.y1(); ++y)
                for (int x = b.x0; x < b.x1(); ++x) s += m.at(y, x, f);
            dst[f] = s * inv;
        }
    };

    box_mean(fm.h2, box, out.data());
    box_mean(fm.h1, box, out.data() + F);
    const int hw = box.w / 2, hh = box.h / 2;
    const Box quads[4] = {{box.x0, box.y0, hw, hh},
                          {box.x0 + hw, box.y0, box.w - hw, hh},
                          {box.x0, box.y0 + hh, hw, box.h - hh},
                          {box.x0 + hw, box.y0 + hh, box.w - hw, box.h - hh}};
    for (int q = 0; q < 4; ++q) {
        if (quads[q].w > 0 && quads[q].h > 0)
            box_mean(fm.h2, quads[q], out.data() + size_t(2 + q) * F);
        else
            box_mean(fm.h2, box, out.data() + size_t(2 + q) * F);
    }
    return out;
}

std::vector<double> ConvFeatureEmbedder::embed_patch(const Tensor& patch_pixels, double t) {
    return embed(patch_pixels, Box{0, 0, patch_pixels.w, patch_pixels.h}, t);
}

}  // namespace diffmine
