#include "diffmine/typicality.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "diffmine/concurrency.hpp"
#include "diffmine/rng.hpp"
#include "diffmine/sha256.hpp"

namespace diffmine {

void TypicalityConfig::validate() const {
    if (!(0.0 <= t_min && t_min < t_max && t_max <= 1.0))
        throw std::invalid_argument("TypicalityConfig: need 0 <= t_min < t_max <= 1");
    if (n_samples < 1) throw std::invalid_argument("TypicalityConfig: n_samples must be >= 1");
}

std::string TypicalityConfig::config_hash(const std::string& backend_id,
                                          const NoiseSchedule& sched) const {
    Sha256 h;
    h.update("typicality-v1\n");
    const double ds[2] = {t_min, t_max};
    h.update(ds, sizeof(ds));
    const int64_t ints[3] = {n_samples, static_cast<int64_t>(seed), paired ? 1 : 0};
    h.update(ints, sizeof(ints));
    h.update(backend_id);
    h.update("\n");
    h.update(sched.name);
    h.update(sched.form == ScheduleForm::paper_literal ? "/paper_literal" : "/standard_vp");
    return h.hex_digest().substr(0, 16);
}

Grid upsample_map(const Grid& m, int scale_factor, UpsampleAlign align) {
    if (scale_factor < 1) throw std::invalid_argument("upsample_map: scale_factor must be >= 1");
    if (m.h <= 0 || m.w <= 0) throw std::invalid_argument("upsample_map: empty map");
    if (scale_factor == 1) return m;
    const int oh = m.h * scale_factor;
    const int ow = m.w * scale_factor;
    Grid out(oh, ow);

    auto src_coord = [&](int oi, int n_in, int n_out) -> double {
        if (align == UpsampleAlign::corners) {
            if (n_out == 1) return 0.0;
            return double(oi) * double(n_in - 1) / double(n_out - 1);
        }
        return (double(oi) + 0.5) / scale_factor - 0.5;
    };

    for (int oy = 0; oy < oh; ++oy) {
        double sy = src_coord(oy, m.h, oh);
        sy = std::min(std::max(sy, 0.0), double(m.h - 1));
        const int y0 = std::min(int(std::floor(sy)), m.h - 1);
        const int y1 = std::min(y0 + 1, m.h - 1);
        const double fy = sy - y0;
        for (int ox = 0; ox < ow; ++ox) {
            double sx = src_coord(ox, m.w, ow);
            sx = std::min(std::max(sx, 0.0), double(m.w - 1));
            const int x0 = std::min(int(std::floor(sx)), m.w - 1);
            const int x1 = std::min(x0 + 1, m.w - 1);
            const double fx = sx - x0;
            out.at(oy, ox) = (1.0 - fy) * ((1.0 - fx) * m.at(y0, x0) + fx * m.at(y0, x1)) +
                             fy * ((1.0 - fx) * m.at(y1, x0) + fx * m.at(y1, x1));
        }
    }
    return out;
}

TypicalityResult estimate_typicality(const ImageRecord& x, const Conditioning& cond,
                                     const Conditioning& null_cond, DenoiserBackend& backend,
                                     const NoiseSchedule& sched, const TypicalityConfig& cfg,
                                     int n_threads) {
    cfg.validate();
    if (cond.is_null) throw std::invalid_argument("estimate_typicality: cond must not be null");
    if (!null_cond.is_null)
        throw std::invalid_argument("estimate_typicality: null_cond must be the null conditioning");

    const LatentImage z = backend.encode(x.pixels);
    const int lh = z.values.h, lw = z.values.w, lc = z.values.c;
    const uint64_t content_key = mix64(cfg.seed, content_hash64(x.pixels));

    // One diff grid per sample, reduced in index order afterwards, so the
    // result is the same for any worker count.
    std::vector<Grid> diffs(cfg.n_samples);

    auto draw = [&](uint64_t stream_salt, int sample, double& t, Tensor& eps) {
        Rng rng(mix64(content_key, uint64_t(sample), stream_salt));
        t = rng.uniform(cfg.t_min, cfg.t_max);
        eps = Tensor(lh, lw, lc);
        for (auto& v : eps.v) v = rng.gaussian();
    };

    auto run_sample = [&](int s) {
        try {
            LatentImage eps;
            eps.scale_factor = z.scale_factor;
            double t_null, t_cond;
            Tensor e_null, e_cond;
            if (cfg.paired) {
                draw(0, s, t_null, e_null);
                t_cond = t_null;
                e_cond = e_null;
            } else {
                draw(0, s, t_null, e_null);
                draw(1, s, t_cond, e_cond);
            }
            eps.values = std::move(e_null);
            const LossMap l_null = loss_map(z, eps, t_null, null_cond, backend, sched, x.id);
            eps.values = std::move(e_cond);
            const LossMap l_cond = loss_map(z, eps, t_cond, cond, backend, sched, x.id);
            Grid d(lh, lw);
            for (size_t i = 0; i < d.v.size(); ++i)
                d.v[i] = l_null.values.v[i] - l_cond.values.v[i];
            diffs[s] = std::move(d);
        } catch (const std::exception& e) {
            throw std::runtime_error("estimate_typicality: sample " + std::to_string(s) +
                                     " failed for image " + x.id + ": " + e.what());
        }
    };

    parallel_for(cfg.n_samples, backend.concurrent_predict() ? n_threads : 1, run_sample);

    Grid acc(lh, lw);
    for (int s = 0; s < cfg.n_samples; ++s)
        for (size_t i = 0; i < acc.v.size(); ++i) acc.v[i] += diffs[s].v[i];
    const double inv_n = 1.0 / cfg.n_samples;
    for (auto& v : acc.v) v *= inv_n;

    TypicalityResult res;
    res.map.values = upsample_map(acc, z.scale_factor);
    res.map.image_id = x.id;
    res.map.label = x.label;
    res.map.n_samples = cfg.n_samples;
    res.map.config_hash = cfg.config_hash(backend.id(), sched);
    for (double v : res.map.values.v)
        if (!std::isfinite(v))
            throw std::runtime_error("estimate_typicality: non-finite map entry for image " + x.id);
    res.scalar = res.map.values.mean();
    return res;
}

}  // namespace diffmine
