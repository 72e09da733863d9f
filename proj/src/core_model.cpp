#include "diffmine/core_model.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

#include "diffmine/rng.hpp"

namespace diffmine {

std::string split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::mine: return "mine";
        case Split::eval: return "eval";
    }
    return "train";
}

Split split_from_name(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "mine") return Split::mine;
    if (s == "eval") return Split::eval;
    throw std::invalid_argument("unknown split name: " + s);
}

void ImageRecord::validate() const {
    if (id.empty()) throw std::invalid_argument("ImageRecord: empty id");
    if (pixels.h < 8 || pixels.w < 8)
        throw std::invalid_argument("ImageRecord " + id + ": image smaller than 8x8");
    if (pixels.c != 1 && pixels.c != 3)
        throw std::invalid_argument("ImageRecord " + id + ": channel count must be 1 or 3");
}

void LabelSet::validate() const {
    if (labels.empty()) throw std::invalid_argument("LabelSet: no labels");
    std::set<std::string> seen(labels.begin(), labels.end());
    if (seen.size() != labels.size())
        throw std::invalid_argument("LabelSet: duplicate labels");
    size_t pos = domain_template.find("{}");
    if (pos == std::string::npos)
        throw std::invalid_argument("LabelSet: domain_template has no {} placeholder");
    if (domain_template.find("{}", pos + 1) != std::string::npos)
        throw std::invalid_argument("LabelSet: domain_template has more than one {} placeholder");
}

bool LabelSet::has(const std::string& label) const { return index_of(label) >= 0; }

int LabelSet::index_of(const std::string& label) const {
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) return static_cast<int>(i);
    return -1;
}

std::string render_prompt(const LabelSet& labels, const std::optional<std::string>& label) {
    labels.validate();
    if (!label.has_value()) return labels.null_template;
    if (!labels.has(*label))
        throw std::invalid_argument("render_prompt: label not in label set: \"" + *label + "\"");
    std::string out = labels.domain_template;
    out.replace(out.find("{}"), 2, *label);
    return out;
}

std::vector<double> HashTextEmbedder::embed(const std::string& text) const {
    const uint64_t base = mix64(seed_, hash_bytes64(text.data(), text.size()));
    Rng rng(base);
    std::vector<double> v(dim_);
    double norm2 = 0.0;
    for (auto& x : v) {
        x = rng.gaussian();
        norm2 += x * x;
    }
    const double inv = norm2 > 0 ? 1.0 / std::sqrt(norm2) : 0.0;
    for (auto& x : v) x *= inv;
    return v;
}

Conditioning make_conditioning(const LabelSet& labels, const std::optional<std::string>& label,
                               const TextEmbedder& embedder) {
    Conditioning c;
    c.text = render_prompt(labels, label);
    c.embedding = embedder.embed(c.text);
    c.is_null = !label.has_value();
    return c;
}

double NoiseSchedule::signal_coeff(double t) const { return std::sqrt(alpha_bar(t)); }

double NoiseSchedule::noise_coeff(double t) const {
    const double ab = alpha_bar(t);
    if (form == ScheduleForm::paper_literal) return 1.0 - std::sqrt(ab);
    return std::sqrt(1.0 - ab);
}

void NoiseSchedule::validate(int grid_points) const {
    if (!alpha_bar) throw std::invalid_argument("NoiseSchedule: alpha_bar not set");
    const double a0 = alpha_bar(0.0);
    if (std::abs(a0 - 1.0) > 1e-12)
        throw std::invalid_argument("NoiseSchedule " + name + ": alpha_bar(0) != 1");
    const double a1 = alpha_bar(1.0);
    if (a1 < 0.0 || a1 >= 1.0)
        throw std::invalid_argument("NoiseSchedule " + name + ": alpha_bar(1) outside [0,1)");
    double prev = a0;
    for (int i = 1; i <= grid_points; ++i) {
        const double t = double(i) / grid_points;
        const double a = alpha_bar(t);
        if (a < -1e-12 || a > 1.0 + 1e-12)
            throw std::invalid_argument("NoiseSchedule " + name + ": alpha_bar out of [0,1]");
        if (a > prev + 1e-12)
            throw std::invalid_argument("NoiseSchedule " + name + ": alpha_bar not non-increasing");
        prev = a;
    }
}

NoiseSchedule NoiseSchedule::cosine(ScheduleForm form) {
    NoiseSchedule s;
    s.form = form;
    s.name = "cosine";
    // Squared-cosine decay with a small offset, renormalized so
    // alpha_bar(0) == 1 exactly.
    s.alpha_bar = [](double t) {
        constexpr double kOffset = 0.008;
        const double f = [](double u) {
            const double a = std::cos((u + kOffset) / (1.0 + kOffset) * 1.5707963267948966);
            return a * a;
        }(t);
        static const double f0 = [] {
            const double a = std::cos(kOffset / (1.0 + kOffset) * 1.5707963267948966);
            return a * a;
        }();
        double v = f / f0;
        if (t <= 0.0) return 1.0;
        return std::min(1.0, std::max(0.0, v));
    };
    return s;
}

NoiseSchedule NoiseSchedule::linear(ScheduleForm form) {
    NoiseSchedule s;
    s.form = form;
    s.name = "linear";
    s.alpha_bar = [](double t) { return 1.0 - t; };
    return s;
}

NoiseSchedule NoiseSchedule::named(const std::string& name, ScheduleForm form) {
    if (name == "cosine") return cosine(form);
    if (name == "linear") return linear(form);
    throw std::invalid_argument("unknown noise schedule: " + name);
}

LatentImage DenoiserBackend::encode(const Tensor& pixels) {
    LatentImage z;
    z.values = pixels;
    z.scale_factor = 1;
    return z;
}

Tensor DenoiserBackend::decode(const LatentImage& latent) { return latent.values; }

LatentImage forward_noise(const LatentImage& x, const LatentImage& eps, double t,
                          const NoiseSchedule& sched) {
    if (!x.values.same_shape(eps.values))
        throw std::invalid_argument("forward_noise: x and eps shapes differ");
    if (!(t >= 0.0 && t <= 1.0))
        throw std::invalid_argument("forward_noise: t outside [0,1]: " + std::to_string(t));
    const double a = sched.signal_coeff(t);
    const double b = sched.noise_coeff(t);
    LatentImage out;
    out.scale_factor = x.scale_factor;
    out.values = Tensor(x.values.h, x.values.w, x.values.c);
    for (size_t i = 0; i < x.values.v.size(); ++i)
        out.values.v[i] = a * x.values.v[i] + b * eps.values.v[i];
    return out;
}

LossMap loss_map(const LatentImage& x, const LatentImage& eps, double t, const Conditioning& cond,
                 DenoiserBackend& backend, const NoiseSchedule& sched,
                 const std::string& image_id) {
    if (!cond.embedding.empty() && static_cast<int>(cond.embedding.size()) != backend.cond_dim())
        throw std::invalid_argument("loss_map: conditioning dim " +
                                    std::to_string(cond.embedding.size()) +
                                    " != backend cond_dim " + std::to_string(backend.cond_dim()));
    const LatentImage noised = forward_noise(x, eps, t, sched);
    LatentImage pred;
    try {
        pred = backend.predict(noised, t, cond);
    } catch (const std::exception& e) {
        throw std::runtime_error("loss_map: backend failed (image=" +
                                 (image_id.empty() ? std::string("?") : image_id) +
                                 ", t=" + std::to_string(t) + "): " + e.what());
    }
    if (!pred.values.same_shape(x.values))
        throw std::runtime_error("loss_map: backend output shape mismatch (image=" +
                                 (image_id.empty() ? std::string("?") : image_id) + ")");
    const Tensor& p = pred.values;
    const Tensor& e = eps.values;
    LossMap out;
    out.values = Grid(p.h, p.w);
    for (int y = 0; y < p.h; ++y) {
        for (int xw = 0; xw < p.w; ++xw) {
            double s = 0.0;
            for (int ch = 0; ch < p.c; ++ch) {
                const double d = p.at(y, xw, ch) - e.at(y, xw, ch);
                s += d * d;
            }
            out.values.at(y, xw) = s;
        }
    }
    return out;
}

}  // namespace diffmine
