#include "diffmine/toy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "diffmine/rng.hpp"

namespace diffmine {

MarkerShape marker_shape_from_name(const std::string& name) {
    if (name == "square") return MarkerShape::square;
    if (name == "cross") return MarkerShape::cross;
    if (name == "circle") return MarkerShape::circle;
    if (name == "blob") return MarkerShape::blob;
    if (name == "none") return MarkerShape::none;
    throw std::invalid_argument("unknown marker shape: " + name);
}

void ToyDatasetSpec::validate() const {
    if (n_images < 0) throw std::invalid_argument("ToyDatasetSpec: n_images < 0");
    if (image_size < 8) throw std::invalid_argument("ToyDatasetSpec: image_size < 8");
    if (channels != 1 && channels != 3)
        throw std::invalid_argument("ToyDatasetSpec: channels must be 1 or 3");
    if (classes.empty()) throw std::invalid_argument("ToyDatasetSpec: no classes");
    for (const auto& c : classes) marker_shape_from_name(c);
    Box expanded{marker_region.x0 - jitter, marker_region.y0 - jitter,
                 marker_region.w + 2 * jitter, marker_region.h + 2 * jitter};
    if (!expanded.inside(image_size, image_size))
        throw std::invalid_argument("ToyDatasetSpec: marker region (with jitter) outside canvas");
    if (2 * expanded.area() > static_cast<long long>(image_size) * image_size)
        throw std::invalid_argument("ToyDatasetSpec: marker must leave at least half the canvas");
    if (noise_level < 0) throw std::invalid_argument("ToyDatasetSpec: noise_level < 0");
}

namespace {

// Fill intensity per shape; bright fills vs the dark blob give class pairs a
// large per-pixel disagreement inside the marker box.
double marker_value(MarkerShape shape) {
    return shape == MarkerShape::blob ? 0.08 : 0.95;
}

void draw_marker(Tensor& img, MarkerShape shape, const Box& box, double value) {
    const int cx2 = 2 * box.x0 + box.w - 1;  // center * 2 (avoids fractions)
    const int cy2 = 2 * box.y0 + box.h - 1;
    for (int y = box.y0; y < box.y1(); ++y) {
        for (int x = box.x0; x < box.x1(); ++x) {
            bool on = false;
            switch (shape) {
                case MarkerShape::square:
                    on = true;
                    break;
                case MarkerShape::cross: {
                    const bool vbar = std::abs(2 * x - cx2) <= 1;
                    const bool hbar = std::abs(2 * y - cy2) <= 1;
                    on = vbar || hbar;
                    break;
                }
                case MarkerShape::circle: {
                    const double dx = (2.0 * x - cx2) / 2.0;
                    const double dy = (2.0 * y - cy2) / 2.0;
                    const double r = 0.5 * std::min(box.w, box.h) - 0.5;
                    const double dist = std::sqrt(dx * dx + dy * dy);
                    on = std::abs(dist - r) <= 0.9;
                    break;
                }
                case MarkerShape::blob: {
                    const double dx = (2.0 * x - cx2) / double(box.w);
                    const double dy = (2.0 * y - cy2) / double(box.h);
                    on = dx * dx + dy * dy <= 1.0;
                    break;
                }
                case MarkerShape::none:
                    on = false;
                    break;
            }
            if (on)
                for (int ch = 0; ch < img.c; ++ch) img.at(y, x, ch) = value;
        }
    }
}

}  // namespace

ToyDataset generate_toy_dataset(const ToyDatasetSpec& spec, uint64_t seed) {
    spec.validate();
    ToyDataset out;
    out.spec = spec;
    const int s = spec.image_size;
    const int n_classes = static_cast<int>(spec.classes.size());
    // Clutter must stay clear of every possible marker placement.
    const Box keepout{spec.marker_region.x0 - spec.jitter, spec.marker_region.y0 - spec.jitter,
                      spec.marker_region.w + 2 * spec.jitter,
                      spec.marker_region.h + 2 * spec.jitter};

    for (int i = 0; i < spec.n_images; ++i) {
        const int cls = i % n_classes;
        const MarkerShape shape = marker_shape_from_name(spec.classes[size_t(cls)]);
        Rng rng(mix64(seed, uint64_t(i), 0x746f79ULL));

        Tensor img(s, s, spec.channels, 0.0);
        const double base = 0.35 + 0.1 * rng.uniform();
        for (auto& v : img.v) v = base;

        // Label-independent clutter: soft rectangles rejected if they touch
        // the marker keepout area.
        for (int cblock = 0; cblock < spec.clutter_count; ++cblock) {
            for (int attempt = 0; attempt < 64; ++attempt) {
                const int bw = 3 + rng.uniform_int(6);
                const int bh = 3 + rng.uniform_int(6);
                const int bx = rng.uniform_int(std::max(1, s - bw));
                const int by = rng.uniform_int(std::max(1, s - bh));
                const Box b{bx, by, bw, bh};
                if (b.intersects(keepout)) continue;
                const double amp = spec.clutter_amp * (rng.uniform() < 0.5 ? 1.0 : -0.6);
                for (int y = b.y0; y < std::min(b.y1(), s); ++y)
                    for (int x = b.x0; x < std::min(b.x1(), s); ++x)
                        for (int ch = 0; ch < img.c; ++ch) img.at(y, x, ch) += amp;
                break;
            }
        }

        Box marker = spec.marker_region;
        if (spec.jitter > 0) {
            marker.x0 += rng.uniform_int(2 * spec.jitter + 1) - spec.jitter;
            marker.y0 += rng.uniform_int(2 * spec.jitter + 1) - spec.jitter;
        }
        draw_marker(img, shape, marker, marker_value(shape));

        if (spec.noise_level > 0)
            for (auto& v : img.v) v += spec.noise_level * rng.gaussian();

        for (auto& v : img.v) {
            v = std::min(1.0, std::max(0.0, v));
            v = std::round(v * 255.0) / 255.0;
        }

        ImageRecord rec;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "toy_%06d", i);
        rec.id = idbuf;
        rec.pixels = std::move(img);
        rec.label = spec.classes[size_t(cls)];
        rec.split = Split::train;
        out.records.push_back(std::move(rec));
        out.marker_boxes.push_back(shape == MarkerShape::none ? Box{0, 0, 0, 0} : marker);
    }
    return out;
}

}  // namespace diffmine
