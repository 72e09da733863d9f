#include "diffmine/render.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "diffmine/image_io.hpp"

namespace diffmine {

Tensor make_contact_sheet(const std::vector<std::vector<Tensor>>& rows,
                          const SheetLayout& layout) {
    const int n_rows = static_cast<int>(rows.size());
    int n_cols = 0;
    for (const auto& r : rows) n_cols = std::max(n_cols, static_cast<int>(r.size()));
    if (n_rows == 0 || n_cols == 0) throw std::invalid_argument("make_contact_sheet: no cells");

    const int cs = layout.cell_size, pad = layout.padding;
    const int H = n_rows * cs + (n_rows + 1) * pad;
    const int W = n_cols * cs + (n_cols + 1) * pad;
    Tensor sheet(H, W, 3, layout.background);

    for (int r = 0; r < n_rows; ++r) {
        for (int c = 0; c < static_cast<int>(rows[size_t(r)].size()); ++c) {
            const Tensor& cell = rows[size_t(r)][size_t(c)];
            if (cell.h == 0 || cell.w == 0) continue;
            const Tensor resized =
                (cell.h == cs && cell.w == cs) ? cell : resize_exact(cell, cs, cs);
            const int oy = pad + r * (cs + pad);
            const int ox = pad + c * (cs + pad);
            for (int y = 0; y < cs; ++y)
                for (int x = 0; x < cs; ++x)
                    for (int ch = 0; ch < 3; ++ch)
                        sheet.at(oy + y, ox + x, ch) =
                            resized.c == 3 ? resized.at(y, x, ch) : resized.at(y, x, 0);
        }
    }
    return sheet;
}

Tensor hconcat_sheets(const Tensor& left, const Tensor& right, int divider, double background) {
    const int H = std::max(left.h, right.h);
    const int W = left.w + divider + right.w;
    Tensor out(H, W, 3, background);
    auto blit = [&](const Tensor& src, int ox) {
        for (int y = 0; y < src.h; ++y)
            for (int x = 0; x < src.w; ++x)
                for (int ch = 0; ch < 3; ++ch)
                    out.at(y, ox + x, ch) = src.c == 3 ? src.at(y, x, ch) : src.at(y, x, 0);
    };
    blit(left, 0);
    blit(right, left.w + divider);
    return out;
}

Tensor overlay_heatmap(const Tensor& image, const Grid& heat, const std::vector<Box>& boxes) {
    if (heat.h != image.h || heat.w != image.w)
        throw std::invalid_argument("overlay_heatmap: heatmap/image shape mismatch");
    double max_abs = 0.0;
    for (double v : heat.v) max_abs = std::max(max_abs, std::abs(v));
    if (max_abs == 0.0) max_abs = 1.0;

    Tensor out(image.h, image.w, 3);
    for (int y = 0; y < image.h; ++y)
        for (int x = 0; x < image.w; ++x) {
            const double g = image.c == 3
                                 ? (image.at(y, x, 0) + image.at(y, x, 1) + image.at(y, x, 2)) / 3.0
                                 : image.at(y, x, 0);
            const double a = heat.at(y, x) / max_abs;  // [-1, 1]
            const double w = 0.55 * std::abs(a);
            double rgb[3] = {g, g, g};
            if (a >= 0) {
                rgb[0] = (1.0 - w) * g + w * 1.0;
                rgb[1] = (1.0 - w) * g + w * 0.15;
                rgb[2] = (1.0 - w) * g + w * 0.15;
            } else {
                rgb[0] = (1.0 - w) * g + w * 0.15;
                rgb[1] = (1.0 - w) * g + w * 0.25;
                rgb[2] = (1.0 - w) * g + w * 1.0;
            }
            for (int ch = 0; ch < 3; ++ch) out.at(y, x, ch) = rgb[ch];
        }

    for (const Box& b : boxes) {
        if (!b.inside(image.w, image.h)) continue;
        auto mark = [&](int y, int x) {
            out.at(y, x, 0) = 0.1;
            out.at(y, x, 1) = 1.0;
            out.at(y, x, 2) = 0.1;
        };
        for (int x = b.x0; x < b.x1(); ++x) {
            mark(b.y0, x);
            mark(b.y1() - 1, x);
        }
        for (int y = b.y0; y < b.y1(); ++y) {
            mark(y, b.x0);
            mark(y, b.x1() - 1);
        }
    }
    return out;
}

}  // namespace diffmine
