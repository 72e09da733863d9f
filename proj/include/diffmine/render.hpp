#pragma once

#include <vector>

#include "diffmine/tensor.hpp"

namespace diffmine {

struct SheetLayout {
    int cell_size = 64;
    int padding = 2;
    double background = 1.0;
};

// Grid of crops: one row per cluster, members left to right in rank order.
// Missing cells stay background. All cells are resized to cell_size squares.
Tensor make_contact_sheet(const std::vector<std::vector<Tensor>>& rows, const SheetLayout& layout);

// Horizontal concatenation with a divider; used by the side-by-side
// comparison sheets.
Tensor hconcat_sheets(const Tensor& left, const Tensor& right, int divider = 4,
                      double background = 0.0);

// Heatmap rendered over the image (signed colormap: positive red, negative
// blue) with optional ROI rectangles.
Tensor overlay_heatmap(const Tensor& image, const Grid& heat, const std::vector<Box>& boxes);

}  // namespace diffmine
