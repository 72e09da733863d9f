#pragma once

#include <filesystem>
#include <string>

#include "diffmine/tensor.hpp"

namespace diffmine {

// PNG/JPEG codecs behind the pixel types used everywhere else. Decoded values
// are k/255.0 doubles, so an 8-bit file round-trips losslessly through
// save_image_png + load_image.
Tensor load_image(const std::filesystem::path& path);
void save_image_png(const std::filesystem::path& path, const Tensor& pixels);

Tensor resize_fixed_height(const Tensor& pixels, int height);
Tensor resize_square(const Tensor& pixels, int side);
Tensor resize_exact(const Tensor& pixels, int width, int height);

// SHA-256 of the decoded 8-bit pixel buffer (shape included); stable across
// encoder settings, unlike the compressed bytes.
std::string decoded_pixel_hash(const std::filesystem::path& path);

}  // namespace diffmine
