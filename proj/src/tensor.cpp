#include "diffmine/tensor.hpp"

#include <stdexcept>

#include "diffmine/rng.hpp"
#include "diffmine/sha256.hpp"

namespace diffmine {

Tensor crop(const Tensor& img, const Box& box) {
    if (!box.inside(img.w, img.h))
        throw std::invalid_argument("crop: box (" + std::to_string(box.x0) + "," +
                                    std::to_string(box.y0) + "," + std::to_string(box.w) + "," +
                                    std::to_string(box.h) + ") outside image " +
                                    std::to_string(img.w) + "x" + std::to_string(img.h));
    Tensor out(box.h, box.w, img.c);
    for (int y = 0; y < box.h; ++y)
        for (int x = 0; x < box.w; ++x)
            for (int ch = 0; ch < img.c; ++ch)
                out.at(y, x, ch) = img.at(box.y0 + y, box.x0 + x, ch);
    return out;
}

uint64_t content_hash64(const Tensor& t) {
    uint64_t h = mix64(mix64(uint64_t(t.h), uint64_t(t.w)), uint64_t(t.c));
    return mix64(h, hash_bytes64(t.v.data(), t.v.size() * sizeof(double)));
}

std::string content_hash_hex(const Tensor& t) {
    Sha256 s;
    int32_t dims[3] = {t.h, t.w, t.c};
    s.update(dims, sizeof(dims));
    s.update(t.v.data(), t.v.size() * sizeof(double));
    return s.hex_digest();
}

}  // namespace diffmine
