#pragma once

#include <cassert>
#include <cstdint>
#include <string>
#include <vector>

namespace diffmine {

// 2D scalar field, row-major.
struct Grid {
    int h = 0;
    int w = 0;
    std::vector<double> v;

    Grid() = default;
    Grid(int h_, int w_, double fill = 0.0) : h(h_), w(w_), v(size_t(h_) * w_, fill) {}

    double& at(int y, int x) { return v[size_t(y) * w + x]; }
    double at(int y, int x) const { return v[size_t(y) * w + x]; }
    size_t size() const { return v.size(); }
    bool same_shape(const Grid& o) const { return h == o.h && w == o.w; }

    double sum() const {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    double mean() const { return v.empty() ? 0.0 : sum() / double(v.size()); }
};

// H x W x C scalar grid, row-major with channels innermost. Used both for
// pixel images (values in [0,1]) and latent grids.
struct Tensor {
    int h = 0;
    int w = 0;
    int c = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int h_, int w_, int c_, double fill = 0.0)
        : h(h_), w(w_), c(c_), v(size_t(h_) * w_ * c_, fill) {}

    double& at(int y, int x, int ch) { return v[(size_t(y) * w + x) * c + ch]; }
    double at(int y, int x, int ch) const { return v[(size_t(y) * w + x) * c + ch]; }
    size_t size() const { return v.size(); }
    bool same_shape(const Tensor& o) const { return h == o.h && w == o.w && c == o.c; }
};

// Dense row-major matrix for feature stacks.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), v(size_t(r) * c, fill) {}

    double& at(int r, int c_) { return v[size_t(r) * cols + c_]; }
    double at(int r, int c_) const { return v[size_t(r) * cols + c_]; }
    const double* row(int r) const { return v.data() + size_t(r) * cols; }
    double* row(int r) { return v.data() + size_t(r) * cols; }
};

// Axis-aligned pixel rectangle; half-open in both axes.
struct Box {
    int x0 = 0;
    int y0 = 0;
    int w = 0;
    int h = 0;

    int x1() const { return x0 + w; }
    int y1() const { return y0 + h; }
    long long area() const { return static_cast<long long>(w) * h; }

    bool intersects(const Box& o) const {
        return x0 < o.x1() && o.x0 < x1() && y0 < o.y1() && o.y0 < y1();
    }
    bool contains(int x, int y) const { return x >= x0 && x < x1() && y >= y0 && y < y1(); }
    bool inside(int width, int height) const {
        return x0 >= 0 && y0 >= 0 && w > 0 && h > 0 && x1() <= width && y1() <= height;
    }
    bool operator==(const Box& o) const {
        return x0 == o.x0 && y0 == o.y0 && w == o.w && h == o.h;
    }
};

Tensor crop(const Tensor& img, const Box& box);

// Content fingerprint of the raw double buffer (shape included). Identical
// pixel content yields an identical hash.
uint64_t content_hash64(const Tensor& t);
std::string content_hash_hex(const Tensor& t);

}  // namespace diffmine
