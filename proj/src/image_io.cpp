#include "diffmine/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <stdexcept>
#include <vector>

#include "diffmine/sha256.hpp"

namespace diffmine {

namespace {

cv::Mat to_mat8(const Tensor& pixels) {
    if (pixels.c != 1 && pixels.c != 3)
        throw std::invalid_argument("save_image_png: channels must be 1 or 3");
    cv::Mat m(pixels.h, pixels.w, pixels.c == 1 ? CV_8UC1 : CV_8UC3);
    for (int y = 0; y < pixels.h; ++y) {
        uint8_t* row = m.ptr<uint8_t>(y);
        for (int x = 0; x < pixels.w; ++x) {
            for (int ch = 0; ch < pixels.c; ++ch) {
                double v = pixels.at(y, x, ch);
                v = std::min(1.0, std::max(0.0, v));
                // RGB in memory, BGR on the Mat.
                const int dst = pixels.c == 3 ? 2 - ch : 0;
                row[x * pixels.c + dst] = static_cast<uint8_t>(std::lround(v * 255.0));
            }
        }
    }
    return m;
}

Tensor from_mat8(const cv::Mat& m) {
    if (m.empty()) throw std::runtime_error("image decode produced an empty matrix");
    cv::Mat m8;
    if (m.depth() != CV_8U)
        m.convertTo(m8, CV_8U);
    else
        m8 = m;
    int channels = m8.channels();
    if (channels == 4) {
        cv::cvtColor(m8, m8, cv::COLOR_BGRA2BGR);
        channels = 3;
    }
    if (channels != 1 && channels != 3)
        throw std::runtime_error("unsupported channel count: " + std::to_string(channels));
    Tensor out(m8.rows, m8.cols, channels);
    for (int y = 0; y < m8.rows; ++y) {
        const uint8_t* row = m8.ptr<uint8_t>(y);
        for (int x = 0; x < m8.cols; ++x)
            for (int ch = 0; ch < channels; ++ch) {
                const int src = channels == 3 ? 2 - ch : 0;
                out.at(y, x, ch) = double(row[x * channels + src]) / 255.0;
            }
    }
    return out;
}

}  // namespace

Tensor load_image(const std::filesystem::path& path) {
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (m.empty()) throw std::runtime_error("load_image: cannot decode " + path.string());
    return from_mat8(m);
}

void save_image_png(const std::filesystem::path& path, const Tensor& pixels) {
    std::filesystem::create_directories(path.parent_path());
    const cv::Mat m = to_mat8(pixels);
    if (!cv::imwrite(path.string(), m, {cv::IMWRITE_PNG_COMPRESSION, 3}))
        throw std::runtime_error("save_image_png: cannot write " + path.string());
}

namespace {

Tensor resize_impl(const Tensor& pixels, int width, int height) {
    if (width <= 0 || height <= 0) throw std::invalid_argument("resize: non-positive target");
    const cv::Mat src = to_mat8(pixels);
    cv::Mat dst;
    cv::resize(src, dst, cv::Size(width, height), 0, 0,
               width < pixels.w ? cv::INTER_AREA : cv::INTER_LINEAR);
    return from_mat8(dst);
}

}  // namespace

Tensor resize_fixed_height(const Tensor& pixels, int height) {
    const double scale = double(height) / pixels.h;
    const int width = std::max(1, int(std::lround(pixels.w * scale)));
    return resize_impl(pixels, width, height);
}

Tensor resize_square(const Tensor& pixels, int side) { return resize_impl(pixels, side, side); }

Tensor resize_exact(const Tensor& pixels, int width, int height) {
    return resize_impl(pixels, width, height);
}

std::string decoded_pixel_hash(const std::filesystem::path& path) {
    const Tensor t = load_image(path);
    std::vector<uint8_t> bytes;
    bytes.reserve(t.size());
    for (double v : t.v) bytes.push_back(static_cast<uint8_t>(std::lround(v * 255.0)));
    Sha256 h;
    const int32_t dims[3] = {t.h, t.w, t.c};
    h.update(dims, sizeof(dims));
    h.update(bytes.data(), bytes.size());
    return h.hex_digest();
}

}  // namespace diffmine
