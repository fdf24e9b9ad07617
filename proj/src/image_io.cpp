#include "ptsr/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <fmt/format.h>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace ptsr {

Image load_image(const std::filesystem::path& path) {
    const cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (raw.empty()) throw ImageIoError(fmt::format("cannot decode image '{}'", path.string()));
    double scale = 0;
    switch (raw.depth()) {
        case CV_8U: scale = 1.0 / 255.0; break;
        case CV_16U: scale = 1.0 / 65535.0; break;
        default:
            throw ImageIoError(fmt::format("'{}': unsupported sample depth", path.string()));
    }
    const int ch = raw.channels();
    if (ch != 1 && ch != 3 && ch != 4)
        throw ImageIoError(fmt::format("'{}': unsupported channel count {}", path.string(), ch));
    cv::Mat f;
    raw.convertTo(f, CV_64F, scale);
    const auto h = static_cast<std::size_t>(f.rows), w = static_cast<std::size_t>(f.cols);
    Image img({h, w, 3});
    for (std::size_t y = 0; y < h; ++y) {
        const double* row = f.ptr<double>(static_cast<int>(y));
        for (std::size_t x = 0; x < w; ++x) {
            const double* px = row + x * static_cast<std::size_t>(ch);
            if (ch == 1) {
                img.at(y, x, 0) = img.at(y, x, 1) = img.at(y, x, 2) = px[0];
            } else {  // BGR(A)
                img.at(y, x, 0) = px[2];
                img.at(y, x, 1) = px[1];
                img.at(y, x, 2) = px[0];
            }
        }
    }
    return img;
}

Image quantize(const Image& image, int bit_depth) {
    if (bit_depth != 8 && bit_depth != 16)
        throw std::invalid_argument(fmt::format("quantize: bit depth {} unsupported", bit_depth));
    const double maxv = bit_depth == 8 ? 255.0 : 65535.0;
    const double inv = 1.0 / maxv;  // same factor load_image applies
    Image out = image;
    for (double& v : out.data()) v = std::round(std::clamp(v, 0.0, 1.0) * maxv) * inv;
    return out;
}

void save_png(const std::filesystem::path& path, const Tensor& image, int bit_depth) {
    if (image.rank() != 3 || (image.dim(2) != 3 && image.dim(2) != 1))
        throw ShapeError(fmt::format("save_png: expected HxWx3 or HxWx1, got {}",
                                     shape_str(image.shape())));
    if (bit_depth != 8 && bit_depth != 16)
        throw std::invalid_argument(fmt::format("save_png: bit depth {} unsupported", bit_depth));
    const int h = static_cast<int>(image.dim(0)), w = static_cast<int>(image.dim(1));
    const std::size_t ch = image.dim(2);
    const double maxv = bit_depth == 8 ? 255.0 : 65535.0;
    cv::Mat out(h, w, CV_MAKETYPE(bit_depth == 8 ? CV_8U : CV_16U, static_cast<int>(ch)));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (std::size_t c = 0; c < ch; ++c) {
                const std::size_t src_c = ch == 3 ? 2 - c : 0;  // RGB -> BGR
                const double v = std::round(
                    std::clamp(image.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x),
                                        src_c),
                               0.0, 1.0) *
                    maxv);
                if (bit_depth == 8)
                    out.ptr<std::uint8_t>(y)[static_cast<std::size_t>(x) * ch + c] =
                        static_cast<std::uint8_t>(v);
                else
                    out.ptr<std::uint16_t>(y)[static_cast<std::size_t>(x) * ch + c] =
                        static_cast<std::uint16_t>(v);
            }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), out))
        throw ImageIoError(fmt::format("cannot write '{}'", path.string()));
}

bool is_image_file(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".png" || ext == ".bmp" || ext == ".jpg" || ext == ".jpeg" || ext == ".tif" ||
           ext == ".tiff" || ext == ".ppm" || ext == ".pgm";
}

}  // namespace ptsr
