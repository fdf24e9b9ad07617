#pragma once

#include <filesystem>
#include <stdexcept>

#include "ptsr/tensor.hpp"

namespace ptsr {

struct ImageIoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Decodes PNG/BMP/JPEG/... to an H x W x 3 RGB image in [0,1]. 8-bit data is
/// divided by 255, 16-bit by 65535; gray is replicated, alpha dropped.
Image load_image(const std::filesystem::path& path);

/// Writes an RGB (or single-channel) image as PNG, clamping to [0,1] and
/// rounding to the nearest code. bit_depth is 8 or 16.
void save_png(const std::filesystem::path& path, const Tensor& image, int bit_depth = 8);

/// The values load_image would return after save_png(image, bit_depth):
/// clamp, round to the nearest code, scale back to [0,1].
Image quantize(const Image& image, int bit_depth = 8);

bool is_image_file(const std::filesystem::path& path);

}  // namespace ptsr
