#pragma once

#include <filesystem>

#include "fader/tensor.hpp"

namespace fader::data {

// Images are rank-3 tensors (H, W, C) with values in [0,1], channels RGB.
// Ground-truth defect masks are rank-2 (H, W) with values in {0,1}, 1 = defect.

// Decodes an 8-bit image, resizes bilinearly to (height, width), scales to
// [0,1]. Grayscale inputs are expanded to 3 channels.
Tensor load_image(const std::filesystem::path& path, int64_t height, int64_t width);

// Same decoding but at the file's native resolution.
Tensor load_image_native(const std::filesystem::path& path);

// Decodes a mask image, nearest-resizes to (height, width), binarizes (>127).
Tensor load_mask(const std::filesystem::path& path, int64_t height, int64_t width);

// 8-bit PNG; values clamped to [0,1] then scaled to 0..255.
void save_png(const std::filesystem::path& path, const Tensor& image);

// Single-channel 16-bit PNG of a [0,1] map (heatmap export).
void save_png16(const std::filesystem::path& path, const Tensor& map);

Tensor resize_bilinear(const Tensor& image, int64_t height, int64_t width);
Tensor resize_nearest(const Tensor& image, int64_t height, int64_t width);

}  // namespace fader::data
