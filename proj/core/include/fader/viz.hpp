#pragma once

#include <filesystem>

#include "fader/tensor.hpp"

namespace fader::viz {

// Blue (0) -> red (1) heatmap coloring of a [0,1] map.
Tensor colormap(const Tensor& map);

// Alpha-blends the colored map over the image.
Tensor heat_overlay(const Tensor& image, const Tensor& map, double alpha = 0.55);

// Tints the masked (0) region red over the image.
Tensor binary_overlay(const Tensor& image, const Tensor& keep_mask, double alpha = 0.5);

struct VizFiles {
  std::filesystem::path input;
  std::filesystem::path binary_mask;
  std::filesystem::path soft_mask;
  std::filesystem::path anomaly;
};

// Writes the four side-by-side panels for one image: input, binary mask
// overlay, soft-mask heatmap overlay (blue = strong attenuation), anomaly
// map. soft_mask_grid is the patch grid; it is nearest-upscaled for display.
VizFiles write_panels(const std::filesystem::path& dir, const std::string& stem,
                      const Tensor& image, const Tensor& binary_keep_mask,
                      const Tensor& soft_mask_grid, const Tensor& anomaly_map);

}  // namespace fader::viz
