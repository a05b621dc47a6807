#include "fader/viz.hpp"

#include <algorithm>
#include <cmath>

#include "fader/image_io.hpp"
#include "fader/unet.hpp"

namespace fader::viz {

namespace {
double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }
}  // namespace

Tensor colormap(const Tensor& map) {
  const int64_t h = map.dim(0), w = map.dim(1);
  Tensor out({h, w, 3});
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      const double v = clamp01(map.at(y, x));
      out.at(y, x, 0) = clamp01(1.5 - std::abs(4.0 * v - 3.0));
      out.at(y, x, 1) = clamp01(1.5 - std::abs(4.0 * v - 2.0));
      out.at(y, x, 2) = clamp01(1.5 - std::abs(4.0 * v - 1.0));
    }
  return out;
}

Tensor heat_overlay(const Tensor& image, const Tensor& map, double alpha) {
  const Tensor heat = colormap(map);
  Tensor out(image.shape());
  for (int64_t y = 0; y < image.dim(0); ++y)
    for (int64_t x = 0; x < image.dim(1); ++x)
      for (int64_t c = 0; c < image.dim(2); ++c)
        out.at(y, x, c) = (1.0 - alpha) * image.at(y, x, c) + alpha * heat.at(y, x, c);
  return out;
}

Tensor binary_overlay(const Tensor& image, const Tensor& keep_mask, double alpha) {
  Tensor out = image;
  for (int64_t y = 0; y < image.dim(0); ++y)
    for (int64_t x = 0; x < image.dim(1); ++x)
      if (keep_mask.at(y, x) < 0.5) {
        out.at(y, x, 0) = (1.0 - alpha) * image.at(y, x, 0) + alpha;
        out.at(y, x, 1) = (1.0 - alpha) * image.at(y, x, 1);
        out.at(y, x, 2) = (1.0 - alpha) * image.at(y, x, 2);
      }
  return out;
}

VizFiles write_panels(const std::filesystem::path& dir, const std::string& stem,
                      const Tensor& image, const Tensor& binary_keep_mask,
                      const Tensor& soft_mask_grid, const Tensor& anomaly_map) {
  std::filesystem::create_directories(dir);
  VizFiles files;
  files.input = dir / (stem + "_input.png");
  files.binary_mask = dir / (stem + "_binary_mask.png");
  files.soft_mask = dir / (stem + "_soft_mask.png");
  files.anomaly = dir / (stem + "_anomaly.png");

  data::save_png(files.input, image);
  data::save_png(files.binary_mask, binary_overlay(image, binary_keep_mask));
  const Tensor soft_full =
      nn::scale_mask(soft_mask_grid, image.dim(0), image.dim(1), nn::ScalingMode::nearest);
  data::save_png(files.soft_mask, heat_overlay(image, soft_full));
  data::save_png(files.anomaly, heat_overlay(image, anomaly_map));
  return files;
}

}  // namespace fader::viz
