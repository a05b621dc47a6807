#include "fader/unet.hpp"

#include <cmath>

namespace fader::nn {

std::string to_string(ScalingMode m) { return m == ScalingMode::nearest ? "nearest" : "bilinear"; }

ScalingMode scaling_mode_from_string(const std::string& s) {
  if (s == "nearest") return ScalingMode::nearest;
  if (s == "bilinear") return ScalingMode::bilinear;
  throw ConfigError("unknown scaling mode: '" + s + "'");
}

Tensor scale_mask(const Tensor& grid, int64_t target_h, int64_t target_w, ScalingMode mode) {
  if (grid.rank() != 2) throw ShapeError("scale_mask: expected rank-2 grid");
  const int64_t gh = grid.dim(0), gw = grid.dim(1);
  if (gh == target_h && gw == target_w) return grid;
  Tensor out({target_h, target_w});
  if (mode == ScalingMode::nearest) {
    for (int64_t y = 0; y < target_h; ++y) {
      const int64_t sy = std::min(gh - 1, y * gh / target_h);
      for (int64_t x = 0; x < target_w; ++x) {
        const int64_t sx = std::min(gw - 1, x * gw / target_w);
        out.at(y, x) = grid.at(sy, sx);
      }
    }
    return out;
  }
  const auto clampi = [](int64_t v, int64_t n) { return std::min(n - 1, std::max<int64_t>(0, v)); };
  const double sy = static_cast<double>(gh) / static_cast<double>(target_h);
  const double sx = static_cast<double>(gw) / static_cast<double>(target_w);
  for (int64_t y = 0; y < target_h; ++y) {
    const double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
    const int64_t y0 = static_cast<int64_t>(std::floor(fy));
    const double wy = fy - static_cast<double>(y0);
    for (int64_t x = 0; x < target_w; ++x) {
      const double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
      const int64_t x0 = static_cast<int64_t>(std::floor(fx));
      const double wx = fx - static_cast<double>(x0);
      const double v00 = grid.at(clampi(y0, gh), clampi(x0, gw));
      const double v01 = grid.at(clampi(y0, gh), clampi(x0 + 1, gw));
      const double v10 = grid.at(clampi(y0 + 1, gh), clampi(x0, gw));
      const double v11 = grid.at(clampi(y0 + 1, gh), clampi(x0 + 1, gw));
      out.at(y, x) =
          v00 * (1 - wy) * (1 - wx) + v01 * (1 - wy) * wx + v10 * wy * (1 - wx) + v11 * wy * wx;
    }
  }
  return out;
}

}  // namespace fader::nn
