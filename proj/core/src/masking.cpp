#include "fader/masking.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fader/image_io.hpp"
#include "fader/rng.hpp"

namespace fader::mask {

std::string to_string(ProviderKind k) {
  switch (k) {
    case ProviderKind::saliency: return "saliency";
    case ProviderKind::precomputed: return "precomputed";
    case ProviderKind::oracle_gt: return "oracle_gt";
    case ProviderKind::random_multi: return "random_multi";
  }
  return "saliency";
}

ProviderKind provider_kind_from_string(const std::string& s) {
  if (s == "saliency") return ProviderKind::saliency;
  if (s == "precomputed") return ProviderKind::precomputed;
  if (s == "oracle_gt") return ProviderKind::oracle_gt;
  if (s == "random_multi") return ProviderKind::random_multi;
  throw ConfigError("unknown mask provider kind: '" + s + "'");
}

void ProviderConfig::validate() const {
  if (kind == ProviderKind::saliency || kind == ProviderKind::precomputed) {
    if (!(threshold > 0.0 && threshold < 1.0))
      throw ConfigError("mask provider threshold must lie in (0,1)");
  }
  if (kind == ProviderKind::precomputed && precomputed_path.empty())
    throw ConfigError("precomputed mask provider requires a path");
  if (kind == ProviderKind::oracle_gt && !(oracle_coverage > 0.0 && oracle_coverage <= 1.0))
    throw ConfigError("oracle_coverage must lie in (0,1]");
  if (kind == ProviderKind::random_multi) {
    if (mask_count < 2) throw ConfigError("random_multi needs mask_count >= 2");
    if (cell < 1) throw ConfigError("random_multi cell must be >= 1");
  }
}

namespace {

// Thresholds a min-max normalized map into a keep-mask; the cutoff is lifted
// to the map's median when needed so the masked fraction stays <= 0.5.
Tensor threshold_normalized(const Tensor& normalized, double threshold) {
  std::vector<double> sorted(normalized.raw());
  const size_t mid = sorted.size() / 2;
  std::nth_element(sorted.begin(), sorted.begin() + mid, sorted.end());
  const double cutoff = std::max(threshold, sorted[mid]);

  Tensor keep(normalized.shape(), 1.0);
  for (int64_t i = 0; i < normalized.numel(); ++i)
    if (normalized[i] > cutoff) keep[i] = 0.0;
  return keep;
}

Tensor min_max_normalize(const Tensor& map) {
  const double lo = tensor_min(map), hi = tensor_max(map);
  Tensor out(map.shape());
  // a flat map (up to rounding noise) normalizes to all-zeros: no defect evidence
  if (hi - lo > 1e-12 * std::max(1.0, std::abs(hi))) {
    for (int64_t i = 0; i < map.numel(); ++i) out[i] = (map[i] - lo) / (hi - lo);
  }
  return out;
}

Tensor nearest_resize_grid(const Tensor& grid, int64_t target_h, int64_t target_w) {
  const int64_t gh = grid.dim(0), gw = grid.dim(1);
  Tensor out({target_h, target_w});
  for (int64_t y = 0; y < target_h; ++y) {
    const int64_t sy = std::min(gh - 1, y * gh / target_h);
    for (int64_t x = 0; x < target_w; ++x) {
      const int64_t sx = std::min(gw - 1, x * gw / target_w);
      out.at(y, x) = grid.at(sy, sx);
    }
  }
  return out;
}

Tensor dilate_once(const Tensor& region) {
  const int64_t h = region.dim(0), w = region.dim(1);
  Tensor out({h, w});
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      double v = 0.0;
      for (int64_t dy = -1; dy <= 1 && v == 0.0; ++dy)
        for (int64_t dx = -1; dx <= 1; ++dx) {
          const int64_t yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < h && xx >= 0 && xx < w && region.at(yy, xx) > 0.5) {
            v = 1.0;
            break;
          }
        }
      out.at(y, x) = v;
    }
  return out;
}

Tensor erode_once(const Tensor& region) {
  const int64_t h = region.dim(0), w = region.dim(1);
  Tensor out({h, w});
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      bool keep = region.at(y, x) > 0.5;
      for (int64_t dy = -1; dy <= 1 && keep; ++dy)
        for (int64_t dx = -1; dx <= 1; ++dx) {
          const int64_t yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w || region.at(yy, xx) < 0.5) {
            keep = false;
            break;
          }
        }
      out.at(y, x) = keep ? 1.0 : 0.0;
    }
  return out;
}

int64_t area(const Tensor& region) {
  int64_t n = 0;
  for (int64_t i = 0; i < region.numel(); ++i)
    if (region[i] > 0.5) ++n;
  return n;
}

// Shrinks the defect region to at most coverage * area, first by erosion,
// then (when erosion collapses thin shapes) by trimming in raster order.
Tensor reduce_coverage(const Tensor& region, double coverage) {
  const int64_t orig = area(region);
  const int64_t target = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(coverage * orig)));
  Tensor current = region;
  while (area(current) > target) {
    Tensor eroded = erode_once(current);
    if (area(eroded) == 0) break;
    current = eroded;
  }
  int64_t excess = area(current) - target;
  if (excess > 0) {
    for (int64_t i = current.numel() - 1; i >= 0 && excess > 0; --i)
      if (current[i] > 0.5) {
        current[i] = 0.0;
        --excess;
      }
  }
  return current;
}

Tensor oracle_mask(const Tensor& image, const std::optional<std::filesystem::path>& gt_mask_path,
                   double coverage) {
  const int64_t h = image.dim(0), w = image.dim(1);
  Tensor keep({h, w}, 1.0);
  if (!gt_mask_path) return keep;  // defect-free image: nothing to mask
  Tensor region = data::load_mask(*gt_mask_path, h, w);
  if (area(region) == 0) return keep;
  region = coverage >= 1.0 ? dilate_once(region) : reduce_coverage(region, coverage);
  for (int64_t i = 0; i < keep.numel(); ++i)
    if (region[i] > 0.5) keep[i] = 0.0;
  return keep;
}

std::vector<Tensor> random_multi_masks(const ProviderConfig& cfg, int64_t h, int64_t w) {
  if (h % cfg.cell != 0 || w % cfg.cell != 0)
    throw ShapeError("random_multi: cell size must divide the image dimensions");
  const int64_t ch = h / cfg.cell, cw = w / cfg.cell;
  auto rng = make_rng(cfg.seed, 0x9a5fULL);
  const std::vector<int64_t> perm = shuffled_indices(ch * cw, rng);

  std::vector<Tensor> masks(static_cast<size_t>(cfg.mask_count), Tensor({h, w}, 1.0));
  for (int64_t i = 0; i < ch * cw; ++i) {
    const int64_t group = i % cfg.mask_count;
    const int64_t cy = perm[static_cast<size_t>(i)] / cw, cx = perm[static_cast<size_t>(i)] % cw;
    Tensor& m = masks[static_cast<size_t>(group)];
    for (int64_t y = cy * cfg.cell; y < (cy + 1) * cfg.cell; ++y)
      for (int64_t x = cx * cfg.cell; x < (cx + 1) * cfg.cell; ++x) m.at(y, x) = 0.0;
  }
  return masks;
}

}  // namespace

Tensor saliency_mask(const Tensor& image, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("saliency threshold must lie in (0,1)");
  const int64_t h = image.dim(0), w = image.dim(1);
  const int64_t c = image.rank() == 3 ? image.dim(2) : 1;
  constexpr int64_t kHalf = 4;  // 9x9 window, clipped at the borders

  Tensor contrast({h, w});
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      const int64_t y0 = std::max<int64_t>(0, y - kHalf), y1 = std::min(h - 1, y + kHalf);
      const int64_t x0 = std::max<int64_t>(0, x - kHalf), x1 = std::min(w - 1, x + kHalf);
      const double count = static_cast<double>((y1 - y0 + 1) * (x1 - x0 + 1));
      double acc = 0.0;
      for (int64_t ch = 0; ch < c; ++ch) {
        double sum = 0.0;
        for (int64_t yy = y0; yy <= y1; ++yy)
          for (int64_t xx = x0; xx <= x1; ++xx)
            sum += image.rank() == 3 ? image.at(yy, xx, ch) : image.at(yy, xx);
        const double v = image.rank() == 3 ? image.at(y, x, ch) : image.at(y, x);
        acc += std::abs(v - sum / count);
      }
      contrast.at(y, x) = acc / static_cast<double>(c);
    }
  return threshold_normalized(min_max_normalize(contrast), threshold);
}

Tensor load_precomputed_attention(const std::filesystem::path& path, double threshold,
                                  int64_t target_h, int64_t target_w) {
  if (!std::filesystem::exists(path)) throw NotFound("attention file not found: " + path.string());

  Tensor grid;
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (ext == ".png" || ext == ".bmp" || ext == ".jpg" || ext == ".jpeg" || ext == ".tif") {
    // single-channel attention image at its native resolution
    const Tensor img = data::load_image_native(path);
    grid = Tensor({img.dim(0), img.dim(1)});
    for (int64_t y = 0; y < grid.dim(0); ++y)
      for (int64_t x = 0; x < grid.dim(1); ++x) grid.at(y, x) = img.at(y, x, 0);
  } else {
    // whitespace-separated row-major grid of reals
    std::ifstream in(path);
    if (!in) throw IoError("cannot read attention file: " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
      std::istringstream ls(line);
      std::vector<double> row;
      double v;
      while (ls >> v) row.push_back(v);
      if (!row.empty()) rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ShapeError("attention grid is empty: " + path.string());
    for (const auto& row : rows)
      if (row.size() != rows.front().size())
        throw ShapeError("attention grid has ragged rows: " + path.string());
    grid = Tensor({static_cast<int64_t>(rows.size()), static_cast<int64_t>(rows.front().size())});
    for (int64_t y = 0; y < grid.dim(0); ++y)
      for (int64_t x = 0; x < grid.dim(1); ++x)
        grid.at(y, x) = rows[static_cast<size_t>(y)][static_cast<size_t>(x)];
  }

  if (grid.dim(0) <= 0 || grid.dim(1) <= 0) throw ShapeError("attention grid has empty shape");
  const Tensor normalized = min_max_normalize(grid);
  const Tensor resized = nearest_resize_grid(normalized, target_h, target_w);
  return threshold_normalized(resized, threshold);
}

std::vector<Tensor> provide_mask(const ProviderConfig& cfg, const Tensor& image,
                                 const std::optional<std::filesystem::path>& gt_mask_path) {
  cfg.validate();
  switch (cfg.kind) {
    case ProviderKind::saliency: return {saliency_mask(image, cfg.threshold)};
    case ProviderKind::precomputed:
      return {load_precomputed_attention(cfg.precomputed_path, cfg.threshold, image.dim(0), image.dim(1))};
    case ProviderKind::oracle_gt: return {oracle_mask(image, gt_mask_path, cfg.oracle_coverage)};
    case ProviderKind::random_multi: return random_multi_masks(cfg, image.dim(0), image.dim(1));
  }
  throw ConfigError("unreachable mask provider kind");
}

Tensor mosaic(const Tensor& image, int64_t m) {
  const int64_t h = image.dim(0), w = image.dim(1);
  const int64_t c = image.rank() == 3 ? image.dim(2) : 1;
  if (m < 1 || h % m != 0 || w % m != 0)
    throw ShapeError("mosaic scale " + std::to_string(m) + " must divide image size " +
                     shape_string(image.shape()));
  Tensor out(image.shape());
  for (int64_t by = 0; by < h / m; ++by)
    for (int64_t bx = 0; bx < w / m; ++bx)
      for (int64_t ch = 0; ch < c; ++ch) {
        double sum = 0.0;
        for (int64_t y = by * m; y < (by + 1) * m; ++y)
          for (int64_t x = bx * m; x < (bx + 1) * m; ++x)
            sum += image.rank() == 3 ? image.at(y, x, ch) : image.at(y, x);
        const double mean = sum / static_cast<double>(m * m);
        for (int64_t y = by * m; y < (by + 1) * m; ++y)
          for (int64_t x = bx * m; x < (bx + 1) * m; ++x) {
            if (image.rank() == 3)
              out.at(y, x, ch) = mean;
            else
              out.at(y, x) = mean;
          }
      }
  return out;
}

Tensor mosaic_obfuscate(const Tensor& image, const Tensor& binary_mask, int64_t m) {
  const int64_t h = image.dim(0), w = image.dim(1);
  if (binary_mask.rank() != 2 || binary_mask.dim(0) != h || binary_mask.dim(1) != w)
    throw ShapeError("mask shape " + shape_string(binary_mask.shape()) +
                     " does not match image " + shape_string(image.shape()));
  const Tensor mos = mosaic(image, m);
  Tensor out(image.shape());
  const int64_t c = image.rank() == 3 ? image.dim(2) : 1;
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      const double keep = binary_mask.at(y, x);
      for (int64_t ch = 0; ch < c; ++ch) {
        if (image.rank() == 3)
          out.at(y, x, ch) = keep * image.at(y, x, ch) + (1.0 - keep) * mos.at(y, x, ch);
        else
          out.at(y, x) = keep * image.at(y, x) + (1.0 - keep) * mos.at(y, x);
      }
    }
  return out;
}

}  // namespace fader::mask
