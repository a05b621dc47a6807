#include "fader/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fader::score {

namespace {

int64_t clamp_idx(int64_t i, int64_t n) { return std::min(n - 1, std::max<int64_t>(0, i)); }

int64_t reflect_idx(int64_t i, int64_t n) {
  if (i < 0) return -i - 1;
  if (i >= n) return 2 * n - 1 - i;
  return i;
}

}  // namespace

Tensor luminance(const Tensor& image) {
  if (image.rank() == 2) return image;
  const int64_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  Tensor out({h, w});
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (int64_t ch = 0; ch < c; ++ch) s += image.at(y, x, ch);
      out.at(y, x) = s / static_cast<double>(c);
    }
  return out;
}

std::pair<Tensor, Tensor> prewitt_gradients(const Tensor& lum) {
  const int64_t h = lum.dim(0), w = lum.dim(1);
  Tensor gx({h, w}), gy({h, w});
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      double sx = 0.0, sy = 0.0;
      for (int64_t d = -1; d <= 1; ++d) {
        const double left = lum.at(clamp_idx(y + d, h), clamp_idx(x - 1, w));
        const double right = lum.at(clamp_idx(y + d, h), clamp_idx(x + 1, w));
        sx += right - left;
        const double top = lum.at(clamp_idx(y - 1, h), clamp_idx(x + d, w));
        const double bottom = lum.at(clamp_idx(y + 1, h), clamp_idx(x + d, w));
        sy += bottom - top;
      }
      gx.at(y, x) = sx / 3.0;
      gy.at(y, x) = sy / 3.0;
    }
  return {gx, gy};
}

Tensor gms_map(const Tensor& a, const Tensor& b, double c) {
  if (!(c > 0.0)) throw ConfigError("gms regularizer c must be > 0");
  if (a.shape() != b.shape()) throw ShapeError("gms_map: shape mismatch");
  const auto [ax, ay] = prewitt_gradients(luminance(a));
  const auto [bx, by] = prewitt_gradients(luminance(b));
  const int64_t h = ax.dim(0), w = ax.dim(1);
  Tensor out({h, w});
  for (int64_t i = 0; i < out.numel(); ++i) {
    const double ga = std::sqrt(ax[i] * ax[i] + ay[i] * ay[i]);
    const double gb = std::sqrt(bx[i] * bx[i] + by[i] * by[i]);
    out[i] = (2.0 * ga * gb + c) / (ga * ga + gb * gb + c);
  }
  return out;
}

Tensor avg_pool2(const Tensor& image) {
  const int64_t h = image.dim(0), w = image.dim(1);
  if (h % 2 != 0 || w % 2 != 0) throw ShapeError("avg_pool2: odd spatial size");
  const int64_t c = image.rank() == 3 ? image.dim(2) : 1;
  Tensor out(image.rank() == 3 ? std::vector<int64_t>{h / 2, w / 2, c}
                               : std::vector<int64_t>{h / 2, w / 2});
  for (int64_t y = 0; y < h / 2; ++y)
    for (int64_t x = 0; x < w / 2; ++x)
      for (int64_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (int64_t dy = 0; dy < 2; ++dy)
          for (int64_t dx = 0; dx < 2; ++dx)
            s += image.rank() == 3 ? image.at(2 * y + dy, 2 * x + dx, ch)
                                   : image.at(2 * y + dy, 2 * x + dx);
        if (image.rank() == 3)
          out.at(y, x, ch) = s / 4.0;
        else
          out.at(y, x) = s / 4.0;
      }
  return out;
}

Tensor upsample_bilinear_2d(const Tensor& map, int64_t out_h, int64_t out_w) {
  const int64_t h = map.dim(0), w = map.dim(1);
  Tensor out({out_h, out_w});
  const double sy = static_cast<double>(h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(w) / static_cast<double>(out_w);
  for (int64_t y = 0; y < out_h; ++y) {
    const double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
    const int64_t y0 = static_cast<int64_t>(std::floor(fy));
    const double wy = fy - static_cast<double>(y0);
    for (int64_t x = 0; x < out_w; ++x) {
      const double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
      const int64_t x0 = static_cast<int64_t>(std::floor(fx));
      const double wx = fx - static_cast<double>(x0);
      const double v00 = map.at(clamp_idx(y0, h), clamp_idx(x0, w));
      const double v01 = map.at(clamp_idx(y0, h), clamp_idx(x0 + 1, w));
      const double v10 = map.at(clamp_idx(y0 + 1, h), clamp_idx(x0, w));
      const double v11 = map.at(clamp_idx(y0 + 1, h), clamp_idx(x0 + 1, w));
      out.at(y, x) = v00 * (1 - wy) * (1 - wx) + v01 * (1 - wy) * wx + v10 * wy * (1 - wx) +
                     v11 * wy * wx;
    }
  }
  return out;
}

Tensor msgms_anomaly_map(const Tensor& a, const Tensor& b, int levels, double c) {
  if (levels < 1) throw ConfigError("msgms levels must be >= 1");
  if (a.shape() != b.shape()) throw ShapeError("msgms: shape mismatch");
  const int64_t h = a.dim(0), w = a.dim(1);
  const int64_t div = int64_t{1} << (levels - 1);
  if (h % div != 0 || w % div != 0)
    throw ShapeError("msgms: spatial size must be divisible by 2^(levels-1)");

  Tensor acc({h, w});
  Tensor pa = a, pb = b;
  for (int k = 0; k < levels; ++k) {
    if (k > 0) {
      pa = avg_pool2(pa);
      pb = avg_pool2(pb);
    }
    Tensor gms = gms_map(pa, pb, c);
    if (gms.dim(0) != h || gms.dim(1) != w) gms = upsample_bilinear_2d(gms, h, w);
    for (int64_t i = 0; i < acc.numel(); ++i) acc[i] += gms[i];
  }
  for (int64_t i = 0; i < acc.numel(); ++i) {
    acc[i] = 1.0 - acc[i] / static_cast<double>(levels);
    if (acc[i] < 0.0) acc[i] = 0.0;  // guard tiny negative rounding
  }
  return acc;
}

Tensor box_filter(const Tensor& map, int window) {
  if (window < 1 || window % 2 == 0) throw ConfigError("box_filter window must be odd and >= 1");
  const int64_t h = map.dim(0), w = map.dim(1);
  const int64_t half = window / 2;
  if (half >= h || half >= w) throw ShapeError("box_filter window exceeds map size");
  // separable pass with reflect padding
  Tensor tmp({h, w});
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (int64_t d = -half; d <= half; ++d) s += map.at(y, reflect_idx(x + d, w));
      tmp.at(y, x) = s;
    }
  Tensor out({h, w});
  const double norm = static_cast<double>(window) * static_cast<double>(window);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (int64_t d = -half; d <= half; ++d) s += tmp.at(reflect_idx(y + d, h), x);
      out.at(y, x) = s / norm;
    }
  return out;
}

double image_anomaly_score(const Tensor& anomaly_map, int window) {
  return tensor_max(box_filter(anomaly_map, window));
}

int score_window_for(int64_t h) {
  int w = static_cast<int>(std::ceil(21.0 * static_cast<double>(h) / 256.0));
  if (w % 2 == 0) ++w;
  return std::max(3, w);
}

double auroc(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw ShapeError("auroc: scores/labels size mismatch");
  int64_t pos = 0, neg = 0;
  for (bool l : labels) (l ? pos : neg)++;
  if (pos == 0 || neg == 0)
    throw DegenerateLabels("auroc needs at least one positive and one negative");

  // average ranks over ties; AUC = (rank-sum of positives - P(P+1)/2) / (P*N)
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  double pos_rank_sum = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (size_t k = i; k <= j; ++k)
      if (labels[order[k]]) pos_rank_sum += avg_rank;
    i = j + 1;
  }
  const double p = static_cast<double>(pos), n = static_cast<double>(neg);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<size_t> order(v.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw ShapeError("spearman: need two equal-length vectors");
  const auto ra = average_ranks(a), rb = average_ranks(b);
  double ma = 0, mb = 0;
  for (size_t i = 0; i < ra.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= static_cast<double>(ra.size());
  mb /= static_cast<double>(rb.size());
  double num = 0, va = 0, vb = 0;
  for (size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;  // constant ranks carry no ordering signal
  return num / std::sqrt(va * vb);
}

double pixel_auroc(const std::vector<Tensor>& maps, const std::vector<Tensor>& gt_masks) {
  if (maps.size() != gt_masks.size()) throw ShapeError("pixel_auroc: maps/masks count mismatch");
  std::vector<double> scores;
  std::vector<bool> labels;
  for (size_t i = 0; i < maps.size(); ++i) {
    if (maps[i].shape() != gt_masks[i].shape())
      throw ShapeError("pixel_auroc: map/mask shape mismatch at index " + std::to_string(i));
    for (int64_t j = 0; j < maps[i].numel(); ++j) {
      scores.push_back(maps[i][j]);
      labels.push_back(gt_masks[i][j] > 0.5);
    }
  }
  return auroc(scores, labels);
}

}  // namespace fader::score
