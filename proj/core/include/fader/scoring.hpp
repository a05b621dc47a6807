#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fader/tensor.hpp"

namespace fader::score {

// GMS regularizer for [0,1] dynamic range (the GMSD constant 170 rescaled
// from 8-bit range).
inline constexpr double kGmsC = 0.0026;

Tensor luminance(const Tensor& image);  // mean over channels, (H, W)

// Prewitt gradients (kernels scaled by 1/3) with replicate padding.
std::pair<Tensor, Tensor> prewitt_gradients(const Tensor& lum);

// Gradient magnitude similarity map in (0,1]; 1 where gradients agree.
Tensor gms_map(const Tensor& a, const Tensor& b, double c = kGmsC);

// 1 - mean over `levels` scales of the GMS map; level k compares the images
// average-pooled k times (factor 2), upsampled bilinearly to full size.
Tensor msgms_anomaly_map(const Tensor& a, const Tensor& b, int levels, double c = kGmsC);

Tensor avg_pool2(const Tensor& image);
Tensor upsample_bilinear_2d(const Tensor& map, int64_t out_h, int64_t out_w);
Tensor box_filter(const Tensor& map, int window);  // reflect padding

// Max of the box-smoothed anomaly map. The window defaults to 21 (tuned for
// 256x256 maps); pipelines scale it with resolution via score_window_for.
double image_anomaly_score(const Tensor& anomaly_map, int window = 21);

// ceil(21 * h / 256), forced odd: 21 at 256, 7 at 64.
int score_window_for(int64_t h);

// Mann-Whitney AUROC with exact tie handling:
// (#{pos > neg} + 0.5 * #{pos = neg}) / (P * N).
double auroc(const std::vector<double>& scores, const std::vector<bool>& labels);

// AUROC over the pooled per-pixel population of all maps; gt masks are
// (H, W) tensors in {0,1}, one per map (all-zero for normal images).
double pixel_auroc(const std::vector<Tensor>& maps, const std::vector<Tensor>& gt_masks);

// Spearman rank correlation (average ranks over ties).
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace fader::score
