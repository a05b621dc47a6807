#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fader/tensor.hpp"

namespace fader::mask {

// Binary masks are (H, W) tensors over {0,1} with 1 = keep, 0 = masked, so
// element-wise multiplication applies them directly.

enum class ProviderKind { saliency, precomputed, oracle_gt, random_multi };

std::string to_string(ProviderKind k);
ProviderKind provider_kind_from_string(const std::string& s);

struct ProviderConfig {
  ProviderKind kind = ProviderKind::saliency;
  double threshold = 0.6;                 // saliency / precomputed binarization
  std::filesystem::path precomputed_path; // precomputed only
  double oracle_coverage = 1.0;           // oracle_gt: 1.0 dilates by 1px, <1 erodes to that area fraction
  int64_t mask_count = 4;                 // random_multi only
  int64_t cell = 8;                       // random_multi cell size
  uint64_t seed = 0;                      // random_multi only

  void validate() const;
};

// Single deterministic mask for every kind except random_multi, which
// returns mask_count disjoint masks (deterministic given cfg.seed). The
// masked (0) fraction never exceeds 0.5.
std::vector<Tensor> provide_mask(const ProviderConfig& cfg, const Tensor& image,
                                 const std::optional<std::filesystem::path>& gt_mask_path = {});

// Center-surround contrast: per-channel |pixel - 9x9 local mean| (window
// clipped at the borders), averaged over channels, min-max normalized per
// image; pixels above the threshold are masked (0). A flat contrast map
// normalizes to all-zeros, i.e. nothing is masked.
Tensor saliency_mask(const Tensor& image, double threshold);

// Attention values from a single-channel image or a whitespace-separated
// row-major text grid; min-max normalized, nearest-resized to (target_h,
// target_w), then thresholded exactly like saliency_mask.
Tensor load_precomputed_attention(const std::filesystem::path& path, double threshold,
                                  int64_t target_h, int64_t target_w);

// I' = M (.) I + (1-M) (.) mosaic(I), where mosaic is an m x m average-pool
// followed by nearest x m upsampling.
Tensor mosaic_obfuscate(const Tensor& image, const Tensor& binary_mask, int64_t m);

Tensor mosaic(const Tensor& image, int64_t m);

}  // namespace fader::mask
