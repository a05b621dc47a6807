#pragma once

#include <optional>

#include "fader/head_train.hpp"
#include "fader/scoring.hpp"

namespace fader::score {

struct EvalConfig {
  mask::ProviderConfig provider;
  int64_t mosaic_scale = 8;
  int levels = 2;
  int window = 0;  // 0: derive from the map height via score_window_for
  nn::ScalingMode scaling = nn::ScalingMode::nearest;
  head::MaskMode mask_mode = head::MaskMode::soft;
  double keep_quantile = 0.75;
  bool pixel_level = true;
  uint64_t seed = 0;  // echoed into the report
};

struct ImageResult {
  std::string path;
  bool anomalous = false;
  double score = 0.0;
};

struct EvalReport {
  std::vector<ImageResult> rows;  // dataset order
  double image_auroc = 0.0;
  std::optional<double> pixel_auroc_value;
  // predictor quality on normal test images: Spearman(l_hat, l) per image, averaged
  std::optional<double> spearman_pred_gt;
  // soft-mask statistics over defect test images, patches split by ground truth
  std::optional<double> mask_mean_defect_patches;
  std::optional<double> mask_mean_normal_patches;
  std::optional<double> mask_mean_normal_images;
  KvDoc echo;  // full configuration the run used

  KvDoc to_doc() const;
  void save(const std::filesystem::path& path) const;
};

struct EvalArtifacts {
  std::vector<Tensor> anomaly_maps;
  std::vector<head::SoftMask> soft_masks;
  std::vector<Tensor> reconstructions;
};

// Scores every test entry with MSGMS anomaly maps and reports image-level
// (and, when ground truth exists, pixel-level) AUROC. `mlp` may be null only
// for MaskMode::none / all_ones... pass artifacts to keep per-image outputs.
EvalReport evaluate(nn::UNet<float>& net, const head::LossPredictor* mlp,
                    const data::DatasetIndex& test_index, const EvalConfig& cfg,
                    EvalArtifacts* artifacts = nullptr);

}  // namespace fader::score
