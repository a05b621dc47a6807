#pragma once

#include <functional>

#include "fader/backbone_train.hpp"
#include "fader/head.hpp"

namespace fader::head {

enum class MaskMode { soft, hard, all_ones, none };

std::string to_string(MaskMode m);
MaskMode mask_mode_from_string(const std::string& s);

struct HeadTrainConfig {
  int64_t patch_size = 8;  // p; must equal the backbone's mosaic scale
  int64_t epochs = 100;
  int64_t batch_size = 8;
  double eta = 1e-4;
  bool warmup = false;
  int64_t mlp_hidden = 128;
  double mlp_slope = 0.2;
  RankingConfig ranking;
  nn::ScalingMode scaling = nn::ScalingMode::nearest;
  int msgms_levels = 2;  // decoder fine-tune reconstruction loss
  mask::ProviderConfig provider;
  uint64_t seed = 0;

  void validate() const;
};

struct HeadTrainResult {
  nn::Checkpoint mlp_checkpoint;
  nn::Checkpoint backbone_checkpoint;  // fine-tuned decoder, frozen encoder
  std::vector<nn::EpochLog> log;       // loss column carries the ranking loss
};

// Label-free loop: per batch, obfuscate, predict patch losses, apply the
// soft mask to the skips, reconstruct, derive patch-wise GT losses from the
// current model, step the predictor on the ranking loss at eta and the
// decoder on the reconstruction loss at 0.1 * eta. The encoder (parameters
// and batch-norm statistics) stays bit-identical throughout.
HeadTrainResult train_fader(const nn::Checkpoint& backbone_ckpt,
                            const data::DatasetIndex& train_index, const HeadTrainConfig& cfg,
                            const nn::Checkpoint* resume_mlp = nullptr,
                            const nn::Checkpoint* resume_backbone = nullptr,
                            const std::function<void(const nn::EpochLog&)>& on_epoch = {});

struct FaderInference {
  Tensor reconstruction;   // (H,W,C)
  SoftMask soft_mask;      // the mask actually applied to the skips
  Tensor obfuscated;       // I' (for visualization)
  Tensor predicted_losses; // raw per-patch predictions (empty without a predictor)
};

// Inference pipeline: obfuscate -> tokenize I' -> predict patch losses ->
// build the mask (soft / hard / forced all-ones) -> forward with skip
// attenuation. MaskMode::none skips the predictor entirely.
FaderInference infer_with_fader(nn::UNet<float>& net, const LossPredictor* mlp,
                                const Tensor& image, const mask::ProviderConfig& provider,
                                int64_t mosaic_scale, nn::ScalingMode scaling,
                                MaskMode mask_mode = MaskMode::soft, double keep_quantile = 0.75,
                                const std::optional<std::filesystem::path>& gt_mask_path = {});

}  // namespace fader::head
