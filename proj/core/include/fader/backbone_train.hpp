#pragma once

#include <functional>
#include <optional>

#include "fader/checkpoint.hpp"
#include "fader/dataset.hpp"
#include "fader/masking.hpp"
#include "fader/unet.hpp"

namespace fader::nn {

struct BackboneTrainConfig {
  UNetConfig unet;
  mask::ProviderConfig provider;
  int64_t mosaic_scale = 8;  // m: mosaic cell size of the obfuscation hint
  int64_t epochs = 100;
  int64_t batch_size = 8;
  double eta = 1e-4;
  bool warmup = false;  // linear LR warm-up over the first 5% of steps
  int msgms_levels = 2;
  uint64_t seed = 0;

  void validate() const;
};

struct EpochLog {
  int64_t epoch = 0;  // 1-based
  double loss = 0.0;
  double lr = 0.0;
};

struct BackboneTrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
};

// Reconstruction-by-inpainting pre-training: minimizes
// mse(I, Ihat) + msgms(I, Ihat) over obfuscated inputs I' built from the
// configured mask provider. Deterministic given cfg.seed. Passing a resume
// checkpoint continues from its recorded epoch with identical results to an
// uninterrupted run.
BackboneTrainResult train_backbone(const BackboneTrainConfig& cfg,
                                   const data::DatasetIndex& train_index,
                                   const Checkpoint* resume = nullptr,
                                   const std::function<void(const EpochLog&)>& on_epoch = {});

// (H,W,C) image in [0,1] -> (1,C,H,W) float batch and back.
TensorF image_to_batch(const Tensor& image);
TensorF images_to_batch(const std::vector<const Tensor*>& images);
Tensor batch_to_image(const TensorF& batch, int64_t index = 0);

// Composite reconstruction loss used for training and validation probes.
float reconstruction_loss(const TensorF& pred, const TensorF& target, int msgms_levels);

UNetConfig unet_config_from_checkpoint(const Checkpoint& ckpt);
void store_unet_state(Checkpoint& ckpt, UNet<float>& net);
UNet<float> unet_from_checkpoint(const Checkpoint& ckpt);

// Inference-mode reconstruction: obfuscate with the provider's first mask,
// then forward (batch-norm running statistics, optional skip attenuation).
Tensor reconstruct(UNet<float>& net, const Tensor& image, const mask::ProviderConfig& provider,
                   int64_t mosaic_scale, const Attenuation* attenuation = nullptr,
                   const std::optional<std::filesystem::path>& gt_mask_path = {});

}  // namespace fader::nn
