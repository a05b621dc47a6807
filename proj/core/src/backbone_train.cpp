#include "fader/backbone_train.hpp"

#include <iostream>

#include "fader/image_io.hpp"
#include "fader/losses.hpp"

namespace fader::nn {

void BackboneTrainConfig::validate() const {
  unet.validate();
  provider.validate();
  if (mosaic_scale < 1) throw ConfigError("mosaic_scale must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(eta > 0.0)) throw ConfigError("eta must be > 0");
  if (msgms_levels < 1) throw ConfigError("msgms_levels must be >= 1");
}

TensorF image_to_batch(const Tensor& image) { return images_to_batch({&image}); }

TensorF images_to_batch(const std::vector<const Tensor*>& images) {
  const int64_t n = static_cast<int64_t>(images.size());
  const int64_t h = images[0]->dim(0), w = images[0]->dim(1), c = images[0]->dim(2);
  TensorF batch({n, c, h, w});
  for (int64_t i = 0; i < n; ++i) {
    const Tensor& img = *images[static_cast<size_t>(i)];
    if (img.dim(0) != h || img.dim(1) != w || img.dim(2) != c)
      throw ShapeError("images_to_batch: inconsistent image shapes");
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x)
        for (int64_t ch = 0; ch < c; ++ch)
          batch.at(i, ch, y, x) = static_cast<float>(img.at(y, x, ch));
  }
  return batch;
}

Tensor batch_to_image(const TensorF& batch, int64_t index) {
  const int64_t c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  Tensor img({h, w, c});
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int64_t ch = 0; ch < c; ++ch)
        img.at(y, x, ch) = static_cast<double>(batch.at(index, ch, y, x));
  return img;
}

float reconstruction_loss(const TensorF& pred, const TensorF& target, int msgms_levels) {
  MsgmsLoss<float> msgms(msgms_levels);
  return mse_loss(pred, target) + msgms.forward(pred, target);
}

UNetConfig unet_config_from_checkpoint(const Checkpoint& ckpt) {
  UNetConfig cfg;
  cfg.depth = ckpt.config.get_int("unet", "depth");
  cfg.base_channels = ckpt.config.get_int("unet", "base_channels");
  cfg.in_channels = ckpt.config.get_int("unet", "in_channels");
  cfg.leaky_slope = ckpt.config.get_double("unet", "leaky_slope");
  return cfg;
}

void store_unet_state(Checkpoint& ckpt, UNet<float>& net) {
  const UNetConfig& cfg = net.config();
  ckpt.config.set_int("unet", "depth", cfg.depth);
  ckpt.config.set_int("unet", "base_channels", cfg.base_channels);
  ckpt.config.set_int("unet", "in_channels", cfg.in_channels);
  ckpt.config.set_double("unet", "leaky_slope", cfg.leaky_slope);
  for (auto& [name, tensor] : net.state_tensors()) ckpt.store(name, *tensor);
}

UNet<float> unet_from_checkpoint(const Checkpoint& ckpt) {
  UNet<float> net(unet_config_from_checkpoint(ckpt), 0);
  for (auto& [name, tensor] : net.state_tensors()) ckpt.restore_into(name, *tensor);
  return net;
}

namespace {

// Fixed per-run training set: obfuscation is deterministic, so inputs are
// precomputed once. Multi-mask providers contribute one sample per mask.
struct SampleSet {
  std::vector<TensorF> inputs;   // (1,C,H,W) obfuscated
  std::vector<TensorF> targets;  // (1,C,H,W) original
};

SampleSet build_samples(const BackboneTrainConfig& cfg, const data::DatasetIndex& index) {
  SampleSet set;
  for (const auto& entry : index.entries) {
    if (entry.label != data::Label::normal)
      throw InvalidTrainingData("training requires normal-only data: " + entry.image_path.string());
    const Tensor image = data::load_image(entry.image_path, index.height, index.width);
    const auto masks = mask::provide_mask(cfg.provider, image, entry.gt_mask_path);
    for (const auto& m : masks) {
      const Tensor obfuscated = mask::mosaic_obfuscate(image, m, cfg.mosaic_scale);
      set.inputs.push_back(image_to_batch(obfuscated));
      set.targets.push_back(image_to_batch(image));
    }
  }
  if (set.inputs.empty()) throw InvalidTrainingData("training set is empty");
  return set;
}

TensorF gather(const std::vector<TensorF>& singles, const std::vector<int64_t>& ids) {
  const auto& first = singles[static_cast<size_t>(ids[0])];
  const int64_t c = first.dim(1), h = first.dim(2), w = first.dim(3);
  TensorF batch({static_cast<int64_t>(ids.size()), c, h, w});
  for (size_t i = 0; i < ids.size(); ++i)
    std::copy(singles[static_cast<size_t>(ids[i])].data(),
              singles[static_cast<size_t>(ids[i])].data() + c * h * w,
              batch.data() + static_cast<int64_t>(i) * c * h * w);
  return batch;
}

}  // namespace

BackboneTrainResult train_backbone(const BackboneTrainConfig& cfg,
                                   const data::DatasetIndex& train_index,
                                   const Checkpoint* resume,
                                   const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  const SampleSet samples = build_samples(cfg, train_index);
  const int64_t n = static_cast<int64_t>(samples.inputs.size());

  UNet<float> net(cfg.unet, cfg.seed);
  RmsProp<float> opt;
  opt.attach(net.parameters());

  int64_t start_epoch = 0;
  if (resume) {
    const UNetConfig stored = unet_config_from_checkpoint(*resume);
    if (stored.depth != cfg.unet.depth || stored.base_channels != cfg.unet.base_channels ||
        stored.in_channels != cfg.unet.in_channels)
      throw ConfigMismatch("resume checkpoint was trained with a different unet config");
    for (auto& [name, tensor] : net.state_tensors()) resume->restore_into(name, *tensor);
    for (size_t k = 0; k < opt.params().size(); ++k)
      resume->restore_into("opt." + opt.params()[k]->name, opt.state()[k]);
    start_epoch = resume->config.get_int("backbone", "epochs_completed");
  }

  const int64_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total_steps = steps_per_epoch * cfg.epochs;
  const int64_t warmup_steps = cfg.warmup ? std::max<int64_t>(1, total_steps / 20) : 0;

  BackboneTrainResult result;
  net.set_training(true);
  int64_t step = start_epoch * steps_per_epoch;
  double last_loss = 0.0;
  for (int64_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    double epoch_lr = cfg.eta;
    const auto batches = data::batch_order(n, cfg.batch_size, cfg.seed, epoch);
    for (const auto& ids : batches) {
      const TensorF input = gather(samples.inputs, ids);
      const TensorF target = gather(samples.targets, ids);

      const TensorF pred = net.forward(input);
      MsgmsLoss<float> msgms(cfg.msgms_levels);
      const float loss = mse_loss(pred, target) + msgms.forward(pred, target);

      BasicTensor<float> grad = mse_loss_grad(pred, target);
      const BasicTensor<float> g2 = msgms.backward();
      for (int64_t i = 0; i < grad.numel(); ++i) grad[i] += g2[i];

      opt.zero_grad();
      net.backward(grad);
      const float lr = warmup_lr(static_cast<float>(cfg.eta), step, warmup_steps);
      epoch_lr = lr;
      opt.step(lr);
      ++step;
      epoch_loss += static_cast<double>(loss) * static_cast<double>(ids.size());
    }
    epoch_loss /= static_cast<double>(n);
    last_loss = epoch_loss;
    EpochLog log{epoch + 1, epoch_loss, epoch_lr};
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }

  Checkpoint& ckpt = result.checkpoint;
  store_unet_state(ckpt, net);
  for (size_t k = 0; k < opt.params().size(); ++k)
    ckpt.store("opt." + opt.params()[k]->name, opt.state()[k]);
  ckpt.config.set_int("backbone", "epochs_completed", cfg.epochs);
  ckpt.config.set_int("backbone", "mosaic_scale", cfg.mosaic_scale);
  ckpt.config.set_int("backbone", "batch_size", cfg.batch_size);
  ckpt.config.set_double("backbone", "eta", cfg.eta);
  ckpt.config.set_bool("backbone", "warmup", cfg.warmup);
  ckpt.config.set_int("backbone", "msgms_levels", cfg.msgms_levels);
  ckpt.config.set_int("backbone", "seed", static_cast<int64_t>(cfg.seed));
  ckpt.config.set("backbone", "mask_provider", mask::to_string(cfg.provider.kind));
  ckpt.config.set_double("backbone", "mask_threshold", cfg.provider.threshold);
  ckpt.config.set_double("backbone", "final_loss", last_loss);
  return result;
}

Tensor reconstruct(UNet<float>& net, const Tensor& image, const mask::ProviderConfig& provider,
                   int64_t mosaic_scale, const Attenuation* attenuation,
                   const std::optional<std::filesystem::path>& gt_mask_path) {
  const auto masks = mask::provide_mask(provider, image, gt_mask_path);
  const Tensor obfuscated = mask::mosaic_obfuscate(image, masks.front(), mosaic_scale);
  net.set_training(false);
  const TensorF out = net.forward(image_to_batch(obfuscated), attenuation);
  return batch_to_image(out);
}

}  // namespace fader::nn
