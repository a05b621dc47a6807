#include "fader/head_train.hpp"

#include "fader/image_io.hpp"
#include "fader/losses.hpp"

namespace fader::head {

std::string to_string(MaskMode m) {
  switch (m) {
    case MaskMode::soft: return "soft";
    case MaskMode::hard: return "hard";
    case MaskMode::all_ones: return "all_ones";
    case MaskMode::none: return "none";
  }
  return "soft";
}

MaskMode mask_mode_from_string(const std::string& s) {
  if (s == "soft") return MaskMode::soft;
  if (s == "hard") return MaskMode::hard;
  if (s == "all_ones") return MaskMode::all_ones;
  if (s == "none") return MaskMode::none;
  throw ConfigError("unknown mask mode: '" + s + "'");
}

void HeadTrainConfig::validate() const {
  if (patch_size < 1) throw ConfigError("patch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(eta > 0.0)) throw ConfigError("eta must be > 0");
  if (mlp_hidden < 1) throw ConfigError("mlp_hidden must be >= 1");
  ranking.validate();
  provider.validate();
}

namespace {

struct PreparedSet {
  std::vector<Tensor> images;      // originals (H,W,C)
  std::vector<TensorF> inputs;     // obfuscated, (1,C,H,W)
  std::vector<TensorF> targets;    // originals, (1,C,H,W)
  std::vector<PatchTokens> tokens; // tokens of I'
};

PreparedSet prepare(const HeadTrainConfig& cfg, const data::DatasetIndex& index, int64_t m) {
  PreparedSet set;
  for (const auto& entry : index.entries) {
    if (entry.label != data::Label::normal)
      throw InvalidTrainingData("training requires normal-only data: " + entry.image_path.string());
    Tensor image = data::load_image(entry.image_path, index.height, index.width);
    const auto masks = mask::provide_mask(cfg.provider, image, entry.gt_mask_path);
    const Tensor obfuscated = mask::mosaic_obfuscate(image, masks.front(), m);
    set.tokens.push_back(tokenize(obfuscated, cfg.patch_size));
    set.inputs.push_back(nn::image_to_batch(obfuscated));
    set.targets.push_back(nn::image_to_batch(image));
    set.images.push_back(std::move(image));
  }
  if (set.images.empty()) throw InvalidTrainingData("training set is empty");
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

HeadTrainResult train_fader(const nn::Checkpoint& backbone_ckpt,
                            const data::DatasetIndex& train_index, const HeadTrainConfig& cfg,
                            const nn::Checkpoint* resume_mlp,
                            const nn::Checkpoint* resume_backbone,
                            const std::function<void(const nn::EpochLog&)>& on_epoch) {
  cfg.validate();
  const int64_t m = backbone_ckpt.config.get_int("backbone", "mosaic_scale");
  if (m != cfg.patch_size)
    throw ConfigMismatch("patch_size " + std::to_string(cfg.patch_size) +
                         " must equal the backbone mosaic scale " + std::to_string(m) +
                         " (mismatched scales leak obfuscation hints across patches)");

  const PreparedSet set = prepare(cfg, train_index, m);
  const int64_t n_images = static_cast<int64_t>(set.images.size());
  const int64_t tokens_per_image = set.tokens.front().count();
  const int64_t token_dim = set.tokens.front().tokens.dim(1);
  const RankingConfig ranking = effective_ranking(cfg.ranking, tokens_per_image);

  nn::UNet<float> net = resume_backbone ? nn::unet_from_checkpoint(*resume_backbone)
                                        : nn::unet_from_checkpoint(backbone_ckpt);
  LossPredictor mlp = resume_mlp ? LossPredictor::from_checkpoint(*resume_mlp)
                                 : LossPredictor(token_dim, cfg.mlp_hidden, cfg.mlp_slope, cfg.seed);

  nn::RmsProp<double> mlp_opt;
  mlp_opt.attach(mlp.parameters());
  nn::RmsProp<float> dec_opt;
  dec_opt.attach(net.decoder_parameters());

  int64_t start_epoch = 0;
  if (resume_mlp) {
    start_epoch = resume_mlp->config.get_int("fader", "epochs_completed");
    for (size_t k = 0; k < mlp_opt.params().size(); ++k)
      resume_mlp->restore_into("opt." + mlp_opt.params()[k]->name, mlp_opt.state()[k]);
    if (!resume_backbone) throw ConfigMismatch("resuming needs both mlp and backbone checkpoints");
    for (size_t k = 0; k < dec_opt.params().size(); ++k)
      resume_backbone->restore_into("optft." + dec_opt.params()[k]->name, dec_opt.state()[k]);
  }

  const int64_t steps_per_epoch = (n_images + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total_steps = steps_per_epoch * cfg.epochs;
  const int64_t warmup_steps = cfg.warmup ? std::max<int64_t>(1, total_steps / 20) : 0;

  // decoder fine-tunes; encoder stays frozen, including its BN statistics
  net.set_training(true);
  net.set_freeze_encoder_stats(true);

  HeadTrainResult result;
  int64_t step = start_epoch * steps_per_epoch;
  for (int64_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    double epoch_rank_loss = 0.0;
    double epoch_lr = cfg.eta;
    const auto batches = data::batch_order(n_images, cfg.batch_size, cfg.seed, epoch);
    for (const auto& ids : batches) {
      const int64_t bs = static_cast<int64_t>(ids.size());

      // predicted patch losses and soft masks for this batch
      nn::Attenuation att;
      att.mode = cfg.scaling;
      const auto& grid0 = set.tokens[static_cast<size_t>(ids[0])];
      att.grids = Tensor({bs, grid0.grid_h, grid0.grid_w});
      std::vector<Tensor> predictions(static_cast<size_t>(bs));
      for (int64_t b = 0; b < bs; ++b) {
        const auto& tok = set.tokens[static_cast<size_t>(ids[b])];
        Tensor pred = mlp.predict(tok.tokens);
        LossVector lv{pred, tok.grid_h, tok.grid_w};
        const SoftMask sm = soft_mask_from_losses(lv);
        std::copy(sm.grid.data(), sm.grid.data() + sm.grid.numel(),
                  att.grids.data() + b * sm.grid.numel());
        predictions[static_cast<size_t>(b)] = std::move(pred);
      }

      // reconstruction with the current soft mask on the skips
      const TensorF input = gather(set.inputs, ids);
      const TensorF target = gather(set.targets, ids);
      const TensorF recon = net.forward(input, &att);

      // patch-wise GT losses from the current (attenuated) model
      const float lr = nn::warmup_lr(static_cast<float>(cfg.eta), step, warmup_steps);
      epoch_lr = lr;
      double batch_rank_loss = 0.0;
      mlp_opt.zero_grad();
      for (int64_t b = 0; b < bs; ++b) {
        const auto& tok = set.tokens[static_cast<size_t>(ids[b])];
        const Tensor recon_img = nn::batch_to_image(recon, b);
        const LossVector gt =
            gt_patch_losses(set.images[static_cast<size_t>(ids[b])], recon_img, cfg.patch_size);
        const Tensor pred = mlp.forward(set.tokens[static_cast<size_t>(ids[b])].tokens);
        (void)tok;
        Tensor grad;
        RankingConfig rc = ranking;
        rc.seed = derive_seed(ranking.seed, static_cast<uint64_t>(step) * 131 + static_cast<uint64_t>(b));
        batch_rank_loss += margin_ranking_loss(pred, gt.values, rc, &grad);
        for (int64_t i = 0; i < grad.numel(); ++i) grad[i] /= static_cast<double>(bs);
        mlp.backward(grad);
      }
      batch_rank_loss /= static_cast<double>(bs);
      mlp_opt.step(lr);

      // decoder-only fine-tune on the reconstruction loss at 0.1 * eta
      nn::MsgmsLoss<float> msgms(cfg.msgms_levels);
      msgms.forward(recon, target);
      BasicTensor<float> rgrad = nn::mse_loss_grad(recon, target);
      const BasicTensor<float> g2 = msgms.backward();
      for (int64_t i = 0; i < rgrad.numel(); ++i) rgrad[i] += g2[i];
      dec_opt.zero_grad();
      net.backward(rgrad, /*decoder_only=*/true);
      dec_opt.step(0.1f * lr);

      epoch_rank_loss += batch_rank_loss * static_cast<double>(bs);
      ++step;
    }
    epoch_rank_loss /= static_cast<double>(n_images);
    nn::EpochLog log{epoch + 1, epoch_rank_loss, static_cast<double>(epoch_lr)};
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }

  // checkpoints record the schedule and every knob that shaped training
  nn::Checkpoint& mc = result.mlp_checkpoint;
  mlp.store_state(mc);
  for (size_t k = 0; k < mlp_opt.params().size(); ++k)
    mc.store("opt." + mlp_opt.params()[k]->name, mlp_opt.state()[k]);
  mc.config.set_int("fader", "epochs_completed", cfg.epochs);
  mc.config.set_int("fader", "patch_size", cfg.patch_size);
  mc.config.set_double("fader", "eta", cfg.eta);
  mc.config.set_bool("fader", "warmup", cfg.warmup);
  mc.config.set_double("fader", "margin", cfg.ranking.margin);
  mc.config.set("fader", "pair_strategy", to_string(ranking.strategy));
  mc.config.set_int("fader", "pairs_per_image", ranking.pairs_per_image);
  mc.config.set("fader", "scaling", nn::to_string(cfg.scaling));
  mc.config.set_int("fader", "seed", static_cast<int64_t>(cfg.seed));
  mc.config.set_int("fader", "batch_size", cfg.batch_size);

  nn::Checkpoint& bc = result.backbone_checkpoint;
  bc.config = backbone_ckpt.config;
  nn::store_unet_state(bc, net);
  for (size_t k = 0; k < dec_opt.params().size(); ++k)
    bc.store("optft." + dec_opt.params()[k]->name, dec_opt.state()[k]);
  bc.config.set_bool("backbone", "decoder_fine_tuned", true);
  bc.config.set_double("backbone", "fine_tune_eta_factor", 0.1);
  return result;
}

FaderInference infer_with_fader(nn::UNet<float>& net, const LossPredictor* mlp,
                                const Tensor& image, const mask::ProviderConfig& provider,
                                int64_t mosaic_scale, nn::ScalingMode scaling, MaskMode mask_mode,
                                double keep_quantile,
                                const std::optional<std::filesystem::path>& gt_mask_path) {
  const auto masks = mask::provide_mask(provider, image, gt_mask_path);
  FaderInference out;
  out.obfuscated = mask::mosaic_obfuscate(image, masks.front(), mosaic_scale);
  net.set_training(false);

  if (mask_mode == MaskMode::none) {
    out.soft_mask.grid = Tensor({image.dim(0) / mosaic_scale, image.dim(1) / mosaic_scale}, 1.0);
    const TensorF recon = net.forward(nn::image_to_batch(out.obfuscated));
    out.reconstruction = nn::batch_to_image(recon);
    return out;
  }

  const PatchTokens tokens = tokenize(out.obfuscated, mosaic_scale);
  switch (mask_mode) {
    case MaskMode::soft: {
      if (!mlp) throw ConfigMismatch("soft masking requires a trained predictor");
      out.predicted_losses = mlp->predict(tokens.tokens);
      const LossVector pred{out.predicted_losses, tokens.grid_h, tokens.grid_w};
      out.soft_mask = soft_mask_from_losses(pred);
      break;
    }
    case MaskMode::hard: {
      if (!mlp) throw ConfigMismatch("hard masking requires a trained predictor");
      out.predicted_losses = mlp->predict(tokens.tokens);
      const LossVector pred{out.predicted_losses, tokens.grid_h, tokens.grid_w};
      out.soft_mask = binary_mask_from_losses(pred, keep_quantile);
      break;
    }
    case MaskMode::all_ones:
      out.soft_mask.grid = Tensor({tokens.grid_h, tokens.grid_w}, 1.0);
      break;
    case MaskMode::none: break;
  }

  nn::Attenuation att;
  att.mode = scaling;
  att.grids = Tensor({1, out.soft_mask.grid.dim(0), out.soft_mask.grid.dim(1)});
  std::copy(out.soft_mask.grid.data(), out.soft_mask.grid.data() + out.soft_mask.grid.numel(),
            att.grids.data());
  const TensorF recon = net.forward(nn::image_to_batch(out.obfuscated), &att);
  out.reconstruction = nn::batch_to_image(recon);
  return out;
}

}  // namespace fader::head
