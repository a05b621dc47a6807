#include "fader/evaluate.hpp"

#include <cstdio>

#include "fader/image_io.hpp"

namespace fader::score {

KvDoc EvalReport::to_doc() const {
  KvDoc doc = echo;
  doc.set_double("result", "image_auroc", image_auroc);
  if (pixel_auroc_value) doc.set_double("result", "pixel_auroc", *pixel_auroc_value);
  if (spearman_pred_gt) doc.set_double("result", "spearman_pred_gt", *spearman_pred_gt);
  if (mask_mean_defect_patches)
    doc.set_double("result", "mask_mean_defect_patches", *mask_mean_defect_patches);
  if (mask_mean_normal_patches)
    doc.set_double("result", "mask_mean_normal_patches", *mask_mean_normal_patches);
  if (mask_mean_normal_images)
    doc.set_double("result", "mask_mean_normal_images", *mask_mean_normal_images);
  doc.set_int("result", "images", static_cast<int64_t>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    char key[16];
    std::snprintf(key, sizeof(key), "%05zu", i);
    doc.set("scores", key,
            format_double(rows[i].score) + " " + (rows[i].anomalous ? "1" : "0") + " " +
                rows[i].path);
  }
  return doc;
}

void EvalReport::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  to_doc().save(path);
}

EvalReport evaluate(nn::UNet<float>& net, const head::LossPredictor* mlp,
                    const data::DatasetIndex& test_index, const EvalConfig& cfg,
                    EvalArtifacts* artifacts) {
  cfg.provider.validate();
  if ((cfg.mask_mode == head::MaskMode::soft || cfg.mask_mode == head::MaskMode::hard) && !mlp)
    throw ConfigMismatch("evaluation with soft/hard masking needs a trained predictor");

  const int window = cfg.window > 0 ? cfg.window : score_window_for(test_index.height);
  const int64_t p = cfg.mosaic_scale;

  EvalReport report;
  std::vector<Tensor> maps;
  std::vector<Tensor> gts;
  std::vector<double> scores;
  std::vector<bool> labels;

  std::vector<double> spearman_per_normal;
  double defect_patch_sum = 0.0, normal_patch_sum = 0.0;
  int64_t defect_patch_count = 0, normal_patch_count = 0;
  double normal_image_mask_sum = 0.0;
  int64_t normal_image_mask_count = 0;

  net.set_training(false);
  for (const auto& entry : test_index.entries) {
    const Tensor image = data::load_image(entry.image_path, test_index.height, test_index.width);
    const bool anomalous = entry.label == data::Label::anomalous;

    head::FaderInference inf =
        head::infer_with_fader(net, mlp, image, cfg.provider, cfg.mosaic_scale, cfg.scaling,
                               cfg.mask_mode, cfg.keep_quantile, entry.gt_mask_path);
    Tensor map = msgms_anomaly_map(image, inf.reconstruction, cfg.levels);
    const double s = image_anomaly_score(map, window);

    scores.push_back(s);
    labels.push_back(anomalous);
    report.rows.push_back({entry.image_path.string(), anomalous, s});

    if (cfg.pixel_level) {
      if (anomalous) {
        if (!entry.gt_mask_path)
          throw MissingGroundTruth("pixel-level evaluation requires a ground-truth mask for " +
                                   entry.image_path.string());
        gts.push_back(data::load_mask(*entry.gt_mask_path, test_index.height, test_index.width));
      } else {
        gts.push_back(Tensor({test_index.height, test_index.width}));
      }
    }

    // predictor diagnostics (only meaningful when a predictor ran)
    if (inf.predicted_losses.numel() > 0) {
      if (!anomalous) {
        const head::LossVector gt_l = head::gt_patch_losses(image, inf.reconstruction, p);
        if (gt_l.values.numel() >= 2)
          spearman_per_normal.push_back(
              spearman(inf.predicted_losses.raw(), gt_l.values.raw()));
        normal_image_mask_sum += tensor_mean(inf.soft_mask.grid) *
                                 static_cast<double>(inf.soft_mask.grid.numel());
        normal_image_mask_count += inf.soft_mask.grid.numel();
      } else if (entry.gt_mask_path) {
        const Tensor gt = data::load_mask(*entry.gt_mask_path, test_index.height, test_index.width);
        const int64_t gh = inf.soft_mask.grid.dim(0), gw = inf.soft_mask.grid.dim(1);
        for (int64_t gy = 0; gy < gh; ++gy)
          for (int64_t gx = 0; gx < gw; ++gx) {
            bool touches_defect = false;
            for (int64_t y = gy * p; y < (gy + 1) * p && !touches_defect; ++y)
              for (int64_t x = gx * p; x < (gx + 1) * p; ++x)
                if (gt.at(y, x) > 0.5) {
                  touches_defect = true;
                  break;
                }
            const double v = inf.soft_mask.grid.at(gy, gx);
            if (touches_defect) {
              defect_patch_sum += v;
              ++defect_patch_count;
            } else {
              normal_patch_sum += v;
              ++normal_patch_count;
            }
          }
      }
    }

    if (artifacts) {
      artifacts->soft_masks.push_back(inf.soft_mask);
      artifacts->reconstructions.push_back(inf.reconstruction);
    }
    if (artifacts || cfg.pixel_level) maps.push_back(std::move(map));
  }

  report.image_auroc = auroc(scores, labels);
  if (cfg.pixel_level) report.pixel_auroc_value = pixel_auroc(maps, gts);
  if (!spearman_per_normal.empty()) {
    double s = 0.0;
    for (double v : spearman_per_normal) s += v;
    report.spearman_pred_gt = s / static_cast<double>(spearman_per_normal.size());
  }
  if (defect_patch_count > 0) {
    report.mask_mean_defect_patches = defect_patch_sum / static_cast<double>(defect_patch_count);
    report.mask_mean_normal_patches = normal_patch_sum / static_cast<double>(normal_patch_count);
  }
  if (normal_image_mask_count > 0)
    report.mask_mean_normal_images =
        normal_image_mask_sum / static_cast<double>(normal_image_mask_count);

  if (artifacts) artifacts->anomaly_maps = std::move(maps);

  KvDoc& echo = report.echo;
  echo.set("eval", "mask_provider", mask::to_string(cfg.provider.kind));
  echo.set_double("eval", "mask_threshold", cfg.provider.threshold);
  echo.set_double("eval", "oracle_coverage", cfg.provider.oracle_coverage);
  echo.set_int("eval", "mosaic_scale", cfg.mosaic_scale);
  echo.set_int("eval", "msgms_levels", cfg.levels);
  echo.set_int("eval", "score_window", window);
  echo.set("eval", "scaling", nn::to_string(cfg.scaling));
  echo.set("eval", "mask_mode", head::to_string(cfg.mask_mode));
  echo.set_double("eval", "keep_quantile", cfg.keep_quantile);
  echo.set_bool("eval", "pixel_level", cfg.pixel_level);
  echo.set_int("eval", "seed", static_cast<int64_t>(cfg.seed));
  return report;
}

}  // namespace fader::score
