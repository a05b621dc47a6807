#pragma once

#include "fader/backbone_train.hpp"
#include "fader/evaluate.hpp"
#include "fader/toy.hpp"

namespace fader {

// Operator-facing configuration: nested sections {data, mask, backbone,
// fader, scoring, run}. Parsing is strict: an unknown section or key is a
// ConfigError naming the offender, so ablation-flag typos cannot pass
// silently. Every field has a default; to_doc() echoes the fully resolved
// configuration and re-parses to an equal RunConfig.
struct RunConfig {
  // [data]
  std::string data_kind = "toy";  // toy | mvtec
  std::filesystem::path data_root = "data/toy";
  int64_t resolution = 64;
  data::ToySpec toy;  // counts/texture/defects/area; seed mirrors run.seed

  // [mask]
  mask::ProviderConfig provider;

  // [backbone]
  nn::UNetConfig unet;
  int64_t mosaic_scale = 8;  // m; FADeR patch size p is tied to this
  int64_t backbone_epochs = 100;
  int64_t backbone_batch = 8;
  double backbone_eta = 1e-4;
  bool backbone_warmup = false;
  int msgms_levels = 2;

  // [fader]
  int64_t fader_epochs = 100;
  int64_t fader_batch = 8;
  double fader_eta = 1e-4;
  bool fader_warmup = false;
  int64_t mlp_hidden = 128;
  head::RankingConfig ranking;
  nn::ScalingMode scaling = nn::ScalingMode::nearest;
  double keep_quantile = 0.75;

  // [scoring]
  int score_levels = 2;
  int score_window = 0;  // 0 = derive from resolution
  double gms_c = 0.0026;

  // [run]
  uint64_t seed = 7;
  std::filesystem::path output_dir = "runs";
  std::string run_name;  // default: content hash of the config

  static RunConfig from_doc(const KvDoc& doc);
  static RunConfig load(const std::filesystem::path& path);
  KvDoc to_doc() const;

  void validate() const;

  std::string effective_run_name() const;
  std::filesystem::path run_dir() const;
  std::filesystem::path checkpoints_dir() const { return run_dir() / "checkpoints"; }
  std::filesystem::path reports_dir() const { return run_dir() / "reports"; }
  std::filesystem::path viz_dir() const { return run_dir() / "viz"; }
  std::filesystem::path logs_dir() const { return run_dir() / "logs"; }

  std::filesystem::path backbone_ckpt_path() const { return checkpoints_dir() / "backbone.ckpt"; }
  std::filesystem::path fader_mlp_ckpt_path() const { return checkpoints_dir() / "fader_mlp.ckpt"; }
  std::filesystem::path fader_backbone_ckpt_path() const {
    return checkpoints_dir() / "backbone_finetuned.ckpt";
  }

  nn::BackboneTrainConfig backbone_train_config() const;
  head::HeadTrainConfig fader_train_config() const;
  score::EvalConfig eval_config() const;

  bool operator==(const RunConfig& o) const { return to_doc() == o.to_doc(); }
};

}  // namespace fader
