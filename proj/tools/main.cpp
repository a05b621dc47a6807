// Command-line surface: dataset synthesis, two-stage training, evaluation
// with ablation flags, and visualization export.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "fader/evaluate.hpp"
#include "fader/image_io.hpp"
#include "fader/run_config.hpp"
#include "fader/viz.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitMissingArtifact = 3;
constexpr int kExitRuntime = 4;

using fader::RunConfig;

void write_config_echo(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.run_dir());
  cfg.to_doc().save(cfg.run_dir() / "config.txt");
}

void write_train_log(const std::filesystem::path& path, const std::vector<fader::nn::EpochLog>& log) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << "epoch\tloss\teta\n";
  for (const auto& row : log)
    out << row.epoch << "\t" << fader::format_double(row.loss) << "\t"
        << fader::format_double(row.lr) << "\n";
}

int cmd_synth_data(const std::string& config_path, bool force) {
  const RunConfig cfg = RunConfig::load(config_path);
  if (cfg.data_kind != "toy") {
    std::cerr << "synth-data only applies to data.kind = toy\n";
    return kExitConfig;
  }
  const auto manifest = cfg.data_root / "manifest.txt";
  if (std::filesystem::exists(manifest) && !force) {
    std::cerr << "refusing to overwrite existing dataset at " << cfg.data_root
              << " (use --force)\n";
    return kExitConfig;
  }
  fader::data::generate_toy_dataset(cfg.toy, cfg.data_root);
  std::cout << manifest.string() << "\n";
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& stage, bool resume) {
  const RunConfig cfg = RunConfig::load(config_path);
  write_config_echo(cfg);
  const auto train_index = fader::data::load_image_dataset(cfg.data_root, fader::data::Split::train,
                                                           cfg.resolution, cfg.resolution);
  if (stage == "backbone") {
    fader::nn::Checkpoint resumed;
    const bool have_resume = resume && std::filesystem::exists(cfg.backbone_ckpt_path());
    if (have_resume) resumed = fader::nn::Checkpoint::load(cfg.backbone_ckpt_path());
    auto result = fader::nn::train_backbone(cfg.backbone_train_config(), train_index,
                                            have_resume ? &resumed : nullptr,
                                            [](const fader::nn::EpochLog& log) {
                                              std::cout << "epoch " << log.epoch << " loss "
                                                        << log.loss << "\n";
                                            });
    result.checkpoint.save(cfg.backbone_ckpt_path());
    write_train_log(cfg.logs_dir() / "backbone_train.txt", result.log);
    std::cout << cfg.backbone_ckpt_path().string() << "\n";
    return kExitOk;
  }
  if (stage == "fader") {
    if (!std::filesystem::exists(cfg.backbone_ckpt_path()))
      throw fader::NotFound("fader stage requires a backbone checkpoint at " +
                            cfg.backbone_ckpt_path().string());
    const auto backbone = fader::nn::Checkpoint::load(cfg.backbone_ckpt_path());
    fader::nn::Checkpoint rm, rb;
    const bool have_resume = resume && std::filesystem::exists(cfg.fader_mlp_ckpt_path()) &&
                             std::filesystem::exists(cfg.fader_backbone_ckpt_path());
    if (have_resume) {
      rm = fader::nn::Checkpoint::load(cfg.fader_mlp_ckpt_path());
      rb = fader::nn::Checkpoint::load(cfg.fader_backbone_ckpt_path());
    }
    auto result = fader::head::train_fader(backbone, train_index, cfg.fader_train_config(),
                                           have_resume ? &rm : nullptr,
                                           have_resume ? &rb : nullptr,
                                           [](const fader::nn::EpochLog& log) {
                                             std::cout << "epoch " << log.epoch << " rank-loss "
                                                       << log.loss << "\n";
                                           });
    result.mlp_checkpoint.save(cfg.fader_mlp_ckpt_path());
    result.backbone_checkpoint.save(cfg.fader_backbone_ckpt_path());
    write_train_log(cfg.logs_dir() / "fader_train.txt", result.log);
    std::cout << cfg.fader_mlp_ckpt_path().string() << "\n";
    return kExitOk;
  }
  std::cerr << "unknown training stage '" << stage << "' (expected backbone|fader)\n";
  return kExitConfig;
}

int cmd_eval(const std::string& config_path, bool no_fader, bool hard_mask, bool ones_mask,
             const std::string& scaling, bool export_maps, const std::string& report_name) {
  const RunConfig cfg = RunConfig::load(config_path);
  write_config_echo(cfg);

  // a fine-tuned backbone supersedes the pre-trained one for every mode, so
  // ablation variants stay comparable
  std::filesystem::path net_path = cfg.fader_backbone_ckpt_path();
  if (!std::filesystem::exists(net_path)) net_path = cfg.backbone_ckpt_path();
  if (!std::filesystem::exists(net_path))
    throw fader::NotFound("no backbone checkpoint under " + cfg.checkpoints_dir().string());
  auto net = fader::nn::unet_from_checkpoint(fader::nn::Checkpoint::load(net_path));

  fader::score::EvalConfig ecfg = cfg.eval_config();
  if (no_fader) ecfg.mask_mode = fader::head::MaskMode::none;
  if (hard_mask) ecfg.mask_mode = fader::head::MaskMode::hard;
  if (ones_mask) ecfg.mask_mode = fader::head::MaskMode::all_ones;
  if (!scaling.empty()) ecfg.scaling = fader::nn::scaling_mode_from_string(scaling);

  std::optional<fader::head::LossPredictor> mlp;
  if (ecfg.mask_mode == fader::head::MaskMode::soft ||
      ecfg.mask_mode == fader::head::MaskMode::hard) {
    if (!std::filesystem::exists(cfg.fader_mlp_ckpt_path()))
      throw fader::NotFound("no predictor checkpoint at " + cfg.fader_mlp_ckpt_path().string());
    mlp = fader::head::LossPredictor::from_checkpoint(
        fader::nn::Checkpoint::load(cfg.fader_mlp_ckpt_path()));
  }

  const auto test_index = fader::data::load_image_dataset(cfg.data_root, fader::data::Split::test,
                                                          cfg.resolution, cfg.resolution);
  fader::score::EvalArtifacts artifacts;
  const auto report = fader::score::evaluate(net, mlp ? &*mlp : nullptr, test_index, ecfg,
                                             export_maps ? &artifacts : nullptr);

  std::string name = report_name;
  if (name.empty()) name = "eval_" + fader::head::to_string(ecfg.mask_mode) + ".txt";
  const auto report_path = cfg.reports_dir() / name;
  report.save(report_path);
  if (export_maps) {
    for (size_t i = 0; i < artifacts.anomaly_maps.size(); ++i) {
      char file[32];
      std::snprintf(file, sizeof(file), "map_%05zu.png", i);
      fader::data::save_png16(cfg.reports_dir() / "maps" / file, artifacts.anomaly_maps[i]);
    }
  }
  std::cout << "image_auroc " << report.image_auroc << "\n";
  if (report.pixel_auroc_value) std::cout << "pixel_auroc " << *report.pixel_auroc_value << "\n";
  std::cout << report_path.string() << "\n";
  return kExitOk;
}

int cmd_visualize(const std::string& config_path, const std::string& image_path,
                  const std::string& out_dir) {
  const RunConfig cfg = RunConfig::load(config_path);
  if (!std::filesystem::exists(image_path)) {
    std::cerr << "image not found: " << image_path << "\n";
    return kExitConfig;
  }

  std::filesystem::path net_path = cfg.fader_backbone_ckpt_path();
  if (!std::filesystem::exists(net_path)) net_path = cfg.backbone_ckpt_path();
  if (!std::filesystem::exists(net_path))
    throw fader::NotFound("no backbone checkpoint under " + cfg.checkpoints_dir().string());
  auto net = fader::nn::unet_from_checkpoint(fader::nn::Checkpoint::load(net_path));

  std::optional<fader::head::LossPredictor> mlp;
  if (std::filesystem::exists(cfg.fader_mlp_ckpt_path()))
    mlp = fader::head::LossPredictor::from_checkpoint(
        fader::nn::Checkpoint::load(cfg.fader_mlp_ckpt_path()));

  const auto image = fader::data::load_image(image_path, cfg.resolution, cfg.resolution);
  const auto binary = fader::mask::provide_mask(cfg.provider, image).front();
  const auto inf = fader::head::infer_with_fader(
      net, mlp ? &*mlp : nullptr, image, cfg.provider, cfg.mosaic_scale, cfg.scaling,
      mlp ? fader::head::MaskMode::soft : fader::head::MaskMode::none, cfg.keep_quantile);
  const auto anomaly = fader::score::msgms_anomaly_map(image, inf.reconstruction, cfg.score_levels);

  const std::filesystem::path dir = out_dir.empty() ? cfg.viz_dir() : std::filesystem::path(out_dir);
  const std::string stem = std::filesystem::path(image_path).stem().string();
  const auto files = fader::viz::write_panels(dir, stem, image, binary, inf.soft_mask.grid, anomaly);
  std::cout << files.input.string() << "\n"
            << files.binary_mask.string() << "\n"
            << files.soft_mask.string() << "\n"
            << files.anomaly.string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reconstruction-by-inpainting anomaly detection with soft feature attenuation"};
  app.require_subcommand(1);

  std::string config_path;
  bool force = false;
  auto* synth = app.add_subcommand("synth-data", "generate the procedural toy dataset");
  synth->add_option("--config", config_path, "run config file")->required();
  synth->add_flag("--force", force, "overwrite an existing dataset");

  std::string train_config, stage;
  bool resume = false;
  auto* train = app.add_subcommand("train", "train the backbone or the attenuation head");
  train->add_option("--config", train_config, "run config file")->required();
  train->add_option("--stage", stage, "backbone|fader")->required();
  train->add_flag("--resume", resume, "continue from the stage checkpoint if present");

  std::string eval_config, eval_scaling, report_name;
  bool no_fader = false, hard_mask = false, ones_mask = false, export_maps = false;
  auto* eval = app.add_subcommand("eval", "score the test split and report AUROC");
  eval->add_option("--config", eval_config, "run config file")->required();
  eval->add_flag("--no-fader", no_fader, "plain reconstruction, no feature attenuation");
  eval->add_flag("--hard-mask", hard_mask, "binary feature masking ablation");
  eval->add_flag("--ones-mask", ones_mask, "force an all-ones soft mask (identity attenuation)");
  eval->add_option("--scaling", eval_scaling, "mask scaling: nearest|bilinear");
  eval->add_flag("--export-maps", export_maps, "write 16-bit anomaly map PNGs");
  eval->add_option("--report", report_name, "report file name");

  std::string viz_config, viz_image, viz_out;
  auto* viz = app.add_subcommand("visualize", "write input/mask/anomaly panels for one image");
  viz->add_option("--config", viz_config, "run config file")->required();
  viz->add_option("--image", viz_image, "image to visualize")->required();
  viz->add_option("--out", viz_out, "output directory (default <run>/viz)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (synth->parsed()) return cmd_synth_data(config_path, force);
    if (train->parsed()) return cmd_train(train_config, stage, resume);
    if (eval->parsed())
      return cmd_eval(eval_config, no_fader, hard_mask, ones_mask, eval_scaling, export_maps,
                      report_name);
    if (viz->parsed()) return cmd_visualize(viz_config, viz_image, viz_out);
  } catch (const fader::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fader::NotFound& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return kExitMissingArtifact;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}
