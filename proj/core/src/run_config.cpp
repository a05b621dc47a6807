#include "fader/run_config.hpp"

#include <cinttypes>
#include <cstdio>
#include <map>
#include <set>

#include "fader/rng.hpp"

namespace fader {

namespace {

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s = {
      {"data",
       {"kind", "root", "resolution", "toy_train", "toy_test_normal", "toy_test_defect",
        "toy_texture", "toy_defect_kinds", "toy_defect_area_fraction"}},
      {"mask",
       {"provider", "threshold", "precomputed_path", "oracle_coverage", "mask_count", "cell"}},
      {"backbone",
       {"depth", "base_channels", "leaky_slope", "mosaic_scale", "epochs", "batch_size", "eta",
        "warmup", "msgms_levels"}},
      {"fader",
       {"epochs", "batch_size", "eta", "warmup", "hidden", "margin", "pair_strategy",
        "pairs_per_image", "scaling", "keep_quantile"}},
      {"scoring", {"levels", "window", "gms_c"}},
      {"run", {"seed", "output_dir", "run_name"}},
  };
  return s;
}

void reject_unknown_keys(const KvDoc& doc) {
  for (const auto& [section, entries] : doc.sections()) {
    auto it = schema().find(section);
    if (it == schema().end()) throw ConfigError("unknown config section '" + section + "'");
    for (const auto& [key, value] : entries) {
      (void)value;
      if (!it->second.count(key))
        throw ConfigError("unknown config key '" + section + "." + key + "'");
    }
  }
}

std::vector<data::DefectKind> parse_defect_kinds(const std::string& csv) {
  std::vector<data::DefectKind> kinds;
  size_t pos = 0;
  while (pos <= csv.size()) {
    const size_t comma = csv.find(',', pos);
    const std::string token =
        csv.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (!token.empty()) kinds.push_back(data::defect_kind_from_string(token));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (kinds.empty()) throw ConfigError("data.toy_defect_kinds must list at least one kind");
  return kinds;
}

std::string defect_kinds_csv(const std::vector<data::DefectKind>& kinds) {
  std::string out;
  for (const auto& k : kinds) {
    if (!out.empty()) out += ",";
    out += data::to_string(k);
  }
  return out;
}

}  // namespace

RunConfig RunConfig::from_doc(const KvDoc& doc) {
  reject_unknown_keys(doc);
  RunConfig cfg;  // defaults
  const auto gs = [&](const char* sec, const char* key, const std::string& dflt) {
    return doc.get_or(sec, key, dflt);
  };
  cfg.data_kind = gs("data", "kind", cfg.data_kind);
  if (cfg.data_kind != "toy" && cfg.data_kind != "mvtec")
    throw ConfigError("data.kind must be 'toy' or 'mvtec'");
  cfg.data_root = gs("data", "root", cfg.data_root.string());
  cfg.resolution = parse_int(gs("data", "resolution", std::to_string(cfg.resolution)));
  cfg.toy.n_train_normal = parse_int(gs("data", "toy_train", std::to_string(cfg.toy.n_train_normal)));
  cfg.toy.n_test_normal =
      parse_int(gs("data", "toy_test_normal", std::to_string(cfg.toy.n_test_normal)));
  cfg.toy.n_test_defect =
      parse_int(gs("data", "toy_test_defect", std::to_string(cfg.toy.n_test_defect)));
  cfg.toy.texture_family =
      data::texture_family_from_string(gs("data", "toy_texture", data::to_string(cfg.toy.texture_family)));
  cfg.toy.defect_kinds =
      parse_defect_kinds(gs("data", "toy_defect_kinds", defect_kinds_csv(cfg.toy.defect_kinds)));
  cfg.toy.defect_area_fraction =
      parse_double(gs("data", "toy_defect_area_fraction", format_double(cfg.toy.defect_area_fraction)));

  cfg.provider.kind = mask::provider_kind_from_string(
      gs("mask", "provider", mask::to_string(cfg.provider.kind)));
  cfg.provider.threshold = parse_double(gs("mask", "threshold", format_double(cfg.provider.threshold)));
  cfg.provider.precomputed_path = gs("mask", "precomputed_path", cfg.provider.precomputed_path.string());
  cfg.provider.oracle_coverage =
      parse_double(gs("mask", "oracle_coverage", format_double(cfg.provider.oracle_coverage)));
  cfg.provider.mask_count = parse_int(gs("mask", "mask_count", std::to_string(cfg.provider.mask_count)));
  cfg.provider.cell = parse_int(gs("mask", "cell", std::to_string(cfg.provider.cell)));

  cfg.unet.depth = parse_int(gs("backbone", "depth", std::to_string(cfg.unet.depth)));
  cfg.unet.base_channels =
      parse_int(gs("backbone", "base_channels", std::to_string(cfg.unet.base_channels)));
  cfg.unet.leaky_slope = parse_double(gs("backbone", "leaky_slope", format_double(cfg.unet.leaky_slope)));
  cfg.mosaic_scale = parse_int(gs("backbone", "mosaic_scale", std::to_string(cfg.mosaic_scale)));
  cfg.backbone_epochs = parse_int(gs("backbone", "epochs", std::to_string(cfg.backbone_epochs)));
  cfg.backbone_batch = parse_int(gs("backbone", "batch_size", std::to_string(cfg.backbone_batch)));
  cfg.backbone_eta = parse_double(gs("backbone", "eta", format_double(cfg.backbone_eta)));
  cfg.backbone_warmup = parse_bool(gs("backbone", "warmup", cfg.backbone_warmup ? "true" : "false"));
  cfg.msgms_levels = static_cast<int>(parse_int(gs("backbone", "msgms_levels", std::to_string(cfg.msgms_levels))));

  cfg.fader_epochs = parse_int(gs("fader", "epochs", std::to_string(cfg.fader_epochs)));
  cfg.fader_batch = parse_int(gs("fader", "batch_size", std::to_string(cfg.fader_batch)));
  cfg.fader_eta = parse_double(gs("fader", "eta", format_double(cfg.fader_eta)));
  cfg.fader_warmup = parse_bool(gs("fader", "warmup", cfg.fader_warmup ? "true" : "false"));
  cfg.mlp_hidden = parse_int(gs("fader", "hidden", std::to_string(cfg.mlp_hidden)));
  cfg.ranking.margin = parse_double(gs("fader", "margin", format_double(cfg.ranking.margin)));
  cfg.ranking.strategy = head::pair_strategy_from_string(
      gs("fader", "pair_strategy", head::to_string(cfg.ranking.strategy)));
  cfg.ranking.pairs_per_image =
      parse_int(gs("fader", "pairs_per_image", std::to_string(cfg.ranking.pairs_per_image)));
  cfg.scaling = nn::scaling_mode_from_string(gs("fader", "scaling", nn::to_string(cfg.scaling)));
  cfg.keep_quantile = parse_double(gs("fader", "keep_quantile", format_double(cfg.keep_quantile)));

  cfg.score_levels = static_cast<int>(parse_int(gs("scoring", "levels", std::to_string(cfg.score_levels))));
  cfg.score_window = static_cast<int>(parse_int(gs("scoring", "window", std::to_string(cfg.score_window))));
  cfg.gms_c = parse_double(gs("scoring", "gms_c", format_double(cfg.gms_c)));

  cfg.seed = static_cast<uint64_t>(parse_int(gs("run", "seed", std::to_string(cfg.seed))));
  cfg.output_dir = gs("run", "output_dir", cfg.output_dir.string());
  cfg.run_name = gs("run", "run_name", cfg.run_name);

  cfg.toy.seed = cfg.seed;
  cfg.toy.height = cfg.resolution;
  cfg.toy.width = cfg.resolution;
  cfg.ranking.seed = cfg.seed;
  cfg.provider.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  return from_doc(KvDoc::load(path));
}

KvDoc RunConfig::to_doc() const {
  KvDoc doc;
  doc.set("data", "kind", data_kind);
  doc.set("data", "root", data_root.string());
  doc.set_int("data", "resolution", resolution);
  doc.set_int("data", "toy_train", toy.n_train_normal);
  doc.set_int("data", "toy_test_normal", toy.n_test_normal);
  doc.set_int("data", "toy_test_defect", toy.n_test_defect);
  doc.set("data", "toy_texture", data::to_string(toy.texture_family));
  doc.set("data", "toy_defect_kinds", defect_kinds_csv(toy.defect_kinds));
  doc.set_double("data", "toy_defect_area_fraction", toy.defect_area_fraction);

  doc.set("mask", "provider", mask::to_string(provider.kind));
  doc.set_double("mask", "threshold", provider.threshold);
  doc.set("mask", "precomputed_path", provider.precomputed_path.string());
  doc.set_double("mask", "oracle_coverage", provider.oracle_coverage);
  doc.set_int("mask", "mask_count", provider.mask_count);
  doc.set_int("mask", "cell", provider.cell);

  doc.set_int("backbone", "depth", unet.depth);
  doc.set_int("backbone", "base_channels", unet.base_channels);
  doc.set_double("backbone", "leaky_slope", unet.leaky_slope);
  doc.set_int("backbone", "mosaic_scale", mosaic_scale);
  doc.set_int("backbone", "epochs", backbone_epochs);
  doc.set_int("backbone", "batch_size", backbone_batch);
  doc.set_double("backbone", "eta", backbone_eta);
  doc.set_bool("backbone", "warmup", backbone_warmup);
  doc.set_int("backbone", "msgms_levels", msgms_levels);

  doc.set_int("fader", "epochs", fader_epochs);
  doc.set_int("fader", "batch_size", fader_batch);
  doc.set_double("fader", "eta", fader_eta);
  doc.set_bool("fader", "warmup", fader_warmup);
  doc.set_int("fader", "hidden", mlp_hidden);
  doc.set_double("fader", "margin", ranking.margin);
  doc.set("fader", "pair_strategy", head::to_string(ranking.strategy));
  doc.set_int("fader", "pairs_per_image", ranking.pairs_per_image);
  doc.set("fader", "scaling", nn::to_string(scaling));
  doc.set_double("fader", "keep_quantile", keep_quantile);

  doc.set_int("scoring", "levels", score_levels);
  doc.set_int("scoring", "window", score_window);
  doc.set_double("scoring", "gms_c", gms_c);

  doc.set_int("run", "seed", static_cast<int64_t>(seed));
  doc.set("run", "output_dir", output_dir.string());
  doc.set("run", "run_name", effective_run_name());
  return doc;
}

void RunConfig::validate() const {
  unet.validate();
  provider.validate();
  if (resolution < 16) throw ConfigError("data.resolution must be >= 16");
  const int64_t div = int64_t{1} << unet.depth;
  if (resolution % div != 0)
    throw ConfigError("data.resolution must be divisible by 2^depth = " + std::to_string(div));
  if (resolution % mosaic_scale != 0)
    throw ConfigError("data.resolution must be divisible by backbone.mosaic_scale");
  if (score_levels >= 1) {
    const int64_t sdiv = int64_t{1} << (score_levels - 1);
    if (resolution % sdiv != 0)
      throw ConfigError("data.resolution must be divisible by 2^(scoring.levels-1)");
  } else {
    throw ConfigError("scoring.levels must be >= 1");
  }
  if (!(gms_c > 0.0)) throw ConfigError("scoring.gms_c must be > 0");
  if (!(keep_quantile > 0.0 && keep_quantile < 1.0))
    throw ConfigError("fader.keep_quantile must lie in (0,1)");
  ranking.validate();
  if (data_kind == "toy") toy.validate();
}

std::string RunConfig::effective_run_name() const {
  if (!run_name.empty()) return run_name;
  RunConfig base = *this;
  base.run_name = "x";  // exclude the name itself from the hash
  KvDoc doc = base.to_doc();
  doc.set("run", "run_name", "");
  char buf[32];
  std::snprintf(buf, sizeof(buf), "run-%016" PRIx64, fnv1a(doc.serialize()));
  return buf;
}

std::filesystem::path RunConfig::run_dir() const { return output_dir / effective_run_name(); }

nn::BackboneTrainConfig RunConfig::backbone_train_config() const {
  nn::BackboneTrainConfig cfg;
  cfg.unet = unet;
  cfg.provider = provider;
  cfg.mosaic_scale = mosaic_scale;
  cfg.epochs = backbone_epochs;
  cfg.batch_size = backbone_batch;
  cfg.eta = backbone_eta;
  cfg.warmup = backbone_warmup;
  cfg.msgms_levels = msgms_levels;
  cfg.seed = seed;
  return cfg;
}

head::HeadTrainConfig RunConfig::fader_train_config() const {
  head::HeadTrainConfig cfg;
  cfg.patch_size = mosaic_scale;
  cfg.epochs = fader_epochs;
  cfg.batch_size = fader_batch;
  cfg.eta = fader_eta;
  cfg.warmup = fader_warmup;
  cfg.mlp_hidden = mlp_hidden;
  cfg.mlp_slope = unet.leaky_slope;
  cfg.ranking = ranking;
  cfg.scaling = scaling;
  cfg.msgms_levels = msgms_levels;
  cfg.provider = provider;
  cfg.seed = seed;
  return cfg;
}

score::EvalConfig RunConfig::eval_config() const {
  score::EvalConfig cfg;
  cfg.provider = provider;
  cfg.mosaic_scale = mosaic_scale;
  cfg.levels = score_levels;
  cfg.window = score_window;
  cfg.scaling = scaling;
  cfg.mask_mode = head::MaskMode::soft;
  cfg.keep_quantile = keep_quantile;
  cfg.seed = seed;
  return cfg;
}

}  // namespace fader
