#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fader/config.hpp"
#include "testutil.hpp"

using testutil::TempDir;

namespace {

struct CliResult {
  int code = -1;
  std::string output;  // stdout + stderr
};

CliResult run_cli(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = std::string(FADER_CLI_PATH) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

// micro run configuration shared by the CLI tests
std::string base_config(const std::filesystem::path& root, const std::string& run_name) {
  std::ostringstream os;
  os << "[data]\n"
     << "root = " << (root / "toy").string() << "\n"
     << "resolution = 16\n"
     << "toy_train = 6\ntoy_test_normal = 2\ntoy_test_defect = 2\n"
     << "toy_texture = blobs\n"
     << "[mask]\nprovider = saliency\n"
     << "[backbone]\ndepth = 2\nbase_channels = 6\nmosaic_scale = 4\nepochs = 1\n"
     << "batch_size = 2\neta = 0.002\n"
     << "[fader]\nepochs = 1\nbatch_size = 2\nhidden = 16\n"
     << "[run]\nseed = 5\noutput_dir = " << (root / "runs").string() << "\n"
     << "run_name = " << run_name << "\n";
  return os.str();
}

std::filesystem::path write_config(const std::filesystem::path& dir, const std::string& text) {
  std::filesystem::create_directories(dir);
  const auto path = dir / "config.txt";
  std::ofstream out(path);
  out << text;
  return path;
}

}  // namespace

TEST_CASE("synth-data writes the dataset once and refuses to overwrite") {
  TempDir tmp("cli_synth");
  const auto cfg = write_config(tmp.path(), base_config(tmp.path(), "r0"));

  const auto first = run_cli("synth-data --config " + cfg.string(), tmp.path() / "log1");
  CHECK(first.code == 0);
  CHECK(std::filesystem::exists(tmp.path() / "toy" / "manifest.txt"));
  CHECK(std::filesystem::exists(tmp.path() / "toy" / "train" / "good" / "000.png"));

  const auto second = run_cli("synth-data --config " + cfg.string(), tmp.path() / "log2");
  CHECK(second.code == 2);  // refuses without --force

  const auto forced = run_cli("synth-data --config " + cfg.string() + " --force", tmp.path() / "log3");
  CHECK(forced.code == 0);
}

TEST_CASE("unknown config keys fail with exit 2 naming the key") {
  TempDir tmp("cli_badkey");
  const auto cfg = write_config(tmp.path(),
                                base_config(tmp.path(), "r0") + "[fader]\nxi_margin_typo = 1\n");
  // note: duplicate [fader] section header is fine, the key is the problem
  const auto r = run_cli("synth-data --config " + cfg.string(), tmp.path() / "log");
  CHECK(r.code == 2);
  CHECK(r.output.find("fader.xi_margin_typo") != std::string::npos);
}

TEST_CASE("training stages write checkpoints and logs; fader requires the backbone") {
  TempDir tmp("cli_train");
  const auto cfg = write_config(tmp.path(), base_config(tmp.path(), "r1"));
  REQUIRE(run_cli("synth-data --config " + cfg.string(), tmp.path() / "log0").code == 0);

  // fader before backbone: missing artifact
  CHECK(run_cli("train --config " + cfg.string() + " --stage fader", tmp.path() / "log1").code == 3);

  CHECK(run_cli("train --config " + cfg.string() + " --stage backbone", tmp.path() / "log2").code == 0);
  const auto run_dir = tmp.path() / "runs" / "r1";
  CHECK(std::filesystem::exists(run_dir / "checkpoints" / "backbone.ckpt"));
  CHECK(std::filesystem::exists(run_dir / "config.txt"));

  // log table: header plus one row per epoch
  std::ifstream log(run_dir / "logs" / "backbone_train.txt");
  std::string line;
  int rows = 0;
  bool header = false;
  while (std::getline(log, line)) {
    if (line.rfind("epoch", 0) == 0) header = true;
    else if (!line.empty()) ++rows;
  }
  CHECK(header);
  CHECK(rows == 1);

  CHECK(run_cli("train --config " + cfg.string() + " --stage fader", tmp.path() / "log3").code == 0);
  CHECK(std::filesystem::exists(run_dir / "checkpoints" / "fader_mlp.ckpt"));
  CHECK(std::filesystem::exists(run_dir / "checkpoints" / "backbone_finetuned.ckpt"));

  CHECK(run_cli("train --config " + cfg.string() + " --stage nosuch", tmp.path() / "log4").code == 2);
}

TEST_CASE("interrupted training resumed from the checkpoint equals a straight run") {
  TempDir tmp("cli_resume");
  // run A: 2 epochs, then re-run to 4 with --resume
  std::string cfg2 = base_config(tmp.path(), "ra");
  std::string cfg4 = cfg2;
  const auto pos = cfg4.find("epochs = 1");
  cfg4.replace(pos, 10, "epochs = 4");
  cfg2.replace(cfg2.find("epochs = 1"), 10, "epochs = 2");

  const auto cfg2_path = write_config(tmp.path() / "a2", cfg2);
  const auto cfg4_path = write_config(tmp.path() / "a4", cfg4);
  REQUIRE(run_cli("synth-data --config " + cfg2_path.string(), tmp.path() / "log0").code == 0);

  REQUIRE(run_cli("train --config " + cfg2_path.string() + " --stage backbone", tmp.path() / "l1").code == 0);
  REQUIRE(run_cli("train --config " + cfg4_path.string() + " --stage backbone --resume",
                  tmp.path() / "l2").code == 0);

  // run B: straight 4 epochs under a different run name
  std::string cfgb = cfg4;
  cfgb.replace(cfgb.find("run_name = ra"), 13, "run_name = rb");
  const auto cfgb_path = write_config(tmp.path() / "b", cfgb);
  REQUIRE(run_cli("train --config " + cfgb_path.string() + " --stage backbone", tmp.path() / "l3").code == 0);

  CHECK(testutil::files_identical(tmp.path() / "runs" / "ra" / "checkpoints" / "backbone.ckpt",
                                  tmp.path() / "runs" / "rb" / "checkpoints" / "backbone.ckpt"));
}

TEST_CASE("eval writes reports for the ablation variants") {
  TempDir tmp("cli_eval");
  const auto cfg = write_config(tmp.path(), base_config(tmp.path(), "r2"));
  REQUIRE(run_cli("synth-data --config " + cfg.string(), tmp.path() / "log0").code == 0);

  // missing checkpoints: exit 3
  CHECK(run_cli("eval --config " + cfg.string(), tmp.path() / "log1").code == 3);

  REQUIRE(run_cli("train --config " + cfg.string() + " --stage backbone", tmp.path() / "l1").code == 0);
  REQUIRE(run_cli("train --config " + cfg.string() + " --stage fader", tmp.path() / "l2").code == 0);

  const auto reports = tmp.path() / "runs" / "r2" / "reports";
  CHECK(run_cli("eval --config " + cfg.string(), tmp.path() / "l3").code == 0);
  CHECK(std::filesystem::exists(reports / "eval_soft.txt"));
  CHECK(run_cli("eval --config " + cfg.string() + " --no-fader", tmp.path() / "l4").code == 0);
  CHECK(std::filesystem::exists(reports / "eval_none.txt"));
  CHECK(run_cli("eval --config " + cfg.string() + " --hard-mask", tmp.path() / "l5").code == 0);
  CHECK(std::filesystem::exists(reports / "eval_hard.txt"));
  CHECK(run_cli("eval --config " + cfg.string() + " --scaling bilinear --report bilinear.txt",
                tmp.path() / "l6").code == 0);
  CHECK(std::filesystem::exists(reports / "bilinear.txt"));

  // the report echoes the configuration it ran with
  const fader::KvDoc doc = fader::KvDoc::load(reports / "eval_soft.txt");
  CHECK(doc.get("eval", "mask_provider") == "saliency");
  CHECK(doc.get("eval", "mask_mode") == "soft");
  CHECK(doc.get_int("eval", "mosaic_scale") == 4);
  CHECK(doc.has("result", "image_auroc"));
  CHECK(doc.has("result", "pixel_auroc"));
  CHECK(doc.get_int("result", "images") == 4);

  // forced all-ones mask matches --no-fader exactly
  CHECK(run_cli("eval --config " + cfg.string() + " --ones-mask --report ones.txt",
                tmp.path() / "l7").code == 0);
  const fader::KvDoc ones = fader::KvDoc::load(reports / "ones.txt");
  const fader::KvDoc none = fader::KvDoc::load(reports / "eval_none.txt");
  CHECK(ones.get("result", "image_auroc") == none.get("result", "image_auroc"));
  for (const auto& [key, value] : none.sections().at("scores"))
    CHECK(ones.get("scores", key) == value);
}

TEST_CASE("visualize writes four deterministic panels") {
  TempDir tmp("cli_viz");
  const auto cfg = write_config(tmp.path(), base_config(tmp.path(), "r3"));
  REQUIRE(run_cli("synth-data --config " + cfg.string(), tmp.path() / "log0").code == 0);
  REQUIRE(run_cli("train --config " + cfg.string() + " --stage backbone", tmp.path() / "l1").code == 0);
  REQUIRE(run_cli("train --config " + cfg.string() + " --stage fader", tmp.path() / "l2").code == 0);

  const auto image = tmp.path() / "toy" / "test" / "defect" / "000.png";
  CHECK(run_cli("visualize --config " + cfg.string() + " --image " + image.string(),
                tmp.path() / "l3").code == 0);
  const auto viz = tmp.path() / "runs" / "r3" / "viz";
  for (const char* suffix : {"_input.png", "_binary_mask.png", "_soft_mask.png", "_anomaly.png"})
    CHECK(std::filesystem::exists(viz / ("000" + std::string(suffix))));

  // deterministic: a second run produces byte-identical panels
  const auto viz2 = tmp.path() / "viz2";
  CHECK(run_cli("visualize --config " + cfg.string() + " --image " + image.string() + " --out " +
                    viz2.string(),
                tmp.path() / "l4").code == 0);
  for (const char* suffix : {"_input.png", "_binary_mask.png", "_soft_mask.png", "_anomaly.png"})
    CHECK(testutil::files_identical(viz / ("000" + std::string(suffix)),
                                    viz2 / ("000" + std::string(suffix))));

  CHECK(run_cli("visualize --config " + cfg.string() + " --image /nonexistent.png",
                tmp.path() / "l5").code == 2);
}
