#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fader/dataset.hpp"
#include "fader/tensor.hpp"

namespace fader::data {

enum class TextureFamily { stripes, checker, blobs };
enum class DefectKind { patch_swap, intensity_spot, scratch_line };

std::string to_string(TextureFamily f);
std::string to_string(DefectKind k);
TextureFamily texture_family_from_string(const std::string& s);
DefectKind defect_kind_from_string(const std::string& s);

// Procedural defect-inspection dataset: textured normals with per-image
// jitter (phase, brightness, additive noise sigma=0.02) plus defect images
// carrying exactly one injected defect and its exact binary mask. Every
// byte written is a pure function of the spec (including seed).
struct ToySpec {
  int64_t n_train_normal = 200;
  int64_t n_test_normal = 50;
  int64_t n_test_defect = 50;
  int64_t height = 64;
  int64_t width = 64;
  TextureFamily texture_family = TextureFamily::stripes;
  std::vector<DefectKind> defect_kinds = {DefectKind::patch_swap, DefectKind::intensity_spot,
                                          DefectKind::scratch_line};
  double defect_area_fraction = 0.05;
  uint64_t seed = 7;

  void validate() const;
};

struct ToySample {
  Tensor clean;  // texture before defect injection
  Tensor image;  // texture with the defect applied
  Tensor mask;   // (H, W) in {0,1}; every altered pixel lies inside the 1-region
  DefectKind kind = DefectKind::intensity_spot;
};

Tensor render_toy_texture(const ToySpec& spec, uint64_t image_key);
ToySample make_defect_sample(const ToySpec& spec, uint64_t image_key, DefectKind kind);

// Writes <out>/train/good, <out>/test/good, <out>/test/defect,
// <out>/ground_truth/defect and <out>/manifest.txt, then returns the index
// of the train split.
DatasetIndex generate_toy_dataset(const ToySpec& spec, const std::filesystem::path& out_dir);

ToySpec toy_spec_from_manifest(const std::filesystem::path& manifest_path);

}  // namespace fader::data
