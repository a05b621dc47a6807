#include "fader/toy.hpp"

#include <cmath>
#include <set>

#include "fader/config.hpp"
#include "fader/image_io.hpp"
#include "fader/rng.hpp"

namespace fader::data {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kNoiseSigma = 0.02;

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// spot/swap/line placement keeps this margin from the image border
constexpr int64_t kBorderMargin = 2;

void add_channel_tints_and_noise(Tensor& img, std::mt19937_64& rng) {
  static const double tint[3] = {0.0, 0.015, -0.015};
  const int64_t h = img.dim(0), w = img.dim(1);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      const double noise = kNoiseSigma * rand_normal(rng);
      for (int64_t c = 0; c < 3; ++c) img.at(y, x, c) = clamp01(img.at(y, x, c) + tint[c] + noise);
    }
}

}  // namespace

std::string to_string(TextureFamily f) {
  switch (f) {
    case TextureFamily::stripes: return "stripes";
    case TextureFamily::checker: return "checker";
    case TextureFamily::blobs: return "blobs";
  }
  return "stripes";
}

std::string to_string(DefectKind k) {
  switch (k) {
    case DefectKind::patch_swap: return "patch-swap";
    case DefectKind::intensity_spot: return "intensity-spot";
    case DefectKind::scratch_line: return "scratch-line";
  }
  return "intensity-spot";
}

TextureFamily texture_family_from_string(const std::string& s) {
  if (s == "stripes") return TextureFamily::stripes;
  if (s == "checker") return TextureFamily::checker;
  if (s == "blobs") return TextureFamily::blobs;
  throw ConfigError("unknown texture family: '" + s + "'");
}

DefectKind defect_kind_from_string(const std::string& s) {
  if (s == "patch-swap") return DefectKind::patch_swap;
  if (s == "intensity-spot") return DefectKind::intensity_spot;
  if (s == "scratch-line") return DefectKind::scratch_line;
  throw ConfigError("unknown defect kind: '" + s + "'");
}

void ToySpec::validate() const {
  if (n_train_normal <= 0 || n_test_normal <= 0 || n_test_defect <= 0)
    throw ConfigError("toy: all sample counts must be > 0");
  if (height < 16 || width < 16) throw ConfigError("toy: resolution must be at least 16x16");
  if (!(defect_area_fraction > 0.0 && defect_area_fraction <= 0.25))
    throw ConfigError("toy: defect_area_fraction must lie in (0, 0.25]");
  if (defect_kinds.empty()) throw ConfigError("toy: at least one defect kind required");
}

Tensor render_toy_texture(const ToySpec& spec, uint64_t image_key) {
  auto rng = make_rng(spec.seed, image_key);
  const int64_t h = spec.height, w = spec.width;
  Tensor img({h, w, 3});

  const double brightness = rand_uniform(rng, -0.05, 0.05);
  switch (spec.texture_family) {
    case TextureFamily::stripes: {
      const double phase = rand_uniform(rng, 0.0, 2.0 * kPi);
      const double theta = kPi / 6.0;
      const double wavelength = 9.0;
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
          const double u = std::cos(theta) * x + std::sin(theta) * y;
          const double v = 0.5 + 0.3 * std::sin(2.0 * kPi * u / wavelength + phase) + brightness;
          for (int64_t c = 0; c < 3; ++c) img.at(y, x, c) = v;
        }
      break;
    }
    case TextureFamily::checker: {
      const int64_t cell = 8;
      const int64_t ox = rand_index(rng, cell), oy = rand_index(rng, cell);
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
          const bool odd = (((x + ox) / cell) + ((y + oy) / cell)) % 2 != 0;
          const double v = (odd ? 0.65 : 0.35) + brightness;
          for (int64_t c = 0; c < 3; ++c) img.at(y, x, c) = v;
        }
      break;
    }
    case TextureFamily::blobs: {
      const double p1 = rand_uniform(rng, 0.0, 2.0 * kPi);
      const double p2 = rand_uniform(rng, 0.0, 2.0 * kPi);
      const double p3 = rand_uniform(rng, 0.0, 2.0 * kPi);
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
          const double v = 0.5 + brightness +
                           0.11 * std::sin(0.55 * x + 0.21 * y + p1) +
                           0.11 * std::sin(-0.17 * x + 0.48 * y + p2) +
                           0.11 * std::sin(0.33 * x - 0.36 * y + p3);
          for (int64_t c = 0; c < 3; ++c) img.at(y, x, c) = v;
        }
      break;
    }
  }
  add_channel_tints_and_noise(img, rng);
  return img;
}

namespace {

struct Region {
  std::vector<std::pair<int64_t, int64_t>> pixels;
};

void apply_intensity_spot(Tensor& img, Tensor& mask, int64_t max_area, std::mt19937_64& rng) {
  const int64_t h = img.dim(0), w = img.dim(1);
  const double u = rand_uniform(rng, 0.45, 0.95);
  const double radius = std::max(2.0, std::sqrt(static_cast<double>(max_area) * u / kPi));
  const int64_t r = static_cast<int64_t>(radius);
  const int64_t cy = kBorderMargin + r + rand_index(rng, std::max<int64_t>(1, h - 2 * (r + kBorderMargin)));
  const int64_t cx = kBorderMargin + r + rand_index(rng, std::max<int64_t>(1, w - 2 * (r + kBorderMargin)));

  std::vector<std::pair<int64_t, int64_t>> pixels;
  double mean = 0.0;
  for (int64_t y = cy - r; y <= cy + r; ++y)
    for (int64_t x = cx - r; x <= cx + r; ++x) {
      if (y < 0 || y >= h || x < 0 || x >= w) continue;
      const double dy = static_cast<double>(y - cy), dx = static_cast<double>(x - cx);
      if (dy * dy + dx * dx > radius * radius) continue;
      pixels.emplace_back(y, x);
      for (int64_t c = 0; c < 3; ++c) mean += img.at(y, x, c);
    }
  while (static_cast<int64_t>(pixels.size()) > max_area) pixels.pop_back();
  mean /= std::max<size_t>(1, pixels.size() * 3);

  // shift away from the side with more headroom; mild contrast compression
  // keeps the spot visible to gradient-based scoring without dominating it
  const double sign = mean > 0.5 ? -1.0 : 1.0;
  const double delta = sign * (0.3 + 0.05 * rand_unit(rng));
  for (auto [y, x] : pixels) {
    for (int64_t c = 0; c < 3; ++c)
      img.at(y, x, c) = clamp01(mean + (img.at(y, x, c) - mean) * 0.75 + delta);
    mask.at(y, x) = 1.0;
  }
}

void apply_patch_swap(Tensor& img, Tensor& mask, int64_t max_area, std::mt19937_64& rng) {
  const int64_t h = img.dim(0), w = img.dim(1);
  int64_t side = static_cast<int64_t>(std::sqrt(static_cast<double>(max_area) * rand_uniform(rng, 0.55, 0.95)));
  side = std::max<int64_t>(4, std::min({side, h - 2 * kBorderMargin, w - 2 * kBorderMargin}));

  const int64_t dy0 = kBorderMargin + rand_index(rng, h - side - 2 * kBorderMargin + 1);
  const int64_t dx0 = kBorderMargin + rand_index(rng, w - side - 2 * kBorderMargin + 1);
  // odd source offsets >= 3 so the source never aligns with the texture period
  int64_t sy0 = 0, sx0 = 0;
  for (int attempt = 0; attempt < 64; ++attempt) {
    sy0 = rand_index(rng, h - side + 1);
    sx0 = rand_index(rng, w - side + 1);
    const int64_t oy = std::llabs(sy0 - dy0), ox = std::llabs(sx0 - dx0);
    if (oy >= 3 && ox >= 3 && (oy % 2 == 1) && (ox % 2 == 1)) break;
  }

  // transposed copy of the source block, so oriented textures change direction
  Tensor block({side, side, 3});
  for (int64_t y = 0; y < side; ++y)
    for (int64_t x = 0; x < side; ++x)
      for (int64_t c = 0; c < 3; ++c) block.at(y, x, c) = img.at(sy0 + x, sx0 + y, c);
  for (int64_t y = 0; y < side; ++y)
    for (int64_t x = 0; x < side; ++x) {
      for (int64_t c = 0; c < 3; ++c) img.at(dy0 + y, dx0 + x, c) = block.at(y, x, c);
      mask.at(dy0 + y, dx0 + x) = 1.0;
    }
}

void apply_scratch_line(Tensor& img, Tensor& mask, int64_t max_area, std::mt19937_64& rng) {
  const int64_t h = img.dim(0), w = img.dim(1);
  const int64_t thickness = 1 + rand_index(rng, 2);
  const double angle = rand_uniform(rng, 0.0, kPi);
  const double max_len = std::min(static_cast<double>(std::min(h, w)) * 0.7,
                                  static_cast<double>(max_area) / (thickness + 1) * 0.9);
  const double length = std::max(6.0, max_len * rand_uniform(rng, 0.7, 1.0));

  const double dirY = std::sin(angle), dirX = std::cos(angle);
  const double cy = rand_uniform(rng, h * 0.25, h * 0.75);
  const double cx = rand_uniform(rng, w * 0.25, w * 0.75);
  // moderate offset from the local value rather than a saturated line
  const double offset = (rand_unit(rng) < 0.5 ? -1.0 : 1.0) * rand_uniform(rng, 0.25, 0.35);

  std::set<std::pair<int64_t, int64_t>> pixels;
  const int steps = static_cast<int>(length * 2.0);
  for (int s = 0; s <= steps; ++s) {
    const double t = (static_cast<double>(s) / steps - 0.5) * length;
    for (int64_t k = 0; k < thickness; ++k) {
      const int64_t y = static_cast<int64_t>(std::llround(cy + dirY * t - dirX * k));
      const int64_t x = static_cast<int64_t>(std::llround(cx + dirX * t + dirY * k));
      if (y < kBorderMargin || y >= h - kBorderMargin || x < kBorderMargin || x >= w - kBorderMargin)
        continue;
      if (static_cast<int64_t>(pixels.size()) >= max_area) break;
      pixels.insert({y, x});
    }
  }
  for (auto [y, x] : pixels) {
    for (int64_t c = 0; c < 3; ++c) img.at(y, x, c) = clamp01(img.at(y, x, c) + offset);
    mask.at(y, x) = 1.0;
  }
}

}  // namespace

ToySample make_defect_sample(const ToySpec& spec, uint64_t image_key, DefectKind kind) {
  ToySample sample;
  sample.kind = kind;
  sample.clean = render_toy_texture(spec, image_key);
  sample.image = sample.clean;
  sample.mask = Tensor({spec.height, spec.width});

  auto rng = make_rng(spec.seed, mix64(image_key) ^ 0xdef3c7ULL);
  const auto max_area =
      std::max<int64_t>(1, static_cast<int64_t>(spec.defect_area_fraction *
                                                static_cast<double>(spec.height * spec.width)));
  switch (kind) {
    case DefectKind::intensity_spot: apply_intensity_spot(sample.image, sample.mask, max_area, rng); break;
    case DefectKind::patch_swap: apply_patch_swap(sample.image, sample.mask, max_area, rng); break;
    case DefectKind::scratch_line: apply_scratch_line(sample.image, sample.mask, max_area, rng); break;
  }
  return sample;
}

DatasetIndex generate_toy_dataset(const ToySpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory: " + out_dir.string());

  char name[32];
  for (int64_t i = 0; i < spec.n_train_normal; ++i) {
    std::snprintf(name, sizeof(name), "%03lld.png", static_cast<long long>(i));
    save_png(out_dir / "train" / "good" / name,
             render_toy_texture(spec, 0x100000ULL + static_cast<uint64_t>(i)));
  }
  for (int64_t i = 0; i < spec.n_test_normal; ++i) {
    std::snprintf(name, sizeof(name), "%03lld.png", static_cast<long long>(i));
    save_png(out_dir / "test" / "good" / name,
             render_toy_texture(spec, 0x200000ULL + static_cast<uint64_t>(i)));
  }
  for (int64_t i = 0; i < spec.n_test_defect; ++i) {
    const DefectKind kind = spec.defect_kinds[static_cast<size_t>(i) % spec.defect_kinds.size()];
    const ToySample sample =
        make_defect_sample(spec, 0x300000ULL + static_cast<uint64_t>(i), kind);
    std::snprintf(name, sizeof(name), "%03lld.png", static_cast<long long>(i));
    save_png(out_dir / "test" / "defect" / name, sample.image);
    std::snprintf(name, sizeof(name), "%03lld_mask.png", static_cast<long long>(i));
    save_png(out_dir / "ground_truth" / "defect" / name, sample.mask);
  }

  KvDoc manifest;
  manifest.set_int("toy", "n_train_normal", spec.n_train_normal);
  manifest.set_int("toy", "n_test_normal", spec.n_test_normal);
  manifest.set_int("toy", "n_test_defect", spec.n_test_defect);
  manifest.set_int("toy", "height", spec.height);
  manifest.set_int("toy", "width", spec.width);
  manifest.set("toy", "texture_family", to_string(spec.texture_family));
  std::string kinds;
  for (const auto& k : spec.defect_kinds) {
    if (!kinds.empty()) kinds += ",";
    kinds += to_string(k);
  }
  manifest.set("toy", "defect_kinds", kinds);
  manifest.set_double("toy", "defect_area_fraction", spec.defect_area_fraction);
  manifest.set_int("toy", "seed", static_cast<int64_t>(spec.seed));
  manifest.save(out_dir / "manifest.txt");

  return load_image_dataset(out_dir, Split::train, spec.height, spec.width);
}

ToySpec toy_spec_from_manifest(const std::filesystem::path& manifest_path) {
  const KvDoc doc = KvDoc::load(manifest_path);
  ToySpec spec;
  spec.n_train_normal = doc.get_int("toy", "n_train_normal");
  spec.n_test_normal = doc.get_int("toy", "n_test_normal");
  spec.n_test_defect = doc.get_int("toy", "n_test_defect");
  spec.height = doc.get_int("toy", "height");
  spec.width = doc.get_int("toy", "width");
  spec.texture_family = texture_family_from_string(doc.get("toy", "texture_family"));
  spec.defect_kinds.clear();
  std::string kinds = doc.get("toy", "defect_kinds");
  size_t pos = 0;
  while (pos != std::string::npos) {
    size_t comma = kinds.find(',', pos);
    std::string token = kinds.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (!token.empty()) spec.defect_kinds.push_back(defect_kind_from_string(token));
    pos = comma == std::string::npos ? comma : comma + 1;
  }
  spec.defect_area_fraction = doc.get_double("toy", "defect_area_fraction");
  spec.seed = static_cast<uint64_t>(doc.get_int("toy", "seed"));
  return spec;
}

}  // namespace fader::data
