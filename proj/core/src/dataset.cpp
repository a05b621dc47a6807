#include "fader/dataset.hpp"

#include <algorithm>
#include <iostream>
#include <set>

#include "fader/errors.hpp"
#include "fader/rng.hpp"

namespace fader::data {

namespace fs = std::filesystem;

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split: '" + s + "'");
}

namespace {

bool is_image_file(const fs::path& p) {
  static const std::set<std::string> exts{".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"};
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return exts.count(e) > 0;
}

std::vector<fs::path> sorted_images(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<fs::path> find_gt_mask(const fs::path& root, const std::string& defect_type,
                                     const fs::path& image_path) {
  const fs::path dir = root / "ground_truth" / defect_type;
  const std::string stem = image_path.stem().string();
  for (const char* suffix : {"_mask.png", ".png", "_mask.bmp", ".bmp"}) {
    fs::path candidate = dir / (stem + suffix);
    if (fs::exists(candidate)) return candidate;
  }
  return std::nullopt;
}

}  // namespace

DatasetIndex load_image_dataset(const fs::path& root, Split split, int64_t height, int64_t width,
                                bool strict_gt) {
  if (!fs::exists(root)) throw NotFound("dataset root not found: " + root.string());
  const fs::path split_dir = root / to_string(split);
  if (!fs::exists(split_dir)) throw NotFound("split directory not found: " + split_dir.string());

  DatasetIndex index;
  index.root = root;
  index.split = split;
  index.height = height;
  index.width = width;

  std::vector<fs::path> type_dirs;
  for (const auto& e : fs::directory_iterator(split_dir))
    if (e.is_directory()) type_dirs.push_back(e.path());
  std::sort(type_dirs.begin(), type_dirs.end());

  for (const auto& dir : type_dirs) {
    const std::string type = dir.filename().string();
    const bool anomalous = type != "good";
    if (split == Split::train && anomalous && !sorted_images(dir).empty())
      throw InvalidTrainingData("train split must contain only normal samples, found: " + dir.string());
    for (const auto& img : sorted_images(dir)) {
      Entry entry;
      entry.image_path = img;
      entry.defect_type = type;
      entry.label = anomalous ? Label::anomalous : Label::normal;
      if (anomalous) {
        entry.gt_mask_path = find_gt_mask(root, type, img);
        if (!entry.gt_mask_path) {
          if (strict_gt)
            throw MissingGroundTruth("anomalous test image without ground-truth mask: " + img.string());
          std::cerr << "[dataset] warning: no ground-truth mask for " << img.string() << "\n";
        }
      }
      index.entries.push_back(std::move(entry));
    }
  }

  std::sort(index.entries.begin(), index.entries.end(),
            [](const Entry& a, const Entry& b) { return a.image_path < b.image_path; });
  return index;
}

std::vector<std::vector<int64_t>> batch_order(int64_t count, int64_t batch_size,
                                              uint64_t shuffle_seed, int64_t epoch) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  auto rng = make_rng(shuffle_seed, 0x8a7c0000ULL + static_cast<uint64_t>(epoch));
  const std::vector<int64_t> perm = shuffled_indices(count, rng);
  std::vector<std::vector<int64_t>> batches;
  for (int64_t start = 0; start < count; start += batch_size) {
    const int64_t end = std::min(count, start + batch_size);
    batches.emplace_back(perm.begin() + start, perm.begin() + end);
  }
  return batches;
}

}  // namespace fader::data
