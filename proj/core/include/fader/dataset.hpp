#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fader/tensor.hpp"

namespace fader::data {

enum class Split { train, test };
enum class Label { normal, anomalous };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct Entry {
  std::filesystem::path image_path;
  Label label = Label::normal;
  std::optional<std::filesystem::path> gt_mask_path;
  std::string defect_type;  // subdirectory name ("good" for normals)
};

// Immutable after construction; entries sorted lexicographically by path so
// iteration order never depends on directory enumeration order.
struct DatasetIndex {
  std::filesystem::path root;
  Split split = Split::train;
  std::vector<Entry> entries;
  int64_t height = 0;
  int64_t width = 0;
  int64_t channels = 3;

  int64_t size() const { return static_cast<int64_t>(entries.size()); }
};

// Directory layout: <root>/train/good/*, <root>/test/<type>/*,
// <root>/ground_truth/<type>/<stem>_mask.png (or <stem>.png).
// strict_gt=false logs a warning instead of failing when an anomalous test
// image has no ground-truth mask; the entry is kept with an empty mask path.
DatasetIndex load_image_dataset(const std::filesystem::path& root, Split split,
                                int64_t height, int64_t width, bool strict_gt = true);

// Deterministic epoch batching: the permutation is a pure function of
// (shuffle_seed, epoch); the final partial batch is retained.
std::vector<std::vector<int64_t>> batch_order(int64_t count, int64_t batch_size,
                                              uint64_t shuffle_seed, int64_t epoch);

}  // namespace fader::data
