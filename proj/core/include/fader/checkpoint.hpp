#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "fader/config.hpp"
#include "fader/tensor.hpp"

namespace fader::nn {

// Named-tensor archive with an embedded UTF-8 config section. Tensor data is
// stored as IEEE doubles, which also round-trips float parameters exactly;
// serialization is canonical (tensors sorted by name), so saving the same
// state twice produces byte-identical files.
struct Checkpoint {
  static constexpr const char* kFormatTag = "fader-ckpt-v1";

  KvDoc config;
  std::map<std::string, Tensor> tensors;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  const Tensor& tensor(const std::string& name) const;

  // Copies a stored tensor into `dst`, which must already have the right
  // shape (ConfigMismatch otherwise).
  template <typename T>
  void restore_into(const std::string& name, BasicTensor<T>& dst) const {
    const Tensor& src = tensor(name);
    if (src.shape() != dst.shape())
      throw ConfigMismatch("checkpoint tensor '" + name + "' has shape " +
                           shape_string(src.shape()) + ", expected " + shape_string(dst.shape()));
    for (int64_t i = 0; i < src.numel(); ++i) dst[i] = static_cast<T>(src[i]);
  }

  template <typename T>
  void store(const std::string& name, const BasicTensor<T>& src) {
    Tensor out(src.shape());
    for (int64_t i = 0; i < src.numel(); ++i) out[i] = static_cast<double>(src[i]);
    tensors[name] = std::move(out);
  }
};

}  // namespace fader::nn
