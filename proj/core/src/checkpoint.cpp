#include "fader/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace fader::nn {

namespace {

constexpr char kMagic[8] = {'F', 'A', 'D', 'E', 'R', 'C', 'K', '1'};

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("checkpoint: truncated file");
  return v;
}

}  // namespace

void Checkpoint::save(const std::filesystem::path& path) const {
  KvDoc doc = config;
  doc.set("format", "tag", kFormatTag);

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("checkpoint: cannot write " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    const std::string cfg = doc.serialize();
    write_pod<uint64_t>(out, cfg.size());
    out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    write_pod<uint32_t>(out, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
      write_pod<uint32_t>(out, static_cast<uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_pod<uint32_t>(out, static_cast<uint32_t>(t.rank()));
      for (int i = 0; i < t.rank(); ++i) write_pod<uint64_t>(out, static_cast<uint64_t>(t.dim(i)));
      out.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * static_cast<int64_t>(sizeof(double))));
    }
    if (!out) throw IoError("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("checkpoint not found: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DecodeError("not a checkpoint file: " + path.string());

  Checkpoint ckpt;
  const auto cfg_len = read_pod<uint64_t>(in);
  std::string cfg(cfg_len, '\0');
  in.read(cfg.data(), static_cast<std::streamsize>(cfg_len));
  if (!in) throw IoError("checkpoint: truncated config block");
  ckpt.config = KvDoc::parse(cfg);
  if (ckpt.config.get_or("format", "tag", "") != kFormatTag)
    throw ConfigMismatch("unsupported checkpoint format tag in " + path.string());

  const auto count = read_pod<uint32_t>(in);
  for (uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rank = read_pod<uint32_t>(in);
    std::vector<int64_t> shape(rank);
    for (uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int64_t>(read_pod<uint64_t>(in));
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * static_cast<int64_t>(sizeof(double))));
    if (!in) throw IoError("checkpoint: truncated tensor '" + name + "'");
    ckpt.tensors[name] = std::move(t);
  }
  return ckpt;
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ConfigMismatch("checkpoint is missing tensor '" + name + "'");
  return it->second;
}

}  // namespace fader::nn
