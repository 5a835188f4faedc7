#include "cnav/ad/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace cnav::ad {

namespace {

constexpr char kMagic[8] = {'C', 'N', 'A', 'V', 'C', 'K', '0', '1'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::string& what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw CheckpointError("checkpoint truncated while reading " + what);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open " + path + " for writing");
  os.write(kMagic, sizeof(kMagic));
  write_pod(os, kVersion);
  write_pod(os, static_cast<uint32_t>(params.size()));
  for (const auto& [name, tensor] : params) {
    write_pod(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(os, static_cast<uint32_t>(tensor.shape().size()));
    for (int d : tensor.shape()) write_pod(os, static_cast<uint32_t>(d));
    os.write(reinterpret_cast<const char*>(tensor.values().data()),
             static_cast<std::streamsize>(tensor.size() * sizeof(double)));
  }
  if (!os) throw CheckpointError("write failure on " + path);
}

std::vector<NamedBlock> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError("bad checkpoint magic in " + path);
  const auto version = read_pod<uint32_t>(is, "version");
  if (version != kVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto count = read_pod<uint32_t>(is, "block count");

  std::vector<NamedBlock> blocks;
  blocks.reserve(count);
  for (uint32_t b = 0; b < count; ++b) {
    NamedBlock blk;
    const auto name_len = read_pod<uint32_t>(is, "name length");
    blk.name.resize(name_len);
    is.read(blk.name.data(), name_len);
    if (!is) throw CheckpointError("checkpoint truncated in block name");
    const auto rank = read_pod<uint32_t>(is, "rank");
    blk.shape.resize(rank);
    for (uint32_t d = 0; d < rank; ++d)
      blk.shape[d] = static_cast<int>(read_pod<uint32_t>(is, "dimension"));
    blk.values.resize(static_cast<size_t>(shape_size(blk.shape)));
    is.read(reinterpret_cast<char*>(blk.values.data()),
            static_cast<std::streamsize>(blk.values.size() * sizeof(double)));
    if (!is) throw CheckpointError("checkpoint truncated in payload of " + blk.name);
    blocks.push_back(std::move(blk));
  }
  return blocks;
}

void restore_params(const std::vector<NamedBlock>& blocks,
                    const std::vector<std::pair<std::string, Tensor>>& params) {
  for (const auto& [name, tensor] : params) {
    const NamedBlock* found = nullptr;
    for (const auto& b : blocks)
      if (b.name == name) {
        found = &b;
        break;
      }
    if (!found) throw CheckpointError("checkpoint is missing block " + name);
    if (found->shape != tensor.shape())
      throw CheckpointError("block " + name + " has shape " + shape_str(found->shape) +
                            ", expected " + shape_str(tensor.shape()));
    const_cast<Tensor&>(tensor).values() = found->values;
  }
}

}  // namespace cnav::ad
