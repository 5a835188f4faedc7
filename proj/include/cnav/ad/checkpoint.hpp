#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cnav/ad/tensor.hpp"

namespace cnav::ad {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NamedBlock {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

// Little-endian block file, magic "CNAVCK01". Blocks keep their write
// order so identical parameter states serialize to identical bytes.
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& params);

std::vector<NamedBlock> load_checkpoint(const std::string& path);

// Copies payloads into an existing named parameter list; throws when a
// name is missing or a shape disagrees.
void restore_params(const std::vector<NamedBlock>& blocks,
                    const std::vector<std::pair<std::string, Tensor>>& params);

}  // namespace cnav::ad
