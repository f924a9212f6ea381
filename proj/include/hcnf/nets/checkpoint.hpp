#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hcnf/nets/models.hpp"

// Checkpoint file layout, all integers little-endian:
//   "HCNF" | u32 version (1) | u32 tensor count
//   per tensor: u16 name length | name bytes (UTF-8) | u8 rank | u32 dims[rank] | f32 values
//   u32 CRC-32 (zlib polynomial) of every byte between the header and the CRC
//
// A FusionModel checkpoint holds every entry of FusionModel::state() plus
// "meta.arch" = [width, input_size, group_size, swap_backbones].
namespace hcnf::nets {

inline constexpr char kCheckpointMagic[4] = {'H', 'C', 'N', 'F'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

std::string encode_checkpoint(const std::vector<CheckpointTensor>& tensors);
// Errors (bad magic, version skew, truncation, CRC mismatch) are ParseError
// naming the byte offset.
std::vector<CheckpointTensor> decode_checkpoint(const std::string& bytes, const std::string& source = "<memory>");

void checkpoint_save(FusionModel<float>& model, const std::filesystem::path& path);
FusionModel<float> checkpoint_load(const std::filesystem::path& path);

// Loads into an existing model. Every model tensor must be present with the
// same shape, and the file may hold nothing else; violations are ParseError
// naming the tensor.
void checkpoint_load_into(FusionModel<float>& model, const std::filesystem::path& path);
void checkpoint_load_into(FusionModel<float>& model, const std::vector<CheckpointTensor>& tensors,
                          const std::string& source);

}  // namespace hcnf::nets
