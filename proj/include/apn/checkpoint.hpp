#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "apn/tensor.hpp"

namespace apn {

inline constexpr const char* kCheckpointMagic = "APNTRACK-CKPT-1";

// Binary layout (little endian):
//   "APNTRACK-CKPT-1\n"
//   u64 length, model config JSON bytes
//   u64 parameter count
//   per parameter: u32 name length, name, i32 n c h w, n*c*h*w f64 row-major
struct Checkpoint {
  std::string model_json;
  std::vector<std::pair<std::string, Tensor>> params;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace apn
