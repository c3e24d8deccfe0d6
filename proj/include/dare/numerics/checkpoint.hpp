#pragma once

#include <string>

#include "dare/numerics/format_error.hpp"
#include "dare/numerics/parameter_store.hpp"

namespace dare {

// Checkpoint container:
//   "DARE" | version u32 | count u32 |
//   per entry: name_len u16 | name bytes | ndim u8 | dims u32 x ndim | f32 x numel
// All integers and floats little-endian. Values are stored as 32-bit floats.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const ParameterStore& store);
ParameterStore decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const ParameterStore& store);
ParameterStore load_checkpoint(const std::string& path);

}  // namespace dare
