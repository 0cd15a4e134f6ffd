/**
 * @file checkpoint.h
 * @brief Versioned named-tensor container.
 *
 * Layout (all integers little-endian):
 *   "MSPK" | u16 version | { u32 name_len | name | u32 rank | u32 dims[rank] | f32 data[prod(dims)] }*
 * Tensors run to the end of the buffer.
 */
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace muspike {

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

std::vector<std::uint8_t> write_tensor_container(std::span<const NamedTensor> tensors);
/// Throws MalformedCheckpoint on bad magic, unknown version or truncation.
std::vector<NamedTensor> read_tensor_container(std::span<const std::uint8_t> bytes);

}  // namespace muspike
