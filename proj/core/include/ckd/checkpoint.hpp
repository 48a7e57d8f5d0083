#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ckd/tensor.hpp"

namespace ckd {

// Flat binary checkpoint, bit-exact across save/load:
//
//   magic          4 bytes   "CKDF"
//   version        u32 LE    currently 1
//   tensor_count   u64 LE
//   per tensor:
//     name_len     u32 LE
//     name         UTF-8 bytes
//     rank         u32 LE
//     extents      rank x u64 LE
//     payload      product(extents) x f64, IEEE-754 little-endian
struct NamedTensor {
    std::string name;
    Tensor tensor;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

// In-memory encoding of the same format (used for byte-level comparisons).
std::vector<unsigned char> encode_checkpoint(const std::vector<NamedTensor>& tensors);

} // namespace ckd
