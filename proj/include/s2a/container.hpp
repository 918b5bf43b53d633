#pragma once

#include <string>
#include <utility>
#include <vector>

#include "s2a/tensor.hpp"

namespace s2a {

// Portable binary container shared by features, animations and checkpoints.
// Layout, all little-endian regardless of host:
//   "S2A1" | u32 version=1 | u32 tensor_count
//   per tensor: u16 name_len | name bytes | u8 rank | rank x u32 extents |
//               f32 row-major payload
//   u32 json_len | UTF-8 JSON metadata
struct ContainerFile {
    std::vector<std::pair<std::string, Tensor<float>>> tensors;
    std::string metadata_json = "{}";

    const Tensor<float>* find(const std::string& name) const;
    const Tensor<float>& require(const std::string& name) const;
    void add(const std::string& name, Tensor<float> t);
};

void write_container(const std::string& path, const ContainerFile& file);
ContainerFile read_container(const std::string& path);

// Byte-level forms used by the file functions and by round-trip tests.
std::vector<uint8_t> serialize_container(const ContainerFile& file);
ContainerFile parse_container(const std::vector<uint8_t>& bytes, const std::string& origin);

}  // namespace s2a
