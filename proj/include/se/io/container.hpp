#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "se/grad/tensor.hpp"

namespace se::io {

inline constexpr char kContainerMagic[8] = {'S', 'E', 'C', 'O', 'N', 'T', 'N', 'R'};
inline constexpr std::uint32_t kContainerVersion = 1;

/// Self-describing binary file shared by flow checkpoints and NMF bases.
///
/// Layout (little-endian): 8-byte magic "SECONTNR", u32 version, string
/// kind, u32 attribute count followed by (string key, string value) pairs,
/// u32 tensor count followed by (string name, u32 rank, u64 dims[rank],
/// f64 values[prod(dims)]) records in row-major order. Strings are a u32
/// byte length and the raw bytes.
struct Container {
  std::string kind;
  std::map<std::string, std::string> attrs;
  std::vector<std::pair<std::string, grad::Tensor>> tensors;

  const std::string& attr(const std::string& key) const;
  const grad::Tensor& tensor(const std::string& name) const;
  bool has_tensor(const std::string& name) const;
};

void write_container(const std::filesystem::path& path, const Container& container);
Container read_container(const std::filesystem::path& path);

}  // namespace se::io
