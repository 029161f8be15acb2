#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace se::cli {

inline constexpr const char* kManifestHeader = "id,clean,noisy,snr_db,sigma_true,seed";

struct ManifestEntry {
  std::string id;
  std::filesystem::path clean;
  std::optional<std::filesystem::path> noisy;
  std::optional<double> snr_db;
  std::optional<double> sigma_true;
  std::uint64_t seed = 0;
};

/// Utterance list. Paths are stored relative to the manifest's directory
/// and resolved against it on load.
struct Manifest {
  std::vector<ManifestEntry> entries;
};

/// Throws DataError on a malformed file, duplicate ids or missing audio.
Manifest read_manifest(const std::filesystem::path& path, bool require_noisy = false);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

}  // namespace se::cli
