#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace stochinv {

// FNV-1a over the raw bytes of the file, reported as 16 hex digits.
std::uint64_t fnv1a_digest_file(const std::string& path);
std::string digest_hex(std::uint64_t digest);

struct ManifestEntry {
  std::string path;  // relative to the output directory
  std::string digest;
  std::uint64_t bytes = 0;
};

// Record of one run: the fully resolved config, the seed actually used,
// and a digest of every file the run wrote. Timings live only here so
// the output files themselves stay digest-identical across reruns.
struct RunManifest {
  nlohmann::json resolved_config;
  std::uint64_t seed = 0;
  std::string version;
  double wall_seconds = 0.0;
  std::vector<std::pair<std::string, double>> timings;
  std::vector<ManifestEntry> outputs;

  // Digests the file as it exists now; call after the file is final.
  void add_output(const std::string& output_dir, const std::string& name);
  void add_timing(const std::string& phase, double seconds);

  nlohmann::json to_json() const;
  void write(const std::string& path) const;
};

}  // namespace stochinv
