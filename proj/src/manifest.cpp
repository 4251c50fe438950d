#include "stochinv/manifest.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "stochinv/error.hpp"

namespace stochinv {

std::uint64_t fnv1a_digest_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for digesting");
  std::uint64_t h = 14695981039346656037ull;
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

std::string digest_hex(std::uint64_t digest) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << digest;
  return out.str();
}

void RunManifest::add_output(const std::string& output_dir,
                             const std::string& name) {
  const std::string full = output_dir + "/" + name;
  ManifestEntry e;
  e.path = name;
  e.digest = digest_hex(fnv1a_digest_file(full));
  std::ifstream in(full, std::ios::binary | std::ios::ate);
  e.bytes = static_cast<std::uint64_t>(in.tellg());
  outputs.push_back(std::move(e));
}

void RunManifest::add_timing(const std::string& phase, double seconds) {
  timings.emplace_back(phase, seconds);
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j;
  j["resolved_config"] = resolved_config;
  j["seed"] = seed;
  j["version"] = version;
  j["wall_seconds"] = wall_seconds;
  nlohmann::json t = nlohmann::json::object();
  for (const auto& [phase, seconds] : timings) t[phase] = seconds;
  j["timings"] = t;
  nlohmann::json outs = nlohmann::json::array();
  for (const auto& e : outputs) {
    outs.push_back({{"path", e.path}, {"digest", e.digest}, {"bytes", e.bytes}});
  }
  j["outputs"] = outs;
  return j;
}

void RunManifest::write(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << to_json().dump(2) << "\n";
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace stochinv
