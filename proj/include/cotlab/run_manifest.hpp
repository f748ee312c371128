#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cotlab {

struct RunManifest {
  std::string subcommand;
  std::vector<std::string> argv;  // full command line, enough to rerun
  std::string config_json;        // resolved options as a JSON object
  std::uint64_t seed = 0;
  std::vector<std::string> artifacts;  // paths relative to the run dir
  std::string version;
  double wall_seconds = 0.0;
};

std::string manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const std::string& text);
RunManifest load_manifest(const std::filesystem::path& path);

/// $COTLAB_RUN_ROOT, or ./runs when unset.
std::filesystem::path run_root();

/// Fresh directory <root>/<subcommand>-<seed>-<n> with the smallest unused n.
std::filesystem::path make_run_dir(const std::filesystem::path& root, const std::string& subcommand,
                                   std::uint64_t seed);

void write_manifest(const std::filesystem::path& dir, const RunManifest& m);

}  // namespace cotlab
