#include "cotlab/run_manifest.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cotlab/errors.hpp"
#include "json.hpp"

namespace cotlab {

std::string manifest_to_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["subcommand"] = m.subcommand;
  j["argv"] = m.argv;
  j["config"] = m.config_json.empty() ? nlohmann::ordered_json::object() : nlohmann::ordered_json::parse(m.config_json);
  j["seed"] = m.seed;
  j["artifacts"] = m.artifacts;
  j["version"] = m.version;
  j["wall_seconds"] = m.wall_seconds;
  return j.dump(2);
}

RunManifest manifest_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::ordered_json::parse(text);
    RunManifest m;
    m.subcommand = j.at("subcommand").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.config_json = j.at("config").dump();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
    m.version = j.at("version").get<std::string>();
    m.wall_seconds = j.at("wall_seconds").get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed manifest: ") + e.what());
  }
}

RunManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot read " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  return manifest_from_json(buf.str());
}

std::filesystem::path run_root() {
  const char* env = std::getenv("COTLAB_RUN_ROOT");
  return env && *env ? std::filesystem::path(env) : std::filesystem::path("runs");
}

std::filesystem::path make_run_dir(const std::filesystem::path& root, const std::string& subcommand,
                                   std::uint64_t seed) {
  std::filesystem::create_directories(root);
  for (int n = 0;; ++n) {
    auto dir = root / (subcommand + "-" + std::to_string(seed) + "-" + std::to_string(n));
    // create_directory returns false when it already exists, which keeps runs apart.
    if (std::filesystem::create_directory(dir)) return dir;
  }
}

void write_manifest(const std::filesystem::path& dir, const RunManifest& m) {
  std::ofstream f(dir / "manifest.json");
  if (!f) throw InputError("cannot write " + (dir / "manifest.json").string());
  f << manifest_to_json(m) << "\n";
}

}  // namespace cotlab
