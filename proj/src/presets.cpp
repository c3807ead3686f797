#include "posa/presets.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

namespace posa {

std::filesystem::path preset_dir() {
  if (const char* env = std::getenv("POSA_PRESET_DIR"); env && *env) return env;
  return POSA_PRESET_DIR;
}

nlohmann::json load_preset(const std::string& name) {
  if (name.find('/') != std::string::npos || name.find("..") != std::string::npos) {
    throw std::invalid_argument("bad preset name: " + name);
  }
  const auto path = preset_dir() / (name + ".json");
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("unknown preset '" + name + "' (looked in " + preset_dir().string() + ")");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("preset " + name + ": " + e.what());
  }
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(preset_dir(), ec)) {
    if (entry.path().extension() == ".json") names.push_back(entry.path().stem().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace posa
