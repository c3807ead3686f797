#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace posa {

/// Directory holding the shipped preset files. POSA_PRESET_DIR in the
/// environment overrides the build-time location.
std::filesystem::path preset_dir();

/// Loads presets/<name>.json.
nlohmann::json load_preset(const std::string& name);

std::vector<std::string> preset_names();

}  // namespace posa
