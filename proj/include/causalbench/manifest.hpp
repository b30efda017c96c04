#pragma once

// Run manifests: every CLI command writes a manifest.json next to its
// outputs recording the resolved configuration, seeds, and fragment/library
// versions. Manifests deliberately carry no timestamps or host details, so
// rerunning with identical inputs produces a byte-identical file.

#include <string>

#include "json.hpp"

#include "causalbench/detail/text.hpp"

namespace causalbench {

inline constexpr std::string_view library_version = "1.0.0";

inline nlohmann::json make_manifest(const std::string& command, nlohmann::json resolved_config) {
    // nlohmann::json objects keep keys sorted, which pins the byte layout.
    return nlohmann::json{{"command", command},
                          {"config", std::move(resolved_config)},
                          {"library_version", std::string(library_version)}};
}

inline void write_manifest(const std::string& path, const nlohmann::json& manifest) {
    detail::write_file(path, manifest.dump(2) + "\n");
}

}  // namespace causalbench
