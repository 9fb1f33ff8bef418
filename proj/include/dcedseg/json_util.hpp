#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>

#include <json.hpp>

#include "dcedseg/error.hpp"

namespace dcedseg {

inline void require_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                         const char* what) {
    if (!j.is_object()) throw ConfigError(std::string(what) + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known) throw ConfigError(std::string(what) + ": unknown key \"" + it.key() + "\"");
    }
}

inline nlohmann::json load_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open JSON file", path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("failed to parse " + path.string() + ": " + e.what());
    }
    return j;
}

}  // namespace dcedseg
