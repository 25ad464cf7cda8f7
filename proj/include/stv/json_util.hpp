#ifndef STV_JSON_UTIL_HPP
#define STV_JSON_UTIL_HPP

#include <string>
#include <vector>

#include "json.hpp"
#include "stv/common.hpp"

namespace stv {

using njson = nlohmann::json;

struct SyntheticConfig;
njson synthetic_config_to_json(const SyntheticConfig& c);
SyntheticConfig synthetic_config_from_json(const njson& j);

// Strict-config rule: a document may only contain keys we know about.
inline void reject_unknown_keys(const njson& j, const std::vector<std::string>& allowed,
                                const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const auto& k : allowed) {
            if (it.key() == k) {
                ok = true;
                break;
            }
        }
        if (!ok) throw ConfigError(where + ": unknown key \"" + it.key() + "\"");
    }
}

}  // namespace stv

#endif  // STV_JSON_UTIL_HPP
