#pragma once

#include <cstdint>
#include <string>
#include <type_traits>

#include "json.hpp"
#include "migt/errors.hpp"

namespace migt::detail {

inline void require_count(const nlohmann::json& v, const std::string& key) {
    const bool ok = v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
    if (!ok) throw ConfigError(key + " must be a non-negative integer, got " + v.dump());
}

/// Reads `key` into `field` if present. Unsigned fields (and arrays of them)
/// reject negative or fractional values instead of wrapping.
template <class T>
void read_field(const nlohmann::json& j, const std::string& prefix, const char* key, T& field) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if constexpr (std::is_unsigned_v<T>) {
        require_count(v, prefix + key);
    } else if constexpr (requires { typename T::value_type; }) {
        if constexpr (std::is_unsigned_v<typename T::value_type>) {
            if (v.is_array())
                for (const auto& e : v) require_count(e, prefix + key);
        }
    }
    v.get_to(field);
}

}  // namespace migt::detail
