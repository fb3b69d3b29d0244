#pragma once

#include <json.hpp>

namespace roughwz {

inline constexpr const char* kVersion = "0.1.0";

/// Library, dependency and compiler versions for report provenance.
nlohmann::json build_info();

}  // namespace roughwz
