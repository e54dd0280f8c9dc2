#pragma once

namespace sim2real {

inline constexpr const char* kToolkitVersion = "0.1.0";
// Version of the JSON report / manifest schemas under schemas/v1.
inline constexpr int kSchemaVersion = 1;

}  // namespace sim2real
