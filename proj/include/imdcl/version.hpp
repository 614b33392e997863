#pragma once

namespace imdcl {

// Library version, embedded in every report for provenance.
inline constexpr const char* kVersion = "0.1.0";

}  // namespace imdcl
