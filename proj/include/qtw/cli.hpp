#pragma once

namespace qtw::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// Exit codes: 0 ok, 1 unexpected error, 2 config error, 3 I/O error,
// 4 training divergence, 5 digest mismatch.
int run(int argc, const char* const* argv);

}  // namespace qtw::cli
