#pragma once

namespace adagemm {

inline constexpr const char* kToolkitVersion = "0.1.0";

}  // namespace adagemm
