// Library entry point: C = alpha * op(A) * op(B) + beta * C with the kernel chosen by the
// compiled-in dispatcher.
#pragma once

#include <string>

#include "adagemm/kernels.h"

namespace adagemm {

// The compiled dispatcher's pick for `shape`, or the fallback when that pick is illegal under `caps`.
KernelConfig compiled_select(const ProblemShape& shape, const DeviceCaps& caps = {});
bool compiled_select_falls_back(const ProblemShape& shape, const DeviceCaps& caps = {});
std::string compiled_dispatcher_fingerprint();

inline constexpr KernelConfig kFallbackConfig{KernelFamily::Direct, 16, 16, 8, 2, 2, 1};

template <typename T>
Matrix<T> gemm(const ProblemShape& shape, const Matrix<T>& A, const Matrix<T>& B, const Matrix<T>& C,
               const DeviceCaps& caps = {});

}  // namespace adagemm
