#include "adagemm/gemm.h"

#include "adagemm/dispatch_generated.h"

namespace adagemm {

namespace {

KernelConfig raw_select(const ProblemShape& shape) {
  return generated::select_kernel_config(static_cast<double>(shape.M), static_cast<double>(shape.N),
                                         static_cast<double>(shape.K));
}

}  // namespace

KernelConfig compiled_select(const ProblemShape& shape, const DeviceCaps& caps) {
  const auto config = raw_select(shape);
  return is_legal(config, caps) ? config : kFallbackConfig;
}

bool compiled_select_falls_back(const ProblemShape& shape, const DeviceCaps& caps) {
  return !is_legal(raw_select(shape), caps);
}

std::string compiled_dispatcher_fingerprint() { return generated::select_kernel_config_fingerprint(); }

template <typename T>
Matrix<T> gemm(const ProblemShape& shape, const Matrix<T>& A, const Matrix<T>& B, const Matrix<T>& C,
               const DeviceCaps& caps) {
  ExecuteOptions options;
  options.caps = caps;
  return gemm_execute(shape, compiled_select(shape, caps), A, B, C, options).C;
}

template Matrix<float> gemm<float>(const ProblemShape&, const Matrix<float>&, const Matrix<float>&,
                                   const Matrix<float>&, const DeviceCaps&);
template Matrix<double> gemm<double>(const ProblemShape&, const Matrix<double>&, const Matrix<double>&,
                                     const Matrix<double>&, const DeviceCaps&);

}  // namespace adagemm
