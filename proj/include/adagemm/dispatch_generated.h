// Symbols provided by the emitted C++ dispatcher that is compiled into the library.
#pragma once

#include "adagemm/kernels.h"

namespace adagemm::generated {

KernelConfig select_kernel_config(double m, double n, double k);
const char* select_kernel_config_fingerprint();

}  // namespace adagemm::generated
