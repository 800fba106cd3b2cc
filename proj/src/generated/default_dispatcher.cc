// Generated by adagemm 0.1.0. Do not edit.
// tree-fingerprint: dd0223aac92f7cde
// provenance: model h1-L0.5, dataset po2(64,512) (64 records)
// config-hash: d1ec5d58680d3ccf
// leaves: 1, height: 0

#include "adagemm/kernels.h"

namespace adagemm::generated {

::adagemm::KernelConfig select_kernel_config(double m, double n, double k) {
  (void)m;
  (void)n;
  (void)k;
  return ::adagemm::KernelConfig{::adagemm::KernelFamily::Indirect, 64, 32, 32, 2, 8, 1};
}

const char* select_kernel_config_fingerprint() { return "dd0223aac92f7cde"; }

}  // namespace adagemm::generated
