// =================================================================================================
// Reference GEMM, the Direct and Indirect kernel families, legality rules and search spaces.
// =================================================================================================

#include "adagemm/kernels.h"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>

#include "adagemm/error.h"

namespace adagemm {
namespace {

// Parameter domains of the two families. Order matters: enumeration walks them in this order,
// which is also the canonical KernelConfig order.
struct Domains {
  std::vector<int> mwg, nwg, kwg, mwi, nwi, kwi;
};

const Domains& domains_for(KernelFamily family) {
  static const Domains kDirect{{8, 16, 32}, {8, 16, 32}, {8, 16}, {1, 2, 4}, {1, 2, 4}, {1}};
  static const Domains kIndirect{{16, 32, 64}, {16, 32, 64}, {8, 16, 32}, {2, 4, 8}, {2, 4, 8}, {1, 2}};
  return family == KernelFamily::Direct ? kDirect : kIndirect;
}

std::int64_t round_up(std::int64_t value, std::int64_t multiple) {
  return (value + multiple - 1) / multiple * multiple;
}

// Strided access into op(X): element (r, c) lives at data[r * row_stride + c * col_stride].
template <typename T>
struct StridedView {
  const T* data;
  std::int64_t row_stride;
  std::int64_t col_stride;
};

template <typename T>
StridedView<T> op_a(const ProblemShape& shape, const Matrix<T>& A) {
  return shape.transA ? StridedView<T>{A.data(), 1, shape.M} : StridedView<T>{A.data(), shape.K, 1};
}

template <typename T>
StridedView<T> op_b(const ProblemShape& shape, const Matrix<T>& B) {
  return shape.transB ? StridedView<T>{B.data(), 1, shape.K} : StridedView<T>{B.data(), shape.N, 1};
}

// ---------------------------------------------------------------------------------------------
// Direct family micro-kernels. acc is an (MWI x NWI) window of the work-group accumulator tile.

template <typename T, int MWI, int NWI>
void direct_micro(const T* a, std::int64_t ars, std::int64_t acs, const T* b, std::int64_t brs,
                  std::int64_t bcs, std::int64_t kb, T* acc, std::int64_t ldacc) {
  T r[MWI][NWI];
  for (int i = 0; i < MWI; ++i) {
    for (int j = 0; j < NWI; ++j) { r[i][j] = acc[i * ldacc + j]; }
  }
  for (std::int64_t k = 0; k < kb; ++k) {
    T av[MWI];
    T bv[NWI];
    for (int i = 0; i < MWI; ++i) { av[i] = a[i * ars + k * acs]; }
    for (int j = 0; j < NWI; ++j) { bv[j] = b[k * brs + j * bcs]; }
    for (int i = 0; i < MWI; ++i) {
      for (int j = 0; j < NWI; ++j) { r[i][j] += av[i] * bv[j]; }
    }
  }
  for (int i = 0; i < MWI; ++i) {
    for (int j = 0; j < NWI; ++j) { acc[i * ldacc + j] = r[i][j]; }
  }
}

// Ragged edges and register tiles without a specialisation.
template <typename T>
void direct_micro_generic(std::int64_t rows, std::int64_t cols, const T* a, std::int64_t ars,
                          std::int64_t acs, const T* b, std::int64_t brs, std::int64_t bcs,
                          std::int64_t kb, T* acc, std::int64_t ldacc) {
  for (std::int64_t k = 0; k < kb; ++k) {
    for (std::int64_t i = 0; i < rows; ++i) {
      const T av = a[i * ars + k * acs];
      for (std::int64_t j = 0; j < cols; ++j) { acc[i * ldacc + j] += av * b[k * brs + j * bcs]; }
    }
  }
}

template <typename T>
using DirectMicroFn = void (*)(const T*, std::int64_t, std::int64_t, const T*, std::int64_t,
                               std::int64_t, std::int64_t, T*, std::int64_t);

int log2_index(int value) {
  switch (value) {
    case 1: return 0;
    case 2: return 1;
    case 4: return 2;
    case 8: return 3;
    default: return -1;
  }
}

template <typename T, int MWI>
constexpr std::array<DirectMicroFn<T>, 4> direct_row() {
  return {&direct_micro<T, MWI, 1>, &direct_micro<T, MWI, 2>, &direct_micro<T, MWI, 4>,
          &direct_micro<T, MWI, 8>};
}

template <typename T>
DirectMicroFn<T> direct_micro_for(int mwi, int nwi) {
  static constexpr std::array<std::array<DirectMicroFn<T>, 4>, 4> kTable{
      direct_row<T, 1>(), direct_row<T, 2>(), direct_row<T, 4>(), direct_row<T, 8>()};
  const int mi = log2_index(mwi);
  const int ni = log2_index(nwi);
  if (mi < 0 || ni < 0) { return nullptr; }
  return kTable[mi][ni];
}

template <typename T>
void run_direct(const ProblemShape& shape, const KernelConfig& config, const Matrix<T>& A,
                const Matrix<T>& B, Matrix<T>& C, Workspace<T>& workspace) {
  const auto a = op_a(shape, A);
  const auto b = op_b(shape, B);
  const std::int64_t M = shape.M, N = shape.N, K = shape.K;
  const std::int64_t mwg = config.Mwg, nwg = config.Nwg, kwg = config.Kwg;
  const std::int64_t mwi = config.Mwi, nwi = config.Nwi;
  const T alpha = static_cast<T>(shape.alpha);
  const T beta = static_cast<T>(shape.beta);
  const auto micro = direct_micro_for<T>(config.Mwi, config.Nwi);

  workspace.tile_acc.resize(static_cast<std::size_t>(mwg * nwg));
  T* acc = workspace.tile_acc.data();
  T* c = C.data();

  for (std::int64_t i0 = 0; i0 < M; i0 += mwg) {
    const std::int64_t mb = std::min(mwg, M - i0);
    for (std::int64_t j0 = 0; j0 < N; j0 += nwg) {
      const std::int64_t nb = std::min(nwg, N - j0);
      std::fill(workspace.tile_acc.begin(), workspace.tile_acc.end(), T{0});
      for (std::int64_t k0 = 0; k0 < K; k0 += kwg) {
        const std::int64_t kb = std::min(kwg, K - k0);
        const T* a_blk = a.data + i0 * a.row_stride + k0 * a.col_stride;
        const T* b_blk = b.data + k0 * b.row_stride + j0 * b.col_stride;
        for (std::int64_t ii = 0; ii < mb; ii += mwi) {
          const std::int64_t rows = std::min(mwi, mb - ii);
          for (std::int64_t jj = 0; jj < nb; jj += nwi) {
            const std::int64_t cols = std::min(nwi, nb - jj);
            const T* a_ptr = a_blk + ii * a.row_stride;
            const T* b_ptr = b_blk + jj * b.col_stride;
            T* acc_ptr = acc + ii * nwg + jj;
            if (micro != nullptr && rows == mwi && cols == nwi) {
              micro(a_ptr, a.row_stride, a.col_stride, b_ptr, b.row_stride, b.col_stride, kb,
                    acc_ptr, nwg);
            } else {
              direct_micro_generic(rows, cols, a_ptr, a.row_stride, a.col_stride, b_ptr,
                                   b.row_stride, b.col_stride, kb, acc_ptr, nwg);
            }
          }
        }
      }
      for (std::int64_t ii = 0; ii < mb; ++ii) {
        T* c_row = c + (i0 + ii) * N + j0;
        const T* acc_row = acc + ii * nwg;
        if (beta == T{0}) {
          for (std::int64_t jj = 0; jj < nb; ++jj) { c_row[jj] = alpha * acc_row[jj]; }
        } else {
          for (std::int64_t jj = 0; jj < nb; ++jj) {
            c_row[jj] = alpha * acc_row[jj] + beta * c_row[jj];
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------------------------
// Indirect family. Operands are row-major and tile aligned: A is (Mp x Kp), B is (Kp x Np).

template <typename T, int MWI, int NWI, int KWI>
void indirect_micro(const T* a, std::int64_t lda, const T* b, std::int64_t ldb, std::int64_t kb,
                    T* acc, std::int64_t ldacc) {
  T r[MWI][NWI];
  for (int i = 0; i < MWI; ++i) {
    for (int j = 0; j < NWI; ++j) { r[i][j] = acc[i * ldacc + j]; }
  }
  for (std::int64_t k = 0; k < kb; k += KWI) {
    for (int u = 0; u < KWI; ++u) {
      const T* b_row = b + (k + u) * ldb;
      for (int i = 0; i < MWI; ++i) {
        const T av = a[i * lda + k + u];
        for (int j = 0; j < NWI; ++j) { r[i][j] += av * b_row[j]; }
      }
    }
  }
  for (int i = 0; i < MWI; ++i) {
    for (int j = 0; j < NWI; ++j) { acc[i * ldacc + j] = r[i][j]; }
  }
}

template <typename T>
void indirect_micro_generic(std::int64_t rows, std::int64_t cols, const T* a, std::int64_t lda,
                            const T* b, std::int64_t ldb, std::int64_t kb, T* acc,
                            std::int64_t ldacc) {
  for (std::int64_t k = 0; k < kb; ++k) {
    for (std::int64_t i = 0; i < rows; ++i) {
      const T av = a[i * lda + k];
      for (std::int64_t j = 0; j < cols; ++j) { acc[i * ldacc + j] += av * b[k * ldb + j]; }
    }
  }
}

template <typename T>
using IndirectMicroFn = void (*)(const T*, std::int64_t, const T*, std::int64_t, std::int64_t, T*,
                                 std::int64_t);

template <typename T, int MWI, int KWI>
constexpr std::array<IndirectMicroFn<T>, 4> indirect_row() {
  return {&indirect_micro<T, MWI, 1, KWI>, &indirect_micro<T, MWI, 2, KWI>,
          &indirect_micro<T, MWI, 4, KWI>, &indirect_micro<T, MWI, 8, KWI>};
}

template <typename T>
IndirectMicroFn<T> indirect_micro_for(int mwi, int nwi, int kwi) {
  static constexpr std::array<std::array<IndirectMicroFn<T>, 4>, 4> kUnroll1{
      indirect_row<T, 1, 1>(), indirect_row<T, 2, 1>(), indirect_row<T, 4, 1>(),
      indirect_row<T, 8, 1>()};
  static constexpr std::array<std::array<IndirectMicroFn<T>, 4>, 4> kUnroll2{
      indirect_row<T, 1, 2>(), indirect_row<T, 2, 2>(), indirect_row<T, 4, 2>(),
      indirect_row<T, 8, 2>()};
  const int mi = log2_index(mwi);
  const int ni = log2_index(nwi);
  if (mi < 0 || ni < 0) { return nullptr; }
  if (kwi == 1) { return kUnroll1[mi][ni]; }
  if (kwi == 2) { return kUnroll2[mi][ni]; }
  return nullptr;
}

template <typename T>
void indirect_kernel(const KernelConfig& config, std::int64_t Mp, std::int64_t Np, std::int64_t Kp,
                     const T* a, std::int64_t lda, const T* b, std::int64_t ldb, T* c,
                     std::int64_t ldc, T alpha, T beta, Workspace<T>& workspace) {
  const std::int64_t mwg = config.Mwg, nwg = config.Nwg, kwg = config.Kwg;
  const std::int64_t mwi = config.Mwi, nwi = config.Nwi;
  const auto micro = indirect_micro_for<T>(config.Mwi, config.Nwi, config.Kwi);

  workspace.tile_acc.resize(static_cast<std::size_t>(mwg * nwg));
  T* acc = workspace.tile_acc.data();

  for (std::int64_t i0 = 0; i0 < Mp; i0 += mwg) {
    for (std::int64_t j0 = 0; j0 < Np; j0 += nwg) {
      std::fill(workspace.tile_acc.begin(), workspace.tile_acc.end(), T{0});
      for (std::int64_t k0 = 0; k0 < Kp; k0 += kwg) {
        const T* a_blk = a + i0 * lda + k0;
        const T* b_blk = b + k0 * ldb + j0;
        for (std::int64_t ii = 0; ii < mwg; ii += mwi) {
          for (std::int64_t jj = 0; jj < nwg; jj += nwi) {
            if (micro != nullptr) {
              micro(a_blk + ii * lda, lda, b_blk + jj, ldb, kwg, acc + ii * nwg + jj, nwg);
            } else {
              indirect_micro_generic(mwi, nwi, a_blk + ii * lda, lda, b_blk + jj, ldb, kwg,
                                     acc + ii * nwg + jj, nwg);
            }
          }
        }
      }
      for (std::int64_t ii = 0; ii < mwg; ++ii) {
        T* c_row = c + (i0 + ii) * ldc + j0;
        const T* acc_row = acc + ii * nwg;
        if (beta == T{0}) {
          for (std::int64_t jj = 0; jj < nwg; ++jj) { c_row[jj] = alpha * acc_row[jj]; }
        } else {
          for (std::int64_t jj = 0; jj < nwg; ++jj) {
            c_row[jj] = alpha * acc_row[jj] + beta * c_row[jj];
          }
        }
      }
    }
  }
}

template <typename T>
void run_indirect(const ProblemShape& shape, const KernelConfig& config, const Matrix<T>& A,
                  const Matrix<T>& B, Matrix<T>& C, Workspace<T>& workspace, bool force_helpers) {
  const T alpha = static_cast<T>(shape.alpha);
  const T beta = static_cast<T>(shape.beta);
  if (!force_helpers && !indirect_needs_helpers(shape, config)) {
    indirect_kernel(config, shape.M, shape.N, shape.K, A.data(), shape.K, B.data(), shape.N,
                    C.data(), shape.N, alpha, beta, workspace);
    return;
  }

  const std::int64_t M = shape.M, N = shape.N, K = shape.K;
  const std::int64_t Mp = round_up(M, config.Mwg);
  const std::int64_t Np = round_up(N, config.Nwg);
  const std::int64_t Kp = round_up(K, config.Kwg);

  // Helper: pad (and transpose when requested) A into Mp x Kp.
  const auto a = op_a(shape, A);
  workspace.packed_a.resize(static_cast<std::size_t>(Mp * Kp));
  for (std::int64_t i = 0; i < Mp; ++i) {
    T* row = workspace.packed_a.data() + i * Kp;
    if (i < M) {
      for (std::int64_t k = 0; k < K; ++k) { row[k] = a.data[i * a.row_stride + k * a.col_stride]; }
      std::fill(row + K, row + Kp, T{0});
    } else {
      std::fill(row, row + Kp, T{0});
    }
  }

  // Helper: pad (and transpose when requested) B into Kp x Np.
  const auto b = op_b(shape, B);
  workspace.packed_b.resize(static_cast<std::size_t>(Kp * Np));
  for (std::int64_t k = 0; k < Kp; ++k) {
    T* row = workspace.packed_b.data() + k * Np;
    if (k < K) {
      for (std::int64_t j = 0; j < N; ++j) { row[j] = b.data[k * b.row_stride + j * b.col_stride]; }
      std::fill(row + N, row + Np, T{0});
    } else {
      std::fill(row, row + Np, T{0});
    }
  }

  // Helper: pad C into Mp x Np. Only its contents matter when beta != 0.
  workspace.padded_c.resize(static_cast<std::size_t>(Mp * Np));
  if (beta != T{0}) {
    for (std::int64_t i = 0; i < Mp; ++i) {
      T* row = workspace.padded_c.data() + i * Np;
      if (i < M) {
        std::copy(C.data() + i * N, C.data() + (i + 1) * N, row);
        std::fill(row + N, row + Np, T{0});
      } else {
        std::fill(row, row + Np, T{0});
      }
    }
  }

  indirect_kernel(config, Mp, Np, Kp, workspace.packed_a.data(), Kp, workspace.packed_b.data(), Np,
                  workspace.padded_c.data(), Np, alpha, beta, workspace);

  // Helper: unpad C.
  for (std::int64_t i = 0; i < M; ++i) {
    const T* row = workspace.padded_c.data() + i * Np;
    std::copy(row, row + N, C.data() + i * N);
  }
}

}  // namespace

// =================================================================================================

void ProblemShape::validate() const {
  if (M < 1 || N < 1 || K < 1) {
    throw ShapeError("problem dimensions must be positive, got (" + std::to_string(M) + "," +
                     std::to_string(N) + "," + std::to_string(K) + ")");
  }
}

ProblemShape make_shape(std::int64_t m, std::int64_t n, std::int64_t k) {
  ProblemShape shape;
  shape.M = m;
  shape.N = n;
  shape.K = k;
  return shape;
}

std::string_view family_name(KernelFamily family) {
  return family == KernelFamily::Direct ? "direct" : "indirect";
}

KernelFamily parse_family(std::string_view text) {
  if (text == "direct") { return KernelFamily::Direct; }
  if (text == "indirect") { return KernelFamily::Indirect; }
  throw ParseError("unknown kernel family '" + std::string(text) + "'");
}

std::string canonical_id(const KernelConfig& config) {
  std::string id(family_name(config.family));
  for (const int value : {config.Mwg, config.Nwg, config.Kwg, config.Mwi, config.Nwi, config.Kwi}) {
    id += '_';
    id += std::to_string(value);
  }
  return id;
}

KernelConfig parse_canonical_id(std::string_view id) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = id.find('_', start);
    parts.push_back(id.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) { break; }
    start = pos + 1;
  }
  if (parts.size() != 7) { throw ParseError("malformed config identifier '" + std::string(id) + "'"); }
  KernelConfig config;
  config.family = parse_family(parts[0]);
  std::array<int*, 6> fields{&config.Mwg, &config.Nwg, &config.Kwg,
                             &config.Mwi, &config.Nwi, &config.Kwi};
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const std::string part(parts[i + 1]);
    std::size_t used = 0;
    int value = 0;
    try {
      value = std::stoi(part, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != part.size() || part.empty()) {
      throw ParseError("malformed config identifier '" + std::string(id) + "'");
    }
    *fields[i] = value;
  }
  return config;
}

void DeviceCaps::validate() const {
  if (tile_memory_cap <= 0 || register_tile_cap_direct <= 0 || register_tile_cap_indirect <= 0 ||
      element_size <= 0) {
    throw ArgumentError("device caps must all be positive");
  }
}

bool is_legal(const KernelConfig& config, const DeviceCaps& caps) {
  const auto& c = config;
  if (c.Mwg <= 0 || c.Nwg <= 0 || c.Kwg <= 0 || c.Mwi <= 0 || c.Nwi <= 0 || c.Kwi <= 0) {
    return false;
  }
  if (c.Mwg % c.Mwi != 0 || c.Nwg % c.Nwi != 0 || c.Kwg % c.Kwi != 0) { return false; }
  if (c.family == KernelFamily::Direct && c.Kwi != 1) { return false; }
  const int register_cap = c.family == KernelFamily::Direct ? caps.register_tile_cap_direct
                                                           : caps.register_tile_cap_indirect;
  if (static_cast<std::int64_t>(c.Mwi) * c.Nwi > register_cap) { return false; }
  const std::int64_t tile_bytes =
      (static_cast<std::int64_t>(c.Mwg) + c.Nwg) * c.Kwg * caps.element_size;
  return tile_bytes <= caps.tile_memory_cap;
}

std::vector<KernelConfig> enumerate_search_space(KernelFamily family, const DeviceCaps& caps) {
  const auto& d = domains_for(family);
  std::vector<KernelConfig> configs;
  for (const int mwg : d.mwg) {
    for (const int nwg : d.nwg) {
      for (const int kwg : d.kwg) {
        for (const int mwi : d.mwi) {
          for (const int nwi : d.nwi) {
            for (const int kwi : d.kwi) {
              const KernelConfig config{family, mwg, nwg, kwg, mwi, nwi, kwi};
              if (is_legal(config, caps)) { configs.push_back(config); }
            }
          }
        }
      }
    }
  }
  return configs;
}

OperandDims operand_dims(const ProblemShape& shape) {
  OperandDims dims{};
  dims.a_rows = shape.transA ? shape.K : shape.M;
  dims.a_cols = shape.transA ? shape.M : shape.K;
  dims.b_rows = shape.transB ? shape.N : shape.K;
  dims.b_cols = shape.transB ? shape.K : shape.N;
  return dims;
}

template <typename T>
void check_operands(const ProblemShape& shape, const Matrix<T>& A, const Matrix<T>& B,
                    const Matrix<T>& C) {
  shape.validate();
  const auto dims = operand_dims(shape);
  auto describe = [](const char* name, std::int64_t er, std::int64_t ec, std::int64_t r,
                     std::int64_t c) {
    return std::string(name) + " must be " + std::to_string(er) + "x" + std::to_string(ec) +
           ", got " + std::to_string(r) + "x" + std::to_string(c);
  };
  if (A.rows() != dims.a_rows || A.cols() != dims.a_cols) {
    throw ShapeError(describe("A", dims.a_rows, dims.a_cols, A.rows(), A.cols()));
  }
  if (B.rows() != dims.b_rows || B.cols() != dims.b_cols) {
    throw ShapeError(describe("B", dims.b_rows, dims.b_cols, B.rows(), B.cols()));
  }
  if (C.rows() != shape.M || C.cols() != shape.N) {
    throw ShapeError(describe("C", shape.M, shape.N, C.rows(), C.cols()));
  }
}

template <typename T>
Matrix<T> gemm_reference(const ProblemShape& shape, const Matrix<T>& A, const Matrix<T>& B,
                         const Matrix<T>& C) {
  check_operands(shape, A, B, C);
  const auto a = op_a(shape, A);
  const auto b = op_b(shape, B);
  const T alpha = static_cast<T>(shape.alpha);
  const T beta = static_cast<T>(shape.beta);
  Matrix<T> out(shape.M, shape.N);
  for (std::int64_t i = 0; i < shape.M; ++i) {
    for (std::int64_t j = 0; j < shape.N; ++j) {
      T acc{0};
      for (std::int64_t k = 0; k < shape.K; ++k) {
        acc += a.data[i * a.row_stride + k * a.col_stride] * b.data[k * b.row_stride + j * b.col_stride];
      }
      out(i, j) = beta == T{0} ? alpha * acc : alpha * acc + beta * C(i, j);
    }
  }
  return out;
}

bool indirect_needs_helpers(const ProblemShape& shape, const KernelConfig& config) {
  return shape.transA || shape.transB || shape.M % config.Mwg != 0 || shape.N % config.Nwg != 0 ||
         shape.K % config.Kwg != 0;
}

template <typename T>
double gemm_execute_into(const ProblemShape& shape, const KernelConfig& config, const Matrix<T>& A,
                         const Matrix<T>& B, Matrix<T>& C, Workspace<T>& workspace,
                         const ExecuteOptions& options) {
  if (!is_legal(config, options.caps)) {
    throw ConfigError("illegal kernel configuration " + canonical_id(config));
  }
  check_operands(shape, A, B, C);
  const auto start = std::chrono::steady_clock::now();
  if (config.family == KernelFamily::Direct) {
    run_direct(shape, config, A, B, C, workspace);
  } else {
    run_indirect(shape, config, A, B, C, workspace, options.force_helpers);
  }
  const auto stop = std::chrono::steady_clock::now();
  const double elapsed = std::chrono::duration<double>(stop - start).count();
  // The clock can report zero for tiny problems; keep elapsed strictly positive.
  return std::max(elapsed, 1e-9);
}

template <typename T>
ExecuteResult<T> gemm_execute(const ProblemShape& shape, const KernelConfig& config,
                              const Matrix<T>& A, const Matrix<T>& B, const Matrix<T>& C,
                              const ExecuteOptions& options) {
  ExecuteResult<T> result{C, 0.0};
  Workspace<T> workspace;
  result.elapsed = gemm_execute_into(shape, config, A, B, result.C, workspace, options);
  return result;
}

template <typename T>
double max_relative_error(const ProblemShape& shape, const Matrix<T>& A, const Matrix<T>& B,
                          const Matrix<T>& C, const Matrix<T>& result, const Matrix<T>& expected) {
  check_operands(shape, A, B, C);
  const auto a = op_a(shape, A);
  const auto b = op_b(shape, B);
  double worst = 0.0;
  for (std::int64_t i = 0; i < shape.M; ++i) {
    for (std::int64_t j = 0; j < shape.N; ++j) {
      double magnitude = 0.0;
      for (std::int64_t k = 0; k < shape.K; ++k) {
        magnitude += std::abs(static_cast<double>(a.data[i * a.row_stride + k * a.col_stride]) *
                              static_cast<double>(b.data[k * b.row_stride + j * b.col_stride]));
      }
      magnitude *= std::abs(shape.alpha);
      if (shape.beta != 0.0) { magnitude += std::abs(shape.beta * static_cast<double>(C(i, j))); }
      const double diff =
          std::abs(static_cast<double>(result(i, j)) - static_cast<double>(expected(i, j)));
      if (diff == 0.0) { continue; }
      if (magnitude == 0.0 || !std::isfinite(diff)) {
        return std::numeric_limits<double>::infinity();
      }
      worst = std::max(worst, diff / magnitude);
    }
  }
  return worst;
}

#define ADAGEMM_INSTANTIATE(T)                                                                  \
  template void check_operands<T>(const ProblemShape&, const Matrix<T>&, const Matrix<T>&,     \
                                  const Matrix<T>&);                                           \
  template Matrix<T> gemm_reference<T>(const ProblemShape&, const Matrix<T>&, const Matrix<T>&, \
                                       const Matrix<T>&);                                      \
  template double gemm_execute_into<T>(const ProblemShape&, const KernelConfig&,               \
                                       const Matrix<T>&, const Matrix<T>&, Matrix<T>&,         \
                                       Workspace<T>&, const ExecuteOptions&);                  \
  template ExecuteResult<T> gemm_execute<T>(const ProblemShape&, const KernelConfig&,          \
                                            const Matrix<T>&, const Matrix<T>&,                \
                                            const Matrix<T>&, const ExecuteOptions&);          \
  template double max_relative_error<T>(const ProblemShape&, const Matrix<T>&,                 \
                                        const Matrix<T>&, const Matrix<T>&, const Matrix<T>&,  \
                                        const Matrix<T>&);

ADAGEMM_INSTANTIATE(float)
ADAGEMM_INSTANTIATE(double)

#undef ADAGEMM_INSTANTIATE

}  // namespace adagemm
