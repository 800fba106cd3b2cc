// =================================================================================================
// GEMM kernels: a textbook reference used as correctness oracle and two parametric cache-blocked
// kernel families.
//
//   Direct    works on the caller's operands as they are. Transposition is an index remapping and
//             ragged edges are handled inside the kernel with bounds checks.
//   Indirect  assumes tile-aligned, non-transposed operands. When the input does not satisfy that,
//             O(n^2) helper passes pad/pack A and B and pad/unpad C around the O(n^3) kernel.
//
// Both families accumulate every output element over k in increasing order, so results are
// deterministic from run to run and independent of the tiling parameters.
// =================================================================================================
#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace adagemm {

struct ProblemShape {
  std::int64_t M = 1;
  std::int64_t N = 1;
  std::int64_t K = 1;
  double alpha = 1.0;
  double beta = 0.0;
  bool transA = false;
  bool transB = false;

  // Throws ShapeError unless M, N, K are all positive.
  void validate() const;

  // Shapes are identified by their (M,N,K) triple everywhere in the toolkit.
  bool same_dims(const ProblemShape& other) const {
    return M == other.M && N == other.N && K == other.K;
  }
};

ProblemShape make_shape(std::int64_t m, std::int64_t n, std::int64_t k);

enum class KernelFamily : std::uint8_t { Direct = 0, Indirect = 1 };

std::string_view family_name(KernelFamily family);
KernelFamily parse_family(std::string_view text);

struct KernelConfig {
  KernelFamily family = KernelFamily::Direct;
  int Mwg = 8;
  int Nwg = 8;
  int Kwg = 8;
  int Mwi = 1;
  int Nwi = 1;
  int Kwi = 1;

  // Lexicographic over (family, Mwg, Nwg, Kwg, Mwi, Nwi, Kwi); matches enumeration order.
  auto operator<=>(const KernelConfig&) const = default;
};

// Stable class identifier, e.g. "direct_16_16_8_2_2_1".
std::string canonical_id(const KernelConfig& config);
KernelConfig parse_canonical_id(std::string_view id);

struct DeviceCaps {
  std::int64_t tile_memory_cap = 32768;  // bytes
  int register_tile_cap_direct = 8;
  int register_tile_cap_indirect = 32;
  int element_size = 4;  // bytes

  void validate() const;
  bool operator==(const DeviceCaps&) const = default;
};

bool is_legal(const KernelConfig& config, const DeviceCaps& caps);

// Cartesian product of the family's parameter domains filtered by is_legal, in canonical order.
std::vector<KernelConfig> enumerate_search_space(KernelFamily family, const DeviceCaps& caps);

// Dense row-major matrix.
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::int64_t rows, std::int64_t cols, T fill = T{0})
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows * cols), fill) {}

  std::int64_t rows() const { return rows_; }
  std::int64_t cols() const { return cols_; }
  T& operator()(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * cols_ + c)]; }
  const T& operator()(std::int64_t r, std::int64_t c) const {
    return data_[static_cast<std::size_t>(r * cols_ + c)];
  }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::int64_t rows_ = 0;
  std::int64_t cols_ = 0;
  std::vector<T> data_;
};

// Throws ShapeError unless A is op-compatible with (M,K), B with (K,N) and C is M x N.
template <typename T>
void check_operands(const ProblemShape& shape, const Matrix<T>& A, const Matrix<T>& B,
                    const Matrix<T>& C);

// alpha * op(A) * op(B) + beta * C by the naive (i, j, k) triple loop. C is not read when
// beta == 0.
template <typename T>
Matrix<T> gemm_reference(const ProblemShape& shape, const Matrix<T>& A, const Matrix<T>& B,
                         const Matrix<T>& C);

// Scratch buffers reused across kernel calls so that timed runs do not allocate.
template <typename T>
struct Workspace {
  std::vector<T> packed_a;
  std::vector<T> packed_b;
  std::vector<T> padded_c;
  std::vector<T> tile_acc;
};

struct ExecuteOptions {
  // Run the Indirect pad/pack helpers even when the operands are already aligned.
  bool force_helpers = false;
  DeviceCaps caps{};
};

// In-place variant used by timed code: C is overwritten with the result. Returns the elapsed
// wall time of the full path, helper passes included.
template <typename T>
double gemm_execute_into(const ProblemShape& shape, const KernelConfig& config, const Matrix<T>& A,
                         const Matrix<T>& B, Matrix<T>& C, Workspace<T>& workspace,
                         const ExecuteOptions& options = {});

template <typename T>
struct ExecuteResult {
  Matrix<T> C;
  double elapsed = 0.0;
};

template <typename T>
ExecuteResult<T> gemm_execute(const ProblemShape& shape, const KernelConfig& config,
                              const Matrix<T>& A, const Matrix<T>& B, const Matrix<T>& C,
                              const ExecuteOptions& options = {});

// True when the Indirect family can run on the caller's buffers without helper passes.
bool indirect_needs_helpers(const ProblemShape& shape, const KernelConfig& config);

// Largest elementwise error normalised by the magnitude of the terms contributing to that
// element: |X - R| / (|alpha| * sum_k |a_ik * b_kj| + |beta| * |c_ij|). Zero-magnitude elements
// must match exactly (they contribute an infinite error otherwise).
template <typename T>
double max_relative_error(const ProblemShape& shape, const Matrix<T>& A, const Matrix<T>& B,
                          const Matrix<T>& C, const Matrix<T>& result, const Matrix<T>& expected);

// Operand dimensions as stored, honouring the transpose flags.
struct OperandDims {
  std::int64_t a_rows, a_cols, b_rows, b_cols;
};
OperandDims operand_dims(const ProblemShape& shape);

}  // namespace adagemm
