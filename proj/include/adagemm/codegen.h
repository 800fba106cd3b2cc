// =================================================================================================
// Model-to-code translation. A trained tree becomes a nested if/else over (m, n, k) whose leaves
// return complete kernel configurations. Two syntaxes are emitted:
//
//   CLike  neutral C-like text for inspection and diffing
//   Cpp    a C++ translation unit compiled into the library (see adagemm/gemm.h)
//
// Both compare "feature <= threshold" with the thresholds printed as shortest round-trip
// decimals, so the compiled comparisons are exactly the in-memory ones. The emitted text can be
// parsed back into a DispatchProgram, which is how round-trip equivalence is checked and how a
// deployment can run a dispatcher without recompiling.
// =================================================================================================
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adagemm/dataset.h"
#include "adagemm/kernels.h"
#include "adagemm/model.h"

namespace adagemm {

enum class DispatcherSyntax { CLike, Cpp };

std::string_view syntax_name(DispatcherSyntax syntax);
DispatcherSyntax parse_syntax(std::string_view name);

struct DispatcherSource {
  std::string text;
  DispatcherSyntax syntax = DispatcherSyntax::CLike;
  std::string tree_fingerprint;
};

struct EmitOptions {
  std::string function_name = "select_kernel_config";
  std::string cpp_namespace = "adagemm::generated";  // Cpp syntax only
  std::string provenance;                            // free text for the header comment
  std::string config_hash;
};

// Content hash of the tree structure (16 hex digits).
std::string tree_fingerprint(const DecisionTree& tree);

// Throws GenerationError when a leaf class cannot be resolved through `classes`.
DispatcherSource emit_dispatcher(const DecisionTree& tree, const ClassTable& classes,
                                 DispatcherSyntax syntax, const EmitOptions& options = {});

// Executable form of emitted dispatcher text.
class DispatchProgram {
 public:
  // Accepts either syntax. Throws ParseError with the offending token on malformed input.
  static DispatchProgram parse(const std::string& source_text);

  KernelConfig select(const Features& features) const;
  std::string fingerprint() const { return fingerprint_; }
  int branch_count() const;
  int return_count() const;

 private:
  struct Node {
    int feature = -1;
    double threshold = 0.0;
    int then_branch = -1;
    int else_branch = -1;
    KernelConfig config{};
  };
  std::vector<Node> nodes_;
  std::string fingerprint_;

  friend class DispatchParser;
};

// Training shapes plus, for every training shape and every internal threshold t, the shape with
// each of its three features replaced by floor(t) and by ceil(t) (values below 1 are dropped).
std::vector<Features> probe_set(const DecisionTree& tree, std::span<const Features> training);

struct RoundtripResult {
  bool equivalent = true;
  std::optional<Features> counterexample;
  std::optional<KernelConfig> expected;
  std::optional<KernelConfig> actual;
  std::string message;

  explicit operator bool() const { return equivalent; }
};

// True iff the dispatcher in `source` selects what predict selects on every probe.
RoundtripResult roundtrip_check(const DecisionTree& tree, const ClassTable& classes,
                                const DispatcherSource& source, std::span<const Features> probes);

// Runtime selection, either by walking a trained tree or by running parsed dispatcher text.
class Dispatcher {
 public:
  Dispatcher(const DecisionTree& tree, const ClassTable& classes);
  explicit Dispatcher(const DispatcherSource& source);

  KernelConfig select(const ProblemShape& shape) const;

 private:
  const DecisionTree* tree_ = nullptr;
  const ClassTable* classes_ = nullptr;
  std::optional<DispatchProgram> program_;
};

struct DispatchOptions {
  DeviceCaps caps{};
  // Used when the dispatcher picks a configuration that is illegal on this device.
  KernelConfig fallback{KernelFamily::Direct, 16, 16, 8, 2, 2, 1};
};

template <typename T>
struct DispatchResult {
  Matrix<T> C;
  KernelConfig selected;
  double selection_seconds = 0.0;
  double execution_seconds = 0.0;
  bool fell_back = false;
};

template <typename T>
DispatchResult<T> dispatch_and_run(const Dispatcher& dispatcher, const ProblemShape& shape,
                                   const Matrix<T>& A, const Matrix<T>& B, const Matrix<T>& C,
                                   const DispatchOptions& options = {});

}  // namespace adagemm
