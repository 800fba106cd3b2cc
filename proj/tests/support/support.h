// Shared test fixtures and independent oracles. Nothing here calls into the code paths it is
// used to check.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "adagemm/dataset.h"
#include "adagemm/kernels.h"
#include "adagemm/model.h"
#include "adagemm/tuner.h"

namespace adagemm::testing {

// ---- synthetic tuning tables --------------------------------------------------------------------

// Deterministic analytic GFLOPS for (shape, config): tile utilisation, register blocking, helper
// cost for misaligned Indirect shapes, a small-shape bonus for Direct and a hashed jitter.
double synthetic_gflops(const ProblemShape& shape, const KernelConfig& config);

// Full legal space for the shape, written to CSV and read back.
TuningTable synthetic_table(const ProblemShape& shape, const DeviceCaps& caps = {});

struct SyntheticData {
  TableSet tables;
  Dataset dataset;
};

SyntheticData synthetic_data(const std::vector<ProblemShape>& shapes, const DeviceCaps& caps = {});

// ---- oracles ------------------------------------------------------------------------------------

// j-k-i loop order with double accumulation.
std::vector<double> oracle_gemm(const ProblemShape& shape, const std::vector<double>& A,
                                const std::vector<double>& B, const std::vector<double>& C);

// Legal configurations by an independent filter over the family's parameter domains.
std::vector<KernelConfig> oracle_search_space(KernelFamily family, const DeviceCaps& caps = {});

struct OracleSplit {
  int feature = 0;
  double threshold = 0.0;
};

// Exhaustive weighted-Gini minimisation in exact rational arithmetic. Ties keep the lowest
// feature, then the lowest threshold. Returns nullopt when the parent is pure or no candidate
// leaves both children with at least `min_leaf` samples.
std::optional<OracleSplit> oracle_root_split(const std::vector<Sample>& samples, std::int64_t min_leaf);

// ---- trees --------------------------------------------------------------------------------------

struct GrownTree {
  DecisionTree tree;
  ClassTable classes;             // one distinct legal configuration per leaf
  std::vector<Features> training;  // at least one point inside every leaf's region
};

// Random axis-aligned tree with half-integer thresholds, exactly `depth` levels along one path.
GrownTree grow_random_tree(std::mt19937_64& rng, int depth, int max_leaves = 256);

// Two-level tree over M and K used by the compiled dispatcher check.
GrownTree fixture_tree();

// ---- filesystem ---------------------------------------------------------------------------------

// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& tag);

}  // namespace adagemm::testing
