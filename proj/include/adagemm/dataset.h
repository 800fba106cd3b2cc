// =================================================================================================
// Input descriptions and labelled datasets. A record pairs a problem shape with the configuration
// that won its tuning table; distinct configurations become dense class ids in first-appearance
// order.
// =================================================================================================
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "adagemm/kernels.h"
#include "adagemm/tuner.h"

namespace adagemm {

// Dense mapping between class ids and full kernel configurations (the dataset "sidecar").
class ClassTable {
 public:
  // Returns the id of `config`, assigning the next free id on first sight.
  int intern(const KernelConfig& config);
  std::optional<int> find(const KernelConfig& config) const;
  // Throws ConsistencyError for ids outside the table.
  const KernelConfig& config(int class_id) const;
  std::size_t size() const { return configs_.size(); }
  const std::vector<KernelConfig>& configs() const { return configs_; }

 private:
  std::vector<KernelConfig> configs_;
  std::map<std::string, int> index_;
};

struct DatasetRecord {
  ProblemShape input;
  KernelConfig label;
  int class_id = 0;
  double peak_gflops = 0.0;
  std::optional<std::string> table_ref;  // file name of the tuning table, when persisted
};

struct Provenance {
  std::string strategy;  // po2 | go2 | workload | hybrid
  std::string description;
  std::vector<std::string> failures;
};

struct Dataset {
  std::vector<DatasetRecord> records;
  ClassTable classes;
  Provenance provenance;
};

struct FamilyCounts {
  int direct = 0;
  int indirect = 0;
  int total() const { return direct + indirect; }
  int& operator[](KernelFamily family) { return family == KernelFamily::Direct ? direct : indirect; }
  int operator[](KernelFamily family) const {
    return family == KernelFamily::Direct ? direct : indirect;
  }
};

// Number of distinct label configurations per family.
FamilyCounts unique_configs_per_family(const Dataset& dataset);

// ---------------------------------------------------------------------------------------------
// Generators. All produce alpha = 1, beta = 0, no transposition, in (M, N, K) lexicographic order.

std::vector<ProblemShape> gen_po2(std::int64_t min, std::int64_t max);
std::vector<ProblemShape> gen_go2(std::int64_t start, std::int64_t end, std::int64_t step);

struct WorkloadShapes {
  std::vector<ProblemShape> shapes;
  std::vector<std::string> warnings;
};

// One "M N K" or "M,N,K" per line, '#' starts a comment. Duplicates are dropped keeping the
// first occurrence.
WorkloadShapes load_workload_shapes(const std::filesystem::path& path);
WorkloadShapes parse_workload_shapes(std::istream& in, const std::string& source_name);

// Removes repeated (M,N,K) triples, keeping first occurrences in order.
std::vector<ProblemShape> dedup_shapes(const std::vector<ProblemShape>& shapes);

// ---------------------------------------------------------------------------------------------
// Labelling.

// Stored tables keyed by (M,N,K).
class TableSet {
 public:
  void add(TuningTable table);
  const TuningTable* find(const ProblemShape& shape) const;
  const TuningTable& at(const ProblemShape& shape) const;  // throws EvaluationError
  std::size_t size() const { return tables_.size(); }

 private:
  std::map<std::array<std::int64_t, 3>, TuningTable> tables_;
};

// Tunes every shape exhaustively and labels it with the table's best_overall configuration.
// Failing shapes are skipped and listed in provenance.failures.
Dataset build_dataset(const std::vector<ProblemShape>& shapes, const DeviceCaps& caps,
                      const TimingPolicy& timing, const std::string& strategy = "workload");

// Same labelling from stored tables; shapes without a table are skipped and recorded.
Dataset build_dataset_from_tables(const std::vector<ProblemShape>& shapes, const TableSet& tables,
                                  const std::string& strategy = "workload");

// ---------------------------------------------------------------------------------------------
// Train/test split.

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  double fraction = 0.8;
  std::uint64_t seed = 0;
};

// Seeded Fisher-Yates shuffle of 0..n-1; the first floor(fraction * n) indices train.
Split make_split(std::size_t n, double fraction, std::uint64_t seed);
Split split(const Dataset& dataset, double fraction, std::uint64_t seed);

std::string split_to_json(const Split& split, const std::string& config_hash = "");
Split split_from_json(const std::string& json_text);

// ---------------------------------------------------------------------------------------------
// Persistence: CSV "M,N,K,class_id,canonical_config,peak_gflops" plus a JSON sidecar holding the
// class table and provenance.

void write_dataset(const std::filesystem::path& csv_path, const std::filesystem::path& sidecar_path,
                   const Dataset& dataset, const std::string& config_hash = "");
Dataset read_dataset(const std::filesystem::path& csv_path, const std::filesystem::path& sidecar_path);

std::string class_table_to_json(const ClassTable& classes);
ClassTable class_table_from_json(const std::string& json_text);

}  // namespace adagemm
