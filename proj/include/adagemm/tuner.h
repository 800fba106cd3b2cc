// =================================================================================================
// Exhaustive and random-sampling tuner. A TuningTable holds one timed Measurement per configuration
// for a single problem shape; its argmax is the shape's class label and its "peak".
// =================================================================================================
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "adagemm/kernels.h"

namespace adagemm {

struct TimingPolicy {
  int warmup = 1;       // discarded runs
  int repetitions = 5;  // timed runs, aggregated by their median

  void validate() const;
  bool operator==(const TimingPolicy&) const = default;
};

struct Measurement {
  KernelConfig config;
  double elapsed = 0.0;  // seconds, median over repetitions
  double gflops = 0.0;
};

// Provenance written next to a table.
struct TableMetadata {
  std::uint64_t seed = 0;
  TimingPolicy timing{};
  DeviceCaps caps{};
  std::string version;
  std::string config_hash;
  bool sampled = false;
  std::vector<std::string> warnings;
};

class TuningTable {
 public:
  TuningTable() = default;
  TuningTable(ProblemShape shape, std::vector<Measurement> measurements, TableMetadata meta = {});

  const ProblemShape& shape() const { return shape_; }
  const std::vector<Measurement>& measurements() const { return measurements_; }
  const TableMetadata& metadata() const { return meta_; }
  TableMetadata& metadata() { return meta_; }

  // Argmax of gflops, overall and per family. Ties resolve to the earliest row.
  std::optional<std::size_t> best_overall() const { return best_overall_; }
  std::optional<std::size_t> best_direct() const { return best_direct_; }
  std::optional<std::size_t> best_indirect() const { return best_indirect_; }

  const Measurement& best() const;
  const Measurement* find(const KernelConfig& config) const;
  bool empty() const { return measurements_.empty(); }

 private:
  ProblemShape shape_{};
  std::vector<Measurement> measurements_;
  TableMetadata meta_{};
  std::optional<std::size_t> best_overall_;
  std::optional<std::size_t> best_direct_;
  std::optional<std::size_t> best_indirect_;
};

// 2 * M * N * K.
std::int64_t flops_of(const ProblemShape& shape);

double gflops_of(const ProblemShape& shape, double elapsed);

// Times one configuration per the policy on pre-allocated f32 operands.
class Benchmark {
 public:
  Benchmark(const ProblemShape& shape, const DeviceCaps& caps, std::uint64_t data_seed = 1);

  Measurement measure(const KernelConfig& config, const TimingPolicy& timing);

  const ProblemShape& shape() const { return shape_; }

 private:
  ProblemShape shape_;
  ExecuteOptions options_;
  Matrix<float> a_, b_, c_;
  Workspace<float> workspace_;
};

// Measures the given configurations, in order.
TuningTable tune_configs(const ProblemShape& shape, const std::vector<KernelConfig>& configs,
                         const DeviceCaps& caps, const TimingPolicy& timing);

// Every legal configuration of both families, Direct first.
TuningTable tune_exhaustive(const ProblemShape& shape, const DeviceCaps& caps,
                            const TimingPolicy& timing);

// Every legal configuration of one family.
TuningTable tune_family(const ProblemShape& shape, KernelFamily family, const DeviceCaps& caps,
                        const TimingPolicy& timing);

// Configurations drawn uniformly without replacement, split between the families in proportion to
// their space sizes. Requests larger than the legal space are clamped to the full space and a
// warning is recorded in the table metadata.
std::vector<KernelConfig> sample_configs(const DeviceCaps& caps, std::size_t samples,
                                         std::uint64_t seed, std::vector<std::string>* warnings);

TuningTable tune_random(const ProblemShape& shape, const DeviceCaps& caps, std::size_t samples,
                        std::uint64_t seed, const TimingPolicy& timing);

// CSV persistence. The first line is a '#' metadata comment, then the header
// M,N,K,family,Mwg,Nwg,Kwg,Mwi,Nwi,Kwi,elapsed_s,gflops and one row per measurement.
void write_table_csv(std::ostream& out, const TuningTable& table);
void write_table_csv(const std::filesystem::path& path, const TuningTable& table);
TuningTable read_table_csv(std::istream& in, const std::string& source_name = "<stream>");
TuningTable read_table_csv(const std::filesystem::path& path);

// Conventional file name for a shape's table: "M64_N128_K256.csv".
std::string table_file_name(const ProblemShape& shape);

}  // namespace adagemm
