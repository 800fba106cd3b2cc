// =================================================================================================
// Model evaluation.
//
//   accuracy  fraction of test shapes whose predicted class is the tuner's best class
//   DTPR      mean over test shapes of perf(predicted config) / peak
//   DTTR      mean over test shapes of perf(predicted config) / perf(default-tuned baseline)
//
// Performance comes from stored tuning tables by default ("table mode"); a live source re-runs the
// kernels instead. Both are means of per-shape ratios, not ratios of means.
// =================================================================================================
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "adagemm/dataset.h"
#include "adagemm/model.h"
#include "adagemm/tuner.h"

namespace adagemm {

// Library defaults: one configuration tuned once per family and a size threshold switching
// between them.
struct BaselinePolicy {
  KernelConfig default_indirect;  // tuned at 1024^3
  KernelConfig default_direct;    // tuned at 256^3
  std::int64_t threshold = 384;   // edge length

  void validate(const DeviceCaps& caps) const;
};

inline constexpr std::int64_t kDefaultBaselineThreshold = 384;
inline constexpr std::int64_t kDefaultIndirectTuningSize = 1024;
inline constexpr std::int64_t kDefaultDirectTuningSize = 256;

// Direct default when (M*N*K)^(1/3) < threshold, Indirect default otherwise.
KernelConfig baseline_select(const BaselinePolicy& policy, const ProblemShape& shape);

// Tunes the two defaults (Indirect at indirect_size^3, Direct at direct_size^3).
BaselinePolicy tune_baseline_policy(const DeviceCaps& caps, const TimingPolicy& timing,
                                    std::int64_t threshold = kDefaultBaselineThreshold,
                                    std::int64_t indirect_size = kDefaultIndirectTuningSize,
                                    std::int64_t direct_size = kDefaultDirectTuningSize);

std::string policy_to_json(const BaselinePolicy& policy, const std::string& config_hash = "");
BaselinePolicy policy_from_json(const std::string& json_text);

// Anything that maps a problem shape to a kernel configuration.
using Selector = std::function<KernelConfig(const ProblemShape&)>;

Selector tree_selector(const DecisionTree& tree, const ClassTable& classes);
Selector policy_selector(const BaselinePolicy& policy);
// Per-shape argmax of the stored tables: the best any model could do.
Selector oracle_selector(const TableSet& tables);

// Source of GFLOPS for a (shape, configuration) pair.
class PerfSource {
 public:
  virtual ~PerfSource() = default;
  virtual double perf(const ProblemShape& shape, const KernelConfig& config) const = 0;
  virtual double peak(const ProblemShape& shape) const = 0;
};

// Stored measurements; throws LookupError when the configuration is absent from the shape's table
// and EvaluationError when the shape has no table.
class TablePerf final : public PerfSource {
 public:
  explicit TablePerf(const TableSet& tables) : tables_(tables) {}
  double perf(const ProblemShape& shape, const KernelConfig& config) const override;
  double peak(const ProblemShape& shape) const override;

 private:
  const TableSet& tables_;
};

// Re-executes the kernels. Results are cached per (shape, config); the peak still comes from the
// stored tables.
class LivePerf final : public PerfSource {
 public:
  LivePerf(const TableSet& tables, DeviceCaps caps, TimingPolicy timing)
      : tables_(tables), caps_(caps), timing_(timing) {}
  double perf(const ProblemShape& shape, const KernelConfig& config) const override;
  double peak(const ProblemShape& shape) const override;

 private:
  const TableSet& tables_;
  DeviceCaps caps_;
  TimingPolicy timing_;
  mutable std::map<std::string, double> cache_;
};

double perf_of_class(const ProblemShape& shape, int class_id, const ClassTable& classes,
                     const TableSet& tables);

double accuracy(const DecisionTree& tree, std::span<const DatasetRecord> test);
double accuracy(const Selector& selector, std::span<const DatasetRecord> test);

double dtpr(const Selector& selector, std::span<const DatasetRecord> test, const PerfSource& perf);
double dtpr(const DecisionTree& tree, const ClassTable& classes, std::span<const DatasetRecord> test,
            const TableSet& tables);

double dttr(const Selector& selector, std::span<const DatasetRecord> test, const PerfSource& perf,
            const BaselinePolicy& policy);
double dttr(const DecisionTree& tree, const ClassTable& classes, std::span<const DatasetRecord> test,
            const TableSet& tables, const BaselinePolicy& policy);

struct ModelScore {
  std::string name;
  double accuracy = 0.0;
  double dtpr = 0.0;
  double dttr = 0.0;
  std::string min_samples_leaf;
  TreeStats stats;
};

ModelScore score_model(const NamedTree& model, const ClassTable& classes,
                       std::span<const DatasetRecord> test, const TableSet& tables,
                       const BaselinePolicy& policy);

// Highest DTPR; ties go to higher accuracy, then fewer leaves, then the smaller name.
const ModelScore& select_best_model(std::span<const ModelScore> scores);

// CSV with the columns name, accuracy_pct, dtpr, dttr, total_leaves, height, min_samples_leaf,
// unique_configs_direct, unique_configs_indirect, leaves_direct, leaves_indirect.
void write_scores_csv(std::ostream& out, std::span<const ModelScore> scores,
                      const std::string& config_hash = "");
std::vector<ModelScore> read_scores_csv(std::istream& in);
extern const char* const kScoreCsvHeader;

struct OverheadSample {
  ProblemShape shape;
  KernelConfig selected;
  double dispatch_ns = 0.0;
  double kernel_ns = 0.0;
  double overhead_fraction = 0.0;  // dispatch / (dispatch + kernel)
};

struct OverheadOptions {
  int dispatch_trials = 100;        // median over trials
  int dispatch_batch = 1000;        // calls per trial, averaged
  int kernel_repetitions = 5;       // median over kernel runs
  int kernel_warmup = 1;
  DeviceCaps caps{};
};

// Times the selection decision against the execution of the selected kernel.
std::vector<OverheadSample> overhead_bench(const Selector& selector,
                                           std::span<const ProblemShape> shapes,
                                           const OverheadOptions& options = {});

}  // namespace adagemm
