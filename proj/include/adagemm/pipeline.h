// =================================================================================================
// Off-line pipeline stages with file-based handoff. Every stage reads and writes a fixed layout
// under the output directory:
//
//   config.json                     resolved configuration of the last run
//   tables/M{m}_N{n}_K{k}.csv       one exhaustive tuning table per dataset shape   (tune)
//   baseline/tables/*.csv           tables behind the two baseline defaults          (tune)
//   baseline/policy.json            default-tuned baseline policy                    (tune)
//   dataset.csv, dataset.json       labelled records and class sidecar               (dataset)
//   split.json, models/*.json       train/test split and one tree per grid point     (train)
//   scores.csv, best_model.json,
//   summary.json                    test-set scores, chosen model, headline ratios   (eval)
//   dispatcher.c, dispatcher.cc     emitted dispatcher in both syntaxes              (codegen)
//   bench.csv, bench.txt[, bench.dat]  model vs baseline vs peak comparison          (bench)
//
// The pipeline configuration hash (everything except the output directory and the job count) is
// embedded in every file written.
// =================================================================================================
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "adagemm/dataset.h"
#include "adagemm/eval.h"
#include "adagemm/kernels.h"
#include "adagemm/model.h"
#include "adagemm/tuner.h"

namespace adagemm {

struct DatasetSpec {
  std::string strategy = "po2";  // po2 | go2 | workload | hybrid
  std::int64_t min = 64;         // po2
  std::int64_t max = 2048;
  std::int64_t start = 256;      // go2
  std::int64_t end = 3840;
  std::int64_t step = 256;
  std::filesystem::path workload;  // workload
  std::vector<DatasetSpec> parts;  // hybrid: concatenated, duplicates dropped
};

struct BaselineSpec {
  std::int64_t threshold = kDefaultBaselineThreshold;
  std::int64_t indirect_size = kDefaultIndirectTuningSize;
  std::int64_t direct_size = kDefaultDirectTuningSize;
};

struct BenchSpec {
  std::string shapes = "all";  // all | train | test
  bool live = true;            // re-run the kernels next to the table columns
  int dispatch_trials = 100;
  int dispatch_batch = 1000;
};

struct PipelineConfig {
  DeviceCaps caps{};
  TimingPolicy timing{};
  DatasetSpec dataset{};
  double split_fraction = 0.8;
  std::uint64_t split_seed = 0;
  std::vector<std::optional<int>> heights = default_height_set();
  std::vector<LeafSize> leaves = default_leaf_set();
  BaselineSpec baseline{};
  BenchSpec bench{};
  std::filesystem::path out = "adagemm-out";
  int jobs = 1;

  // Throws ValidationError / ArgumentError on inconsistent values.
  void validate() const;
};

// Relative workload paths are resolved against `base_dir`. Unknown keys are rejected.
PipelineConfig config_from_json(const std::string& json_text,
                                const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const PipelineConfig& config);

// ADAGEMM_TILE_MEMORY_CAP, ADAGEMM_REGISTER_TILE_CAP_DIRECT, ADAGEMM_REGISTER_TILE_CAP_INDIRECT and
// ADAGEMM_ELEMENT_SIZE replace the corresponding caps fields. `getenv` is injectable for tests.
using EnvLookup = std::function<const char*(const char*)>;
void apply_env_overrides(PipelineConfig& config, const EnvLookup& getenv_fn);

// 16 hex digits over the canonical JSON form minus "out" and "jobs".
std::string config_hash(const PipelineConfig& config);

// Shapes described by the dataset spec, in generation order.
std::vector<ProblemShape> resolve_shapes(const DatasetSpec& spec, std::vector<std::string>* warnings = nullptr);

struct OutputLayout {
  std::filesystem::path root;

  std::filesystem::path config() const { return root / "config.json"; }
  std::filesystem::path tables() const { return root / "tables"; }
  std::filesystem::path table(const ProblemShape& shape) const { return tables() / table_file_name(shape); }
  std::filesystem::path baseline_tables() const { return root / "baseline" / "tables"; }
  std::filesystem::path policy() const { return root / "baseline" / "policy.json"; }
  std::filesystem::path dataset_csv() const { return root / "dataset.csv"; }
  std::filesystem::path dataset_json() const { return root / "dataset.json"; }
  std::filesystem::path split() const { return root / "split.json"; }
  std::filesystem::path models() const { return root / "models"; }
  std::filesystem::path model(const std::string& name) const { return models() / (name + ".json"); }
  std::filesystem::path scores() const { return root / "scores.csv"; }
  std::filesystem::path best_model() const { return root / "best_model.json"; }
  std::filesystem::path summary() const { return root / "summary.json"; }
  std::filesystem::path dispatcher_c() const { return root / "dispatcher.c"; }
  std::filesystem::path dispatcher_cc() const { return root / "dispatcher.cc"; }
  std::filesystem::path bench_csv() const { return root / "bench.csv"; }
  std::filesystem::path bench_txt() const { return root / "bench.txt"; }
  std::filesystem::path bench_dat() const { return root / "bench.dat"; }
};

struct TuneReport {
  std::size_t tuned = 0;
  std::size_t skipped = 0;
  std::vector<std::string> failures;  // one entry per failed shape
};

// Tunes every dataset shape and the two baseline shapes. Existing tables whose recorded caps and
// timing match the configuration are kept unless `force`. With jobs > 1 the shapes are sharded
// across forked worker processes.
TuneReport run_tune(const PipelineConfig& config, bool force);

// Labels the dataset shapes from their tables. Throws EvaluationError naming every missing table.
Dataset run_dataset(const PipelineConfig& config);

// Splits the dataset and trains the H x L grid on the training part.
std::vector<NamedTree> run_train(const PipelineConfig& config);

struct EvalSummary {
  std::string best_model;
  double test_accuracy = 0.0;
  double test_dtpr = 0.0;
  double test_dttr = 0.0;
  double train_dtpr = 0.0;
  double baseline_train_dtpr = 0.0;
  double baseline_test_dtpr = 0.0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
};

std::string summary_to_json(const EvalSummary& summary, const std::string& config_hash = "");
EvalSummary summary_from_json(const std::string& json_text);

// Scores every grid model on the test split and records the best one.
EvalSummary run_eval(const PipelineConfig& config);

// Emits the chosen model (best_model.json unless `model` is given) in both syntaxes and checks the
// round trip. Throws GenerationError when the emitted source disagrees with the tree.
void run_codegen(const PipelineConfig& config, const std::optional<std::filesystem::path>& model = {});

struct BenchOptions {
  // A tree JSON file, or "baseline" to bench the baseline policy as the model.
  std::string model;
  bool emit_gnuplot_data = false;
};

struct BenchRow {
  ProblemShape shape;
  KernelConfig model_config;
  KernelConfig baseline_config;
  double model_table = 0.0;
  double baseline_table = 0.0;
  double peak_table = 0.0;
  std::optional<double> model_live;
  std::optional<double> baseline_live;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  double table_peak_ratio = 0.0;      // mean model / peak (DTPR)
  double table_baseline_ratio = 0.0;  // mean model / baseline (DTTR)
  std::optional<double> live_baseline_ratio;
  double overhead_median = 0.0;
  double overhead_max = 0.0;
};

BenchReport run_bench(const PipelineConfig& config, const BenchOptions& options = {});

// tune, dataset, train, eval, codegen and bench in sequence.
EvalSummary run_pipeline(const PipelineConfig& config, bool force);

}  // namespace adagemm
