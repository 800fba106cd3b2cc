// adagemm command-line driver for the off-line pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 data or format error, 3 execution failure.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "adagemm/error.h"
#include "adagemm/log.h"
#include "adagemm/pipeline.h"
#include "adagemm/text.h"
#include "adagemm/version.h"

namespace {

using namespace adagemm;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitExecution = 3;

struct CommonOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool force = false;
  int jobs = 0;
};

void add_common(CLI::App* cmd, CommonOptions& opts, bool with_jobs) {
  cmd->fallthrough();
  cmd->add_option("--config", opts.config, "Pipeline configuration (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--out", opts.out, "Output directory (overrides the configuration)");
  cmd->add_option("--seed", opts.seed, "Split seed (overrides the configuration)");
  cmd->add_flag("--force", opts.force, "Redo work whose outputs already exist");
  if (with_jobs) { cmd->add_option("--jobs", opts.jobs, "Worker processes for tuning")->check(CLI::PositiveNumber); }
}

PipelineConfig resolve(const CommonOptions& opts) {
  PipelineConfig config = opts.config.empty() ? PipelineConfig{} : load_config(opts.config);
  if (!opts.out.empty()) { config.out = opts.out; }
  if (opts.seed) { config.split_seed = *opts.seed; }
  if (opts.jobs > 0) { config.jobs = opts.jobs; }
  apply_env_overrides(config, [](const char* name) { return std::getenv(name); });
  config.validate();
  return config;
}

int report_tune(const TuneReport& report) {
  std::cout << "tuned " << report.tuned << ", skipped " << report.skipped << ", failed " << report.failures.size()
            << "\n";
  for (const auto& failure : report.failures) { std::cerr << "adagemm: " << failure << "\n"; }
  return report.failures.empty() ? 0 : kExitExecution;
}

void print_summary(const EvalSummary& s) {
  std::cout << "best model " << s.best_model << ": test accuracy " << text::format_double(100.0 * s.test_accuracy)
            << "%, test DTPR " << text::format_double(s.test_dtpr) << ", test DTTR " << text::format_double(s.test_dttr)
            << "\ntrain DTPR " << text::format_double(s.train_dtpr) << " (baseline "
            << text::format_double(s.baseline_train_dtpr) << ")\n";
}

int run(int argc, char** argv) {
  CLI::App app{"adagemm: tune GEMM kernels, learn a selection tree and emit a dispatcher"};
  app.set_version_flag("--version", std::string(kToolkitVersion));
  app.require_subcommand(1);
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "Progress messages on stderr");
  app.add_flag("-q,--quiet", quiet, "Errors only");

  CommonOptions tune_opts, dataset_opts, train_opts, eval_opts, codegen_opts, bench_opts, pipeline_opts;
  auto* tune = app.add_subcommand("tune", "Tune every dataset shape and the baseline defaults (resumable)");
  add_common(tune, tune_opts, true);
  auto* dataset = app.add_subcommand("dataset", "Label the dataset shapes from their tuning tables");
  add_common(dataset, dataset_opts, false);
  auto* train = app.add_subcommand("train", "Split the dataset and train the H x L grid");
  add_common(train, train_opts, false);
  auto* eval = app.add_subcommand("eval", "Score every model on the test split and pick the best");
  add_common(eval, eval_opts, false);
  auto* codegen = app.add_subcommand("codegen", "Emit the chosen model as dispatcher source");
  add_common(codegen, codegen_opts, false);
  std::string codegen_model;
  codegen->add_option("--model", codegen_model, "Tree JSON to emit (default: best_model.json)")
      ->check(CLI::ExistingFile);
  auto* bench = app.add_subcommand("bench", "Compare model-driven selection with the baseline and the peak");
  add_common(bench, bench_opts, false);
  BenchOptions bench_extra;
  bench->add_option("--model", bench_extra.model, "Tree JSON, or 'baseline' (default: best_model.json)");
  bench->add_flag("--emit-gnuplot-data", bench_extra.emit_gnuplot_data, "Also write bench.dat");
  auto* pipeline = app.add_subcommand("pipeline", "Run tune, dataset, train, eval, codegen and bench");
  add_common(pipeline, pipeline_opts, true);
  auto* show = app.add_subcommand("config", "Print the resolved configuration and its hash");
  CommonOptions show_opts;
  add_common(show, show_opts, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  log::set_level(quiet ? log::Level::Quiet : verbose ? log::Level::Info : log::Level::Warn);

  if (*tune) { return report_tune(run_tune(resolve(tune_opts), tune_opts.force)); }
  if (*dataset) {
    const auto d = run_dataset(resolve(dataset_opts));
    std::cout << "dataset: " << d.records.size() << " records, " << d.classes.size() << " classes\n";
    return 0;
  }
  if (*train) {
    const auto models = run_train(resolve(train_opts));
    std::cout << "trained " << models.size() << " models\n";
    return 0;
  }
  if (*eval) {
    print_summary(run_eval(resolve(eval_opts)));
    return 0;
  }
  if (*codegen) {
    const auto config = resolve(codegen_opts);
    run_codegen(config, codegen_model.empty() ? std::nullopt : std::optional<std::filesystem::path>(codegen_model));
    std::cout << "wrote " << OutputLayout{config.out}.dispatcher_c().string() << " and "
              << OutputLayout{config.out}.dispatcher_cc().string() << "\n";
    return 0;
  }
  if (*bench) {
    const auto config = resolve(bench_opts);
    const auto report = run_bench(config, bench_extra);
    std::cout << "mean model/peak " << text::format_double(report.table_peak_ratio) << ", mean model/baseline "
              << text::format_double(report.table_baseline_ratio) << " (report: "
              << OutputLayout{config.out}.bench_txt().string() << ")\n";
    return 0;
  }
  if (*pipeline) {
    print_summary(run_pipeline(resolve(pipeline_opts), pipeline_opts.force));
    return 0;
  }
  if (*show) {
    const auto config = resolve(show_opts);
    std::cout << config_to_json(config) << "config_hash " << config_hash(config) << "\n";
    return 0;
  }
  return kExitUsage;
}

}  // namespace

// Data and format problems are the caller's to fix; everything else is an execution failure.
int exit_code_for(const std::exception& e) {
  const bool data = dynamic_cast<const adagemm::ParseError*>(&e) || dynamic_cast<const adagemm::ValidationError*>(&e) ||
                    dynamic_cast<const adagemm::ConsistencyError*>(&e) || dynamic_cast<const adagemm::LookupError*>(&e) ||
                    dynamic_cast<const adagemm::EvaluationError*>(&e) || dynamic_cast<const adagemm::ArgumentError*>(&e) ||
                    dynamic_cast<const adagemm::ConfigError*>(&e) || dynamic_cast<const adagemm::ShapeError*>(&e);
  return data ? kExitData : kExitExecution;
}

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "adagemm: " << e.what() << "\n";
    return exit_code_for(e);
  }
}
