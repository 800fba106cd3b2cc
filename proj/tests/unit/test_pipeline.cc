#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "doctest.h"
#include "support.h"

#include "adagemm/codegen.h"
#include "adagemm/error.h"
#include "adagemm/pipeline.h"

#ifndef ADAGEMM_CLI_PATH
#error "ADAGEMM_CLI_PATH must name the adagemm executable"
#endif

using namespace adagemm;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + ADAGEMM_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Eight shapes, quick timing and small baseline shapes.
PipelineConfig tiny_config(const fs::path& out) {
  PipelineConfig c;
  c.dataset.strategy = "po2";
  c.dataset.min = 32;
  c.dataset.max = 64;
  c.timing = TimingPolicy{0, 1};
  c.heights = {1, std::nullopt};
  c.leaves = {LeafSize::count(1), LeafSize::fraction(0.25)};
  c.baseline.indirect_size = 64;
  c.baseline.direct_size = 32;
  c.bench.live = false;
  c.bench.dispatch_trials = 3;
  c.bench.dispatch_batch = 10;
  c.out = out;
  return c;
}

}  // namespace

TEST_CASE("configuration JSON round trip and hash") {
  PipelineConfig c = tiny_config("somewhere");
  c.split_seed = 42;
  const auto text = config_to_json(c);
  const auto back = config_from_json(text);
  CHECK(config_to_json(back) == text);
  CHECK(config_hash(back) == config_hash(c));
  CHECK(config_hash(c).size() == 16);

  PipelineConfig moved = c;
  moved.out = "elsewhere";
  moved.jobs = 4;
  CHECK(config_hash(moved) == config_hash(c));
  moved.split_seed = 43;
  CHECK(config_hash(moved) != config_hash(c));
}

TEST_CASE("configuration parsing") {
  const auto c = config_from_json(R"({"dataset": {"strategy": "workload", "workload": "shapes.txt"},
                                      "train": {"heights": [1, null, "Max"], "leaves": [1, 0.5, "0.1"]}})",
                                  "/base");
  CHECK(c.dataset.workload == fs::path("/base/shapes.txt"));
  REQUIRE(c.heights.size() == 3);
  CHECK(c.heights[0] == 1);
  CHECK_FALSE(c.heights[1].has_value());
  CHECK_FALSE(c.heights[2].has_value());
  REQUIRE(c.leaves.size() == 3);
  CHECK(c.leaves[0] == LeafSize::count(1));
  CHECK(c.leaves[1] == LeafSize::fraction(0.5));
  CHECK(c.leaves[2] == LeafSize::fraction(0.1));

  CHECK_THROWS_AS(config_from_json(R"({"colour": 1})"), ValidationError);
  CHECK_THROWS_AS(config_from_json(R"({"caps": {"tile_memory": 1}})"), ValidationError);
  CHECK_THROWS_AS(config_from_json("{not json"), ParseError);
  CHECK_THROWS_AS(config_from_json(R"({"split": {"fraction": 1.5}})"), ValidationError);
}

TEST_CASE("environment overrides") {
  PipelineConfig c;
  const std::map<std::string, std::string> env{{"ADAGEMM_TILE_MEMORY_CAP", "16384"},
                                               {"ADAGEMM_REGISTER_TILE_CAP_INDIRECT", "16"}};
  apply_env_overrides(c, [&](const char* name) -> const char* {
    const auto it = env.find(name);
    return it == env.end() ? nullptr : it->second.c_str();
  });
  CHECK(c.caps.tile_memory_cap == 16384);
  CHECK(c.caps.register_tile_cap_indirect == 16);
  CHECK(c.caps.register_tile_cap_direct == DeviceCaps{}.register_tile_cap_direct);
  CHECK_THROWS(apply_env_overrides(c, [](const char*) -> const char* { return "lots"; }));
}

TEST_CASE("shape resolution") {
  DatasetSpec po2;
  po2.min = 64;
  po2.max = 256;
  CHECK(resolve_shapes(po2).size() == 27);
  DatasetSpec hybrid;
  hybrid.strategy = "hybrid";
  hybrid.parts = {po2, po2};
  CHECK(resolve_shapes(hybrid).size() == 27);
}

TEST_CASE("tiny pipeline end to end") {
  const auto dir = adagemm::testing::scratch_dir("pipeline");
  const auto config = tiny_config(dir / "out");
  const OutputLayout layout{config.out};

  const auto report = run_tune(config, false);
  CHECK(report.failures.empty());
  CHECK(report.tuned == 10);
  CHECK(fs::exists(layout.policy()));
  const auto table_before = slurp(layout.table(make_shape(32, 32, 32)));

  const auto again = run_tune(config, false);
  CHECK(again.tuned == 0);
  CHECK(again.skipped == 10);
  CHECK(slurp(layout.table(make_shape(32, 32, 32))) == table_before);

  const auto summary = run_pipeline(config, false);
  for (const auto& p : {layout.dataset_csv(), layout.dataset_json(), layout.split(), layout.scores(),
                        layout.best_model(), layout.summary(), layout.dispatcher_c(), layout.dispatcher_cc(),
                        layout.bench_csv(), layout.bench_txt(), layout.config()}) {
    CHECK_MESSAGE(fs::exists(p), p.string());
  }
  CHECK(summary.train_size == 6);
  CHECK(summary.test_size == 2);
  CHECK(summary.train_dtpr > 0.0);
  CHECK(summary.train_dtpr <= 1.0);
  CHECK(summary_from_json(slurp(layout.summary())).best_model == summary.best_model);
  const auto hash = config_hash(config);
  CHECK(slurp(layout.split()).find(hash) != std::string::npos);
  CHECK(slurp(layout.dispatcher_cc()).find(hash) != std::string::npos);
  CHECK(DispatchProgram::parse(slurp(layout.dispatcher_c())).return_count() >= 1);

  // Downstream stages are deterministic given the tables.
  std::map<fs::path, std::string> first;
  for (const auto& p : {layout.dataset_csv(), layout.split(), layout.dispatcher_c(), layout.dispatcher_cc(),
                        layout.model("h1-L1"), layout.model("hMax-L0.25")}) {
    first[p] = slurp(p);
  }
  run_dataset(config);
  run_train(config);
  run_eval(config);
  run_codegen(config);
  for (const auto& [p, text] : first) CHECK_MESSAGE(slurp(p) == text, p.string());

  const auto bench = run_bench(config, BenchOptions{"baseline", true});
  CHECK(bench.rows.size() == 8);
  CHECK(bench.table_baseline_ratio == 1.0);
  CHECK(fs::exists(layout.bench_dat()));

  fs::remove(layout.table(make_shape(64, 32, 64)));
  try {
    run_dataset(config);
    FAIL("missing table not reported");
  } catch (const EvaluationError& e) {
    CHECK(std::string(e.what()).find("M64_N32_K64") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("command line exit codes") {
  const auto dir = adagemm::testing::scratch_dir("cli");
  CHECK(run_cli("--version") == 0);
  CHECK(run_cli("--no-such-flag") == 1);
  CHECK(run_cli("tune --config " + (dir / "missing.json").string()) == 1);
  spit(dir / "bad.json", "{oops");
  CHECK(run_cli("config --config " + (dir / "bad.json").string()) == 2);
  spit(dir / "unknown.json", R"({"colour": 1})");
  CHECK(run_cli("config --config " + (dir / "unknown.json").string()) == 2);
  CHECK(run_cli("dataset --out " + (dir / "empty").string()) == 2);
  CHECK(run_cli("config --out " + (dir / "x").string()) == 0);
  fs::create_directories(dir / "ro");
  spit(dir / "ro" / "best_model.json", "{}");
  CHECK(run_cli("codegen --out " + (dir / "ro").string()) == 2);
  fs::remove_all(dir);
}
