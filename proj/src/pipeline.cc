#include "adagemm/pipeline.h"

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "adagemm/codegen.h"
#include "adagemm/error.h"
#include "adagemm/log.h"
#include "adagemm/text.h"
#include "adagemm/version.h"
#include "json.hpp"

namespace adagemm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require_keys(const json& object, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!object.is_object()) { throw ValidationError(where + " must be a JSON object"); }
  for (const auto& [key, value] : object.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end()) {
      throw ValidationError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read_if(const json& object, const char* key, T& target) {
  if (object.contains(key)) { target = object.at(key).get<T>(); }
}

DatasetSpec dataset_spec_from(const json& doc, const fs::path& base_dir) {
  require_keys(doc, "dataset", {"strategy", "min", "max", "start", "end", "step", "workload", "parts"});
  DatasetSpec spec;
  read_if(doc, "strategy", spec.strategy);
  read_if(doc, "min", spec.min);
  read_if(doc, "max", spec.max);
  read_if(doc, "start", spec.start);
  read_if(doc, "end", spec.end);
  read_if(doc, "step", spec.step);
  if (doc.contains("workload")) {
    fs::path path = doc.at("workload").get<std::string>();
    spec.workload = path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  }
  if (doc.contains("parts")) {
    for (const auto& part : doc.at("parts")) { spec.parts.push_back(dataset_spec_from(part, base_dir)); }
  }
  return spec;
}

json dataset_spec_to(const DatasetSpec& spec) {
  json doc;
  doc["strategy"] = spec.strategy;
  if (spec.strategy == "po2") {
    doc["min"] = spec.min;
    doc["max"] = spec.max;
  } else if (spec.strategy == "go2") {
    doc["start"] = spec.start;
    doc["end"] = spec.end;
    doc["step"] = spec.step;
  } else if (spec.strategy == "workload") {
    doc["workload"] = spec.workload.string();
  } else {
    doc["parts"] = json::array();
    for (const auto& part : spec.parts) { doc["parts"].push_back(dataset_spec_to(part)); }
  }
  return doc;
}

std::string describe(const DatasetSpec& spec) {
  if (spec.strategy == "po2") { return "po2(" + std::to_string(spec.min) + "," + std::to_string(spec.max) + ")"; }
  if (spec.strategy == "go2") {
    return "go2(" + std::to_string(spec.start) + "," + std::to_string(spec.end) + "," + std::to_string(spec.step) + ")";
  }
  if (spec.strategy == "workload") { return "workload(" + spec.workload.filename().string() + ")"; }
  std::string text = "hybrid(";
  for (std::size_t i = 0; i < spec.parts.size(); ++i) { text += (i ? "+" : "") + describe(spec.parts[i]); }
  return text + ")";
}

void validate_spec(const DatasetSpec& spec) {
  if (spec.strategy == "po2" || spec.strategy == "go2") { return; }  // generators check their own bounds
  if (spec.strategy == "workload") {
    if (spec.workload.empty()) { throw ValidationError("workload dataset needs a 'workload' path"); }
    return;
  }
  if (spec.strategy == "hybrid") {
    if (spec.parts.empty()) { throw ValidationError("hybrid dataset needs at least one part"); }
    for (const auto& part : spec.parts) { validate_spec(part); }
    return;
  }
  throw ValidationError("unknown dataset strategy '" + spec.strategy + "'");
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) { throw ParseError("cannot read " + path.string()); }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) { fs::create_directories(path.parent_path(), ec); }
  if (ec) { throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message()); }
  auto partial = path;
  partial += ".partial";
  {
    std::ofstream out(partial, std::ios::binary);
    if (!out) { throw IoError("cannot write " + partial.string()); }
    out << content;
    if (!out) { throw IoError("failed writing " + partial.string()); }
  }
  fs::rename(partial, path, ec);
  if (ec) { throw IoError("cannot rename " + partial.string() + ": " + ec.message()); }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create output directory " + dir.string() + (ec ? ": " + ec.message() : ""));
  }
}

struct LoadedTables {
  TableSet tables;
  std::vector<std::string> missing;
};

LoadedTables load_tables(const OutputLayout& layout, const std::vector<ProblemShape>& shapes) {
  LoadedTables loaded;
  for (const auto& shape : shapes) {
    const auto path = layout.table(shape);
    if (!fs::exists(path)) {
      loaded.missing.push_back(path.filename().string());
      continue;
    }
    loaded.tables.add(read_table_csv(path));
  }
  return loaded;
}

LoadedTables require_tables(const OutputLayout& layout, const std::vector<ProblemShape>& shapes) {
  auto loaded = load_tables(layout, shapes);
  if (!loaded.missing.empty()) {
    std::string list;
    for (const auto& name : loaded.missing) { list += (list.empty() ? "" : ", ") + name; }
    throw EvaluationError("missing tuning tables for " + std::to_string(loaded.missing.size()) +
                          " shape(s) under " + layout.tables().string() + ": " + list);
  }
  return loaded;
}

Dataset load_dataset(const OutputLayout& layout) {
  return read_dataset(layout.dataset_csv(), layout.dataset_json());
}

BaselinePolicy load_policy(const OutputLayout& layout) { return policy_from_json(read_file(layout.policy())); }

std::vector<TrainConfig> grid_configs(const PipelineConfig& config) {
  std::vector<TrainConfig> grid;
  for (const auto& h : config.heights) {
    for (const auto& l : config.leaves) { grid.push_back(TrainConfig{h, l}); }
  }
  return grid;
}

std::vector<DatasetRecord> pick(const Dataset& dataset, const std::vector<std::size_t>& indices) {
  std::vector<DatasetRecord> records;
  records.reserve(indices.size());
  for (const auto i : indices) {
    if (i >= dataset.records.size()) { throw ConsistencyError("split index out of range for the dataset"); }
    records.push_back(dataset.records[i]);
  }
  return records;
}

bool table_reusable(const fs::path& path, const PipelineConfig& config) {
  if (!fs::exists(path)) { return false; }
  try {
    const auto table = read_table_csv(path);
    const auto& meta = table.metadata();
    if (table.empty() || meta.caps != config.caps || meta.timing != config.timing) {
      log::info("re-tuning " + path.filename().string() + ": recorded caps or timing differ");
      return false;
    }
    return true;
  } catch (const Error& e) {
    log::warn("re-tuning " + path.filename().string() + ": " + e.what());
    return false;
  }
}

// Returns an error message, or an empty string on success.
std::string tune_one(const ProblemShape& shape, const fs::path& path, const PipelineConfig& config,
                     const std::string& hash, std::optional<KernelFamily> family = std::nullopt) {
  try {
    log::info("tuning " + path.filename().string());
    auto table = family ? tune_family(shape, *family, config.caps, config.timing)
                        : tune_exhaustive(shape, config.caps, config.timing);
    table.metadata().config_hash = hash;
    write_table_csv(path, table);
    return {};
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    return path.filename().string() + ": " + e.what();
  }
}

fs::path baseline_table_path(const OutputLayout& layout, KernelFamily family, std::int64_t size) {
  return layout.baseline_tables() /
         (std::string(family_name(family)) + "_" + table_file_name(make_shape(size, size, size)));
}

std::string fixed(double value, int digits) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.*f", digits, value);
  return buffer;
}

}  // namespace

// =================================================================================================

void PipelineConfig::validate() const {
  caps.validate();
  timing.validate();
  validate_spec(dataset);
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) { throw ValidationError("split fraction must lie in (0, 1)"); }
  if (heights.empty()) { throw ValidationError("the height set is empty"); }
  for (const auto& h : heights) {
    if (h && *h < 1) { throw ValidationError("heights must be >= 1 or \"Max\""); }
  }
  if (leaves.empty()) { throw ValidationError("the leaf-size set is empty"); }
  if (baseline.threshold < 1 || baseline.indirect_size < 1 || baseline.direct_size < 1) {
    throw ValidationError("baseline threshold and tuning sizes must be >= 1");
  }
  if (bench.shapes != "all" && bench.shapes != "train" && bench.shapes != "test") {
    throw ValidationError("bench.shapes must be all, train or test");
  }
  if (bench.dispatch_trials < 1 || bench.dispatch_batch < 1) {
    throw ValidationError("bench dispatch trials and batch must be >= 1");
  }
  if (jobs < 1) { throw ValidationError("jobs must be >= 1"); }
}

PipelineConfig config_from_json(const std::string& json_text, const fs::path& base_dir) {
  PipelineConfig config;
  try {
    const auto doc = json::parse(json_text);
    require_keys(doc, "configuration",
                 {"caps", "timing", "dataset", "split", "train", "baseline", "bench", "out", "jobs"});
    if (doc.contains("caps")) {
      const auto& c = doc.at("caps");
      require_keys(c, "caps", {"tile_memory_cap", "register_tile_cap_direct", "register_tile_cap_indirect", "element_size"});
      read_if(c, "tile_memory_cap", config.caps.tile_memory_cap);
      read_if(c, "register_tile_cap_direct", config.caps.register_tile_cap_direct);
      read_if(c, "register_tile_cap_indirect", config.caps.register_tile_cap_indirect);
      read_if(c, "element_size", config.caps.element_size);
    }
    if (doc.contains("timing")) {
      const auto& t = doc.at("timing");
      require_keys(t, "timing", {"warmup", "repetitions"});
      read_if(t, "warmup", config.timing.warmup);
      read_if(t, "repetitions", config.timing.repetitions);
    }
    if (doc.contains("dataset")) { config.dataset = dataset_spec_from(doc.at("dataset"), base_dir); }
    if (doc.contains("split")) {
      const auto& s = doc.at("split");
      require_keys(s, "split", {"fraction", "seed"});
      read_if(s, "fraction", config.split_fraction);
      read_if(s, "seed", config.split_seed);
    }
    if (doc.contains("train")) {
      const auto& t = doc.at("train");
      require_keys(t, "train", {"heights", "leaves"});
      if (t.contains("heights")) {
        config.heights.clear();
        for (const auto& h : t.at("heights")) {
          if (h.is_null() || (h.is_string() && h.get<std::string>() == "Max")) {
            config.heights.push_back(std::nullopt);
          } else {
            config.heights.push_back(h.get<int>());
          }
        }
      }
      if (t.contains("leaves")) {
        config.leaves.clear();
        for (const auto& l : t.at("leaves")) {
          if (l.is_number_integer()) {
            config.leaves.push_back(LeafSize::count(l.get<std::int64_t>()));
          } else if (l.is_number_float()) {
            config.leaves.push_back(LeafSize::fraction(l.get<double>()));
          } else {
            config.leaves.push_back(LeafSize::parse(l.get<std::string>()));
          }
        }
      }
    }
    if (doc.contains("baseline")) {
      const auto& b = doc.at("baseline");
      require_keys(b, "baseline", {"threshold", "indirect_size", "direct_size"});
      read_if(b, "threshold", config.baseline.threshold);
      read_if(b, "indirect_size", config.baseline.indirect_size);
      read_if(b, "direct_size", config.baseline.direct_size);
    }
    if (doc.contains("bench")) {
      const auto& b = doc.at("bench");
      require_keys(b, "bench", {"shapes", "live", "dispatch_trials", "dispatch_batch"});
      read_if(b, "shapes", config.bench.shapes);
      read_if(b, "live", config.bench.live);
      read_if(b, "dispatch_trials", config.bench.dispatch_trials);
      read_if(b, "dispatch_batch", config.bench.dispatch_batch);
    }
    if (doc.contains("out")) {
      fs::path out = doc.at("out").get<std::string>();
      config.out = out.is_relative() && !base_dir.empty() ? base_dir / out : out;
    }
    read_if(doc, "jobs", config.jobs);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed pipeline configuration: ") + e.what());
  }
  config.validate();
  return config;
}

PipelineConfig load_config(const fs::path& path) {
  return config_from_json(read_file(path), path.parent_path());
}

namespace {

json config_json(const PipelineConfig& config) {
  json doc;
  doc["caps"] = {{"tile_memory_cap", config.caps.tile_memory_cap},
                 {"register_tile_cap_direct", config.caps.register_tile_cap_direct},
                 {"register_tile_cap_indirect", config.caps.register_tile_cap_indirect},
                 {"element_size", config.caps.element_size}};
  doc["timing"] = {{"warmup", config.timing.warmup}, {"repetitions", config.timing.repetitions}};
  doc["dataset"] = dataset_spec_to(config.dataset);
  doc["split"] = {{"fraction", config.split_fraction}, {"seed", config.split_seed}};
  json heights = json::array();
  for (const auto& h : config.heights) { heights.push_back(h ? json(*h) : json("Max")); }
  json leaves = json::array();
  for (const auto& l : config.leaves) {
    leaves.push_back(l.is_fraction() ? json(l.value()) : json(static_cast<std::int64_t>(l.value())));
  }
  doc["train"] = {{"heights", heights}, {"leaves", leaves}};
  doc["baseline"] = {{"threshold", config.baseline.threshold},
                     {"indirect_size", config.baseline.indirect_size},
                     {"direct_size", config.baseline.direct_size}};
  doc["bench"] = {{"shapes", config.bench.shapes},
                  {"live", config.bench.live},
                  {"dispatch_trials", config.bench.dispatch_trials},
                  {"dispatch_batch", config.bench.dispatch_batch}};
  return doc;
}

}  // namespace

std::string config_to_json(const PipelineConfig& config) {
  auto doc = config_json(config);
  doc["out"] = config.out.string();
  doc["jobs"] = config.jobs;
  return doc.dump(2) + "\n";
}

std::string config_hash(const PipelineConfig& config) {
  return text::hex64(text::fnv1a(config_json(config).dump()));
}

void apply_env_overrides(PipelineConfig& config, const EnvLookup& getenv_fn) {
  const auto read = [&](const char* name, auto& field) {
    const char* value = getenv_fn(name);
    if (value == nullptr || *value == '\0') { return; }
    std::int64_t parsed = 0;
    try {
      parsed = text::parse_int(value);
    } catch (const ParseError&) {
      throw ValidationError(std::string(name) + " must be an integer, got '" + value + "'");
    }
    field = static_cast<std::remove_reference_t<decltype(field)>>(parsed);
    log::info(std::string("caps override from ") + name + "=" + value);
  };
  read("ADAGEMM_TILE_MEMORY_CAP", config.caps.tile_memory_cap);
  read("ADAGEMM_REGISTER_TILE_CAP_DIRECT", config.caps.register_tile_cap_direct);
  read("ADAGEMM_REGISTER_TILE_CAP_INDIRECT", config.caps.register_tile_cap_indirect);
  read("ADAGEMM_ELEMENT_SIZE", config.caps.element_size);
  config.caps.validate();
}

std::vector<ProblemShape> resolve_shapes(const DatasetSpec& spec, std::vector<std::string>* warnings) {
  if (spec.strategy == "po2") { return gen_po2(spec.min, spec.max); }
  if (spec.strategy == "go2") { return gen_go2(spec.start, spec.end, spec.step); }
  if (spec.strategy == "workload") {
    auto loaded = load_workload_shapes(spec.workload);
    if (warnings != nullptr) {
      warnings->insert(warnings->end(), loaded.warnings.begin(), loaded.warnings.end());
    }
    return loaded.shapes;
  }
  if (spec.strategy == "hybrid") {
    std::vector<ProblemShape> all;
    for (const auto& part : spec.parts) {
      const auto shapes = resolve_shapes(part, warnings);
      all.insert(all.end(), shapes.begin(), shapes.end());
    }
    return dedup_shapes(all);
  }
  throw ValidationError("unknown dataset strategy '" + spec.strategy + "'");
}

// =================================================================================================

TuneReport run_tune(const PipelineConfig& config, bool force) {
  const OutputLayout layout{config.out};
  const auto hash = config_hash(config);
  ensure_dir(layout.tables());
  ensure_dir(layout.baseline_tables());
  write_file(layout.config(), config_to_json(config));

  std::vector<std::string> warnings;
  const auto shapes = resolve_shapes(config.dataset, &warnings);
  for (const auto& w : warnings) { log::warn(w); }

  TuneReport report;
  std::vector<ProblemShape> pending;
  for (const auto& shape : shapes) {
    if (!force && table_reusable(layout.table(shape), config)) {
      ++report.skipped;
    } else {
      pending.push_back(shape);
    }
  }
  log::info("tune: " + std::to_string(pending.size()) + " shape(s) to tune, " +
            std::to_string(report.skipped) + " already tabled");

  if (config.jobs <= 1 || pending.size() <= 1) {
    for (const auto& shape : pending) {
      const auto failure = tune_one(shape, layout.table(shape), config, hash);
      if (failure.empty()) {
        ++report.tuned;
      } else {
        log::warn("tune failed: " + failure);
        report.failures.push_back(failure);
      }
    }
  } else {
    // Shard round-robin over worker processes; the parent inspects the files afterwards.
    std::vector<pid_t> workers;
    const auto jobs = static_cast<std::size_t>(config.jobs);
    for (std::size_t w = 0; w < jobs && w < pending.size(); ++w) {
      std::fflush(nullptr);
      const pid_t pid = fork();
      if (pid < 0) { throw IoError("fork failed while starting tuning workers"); }
      if (pid == 0) {
        int failures = 0;
        for (std::size_t i = w; i < pending.size(); i += jobs) {
          try {
            const auto failure = tune_one(pending[i], layout.table(pending[i]), config, hash);
            if (!failure.empty()) {
              log::warn("tune failed: " + failure);
              ++failures;
            }
          } catch (const std::exception& e) {
            log::warn(std::string("tune worker: ") + e.what());
            ++failures;
          }
        }
        std::fflush(nullptr);
        _exit(failures == 0 ? 0 : 3);
      }
      workers.push_back(pid);
    }
    for (const auto pid : workers) {
      int status = 0;
      waitpid(pid, &status, 0);
    }
    for (const auto& shape : pending) {
      if (fs::exists(layout.table(shape))) {
        ++report.tuned;
      } else {
        report.failures.push_back(table_file_name(shape) + ": no table produced");
      }
    }
  }

  // Baseline defaults: one family each at a fixed cube size.
  BaselinePolicy policy;
  policy.threshold = config.baseline.threshold;
  const std::pair<KernelFamily, std::int64_t> baselines[] = {
      {KernelFamily::Indirect, config.baseline.indirect_size},
      {KernelFamily::Direct, config.baseline.direct_size}};
  int resolved = 0;
  for (const auto& [family, size] : baselines) {
    const auto path = baseline_table_path(layout, family, size);
    if (!force && table_reusable(path, config)) {
      ++report.skipped;
    } else {
      const auto failure = tune_one(make_shape(size, size, size), path, config, hash, family);
      if (!failure.empty()) {
        report.failures.push_back(failure);
        continue;
      }
      ++report.tuned;
    }
    const auto best = read_table_csv(path).best().config;
    (family == KernelFamily::Indirect ? policy.default_indirect : policy.default_direct) = best;
    ++resolved;
  }
  if (resolved == 2) {
    try {
      policy.validate(config.caps);
      write_file(layout.policy(), policy_to_json(policy, hash));
    } catch (const ConfigError& e) {
      report.failures.push_back(std::string("baseline policy: ") + e.what());
    }
  }
  return report;
}

Dataset run_dataset(const PipelineConfig& config) {
  const OutputLayout layout{config.out};
  std::vector<std::string> warnings;
  const auto shapes = resolve_shapes(config.dataset, &warnings);
  for (const auto& w : warnings) { log::warn(w); }
  const auto loaded = require_tables(layout, shapes);
  auto dataset = build_dataset_from_tables(shapes, loaded.tables, config.dataset.strategy);
  dataset.provenance.description = describe(config.dataset);
  for (auto& record : dataset.records) { record.table_ref = table_file_name(record.input); }
  write_dataset(layout.dataset_csv(), layout.dataset_json(), dataset, config_hash(config));
  log::info("dataset: " + std::to_string(dataset.records.size()) + " records, " +
            std::to_string(dataset.classes.size()) + " classes");
  return dataset;
}

std::vector<NamedTree> run_train(const PipelineConfig& config) {
  const OutputLayout layout{config.out};
  const auto hash = config_hash(config);
  const auto dataset = load_dataset(layout);
  const auto parts = split(dataset, config.split_fraction, config.split_seed);
  write_file(layout.split(), split_to_json(parts, hash));
  const auto samples = samples_of(dataset, parts.train);
  auto models = grid_train(samples, config.heights, config.leaves);
  ensure_dir(layout.models());
  for (const auto& model : models) {
    write_file(layout.model(model.name),
               tree_to_json(model.tree, model.name, model.config, layout.dataset_json().filename().string(), hash));
  }
  log::info("train: " + std::to_string(models.size()) + " models on " + std::to_string(samples.size()) +
            " training records");
  return models;
}

std::string summary_to_json(const EvalSummary& s, const std::string& config_hash) {
  json doc;
  doc["format"] = "adagemm.eval_summary";
  doc["version"] = 1;
  if (!config_hash.empty()) { doc["config_hash"] = config_hash; }
  doc["best_model"] = s.best_model;
  doc["test_accuracy"] = s.test_accuracy;
  doc["test_dtpr"] = s.test_dtpr;
  doc["test_dttr"] = s.test_dttr;
  doc["train_dtpr"] = s.train_dtpr;
  doc["baseline_train_dtpr"] = s.baseline_train_dtpr;
  doc["baseline_test_dtpr"] = s.baseline_test_dtpr;
  doc["train_size"] = s.train_size;
  doc["test_size"] = s.test_size;
  return doc.dump(1) + "\n";
}

EvalSummary summary_from_json(const std::string& json_text) {
  try {
    const auto doc = json::parse(json_text);
    EvalSummary s;
    s.best_model = doc.at("best_model").get<std::string>();
    s.test_accuracy = doc.at("test_accuracy").get<double>();
    s.test_dtpr = doc.at("test_dtpr").get<double>();
    s.test_dttr = doc.at("test_dttr").get<double>();
    s.train_dtpr = doc.at("train_dtpr").get<double>();
    s.baseline_train_dtpr = doc.at("baseline_train_dtpr").get<double>();
    s.baseline_test_dtpr = doc.at("baseline_test_dtpr").get<double>();
    s.train_size = doc.at("train_size").get<std::size_t>();
    s.test_size = doc.at("test_size").get<std::size_t>();
    return s;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed evaluation summary: ") + e.what());
  }
}

EvalSummary run_eval(const PipelineConfig& config) {
  const OutputLayout layout{config.out};
  const auto hash = config_hash(config);
  const auto dataset = load_dataset(layout);
  const auto parts = split_from_json(read_file(layout.split()));
  const auto train_records = pick(dataset, parts.train);
  const auto test_records = pick(dataset, parts.test);

  std::vector<ProblemShape> shapes;
  for (const auto& r : dataset.records) { shapes.push_back(r.input); }
  const auto loaded = require_tables(layout, shapes);
  const auto policy = load_policy(layout);

  std::vector<NamedTree> models;
  std::vector<std::string> absent;
  for (const auto& tc : grid_configs(config)) {
    const auto path = layout.model(tc.name());
    if (!fs::exists(path)) {
      absent.push_back(path.filename().string());
      continue;
    }
    models.push_back({tc.name(), tc, tree_from_json(read_file(path)).tree});
  }
  if (!absent.empty()) {
    std::string list;
    for (const auto& a : absent) { list += (list.empty() ? "" : ", ") + a; }
    throw EvaluationError("missing model files: " + list);
  }

  std::vector<ModelScore> scores;
  for (const auto& model : models) {
    scores.push_back(score_model(model, dataset.classes, test_records, loaded.tables, policy));
  }
  std::ostringstream csv;
  write_scores_csv(csv, scores, hash);
  write_file(layout.scores(), csv.str());

  const auto& best = select_best_model(scores);
  const auto chosen = std::find_if(models.begin(), models.end(), [&](const NamedTree& m) { return m.name == best.name; });
  write_file(layout.best_model(), tree_to_json(chosen->tree, chosen->name, chosen->config,
                                               layout.dataset_json().filename().string(), hash));

  const TablePerf perf(loaded.tables);
  EvalSummary summary;
  summary.best_model = best.name;
  summary.test_accuracy = best.accuracy;
  summary.test_dtpr = best.dtpr;
  summary.test_dttr = best.dttr;
  summary.train_dtpr = dtpr(tree_selector(chosen->tree, dataset.classes), train_records, perf);
  summary.baseline_train_dtpr = dtpr(policy_selector(policy), train_records, perf);
  summary.baseline_test_dtpr = dtpr(policy_selector(policy), test_records, perf);
  summary.train_size = train_records.size();
  summary.test_size = test_records.size();
  write_file(layout.summary(), summary_to_json(summary, hash));
  log::info("eval: best " + best.name + " test DTPR " + text::format_double(best.dtpr) + " DTTR " +
            text::format_double(best.dttr));
  return summary;
}

void run_codegen(const PipelineConfig& config, const std::optional<fs::path>& model) {
  const OutputLayout layout{config.out};
  const auto hash = config_hash(config);
  const auto dataset = load_dataset(layout);
  const auto loaded = tree_from_json(read_file(model.value_or(layout.best_model())));

  EmitOptions options;
  options.config_hash = hash;
  options.provenance = "model " + (loaded.name.empty() ? std::string("<unnamed>") : loaded.name) + ", dataset " +
                       dataset.provenance.description + " (" + std::to_string(dataset.records.size()) +
                       " records)";

  std::vector<Features> training;
  for (const auto& r : dataset.records) { training.push_back(features_of(r.input)); }
  const auto probes = probe_set(loaded.tree, training);

  for (const auto syntax : {DispatcherSyntax::CLike, DispatcherSyntax::Cpp}) {
    const auto source = emit_dispatcher(loaded.tree, dataset.classes, syntax, options);
    const auto check = roundtrip_check(loaded.tree, dataset.classes, source, probes);
    if (!check) {
      throw GenerationError("emitted " + std::string(syntax_name(syntax)) +
                            " dispatcher disagrees with the tree: " + check.message);
    }
    write_file(syntax == DispatcherSyntax::CLike ? layout.dispatcher_c() : layout.dispatcher_cc(), source.text);
  }
  log::info("codegen: dispatcher verified on " + std::to_string(probes.size()) + " probes");
}

BenchReport run_bench(const PipelineConfig& config, const BenchOptions& options) {
  const OutputLayout layout{config.out};
  const auto hash = config_hash(config);
  const auto dataset = load_dataset(layout);
  const auto policy = load_policy(layout);

  std::vector<DatasetRecord> records;
  if (config.bench.shapes == "all") {
    records = dataset.records;
  } else {
    const auto parts = split_from_json(read_file(layout.split()));
    records = pick(dataset, config.bench.shapes == "train" ? parts.train : parts.test);
  }
  std::vector<ProblemShape> shapes;
  for (const auto& r : records) { shapes.push_back(r.input); }
  const auto loaded = require_tables(layout, shapes);

  std::optional<LoadedTree> tree;
  Selector model;
  if (options.model == "baseline") {
    model = policy_selector(policy);
  } else {
    tree = tree_from_json(read_file(options.model.empty() ? layout.best_model() : fs::path(options.model)));
    model = tree_selector(tree->tree, dataset.classes);
  }
  const auto baseline = policy_selector(policy);

  const TablePerf table(loaded.tables);
  const LivePerf live(loaded.tables, config.caps, config.timing);
  BenchReport report;
  for (const auto& shape : shapes) {
    BenchRow row;
    row.shape = shape;
    row.model_config = model(shape);
    row.baseline_config = baseline(shape);
    row.model_table = table.perf(shape, row.model_config);
    row.baseline_table = table.perf(shape, row.baseline_config);
    row.peak_table = table.peak(shape);
    if (config.bench.live) {
      row.model_live = live.perf(shape, row.model_config);
      row.baseline_live = live.perf(shape, row.baseline_config);
    }
    report.rows.push_back(row);
  }
  if (shapes.empty()) { throw EvaluationError("bench has no shapes to run"); }
  // Same means as the evaluation metrics; the live source answers from its cache here.
  report.table_peak_ratio = dtpr(model, records, table);
  report.table_baseline_ratio = dttr(model, records, table, policy);
  if (config.bench.live) { report.live_baseline_ratio = dttr(model, records, live, policy); }

  OverheadOptions overhead;
  overhead.dispatch_trials = config.bench.dispatch_trials;
  overhead.dispatch_batch = config.bench.dispatch_batch;
  overhead.kernel_repetitions = config.timing.repetitions;
  overhead.kernel_warmup = config.timing.warmup;
  overhead.caps = config.caps;
  const auto samples = overhead_bench(model, shapes, overhead);
  std::vector<double> fractions;
  for (const auto& s : samples) { fractions.push_back(s.overhead_fraction); }
  std::vector<double> sorted = fractions;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size();
  report.overhead_median = m % 2 == 1 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
  report.overhead_max = sorted.back();

  const auto opt = [](const std::optional<double>& v) { return v ? text::format_double(*v) : std::string(); };
  std::ostringstream csv;
  csv << "# adagemm-bench version=" << kToolkitVersion << " config_hash=" << hash << " model="
      << (tree ? tree->name : std::string("baseline")) << "\n"
      << "M,N,K,model_config,baseline_config,model_table_gflops,baseline_table_gflops,peak_table_gflops,"
         "model_live_gflops,baseline_live_gflops,dispatch_ns,kernel_ns,overhead_fraction\n";
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& r = report.rows[i];
    const auto& s = samples[i];
    csv << r.shape.M << ',' << r.shape.N << ',' << r.shape.K << ',' << canonical_id(r.model_config) << ','
        << canonical_id(r.baseline_config) << ',' << text::format_double(r.model_table) << ','
        << text::format_double(r.baseline_table) << ',' << text::format_double(r.peak_table) << ','
        << opt(r.model_live) << ',' << opt(r.baseline_live) << ',' << text::format_double(s.dispatch_ns) << ','
        << text::format_double(s.kernel_ns) << ',' << text::format_double(s.overhead_fraction) << '\n';
  }
  write_file(layout.bench_csv(), csv.str());

  std::ostringstream txt;
  txt << "adagemm bench (config " << hash << ", model " << (tree ? tree->name : std::string("baseline")) << ")\n\n";
  char line[256];
  std::snprintf(line, sizeof line, "%6s %6s %6s  %28s %28s %9s %9s %9s %9s %9s\n", "M", "N", "K", "model config",
                "baseline config", "model", "baseline", "peak", "model*", "base*");
  txt << line;
  for (const auto& r : report.rows) {
    std::snprintf(line, sizeof line, "%6lld %6lld %6lld  %28s %28s %9.3f %9.3f %9.3f %9s %9s\n",
                  static_cast<long long>(r.shape.M), static_cast<long long>(r.shape.N),
                  static_cast<long long>(r.shape.K), canonical_id(r.model_config).c_str(),
                  canonical_id(r.baseline_config).c_str(), r.model_table, r.baseline_table, r.peak_table,
                  r.model_live ? fixed(*r.model_live, 3).c_str() : "-",
                  r.baseline_live ? fixed(*r.baseline_live, 3).c_str() : "-");
    txt << line;
  }
  txt << "\nGFLOPS from stored tables; columns marked * are live re-runs.\n"
      << "mean model/peak (table):     " << fixed(report.table_peak_ratio, 4) << "\n"
      << "mean model/baseline (table): " << fixed(report.table_baseline_ratio, 4) << "\n";
  if (report.live_baseline_ratio) {
    txt << "mean model/baseline (live):  " << fixed(*report.live_baseline_ratio, 4) << "\n";
  }
  txt << "dispatch overhead: median " << fixed(100.0 * report.overhead_median, 4) << "%, max "
      << fixed(100.0 * report.overhead_max, 4) << "%\n";
  write_file(layout.bench_txt(), txt.str());

  if (options.emit_gnuplot_data) {
    std::ostringstream dat;
    dat << "# config_hash " << hash << "\n"
        << "# index M N K model_table baseline_table peak_table model_live baseline_live overhead_fraction\n";
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
      const auto& r = report.rows[i];
      dat << i << ' ' << r.shape.M << ' ' << r.shape.N << ' ' << r.shape.K << ' ' << text::format_double(r.model_table)
          << ' ' << text::format_double(r.baseline_table) << ' ' << text::format_double(r.peak_table) << ' '
          << (r.model_live ? text::format_double(*r.model_live) : "NaN") << ' '
          << (r.baseline_live ? text::format_double(*r.baseline_live) : "NaN") << ' '
          << text::format_double(samples[i].overhead_fraction) << '\n';
    }
    write_file(layout.bench_dat(), dat.str());
  }
  return report;
}

EvalSummary run_pipeline(const PipelineConfig& config, bool force) {
  const auto report = run_tune(config, force);
  if (!report.failures.empty()) {
    throw MeasurementError("tuning failed for " + std::to_string(report.failures.size()) +
                           " item(s); first: " + report.failures.front());
  }
  run_dataset(config);
  run_train(config);
  const auto summary = run_eval(config);
  run_codegen(config);
  run_bench(config);
  return summary;
}

}  // namespace adagemm
