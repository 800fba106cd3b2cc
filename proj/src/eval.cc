#include "adagemm/eval.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <ostream>

#include "adagemm/error.h"
#include "adagemm/text.h"
#include "json.hpp"

namespace adagemm {

using nlohmann::json;

void BaselinePolicy::validate(const DeviceCaps& caps) const {
  if (threshold < 1) { throw ArgumentError("baseline threshold must be >= 1"); }
  if (default_direct.family != KernelFamily::Direct || !is_legal(default_direct, caps)) {
    throw ConfigError("baseline direct default " + canonical_id(default_direct) + " is not a legal Direct config");
  }
  if (default_indirect.family != KernelFamily::Indirect || !is_legal(default_indirect, caps)) {
    throw ConfigError("baseline indirect default " + canonical_id(default_indirect) +
                      " is not a legal Indirect config");
  }
}

KernelConfig baseline_select(const BaselinePolicy& policy, const ProblemShape& shape) {
  const double volume =
      static_cast<double>(shape.M) * static_cast<double>(shape.N) * static_cast<double>(shape.K);
  return std::cbrt(volume) < static_cast<double>(policy.threshold) ? policy.default_direct
                                                                   : policy.default_indirect;
}

BaselinePolicy tune_baseline_policy(const DeviceCaps& caps, const TimingPolicy& timing,
                                    std::int64_t threshold, std::int64_t indirect_size,
                                    std::int64_t direct_size) {
  BaselinePolicy policy;
  policy.threshold = threshold;
  const auto indirect = tune_family(make_shape(indirect_size, indirect_size, indirect_size),
                                    KernelFamily::Indirect, caps, timing);
  policy.default_indirect = indirect.best().config;
  const auto direct = tune_family(make_shape(direct_size, direct_size, direct_size),
                                  KernelFamily::Direct, caps, timing);
  policy.default_direct = direct.best().config;
  return policy;
}

std::string policy_to_json(const BaselinePolicy& policy, const std::string& config_hash) {
  json doc;
  doc["format"] = "adagemm.baseline_policy";
  doc["version"] = 1;
  if (!config_hash.empty()) { doc["config_hash"] = config_hash; }
  doc["threshold"] = policy.threshold;
  doc["default_direct"] = canonical_id(policy.default_direct);
  doc["default_indirect"] = canonical_id(policy.default_indirect);
  return doc.dump(1) + "\n";
}

BaselinePolicy policy_from_json(const std::string& json_text) {
  try {
    const auto doc = json::parse(json_text);
    BaselinePolicy policy;
    policy.threshold = doc.at("threshold").get<std::int64_t>();
    policy.default_direct = parse_canonical_id(doc.at("default_direct").get<std::string>());
    policy.default_indirect = parse_canonical_id(doc.at("default_indirect").get<std::string>());
    return policy;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed baseline policy: ") + e.what());
  }
}

// =================================================================================================

Selector tree_selector(const DecisionTree& tree, const ClassTable& classes) {
  return [&tree, &classes](const ProblemShape& shape) {
    return classes.config(tree.predict(features_of(shape)));
  };
}

Selector policy_selector(const BaselinePolicy& policy) {
  return [policy](const ProblemShape& shape) { return baseline_select(policy, shape); };
}

Selector oracle_selector(const TableSet& tables) {
  return [&tables](const ProblemShape& shape) { return tables.at(shape).best().config; };
}

double TablePerf::perf(const ProblemShape& shape, const KernelConfig& config) const {
  const auto& table = tables_.at(shape);
  const auto* row = table.find(config);
  if (row == nullptr) {
    throw LookupError("configuration " + canonical_id(config) + " is not in the table for " +
                      table_file_name(shape));
  }
  return row->gflops;
}

double TablePerf::peak(const ProblemShape& shape) const { return tables_.at(shape).best().gflops; }

double LivePerf::perf(const ProblemShape& shape, const KernelConfig& config) const {
  const auto key = table_file_name(shape) + "/" + canonical_id(config);
  if (const auto it = cache_.find(key); it != cache_.end()) { return it->second; }
  Benchmark bench(shape, caps_);
  const double gflops = bench.measure(config, timing_).gflops;
  cache_.emplace(key, gflops);
  return gflops;
}

double LivePerf::peak(const ProblemShape& shape) const { return tables_.at(shape).best().gflops; }

double perf_of_class(const ProblemShape& shape, int class_id, const ClassTable& classes,
                     const TableSet& tables) {
  return TablePerf(tables).perf(shape, classes.config(class_id));
}

// =================================================================================================

namespace {

void require_records(std::span<const DatasetRecord> test) {
  if (test.empty()) { throw ArgumentError("evaluation needs a non-empty test set"); }
}

// Summed in ascending order so the mean does not depend on the record order.
template <typename RatioFn>
double mean_ratio(std::span<const DatasetRecord> test, RatioFn ratio) {
  require_records(test);
  std::vector<double> ratios;
  ratios.reserve(test.size());
  for (const auto& record : test) { ratios.push_back(ratio(record)); }
  std::sort(ratios.begin(), ratios.end());
  double sum = 0.0;
  for (const double r : ratios) { sum += r; }
  return sum / static_cast<double>(test.size());
}

}  // namespace

double accuracy(const DecisionTree& tree, std::span<const DatasetRecord> test) {
  require_records(test);
  std::size_t right = 0;
  for (const auto& record : test) {
    if (tree.predict(features_of(record.input)) == record.class_id) { ++right; }
  }
  return static_cast<double>(right) / static_cast<double>(test.size());
}

double accuracy(const Selector& selector, std::span<const DatasetRecord> test) {
  require_records(test);
  std::size_t right = 0;
  for (const auto& record : test) {
    if (selector(record.input) == record.label) { ++right; }
  }
  return static_cast<double>(right) / static_cast<double>(test.size());
}

double dtpr(const Selector& selector, std::span<const DatasetRecord> test, const PerfSource& perf) {
  return mean_ratio(test, [&](const DatasetRecord& record) {
    return perf.perf(record.input, selector(record.input)) / perf.peak(record.input);
  });
}

double dtpr(const DecisionTree& tree, const ClassTable& classes, std::span<const DatasetRecord> test,
            const TableSet& tables) {
  return dtpr(tree_selector(tree, classes), test, TablePerf(tables));
}

double dttr(const Selector& selector, std::span<const DatasetRecord> test, const PerfSource& perf,
            const BaselinePolicy& policy) {
  return mean_ratio(test, [&](const DatasetRecord& record) {
    return perf.perf(record.input, selector(record.input)) /
           perf.perf(record.input, baseline_select(policy, record.input));
  });
}

double dttr(const DecisionTree& tree, const ClassTable& classes, std::span<const DatasetRecord> test,
            const TableSet& tables, const BaselinePolicy& policy) {
  return dttr(tree_selector(tree, classes), test, TablePerf(tables), policy);
}

ModelScore score_model(const NamedTree& model, const ClassTable& classes,
                       std::span<const DatasetRecord> test, const TableSet& tables,
                       const BaselinePolicy& policy) {
  ModelScore score;
  score.name = model.name;
  score.accuracy = accuracy(model.tree, test);
  score.dtpr = dtpr(model.tree, classes, test, tables);
  score.dttr = dttr(model.tree, classes, test, tables, policy);
  score.min_samples_leaf = model.config.min_samples_leaf.label();
  score.stats = stats(model.tree, classes);
  return score;
}

const ModelScore& select_best_model(std::span<const ModelScore> scores) {
  if (scores.empty()) { throw ArgumentError("no models to select from"); }
  const auto better = [](const ModelScore& a, const ModelScore& b) {
    if (a.dtpr != b.dtpr) { return a.dtpr > b.dtpr; }
    if (a.accuracy != b.accuracy) { return a.accuracy > b.accuracy; }
    if (a.stats.total_leaves != b.stats.total_leaves) {
      return a.stats.total_leaves < b.stats.total_leaves;
    }
    return a.name < b.name;
  };
  const ModelScore* best = &scores.front();
  for (const auto& score : scores.subspan(1)) {
    if (better(score, *best)) { best = &score; }
  }
  return *best;
}

// =================================================================================================

const char* const kScoreCsvHeader =
    "name,accuracy_pct,dtpr,dttr,total_leaves,height,min_samples_leaf,unique_configs_direct,"
    "unique_configs_indirect,leaves_direct,leaves_indirect";

void write_scores_csv(std::ostream& out, std::span<const ModelScore> scores,
                      const std::string& config_hash) {
  if (!config_hash.empty()) { out << "# adagemm-scores config_hash=" << config_hash << '\n'; }
  out << kScoreCsvHeader << '\n';
  for (const auto& s : scores) {
    out << s.name << ',' << text::format_double(s.accuracy * 100.0) << ','
        << text::format_double(s.dtpr) << ',' << text::format_double(s.dttr) << ','
        << s.stats.total_leaves << ',' << s.stats.height << ',' << s.min_samples_leaf << ','
        << s.stats.unique_configs_per_family.direct << ','
        << s.stats.unique_configs_per_family.indirect << ',' << s.stats.leaves_per_family.direct
        << ',' << s.stats.leaves_per_family.indirect << '\n';
  }
}

std::vector<ModelScore> read_scores_csv(std::istream& in) {
  std::vector<ModelScore> scores;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    const auto trimmed = text::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') { continue; }
    if (!header_seen) {
      if (trimmed != kScoreCsvHeader) { throw ParseError("unexpected score CSV header"); }
      header_seen = true;
      continue;
    }
    const auto f = text::split(trimmed, ',');
    if (f.size() != 11) { throw ParseError("score CSV row needs 11 fields"); }
    ModelScore s;
    s.name = std::string(f[0]);
    s.accuracy = text::parse_double(f[1]) / 100.0;
    s.dtpr = text::parse_double(f[2]);
    s.dttr = text::parse_double(f[3]);
    s.stats.total_leaves = static_cast<int>(text::parse_int(f[4]));
    s.stats.height = static_cast<int>(text::parse_int(f[5]));
    s.min_samples_leaf = std::string(f[6]);
    s.stats.unique_configs_per_family.direct = static_cast<int>(text::parse_int(f[7]));
    s.stats.unique_configs_per_family.indirect = static_cast<int>(text::parse_int(f[8]));
    s.stats.leaves_per_family.direct = static_cast<int>(text::parse_int(f[9]));
    s.stats.leaves_per_family.indirect = static_cast<int>(text::parse_int(f[10]));
    scores.push_back(std::move(s));
  }
  return scores;
}

// =================================================================================================

namespace {

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

std::vector<OverheadSample> overhead_bench(const Selector& selector,
                                           std::span<const ProblemShape> shapes,
                                           const OverheadOptions& options) {
  using Clock = std::chrono::steady_clock;
  std::vector<OverheadSample> samples;
  for (const auto& shape : shapes) {
    OverheadSample sample;
    sample.shape = shape;
    sample.selected = selector(shape);

    // Vary the probe slightly between calls so the selection cannot be hoisted out of the loop.
    volatile std::int64_t jitter = 0;
    std::int64_t sink = 0;
    std::vector<double> trials;
    trials.reserve(static_cast<std::size_t>(options.dispatch_trials));
    for (int t = 0; t < options.dispatch_trials; ++t) {
      ProblemShape probe = shape;
      const auto start = Clock::now();
      for (int i = 0; i < options.dispatch_batch; ++i) {
        probe.M = shape.M + jitter;
        sink += selector(probe).Mwg;
      }
      const auto stop = Clock::now();
      trials.push_back(std::chrono::duration<double, std::nano>(stop - start).count() /
                       options.dispatch_batch);
    }
    if (sink == -1) { jitter = 1; }
    sample.dispatch_ns = median(std::move(trials));

    Benchmark bench(shape, options.caps);
    const auto measurement =
        bench.measure(sample.selected, TimingPolicy{options.kernel_warmup, options.kernel_repetitions});
    sample.kernel_ns = measurement.elapsed * 1e9;
    sample.overhead_fraction = sample.dispatch_ns / (sample.dispatch_ns + sample.kernel_ns);
    samples.push_back(sample);
  }
  return samples;
}

}  // namespace adagemm
