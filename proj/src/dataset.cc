#include "adagemm/dataset.h"

#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "adagemm/error.h"
#include "adagemm/log.h"
#include "adagemm/rng.h"
#include "adagemm/text.h"
#include "adagemm/version.h"
#include "json.hpp"

namespace adagemm {

using nlohmann::json;

int ClassTable::intern(const KernelConfig& config) {
  const auto [it, inserted] = index_.emplace(canonical_id(config), static_cast<int>(configs_.size()));
  if (inserted) { configs_.push_back(config); }
  return it->second;
}

std::optional<int> ClassTable::find(const KernelConfig& config) const {
  const auto it = index_.find(canonical_id(config));
  if (it == index_.end()) { return std::nullopt; }
  return it->second;
}

const KernelConfig& ClassTable::config(int class_id) const {
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= configs_.size()) {
    throw ConsistencyError("unknown class id " + std::to_string(class_id));
  }
  return configs_[static_cast<std::size_t>(class_id)];
}

FamilyCounts unique_configs_per_family(const Dataset& dataset) {
  std::set<int> seen;
  FamilyCounts counts;
  for (const auto& record : dataset.records) {
    if (seen.insert(record.class_id).second) { ++counts[record.label.family]; }
  }
  return counts;
}

// =================================================================================================

namespace {

bool is_power_of_two(std::int64_t value) { return value > 0 && (value & (value - 1)) == 0; }

std::vector<ProblemShape> cube(const std::vector<std::int64_t>& values) {
  std::vector<ProblemShape> shapes;
  shapes.reserve(values.size() * values.size() * values.size());
  for (const auto m : values) {
    for (const auto n : values) {
      for (const auto k : values) { shapes.push_back(make_shape(m, n, k)); }
    }
  }
  return shapes;
}

}  // namespace

std::vector<ProblemShape> gen_po2(std::int64_t min, std::int64_t max) {
  if (!is_power_of_two(min) || !is_power_of_two(max)) {
    throw ArgumentError("po2 bounds must be powers of two, got " + std::to_string(min) + " and " +
                        std::to_string(max));
  }
  if (min > max) { throw ArgumentError("po2 lower bound exceeds upper bound"); }
  std::vector<std::int64_t> values;
  for (std::int64_t v = min; v <= max; v *= 2) { values.push_back(v); }
  return cube(values);
}

std::vector<ProblemShape> gen_go2(std::int64_t start, std::int64_t end, std::int64_t step) {
  if (start < 1 || step < 1 || start > end) {
    throw ArgumentError("go2 needs start >= 1, step >= 1 and start <= end (empty progression)");
  }
  std::vector<std::int64_t> values;
  for (std::int64_t v = start; v <= end; v += step) { values.push_back(v); }
  return cube(values);
}

std::vector<ProblemShape> dedup_shapes(const std::vector<ProblemShape>& shapes) {
  std::set<std::array<std::int64_t, 3>> seen;
  std::vector<ProblemShape> unique;
  for (const auto& shape : shapes) {
    if (seen.insert({shape.M, shape.N, shape.K}).second) { unique.push_back(shape); }
  }
  return unique;
}

WorkloadShapes parse_workload_shapes(std::istream& in, const std::string& source_name) {
  std::vector<ProblemShape> shapes;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    std::string_view content = line;
    if (const auto hash = content.find('#'); hash != std::string_view::npos) {
      content = content.substr(0, hash);
    }
    content = text::trim(content);
    if (content.empty()) { continue; }
    const auto where = source_name + ":" + std::to_string(line_number);
    std::vector<std::string_view> fields;
    if (content.find(',') != std::string_view::npos) {
      fields = text::split(content, ',');
    } else {
      fields = text::split_whitespace(content);
    }
    if (fields.size() != 3) {
      throw ParseError(where + ": expected 3 dimensions, got " + std::to_string(fields.size()));
    }
    std::array<std::int64_t, 3> dims{};
    for (std::size_t i = 0; i < 3; ++i) {
      try {
        dims[i] = text::parse_int(fields[i]);
      } catch (const ParseError& e) {
        throw ParseError(where + ": " + e.what());
      }
    }
    if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1) {
      throw ValidationError(where + ": dimensions must be positive");
    }
    shapes.push_back(make_shape(dims[0], dims[1], dims[2]));
  }
  WorkloadShapes result{dedup_shapes(shapes), {}};
  if (result.shapes.empty()) { result.warnings.push_back(source_name + ": no shapes found"); }
  return result;
}

WorkloadShapes load_workload_shapes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) { throw ParseError("cannot open workload file " + path.string()); }
  auto result = parse_workload_shapes(in, path.string());
  for (const auto& warning : result.warnings) { log::warn(warning); }
  return result;
}

// =================================================================================================

void TableSet::add(TuningTable table) {
  const auto& s = table.shape();
  tables_.insert_or_assign({s.M, s.N, s.K}, std::move(table));
}

const TuningTable* TableSet::find(const ProblemShape& shape) const {
  const auto it = tables_.find({shape.M, shape.N, shape.K});
  return it == tables_.end() ? nullptr : &it->second;
}

const TuningTable& TableSet::at(const ProblemShape& shape) const {
  if (const auto* table = find(shape)) { return *table; }
  throw EvaluationError("no tuning table for shape " + table_file_name(shape));
}

namespace {

void append_record(Dataset& dataset, const ProblemShape& shape, const TuningTable& table) {
  const auto& best = table.best();
  DatasetRecord record;
  record.input = shape;
  record.label = best.config;
  record.class_id = dataset.classes.intern(best.config);
  record.peak_gflops = best.gflops;
  record.table_ref = table_file_name(shape);
  dataset.records.push_back(std::move(record));
}

}  // namespace

Dataset build_dataset(const std::vector<ProblemShape>& shapes, const DeviceCaps& caps,
                      const TimingPolicy& timing, const std::string& strategy) {
  if (shapes.empty()) { throw ArgumentError("cannot build a dataset from zero shapes"); }
  Dataset dataset;
  dataset.provenance.strategy = strategy;
  for (const auto& shape : dedup_shapes(shapes)) {
    try {
      const auto table = tune_exhaustive(shape, caps, timing);
      append_record(dataset, shape, table);
    } catch (const Error& e) {
      log::warn("skipping " + table_file_name(shape) + ": " + e.what());
      dataset.provenance.failures.push_back(table_file_name(shape) + ": " + e.what());
    }
  }
  return dataset;
}

Dataset build_dataset_from_tables(const std::vector<ProblemShape>& shapes, const TableSet& tables,
                                  const std::string& strategy) {
  if (shapes.empty()) { throw ArgumentError("cannot build a dataset from zero shapes"); }
  Dataset dataset;
  dataset.provenance.strategy = strategy;
  for (const auto& shape : dedup_shapes(shapes)) {
    const auto* table = tables.find(shape);
    if (table == nullptr || table->empty()) {
      dataset.provenance.failures.push_back(table_file_name(shape) + ": no tuning table");
      continue;
    }
    append_record(dataset, shape, *table);
  }
  return dataset;
}

// =================================================================================================

Split make_split(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ArgumentError("split fraction must lie in (0, 1), got " + text::format_double(fraction));
  }
  if (n < 2) { throw ArgumentError("splitting needs at least two records"); }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) { order[i] = i; }
  SplitMix64 rng(seed);
  fisher_yates(order, rng);
  // The relative nudge keeps products such as 0.29 * 100 from flooring to 28.
  const auto n_train = static_cast<std::size_t>(
      std::floor(fraction * static_cast<double>(n) * (1.0 + 1e-12)));
  Split result;
  result.fraction = fraction;
  result.seed = seed;
  result.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  result.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return result;
}

Split split(const Dataset& dataset, double fraction, std::uint64_t seed) {
  return make_split(dataset.records.size(), fraction, seed);
}

std::string split_to_json(const Split& split, const std::string& config_hash) {
  json doc;
  doc["format"] = "adagemm.split";
  doc["version"] = 1;
  if (!config_hash.empty()) { doc["config_hash"] = config_hash; }
  doc["fraction"] = split.fraction;
  doc["seed"] = split.seed;
  doc["train"] = split.train;
  doc["test"] = split.test;
  return doc.dump(1) + "\n";
}

Split split_from_json(const std::string& json_text) {
  try {
    const auto doc = json::parse(json_text);
    Split split;
    split.fraction = doc.at("fraction").get<double>();
    split.seed = doc.at("seed").get<std::uint64_t>();
    split.train = doc.at("train").get<std::vector<std::size_t>>();
    split.test = doc.at("test").get<std::vector<std::size_t>>();
    return split;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed split file: ") + e.what());
  }
}

// =================================================================================================

namespace {

json config_to_json(const KernelConfig& c) {
  return json{{"family", family_name(c.family)}, {"Mwg", c.Mwg}, {"Nwg", c.Nwg}, {"Kwg", c.Kwg},
              {"Mwi", c.Mwi}, {"Nwi", c.Nwi}, {"Kwi", c.Kwi}};
}

KernelConfig config_from_json(const json& j) {
  KernelConfig c;
  c.family = parse_family(j.at("family").get<std::string>());
  c.Mwg = j.at("Mwg").get<int>();
  c.Nwg = j.at("Nwg").get<int>();
  c.Kwg = j.at("Kwg").get<int>();
  c.Mwi = j.at("Mwi").get<int>();
  c.Nwi = j.at("Nwi").get<int>();
  c.Kwi = j.at("Kwi").get<int>();
  return c;
}

json classes_json(const ClassTable& classes) {
  json list = json::array();
  for (std::size_t id = 0; id < classes.size(); ++id) {
    auto entry = config_to_json(classes.configs()[id]);
    entry["class_id"] = id;
    entry["canonical"] = canonical_id(classes.configs()[id]);
    list.push_back(std::move(entry));
  }
  return list;
}

ClassTable classes_from(const json& list) {
  ClassTable classes;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const auto& entry = list[i];
    const auto id = entry.at("class_id").get<std::size_t>();
    if (id != i) { throw ConsistencyError("class ids in the sidecar must be dense and ordered"); }
    const auto config = config_from_json(entry);
    if (entry.contains("canonical") && entry["canonical"].get<std::string>() != canonical_id(config)) {
      throw ConsistencyError("class " + std::to_string(id) + " canonical id disagrees with its fields");
    }
    if (classes.intern(config) != static_cast<int>(id)) {
      throw ConsistencyError("duplicate configuration in class table");
    }
  }
  return classes;
}

}  // namespace

std::string class_table_to_json(const ClassTable& classes) { return classes_json(classes).dump(1); }

ClassTable class_table_from_json(const std::string& json_text) {
  try {
    return classes_from(json::parse(json_text));
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed class table: ") + e.what());
  }
}

void write_dataset(const std::filesystem::path& csv_path, const std::filesystem::path& sidecar_path,
                   const Dataset& dataset, const std::string& config_hash) {
  {
    std::ofstream out(csv_path);
    if (!out) { throw IoError("cannot write " + csv_path.string()); }
    out << "# adagemm-dataset version=" << kToolkitVersion << " strategy=" << dataset.provenance.strategy;
    if (!config_hash.empty()) { out << " config_hash=" << config_hash; }
    out << "\nM,N,K,class_id,canonical_config,peak_gflops\n";
    for (const auto& r : dataset.records) {
      out << r.input.M << ',' << r.input.N << ',' << r.input.K << ',' << r.class_id << ','
          << canonical_id(r.label) << ',' << text::format_double(r.peak_gflops) << '\n';
    }
  }
  json doc;
  doc["format"] = "adagemm.dataset";
  doc["version"] = 1;
  doc["toolkit_version"] = kToolkitVersion;
  doc["config_hash"] = config_hash;
  doc["provenance"] = {{"strategy", dataset.provenance.strategy},
                       {"description", dataset.provenance.description},
                       {"failures", dataset.provenance.failures}};
  doc["classes"] = classes_json(dataset.classes);
  std::ofstream out(sidecar_path);
  if (!out) { throw IoError("cannot write " + sidecar_path.string()); }
  out << doc.dump(1) << '\n';
}

Dataset read_dataset(const std::filesystem::path& csv_path, const std::filesystem::path& sidecar_path) {
  Dataset dataset;
  {
    std::ifstream in(sidecar_path);
    if (!in) { throw ParseError("cannot open " + sidecar_path.string()); }
    try {
      const auto doc = json::parse(in);
      dataset.classes = classes_from(doc.at("classes"));
      const auto& prov = doc.at("provenance");
      dataset.provenance.strategy = prov.value("strategy", "");
      dataset.provenance.description = prov.value("description", "");
      dataset.provenance.failures = prov.value("failures", std::vector<std::string>{});
    } catch (const json::exception& e) {
      throw ParseError(sidecar_path.string() + ": " + e.what());
    }
  }
  std::ifstream in(csv_path);
  if (!in) { throw ParseError("cannot open " + csv_path.string()); }
  std::string line;
  std::size_t line_number = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_number;
    const auto trimmed = text::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') { continue; }
    const auto where = csv_path.string() + ":" + std::to_string(line_number);
    if (!header_seen) {
      if (trimmed != "M,N,K,class_id,canonical_config,peak_gflops") {
        throw ParseError(where + ": unexpected dataset header");
      }
      header_seen = true;
      continue;
    }
    const auto fields = text::split(trimmed, ',');
    if (fields.size() != 6) { throw ParseError(where + ": expected 6 fields"); }
    try {
      DatasetRecord r;
      r.input = make_shape(text::parse_int(fields[0]), text::parse_int(fields[1]),
                           text::parse_int(fields[2]));
      r.input.validate();
      r.class_id = static_cast<int>(text::parse_int(fields[3]));
      r.label = parse_canonical_id(fields[4]);
      r.peak_gflops = text::parse_double(fields[5]);
      if (dataset.classes.config(r.class_id) != r.label) {
        throw ConsistencyError("class id " + std::to_string(r.class_id) +
                               " does not match its configuration in the sidecar");
      }
      r.table_ref = table_file_name(r.input);
      dataset.records.push_back(std::move(r));
    } catch (const Error& e) {
      throw ParseError(where + ": " + e.what());
    }
  }
  if (!header_seen) { throw ParseError(csv_path.string() + ": missing dataset header"); }
  return dataset;
}

}  // namespace adagemm
