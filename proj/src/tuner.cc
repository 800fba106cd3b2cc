#include "adagemm/tuner.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "adagemm/error.h"
#include "adagemm/rng.h"
#include "adagemm/text.h"
#include "adagemm/version.h"

namespace adagemm {

void TimingPolicy::validate() const {
  if (warmup < 0 || repetitions < 1) {
    throw ArgumentError("timing policy needs warmup >= 0 and repetitions >= 1");
  }
}

TuningTable::TuningTable(ProblemShape shape, std::vector<Measurement> measurements,
                         TableMetadata meta)
    : shape_(shape), measurements_(std::move(measurements)), meta_(std::move(meta)) {
  for (std::size_t i = 0; i < measurements_.size(); ++i) {
    const auto& m = measurements_[i];
    auto update = [&](std::optional<std::size_t>& best) {
      if (!best || m.gflops > measurements_[*best].gflops) { best = i; }
    };
    update(best_overall_);
    update(m.config.family == KernelFamily::Direct ? best_direct_ : best_indirect_);
  }
}

const Measurement& TuningTable::best() const {
  if (!best_overall_) { throw LookupError("tuning table for " + table_file_name(shape_) + " is empty"); }
  return measurements_[*best_overall_];
}

const Measurement* TuningTable::find(const KernelConfig& config) const {
  for (const auto& m : measurements_) {
    if (m.config == config) { return &m; }
  }
  return nullptr;
}

std::int64_t flops_of(const ProblemShape& shape) { return 2 * shape.M * shape.N * shape.K; }

double gflops_of(const ProblemShape& shape, double elapsed) {
  return static_cast<double>(flops_of(shape)) / elapsed / 1e9;
}

// =================================================================================================

Benchmark::Benchmark(const ProblemShape& shape, const DeviceCaps& caps, std::uint64_t data_seed)
    : shape_(shape) {
  shape.validate();
  options_.caps = caps;
  const auto dims = operand_dims(shape);
  a_ = Matrix<float>(dims.a_rows, dims.a_cols);
  b_ = Matrix<float>(dims.b_rows, dims.b_cols);
  c_ = Matrix<float>(shape.M, shape.N);
  std::mt19937_64 generator(data_seed);
  std::uniform_real_distribution<float> values(-1.0f, 1.0f);
  for (auto& v : a_.values()) { v = values(generator); }
  for (auto& v : b_.values()) { v = values(generator); }
  for (auto& v : c_.values()) { v = values(generator); }
}

Measurement Benchmark::measure(const KernelConfig& config, const TimingPolicy& timing) {
  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(timing.repetitions));
  try {
    for (int i = 0; i < timing.warmup; ++i) {
      gemm_execute_into(shape_, config, a_, b_, c_, workspace_, options_);
    }
    for (int i = 0; i < timing.repetitions; ++i) {
      times.push_back(gemm_execute_into(shape_, config, a_, b_, c_, workspace_, options_));
    }
  } catch (const Error& e) {
    throw MeasurementError("measuring " + canonical_id(config) + " failed: " + e.what());
  }
  std::sort(times.begin(), times.end());
  const std::size_t n = times.size();
  const double median = n % 2 == 1 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
  return Measurement{config, median, gflops_of(shape_, median)};
}

TuningTable tune_configs(const ProblemShape& shape, const std::vector<KernelConfig>& configs,
                         const DeviceCaps& caps, const TimingPolicy& timing) {
  timing.validate();
  caps.validate();
  Benchmark bench(shape, caps);
  std::vector<Measurement> measurements;
  measurements.reserve(configs.size());
  for (const auto& config : configs) { measurements.push_back(bench.measure(config, timing)); }
  TableMetadata meta;
  meta.timing = timing;
  meta.caps = caps;
  meta.version = kToolkitVersion;
  return TuningTable(shape, std::move(measurements), std::move(meta));
}

TuningTable tune_exhaustive(const ProblemShape& shape, const DeviceCaps& caps,
                            const TimingPolicy& timing) {
  auto configs = enumerate_search_space(KernelFamily::Direct, caps);
  const auto indirect = enumerate_search_space(KernelFamily::Indirect, caps);
  configs.insert(configs.end(), indirect.begin(), indirect.end());
  return tune_configs(shape, configs, caps, timing);
}

TuningTable tune_family(const ProblemShape& shape, KernelFamily family, const DeviceCaps& caps,
                        const TimingPolicy& timing) {
  return tune_configs(shape, enumerate_search_space(family, caps), caps, timing);
}

std::vector<KernelConfig> sample_configs(const DeviceCaps& caps, std::size_t samples,
                                         std::uint64_t seed, std::vector<std::string>* warnings) {
  if (samples < 1) { throw ArgumentError("random tuning needs at least one sample"); }
  const auto direct = enumerate_search_space(KernelFamily::Direct, caps);
  const auto indirect = enumerate_search_space(KernelFamily::Indirect, caps);
  const std::size_t total = direct.size() + indirect.size();
  if (samples >= total) {
    if (samples > total && warnings != nullptr) {
      warnings->push_back("requested " + std::to_string(samples) + " samples but the legal space has " +
                          std::to_string(total) + " configurations; tuning exhaustively");
    }
    auto all = direct;
    all.insert(all.end(), indirect.begin(), indirect.end());
    return all;
  }

  std::size_t n_direct = samples * direct.size() / total;
  std::size_t n_indirect = samples - n_direct;
  if (n_indirect > indirect.size()) {
    n_direct += n_indirect - indirect.size();
    n_indirect = indirect.size();
  }

  SplitMix64 rng(seed);
  std::vector<KernelConfig> chosen;
  auto draw = [&](const std::vector<KernelConfig>& space, std::size_t count) {
    std::vector<std::size_t> order(space.size());
    for (std::size_t i = 0; i < order.size(); ++i) { order[i] = i; }
    // Partial Fisher-Yates: the first `count` slots become a uniform sample.
    for (std::size_t i = 0; i < count; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.uniform(space.size() - i));
      std::swap(order[i], order[j]);
    }
    order.resize(count);
    std::sort(order.begin(), order.end());
    for (const auto index : order) { chosen.push_back(space[index]); }
  };
  draw(direct, n_direct);
  draw(indirect, n_indirect);
  return chosen;
}

TuningTable tune_random(const ProblemShape& shape, const DeviceCaps& caps, std::size_t samples,
                        std::uint64_t seed, const TimingPolicy& timing) {
  std::vector<std::string> warnings;
  const auto configs = sample_configs(caps, samples, seed, &warnings);
  auto table = tune_configs(shape, configs, caps, timing);
  table.metadata().seed = seed;
  table.metadata().sampled = true;
  table.metadata().warnings = std::move(warnings);
  return table;
}

// =================================================================================================

namespace {

constexpr const char* kTableHeader = "M,N,K,family,Mwg,Nwg,Kwg,Mwi,Nwi,Kwi,elapsed_s,gflops";

std::string metadata_line(const TableMetadata& meta) {
  std::ostringstream line;
  line << "# adagemm-table version=" << (meta.version.empty() ? kToolkitVersion : meta.version)
       << " seed=" << meta.seed << " warmup=" << meta.timing.warmup
       << " repetitions=" << meta.timing.repetitions
       << " tile_memory_cap=" << meta.caps.tile_memory_cap
       << " register_tile_cap_direct=" << meta.caps.register_tile_cap_direct
       << " register_tile_cap_indirect=" << meta.caps.register_tile_cap_indirect
       << " element_size=" << meta.caps.element_size << " sampled=" << (meta.sampled ? 1 : 0);
  if (!meta.config_hash.empty()) { line << " config_hash=" << meta.config_hash; }
  return line.str();
}

TableMetadata parse_metadata(std::string_view line) {
  TableMetadata meta;
  std::map<std::string, std::string, std::less<>> fields;
  for (const auto token : text::split_whitespace(line.substr(1))) {
    const auto eq = token.find('=');
    if (eq == std::string_view::npos) { continue; }
    fields.emplace(std::string(token.substr(0, eq)), std::string(token.substr(eq + 1)));
  }
  auto get = [&](const char* key) -> const std::string* {
    const auto it = fields.find(key);
    return it == fields.end() ? nullptr : &it->second;
  };
  if (auto v = get("version")) { meta.version = *v; }
  if (auto v = get("seed")) { meta.seed = text::parse_u64(*v); }
  if (auto v = get("warmup")) { meta.timing.warmup = static_cast<int>(text::parse_int(*v)); }
  if (auto v = get("repetitions")) { meta.timing.repetitions = static_cast<int>(text::parse_int(*v)); }
  if (auto v = get("tile_memory_cap")) { meta.caps.tile_memory_cap = text::parse_int(*v); }
  if (auto v = get("register_tile_cap_direct")) {
    meta.caps.register_tile_cap_direct = static_cast<int>(text::parse_int(*v));
  }
  if (auto v = get("register_tile_cap_indirect")) {
    meta.caps.register_tile_cap_indirect = static_cast<int>(text::parse_int(*v));
  }
  if (auto v = get("element_size")) { meta.caps.element_size = static_cast<int>(text::parse_int(*v)); }
  if (auto v = get("sampled")) { meta.sampled = *v == "1"; }
  if (auto v = get("config_hash")) { meta.config_hash = *v; }
  return meta;
}

}  // namespace

void write_table_csv(std::ostream& out, const TuningTable& table) {
  out << metadata_line(table.metadata()) << '\n' << kTableHeader << '\n';
  const auto& s = table.shape();
  for (const auto& m : table.measurements()) {
    const auto& c = m.config;
    out << s.M << ',' << s.N << ',' << s.K << ',' << family_name(c.family) << ',' << c.Mwg << ','
        << c.Nwg << ',' << c.Kwg << ',' << c.Mwi << ',' << c.Nwi << ',' << c.Kwi << ','
        << text::format_double(m.elapsed) << ',' << text::format_double(m.gflops) << '\n';
  }
}

void write_table_csv(const std::filesystem::path& path, const TuningTable& table) {
  // Write-then-rename so an interrupted tuning run never leaves a truncated table behind.
  auto partial = path;
  partial += ".partial";
  {
    std::ofstream out(partial);
    if (!out) { throw IoError("cannot write " + partial.string()); }
    write_table_csv(out, table);
    if (!out) { throw IoError("failed writing " + partial.string()); }
  }
  std::filesystem::rename(partial, path);
}

TuningTable read_table_csv(std::istream& in, const std::string& source_name) {
  TableMetadata meta;
  std::vector<Measurement> measurements;
  std::optional<ProblemShape> shape;
  bool header_seen = false;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const auto trimmed = text::trim(line);
    if (trimmed.empty()) { continue; }
    if (trimmed.front() == '#') {
      if (trimmed.find("adagemm-table") != std::string_view::npos) { meta = parse_metadata(trimmed); }
      continue;
    }
    if (!header_seen) {
      if (trimmed != kTableHeader) {
        throw ParseError(source_name + ":" + std::to_string(line_number) + ": unexpected header");
      }
      header_seen = true;
      continue;
    }
    const auto fields = text::split(trimmed, ',');
    if (fields.size() != 12) {
      throw ParseError(source_name + ":" + std::to_string(line_number) + ": expected 12 fields, got " +
                       std::to_string(fields.size()));
    }
    try {
      const auto row_shape =
          make_shape(text::parse_int(fields[0]), text::parse_int(fields[1]), text::parse_int(fields[2]));
      if (!shape) {
        shape = row_shape;
      } else if (!shape->same_dims(row_shape)) {
        throw ParseError("rows mix several problem shapes");
      }
      Measurement m;
      m.config.family = parse_family(fields[3]);
      m.config.Mwg = static_cast<int>(text::parse_int(fields[4]));
      m.config.Nwg = static_cast<int>(text::parse_int(fields[5]));
      m.config.Kwg = static_cast<int>(text::parse_int(fields[6]));
      m.config.Mwi = static_cast<int>(text::parse_int(fields[7]));
      m.config.Nwi = static_cast<int>(text::parse_int(fields[8]));
      m.config.Kwi = static_cast<int>(text::parse_int(fields[9]));
      m.elapsed = text::parse_double(fields[10]);
      m.gflops = text::parse_double(fields[11]);
      if (!(m.elapsed > 0.0) || !(m.gflops > 0.0)) {
        throw ValidationError("elapsed and gflops must be positive");
      }
      measurements.push_back(m);
    } catch (const Error& e) {
      throw ParseError(source_name + ":" + std::to_string(line_number) + ": " + e.what());
    }
  }
  if (!header_seen) { throw ParseError(source_name + ": missing table header"); }
  if (!shape) { throw ParseError(source_name + ": table has no measurements"); }
  return TuningTable(*shape, std::move(measurements), std::move(meta));
}

TuningTable read_table_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) { throw ParseError("cannot open " + path.string()); }
  return read_table_csv(in, path.string());
}

std::string table_file_name(const ProblemShape& shape) {
  return "M" + std::to_string(shape.M) + "_N" + std::to_string(shape.N) + "_K" +
         std::to_string(shape.K) + ".csv";
}

}  // namespace adagemm
