#include <set>
#include <sstream>

#include "doctest.h"
#include "support.h"

#include "adagemm/error.h"
#include "adagemm/tuner.h"

using namespace adagemm;

namespace {

const TimingPolicy kQuick{0, 1};

std::set<std::string> ids(const std::vector<KernelConfig>& configs) {
  std::set<std::string> out;
  for (const auto& c : configs) { out.insert(canonical_id(c)); }
  return out;
}

std::vector<KernelConfig> configs_of(const TuningTable& t) {
  std::vector<KernelConfig> out;
  for (const auto& m : t.measurements()) { out.push_back(m.config); }
  return out;
}

}  // namespace

TEST_CASE("flop counts") {
  CHECK(flops_of(make_shape(1024, 1024, 1024)) == 2147483648LL);
  CHECK(flops_of(make_shape(1, 1, 1)) == 2);
  CHECK(flops_of(make_shape(2, 3, 4)) == 48);
  CHECK(gflops_of(make_shape(1000, 1000, 1000), 2.0) == doctest::Approx(1.0));
}

TEST_CASE("timing policy validation") {
  CHECK_NOTHROW(TimingPolicy{}.validate());
  CHECK_THROWS_AS((TimingPolicy{-1, 5}.validate()), ArgumentError);
  CHECK_THROWS_AS((TimingPolicy{1, 0}.validate()), ArgumentError);
}

TEST_CASE("exhaustive tuning covers both families, Direct first") {
  const auto table = tune_exhaustive(make_shape(8, 8, 8), DeviceCaps{}, kQuick);
  REQUIRE(table.measurements().size() == 576);
  auto expected = enumerate_search_space(KernelFamily::Direct, DeviceCaps{});
  const auto indirect = enumerate_search_space(KernelFamily::Indirect, DeviceCaps{});
  expected.insert(expected.end(), indirect.begin(), indirect.end());
  CHECK(configs_of(table) == expected);

  double best = 0.0;
  for (const auto& m : table.measurements()) {
    CHECK(m.elapsed > 0.0);
    CHECK(m.gflops > 0.0);
    CHECK(m.gflops == doctest::Approx(gflops_of(table.shape(), m.elapsed)));
    best = std::max(best, m.gflops);
  }
  CHECK(table.best().gflops == best);
  CHECK(table.measurements()[*table.best_direct()].config.family == KernelFamily::Direct);
  CHECK(table.measurements()[*table.best_indirect()].config.family == KernelFamily::Indirect);
}

TEST_CASE("family tuning") {
  const auto table = tune_family(make_shape(4, 4, 4), KernelFamily::Direct, DeviceCaps{}, kQuick);
  CHECK(table.measurements().size() == 144);
  CHECK_FALSE(table.best_indirect().has_value());
}

TEST_CASE("argmax ties resolve to the earliest row") {
  const KernelConfig a{KernelFamily::Direct, 8, 8, 8, 1, 1, 1};
  const KernelConfig b{KernelFamily::Indirect, 16, 16, 8, 2, 2, 1};
  const KernelConfig c{KernelFamily::Direct, 16, 16, 8, 1, 1, 1};
  const TuningTable t(make_shape(2, 2, 2), {{a, 1.0, 3.0}, {b, 1.0, 5.0}, {c, 1.0, 5.0}});
  CHECK(*t.best_overall() == 1);
  CHECK(*t.best_direct() == 2);
  CHECK(*t.best_indirect() == 1);
  CHECK(t.find(c) == &t.measurements()[2]);
  CHECK(t.find(KernelConfig{KernelFamily::Direct, 32, 32, 8, 1, 1, 1}) == nullptr);
  CHECK_THROWS_AS(TuningTable().best(), LookupError);
}

TEST_CASE("random sampling: count, legality, proportions, determinism") {
  const DeviceCaps caps;
  std::vector<std::string> warnings;
  const auto ten = sample_configs(caps, 10, 42, &warnings);
  CHECK(ten.size() == 10);
  CHECK(ids(ten).size() == 10);
  CHECK(warnings.empty());
  for (const auto& c : ten) { CHECK(is_legal(c, caps)); }
  const auto direct = std::count_if(ten.begin(), ten.end(), [](const KernelConfig& c) { return c.family == KernelFamily::Direct; });
  CHECK(direct == 10 * 144 / 576);
  CHECK(sample_configs(caps, 10, 42, nullptr) == ten);
  CHECK(sample_configs(caps, 10, 43, nullptr) != ten);
  CHECK_THROWS_AS(sample_configs(caps, 0, 1, nullptr), ArgumentError);
}

TEST_CASE("random sampling clamps to the full space") {
  const DeviceCaps caps;
  auto full = enumerate_search_space(KernelFamily::Direct, caps);
  const auto indirect = enumerate_search_space(KernelFamily::Indirect, caps);
  full.insert(full.end(), indirect.begin(), indirect.end());

  std::vector<std::string> warnings;
  CHECK(ids(sample_configs(caps, 576, 1, &warnings)) == ids(full));
  CHECK(warnings.empty());
  CHECK(ids(sample_configs(caps, 1000, 1, &warnings)) == ids(full));
  CHECK(warnings.size() == 1);

  const auto table = tune_random(make_shape(4, 4, 4), caps, 5, 9, kQuick);
  CHECK(table.measurements().size() == 5);
  CHECK(table.metadata().sampled);
  CHECK(table.metadata().seed == 9);
}

TEST_CASE("table CSV round trip is exact") {
  const auto original = adagemm::testing::synthetic_table(make_shape(96, 64, 200));
  std::stringstream out;
  write_table_csv(out, original);
  const auto text = out.str();
  CHECK(text.rfind("# adagemm-table", 0) == 0);
  CHECK(text.find("\nM,N,K,family,Mwg,Nwg,Kwg,Mwi,Nwi,Kwi,elapsed_s,gflops\n") != std::string::npos);
  std::stringstream in(text);
  const auto back = read_table_csv(in, "t");
  REQUIRE(back.measurements().size() == original.measurements().size());
  for (std::size_t i = 0; i < back.measurements().size(); ++i) {
    CHECK(back.measurements()[i].config == original.measurements()[i].config);
    CHECK(back.measurements()[i].gflops == original.measurements()[i].gflops);
    CHECK(back.measurements()[i].elapsed == original.measurements()[i].elapsed);
  }
  CHECK(back.best_overall() == original.best_overall());
  CHECK(back.metadata().caps == original.metadata().caps);
}

TEST_CASE("table CSV errors carry the line") {
  std::stringstream bad("M,N,K,family,Mwg,Nwg,Kwg,Mwi,Nwi,Kwi,elapsed_s,gflops\n4,4,4,direct,8,8,8,1,1,1,x,2\n");
  try {
    read_table_csv(bad, "bad.csv");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("bad.csv:2") != std::string::npos);
  }
}

TEST_CASE("table file names") { CHECK(table_file_name(make_shape(64, 128, 256)) == "M64_N128_K256.csv"); }
