#include <random>
#include <string>

#include "doctest.h"
#include "support.h"

#include "adagemm/codegen.h"
#include "adagemm/error.h"

using namespace adagemm;
using adagemm::testing::fixture_tree;
using adagemm::testing::grow_random_tree;

namespace {

int count_of(const std::string& text, const std::string& needle) {
  int n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

template <typename T>
Matrix<T> random_matrix(std::int64_t rows, std::int64_t cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Matrix<T> m(rows, cols);
  for (auto& v : m.values()) v = static_cast<T>(dist(rng));
  return m;
}

}  // namespace

TEST_CASE("syntax names") {
  CHECK(syntax_name(DispatcherSyntax::CLike) == "c");
  CHECK(syntax_name(DispatcherSyntax::Cpp) == "cpp");
  CHECK(parse_syntax("c++") == DispatcherSyntax::Cpp);
  CHECK(parse_syntax("neutral") == DispatcherSyntax::CLike);
  CHECK_THROWS_AS(parse_syntax("rust"), ArgumentError);
}

TEST_CASE("single leaf emits a bare return") {
  ClassTable classes;
  TreeNode n;
  n.class_id = classes.intern({KernelFamily::Direct, 16, 16, 8, 2, 2, 1});
  const auto tree = DecisionTree::from_nodes({n}, 0);
  for (auto syntax : {DispatcherSyntax::CLike, DispatcherSyntax::Cpp}) {
    const auto src = emit_dispatcher(tree, classes, syntax);
    CHECK(count_of(src.text, "if (") == 0);
    const auto program = DispatchProgram::parse(src.text);
    CHECK(program.branch_count() == 0);
    CHECK(program.return_count() == 1);
    CHECK(program.select({5, 6, 7}) == classes.config(n.class_id));
  }
}

TEST_CASE("fixture tree emission") {
  const auto t = fixture_tree();
  const auto c = emit_dispatcher(t.tree, t.classes, DispatcherSyntax::CLike);
  const auto cpp = emit_dispatcher(t.tree, t.classes, DispatcherSyntax::Cpp);
  CHECK(count_of(c.text, "if (") == t.tree.leaf_count() - 1);
  CHECK(count_of(c.text, "return ") == t.tree.leaf_count());
  CHECK(c.text.find("m <= 192.5") != std::string::npos);
  CHECK(c.text.find("k <= 640.5") != std::string::npos);
  CHECK(c.text.find("config(indirect, 64, 64, 16, 8, 4, 2)") != std::string::npos);
  CHECK(cpp.text.find("namespace adagemm::generated") != std::string::npos);
  CHECK(cpp.text.find("select_kernel_config_fingerprint") != std::string::npos);
  CHECK(c.tree_fingerprint == tree_fingerprint(t.tree));
  CHECK(c.text.find("// tree-fingerprint: " + c.tree_fingerprint) != std::string::npos);

  // Byte-identical on repeat.
  CHECK(emit_dispatcher(t.tree, t.classes, DispatcherSyntax::Cpp).text == cpp.text);

  const auto probes = probe_set(t.tree, t.training);
  CHECK(roundtrip_check(t.tree, t.classes, c, probes));
  CHECK(roundtrip_check(t.tree, t.classes, cpp, probes));
}

TEST_CASE("probe set covers both sides of every threshold") {
  const auto t = fixture_tree();
  const std::vector<Features> one{{100, 100, 100}};
  const auto probes = probe_set(t.tree, one);
  auto has = [&](Features f) { return std::find(probes.begin(), probes.end(), f) != probes.end(); };
  CHECK(has({100, 100, 100}));
  CHECK(has({192, 100, 100}));
  CHECK(has({193, 100, 100}));
  CHECK(has({100, 100, 640}));
  CHECK(has({100, 100, 641}));
  CHECK(has({100, 640, 100}));
  CHECK(probes.size() == 13);
}

TEST_CASE("fingerprint depends on structure") {
  const auto t = fixture_tree();
  auto nodes = t.tree.nodes();
  nodes[2].threshold = 641.5;
  const auto mutated = DecisionTree::from_nodes(nodes, t.tree.root());
  CHECK(tree_fingerprint(mutated) != tree_fingerprint(t.tree));
  CHECK(tree_fingerprint(fixture_tree().tree) == tree_fingerprint(t.tree));
}

TEST_CASE("random trees round trip and threshold mutants are caught by probes") {
  std::mt19937_64 rng(2024);
  for (int depth = 1; depth <= 12; ++depth) {
    const auto g = grow_random_tree(rng, depth);
    CHECK(g.tree.height() == depth);
    const auto probes = probe_set(g.tree, g.training);
    for (auto syntax : {DispatcherSyntax::CLike, DispatcherSyntax::Cpp}) {
      const auto src = emit_dispatcher(g.tree, g.classes, syntax);
      const auto rt = roundtrip_check(g.tree, g.classes, src, probes);
      CHECK_MESSAGE(rt, rt.message);
    }
    auto nodes = g.tree.nodes();
    for (auto& n : nodes) {
      if (!n.is_leaf()) {
        n.threshold += (rng() & 1) ? 1.0 : -1.0;
        break;
      }
    }
    const auto mutant = DecisionTree::from_nodes(nodes, g.tree.root());
    const auto bad = emit_dispatcher(mutant, g.classes, DispatcherSyntax::CLike);
    const auto rt = roundtrip_check(g.tree, g.classes, bad, probes);
    CHECK_FALSE(rt);
    CHECK(rt.counterexample.has_value());
  }
}

TEST_CASE("emission errors") {
  ClassTable classes;
  TreeNode n;
  n.class_id = 3;
  CHECK_THROWS_AS(emit_dispatcher(DecisionTree::from_nodes({n}, 0), classes, DispatcherSyntax::CLike),
                  GenerationError);
}

TEST_CASE("parser rejects malformed text") {
  CHECK_THROWS_AS(DispatchProgram::parse("garbage"), ParseError);
  CHECK_THROWS_AS(DispatchProgram::parse("x f(double m, double n, double k) { if (q <= 3) {"), ParseError);
  CHECK_THROWS_AS(DispatchProgram::parse("x f(double m) { return config(direct, 1, 2); }"), ParseError);
  const auto t = fixture_tree();
  const auto c = emit_dispatcher(t.tree, t.classes, DispatcherSyntax::CLike);
  const auto truncated = c.text.substr(0, c.text.size() / 2 + 40);
  CHECK_THROWS_AS(DispatchProgram::parse(truncated), ParseError);
  const auto rt = roundtrip_check(t.tree, t.classes, DispatcherSource{truncated, DispatcherSyntax::CLike, ""},
                                  t.training);
  CHECK_FALSE(rt);
  CHECK_FALSE(rt.message.empty());
}

TEST_CASE("dispatch_and_run matches direct execution of the selected kernel") {
  const auto t = fixture_tree();
  const Dispatcher from_tree(t.tree, t.classes);
  const Dispatcher from_text(emit_dispatcher(t.tree, t.classes, DispatcherSyntax::Cpp));
  std::mt19937_64 rng(9);
  for (const auto& f : t.training) {
    const auto shape = make_shape(std::min<std::int64_t>(f[0], 300), std::min<std::int64_t>(f[1], 90),
                                  f[2] > 640 ? 700 : 33);
    const auto A = random_matrix<float>(shape.M, shape.K, rng);
    const auto B = random_matrix<float>(shape.K, shape.N, rng);
    const auto C = random_matrix<float>(shape.M, shape.N, rng);
    const auto expected_config = t.classes.config(t.tree.predict(features_of(shape)));
    const auto direct = gemm_execute(shape, expected_config, A, B, C);
    for (const auto* d : {&from_tree, &from_text}) {
      const auto r = dispatch_and_run(*d, shape, A, B, C);
      CHECK(r.selected == expected_config);
      CHECK_FALSE(r.fell_back);
      CHECK(r.C == direct.C);
    }
  }
}

TEST_CASE("dispatch_and_run falls back when the selection is illegal on the device") {
  const auto t = fixture_tree();
  const Dispatcher d(t.tree, t.classes);
  DispatchOptions options;
  options.caps.register_tile_cap_indirect = 16;  // 8x4 register tile no longer fits
  const auto shape = make_shape(1024, 16, 1024);
  REQUIRE(t.classes.config(t.tree.predict(features_of(shape))).Mwi == 8);
  std::mt19937_64 rng(3);
  const auto A = random_matrix<double>(shape.M, shape.K, rng);
  const auto B = random_matrix<double>(shape.K, shape.N, rng);
  const auto C = random_matrix<double>(shape.M, shape.N, rng);
  const auto r = dispatch_and_run(d, shape, A, B, C, options);
  CHECK(r.fell_back);
  CHECK(r.selected == options.fallback);
  ExecuteOptions exec;
  exec.caps = options.caps;
  CHECK(r.C == gemm_execute(shape, options.fallback, A, B, C, exec).C);
}
