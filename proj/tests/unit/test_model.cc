#include <random>

#include "doctest.h"
#include "support.h"

#include "adagemm/error.h"
#include "adagemm/model.h"

using namespace adagemm;

namespace {

std::vector<Sample> four_sample_fixture() {
  return {{{64, 1, 1}, 0}, {{128, 1, 1}, 0}, {{256, 1, 1}, 1}, {{512, 1, 1}, 1}};
}

// Counts the training samples reaching each leaf.
std::vector<std::int64_t> leaf_support(const DecisionTree& tree, const std::vector<Sample>& samples) {
  std::vector<std::int64_t> hits(tree.nodes().size(), 0);
  for (const auto& s : samples) {
    int index = tree.root();
    while (!tree.node(index).is_leaf()) {
      const auto& n = tree.node(index);
      index = static_cast<double>(s.features[static_cast<std::size_t>(n.feature)]) <= n.threshold ? n.left : n.right;
    }
    ++hits[static_cast<std::size_t>(index)];
  }
  return hits;
}

}  // namespace

TEST_CASE("gini") {
  const std::vector<int> pure{0, 0, 0, 0}, half{0, 0, 1, 1}, skew{0, 0, 0, 1};
  CHECK(gini(pure) == 0.0);
  CHECK(gini(half) == doctest::Approx(0.5));
  CHECK(gini(skew) == doctest::Approx(0.375));
  CHECK_THROWS_AS(gini(std::vector<int>{}), ArgumentError);
}

TEST_CASE("best split examples") {
  const auto fixture = four_sample_fixture();
  const auto s = best_split(fixture, 1);
  REQUIRE(s);
  CHECK(s->feature == 0);
  CHECK(s->threshold == 192.0);
  CHECK(s->weighted_impurity == 0.0);

  const std::vector<Sample> same{{{1, 1, 1}, 3}, {{2, 2, 2}, 3}};
  CHECK_FALSE(best_split(same, 1));
  const std::vector<Sample> two{{{1, 1, 1}, 0}, {{2, 2, 2}, 1}};
  CHECK_FALSE(best_split(two, 2));
  // Identical features with different labels leave nothing to split on.
  const std::vector<Sample> clash{{{5, 5, 5}, 0}, {{5, 5, 5}, 1}};
  CHECK_FALSE(best_split(clash, 1));
}

TEST_CASE("tie rules: lowest feature, then lowest threshold") {
  // Every feature separates the classes perfectly; M wins.
  const std::vector<Sample> all_features{{{1, 1, 1}, 0}, {{2, 2, 2}, 1}};
  CHECK(best_split(all_features, 1)->feature == 0);
  // Along M, thresholds 1.5 and 2.5 score equally; 1.5 wins.
  const std::vector<Sample> thresholds{{{1, 9, 9}, 0}, {{2, 9, 9}, 1}, {{3, 9, 9}, 0}};
  const auto t = best_split(thresholds, 1);
  REQUIRE(t);
  CHECK(t->feature == 0);
  CHECK(t->threshold == 1.5);
}

TEST_CASE("training examples") {
  const auto fixture = four_sample_fixture();
  const auto tree = train(fixture, TrainConfig{1, LeafSize::count(1)});
  CHECK(tree.height() == 1);
  CHECK(tree.leaf_count() == 2);
  CHECK(tree.node(tree.root()).threshold == 192.0);
  CHECK(tree.predict(64, 1, 1) == 0);
  for (const auto& s : fixture) { CHECK(tree.predict(s.features) == s.label); }

  const std::vector<Sample> one_class{{{1, 2, 3}, 7}, {{4, 5, 6}, 7}, {{9, 9, 9}, 7}};
  const auto leaf = train(one_class, TrainConfig{std::nullopt, LeafSize::count(1)});
  CHECK(leaf.height() == 0);
  CHECK(leaf.predict(1000, 1000, 1000) == 7);
  CHECK_THROWS_AS(train(std::vector<Sample>{}, TrainConfig{}), ArgumentError);
}

TEST_CASE("majority leaves break ties toward the smaller class id") {
  const std::vector<Sample> tied{{{1, 1, 1}, 4}, {{1, 1, 1}, 2}, {{1, 1, 1}, 4}, {{1, 1, 1}, 2}};
  CHECK(train(tied, TrainConfig{}).predict(1, 1, 1) == 2);
  const std::vector<Sample> majority{{{1, 1, 1}, 4}, {{2, 1, 1}, 2}, {{3, 1, 1}, 4}};
  CHECK(train(majority, TrainConfig{std::nullopt, LeafSize::count(2)}).predict(1, 1, 1) == 4);
}

TEST_CASE("leaf sizes") {
  CHECK(LeafSize::fraction(0.1).effective(216) == 22);
  CHECK(LeafSize::fraction(0.5).effective(1) == 1);
  CHECK(LeafSize::fraction(0.2).effective(10) == 2);
  CHECK(LeafSize::count(4).effective(3) == 4);
  CHECK(LeafSize::parse("4") == LeafSize::count(4));
  CHECK(LeafSize::parse("0.3") == LeafSize::fraction(0.3));
  CHECK_THROWS(LeafSize::fraction(0.6));
  CHECK_THROWS(LeafSize::fraction(0.0));
  CHECK_THROWS(LeafSize::count(0));
  CHECK(TrainConfig{8, LeafSize::count(1)}.name() == "h8-L1");
  CHECK(TrainConfig{std::nullopt, LeafSize::fraction(0.5)}.name() == "hMax-L0.5");
}

TEST_CASE("root split matches the exact oracle on random small datasets") {
  std::mt19937_64 rng(2024);
  const std::int64_t values[] = {1, 2, 4};
  for (int trial = 0; trial < 3000; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 8);
    std::vector<Sample> samples;
    for (int i = 0; i < n; ++i) {
      samples.push_back({{values[rng() % 3], values[rng() % 3], values[rng() % 3]}, static_cast<int>(rng() % 3)});
    }
    const std::int64_t min_leaf = 1 + static_cast<std::int64_t>(rng() % 3);
    const auto expected = adagemm::testing::oracle_root_split(samples, min_leaf);
    const auto actual = best_split(samples, min_leaf);
    REQUIRE(expected.has_value() == actual.has_value());
    if (expected) {
      CHECK(actual->feature == expected->feature);
      CHECK(actual->threshold == expected->threshold);
    }
  }
}

TEST_CASE("grid invariants on a synthetic po2 dataset") {
  const auto data = adagemm::testing::synthetic_data(gen_po2(64, 2048));
  const auto samples = samples_of(data.dataset);
  const auto models = grid_train(samples, default_height_set(), default_leaf_set());
  REQUIRE(models.size() == 40);
  CHECK(models.front().name == "h1-L1");
  CHECK(models.back().name == "hMax-L0.5");
  for (const auto& m : models) {
    if (m.config.max_height) { CHECK(m.tree.height() <= *m.config.max_height); }
    const auto L = m.config.min_samples_leaf.effective(samples.size());
    const auto support = leaf_support(m.tree, samples);
    for (std::size_t i = 0; i < support.size(); ++i) {
      if (!m.tree.nodes()[i].is_leaf()) { continue; }
      if (m.tree.leaf_count() > 1) { CHECK(support[i] >= L); }
      CHECK(support[i] == m.tree.nodes()[i].samples);
    }
    const auto st = stats(m.tree, data.dataset.classes);
    CHECK(st.total_leaves == st.leaves_per_family.total());
    CHECK(st.unique_configs_per_family.direct <= st.leaves_per_family.direct);
    CHECK(st.unique_configs_per_family.indirect <= st.leaves_per_family.indirect);
    CHECK(st.total_leaves <= static_cast<int>(samples.size()));
    for (const int cls : m.tree.leaf_classes()) {
      CHECK(std::any_of(samples.begin(), samples.end(), [&](const Sample& s) { return s.label == cls; }));
    }
  }
  const auto& full = models[4 * 8];  // hMax-L1
  REQUIRE(full.name == "hMax-L1");
  for (const auto& s : samples) { CHECK(full.tree.predict(s.features) == s.label); }
  CHECK(train(samples, full.config) == full.tree);
}

TEST_CASE("stats and JSON round trip") {
  const auto t = adagemm::testing::fixture_tree();
  const auto st = stats(t.tree, t.classes);
  CHECK(st.height == 2);
  CHECK(st.total_leaves == 3);
  CHECK(st.leaves_per_family.direct == 1);
  CHECK(st.leaves_per_family.indirect == 2);
  ClassTable too_small;
  too_small.intern(t.classes.config(0));
  CHECK_THROWS_AS(stats(t.tree, too_small), ConsistencyError);

  const TrainConfig config{4, LeafSize::fraction(0.2)};
  const auto text = tree_to_json(t.tree, "fixture", config, "dataset.json", "0123");
  const auto back = tree_from_json(text);
  CHECK(back.tree == t.tree);
  CHECK(back.name == "fixture");
  CHECK(back.class_sidecar == "dataset.json");
  REQUIRE(back.config);
  CHECK(back.config->name() == "h4-L0.2");
  CHECK(tree_to_json(back.tree, "fixture", back.config, "dataset.json", "0123") == text);
  CHECK_THROWS_AS(tree_from_json("{\"format\": \"other\"}"), ParseError);
}

TEST_CASE("malformed node lists are rejected") {
  std::vector<TreeNode> cyclic(3);
  cyclic[0] = {0, 1.5, 1, 0, -1, 0};
  cyclic[1] = {-1, 0.0, -1, -1, 0, 0};
  CHECK_THROWS_AS(DecisionTree::from_nodes(cyclic, 0), ConsistencyError);
  CHECK_THROWS_AS(DecisionTree::from_nodes({}, 0), ConsistencyError);
}
