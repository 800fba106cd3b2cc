// =================================================================================================
// CART decision-tree classifier over the features (M, N, K).
//
// Splits are axis-aligned, "feature <= threshold" goes left, and candidates are the midpoints
// between consecutive distinct feature values. The split minimising the size-weighted Gini impurity
// of the two children wins; ties resolve to the lowest feature index (M < N < K) and then to the
// lowest threshold. Split scores are compared in exact integer arithmetic so that equal-impurity
// candidates are recognised as ties on every platform.
//
// Growth is controlled by the maximum height H and the minimum samples per leaf L. A split is only
// feasible when both children keep at least L samples.
// =================================================================================================
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adagemm/dataset.h"

namespace adagemm {

enum class Feature : int { M = 0, N = 1, K = 2 };

std::string_view feature_name(int feature);
int parse_feature(std::string_view name);

using Features = std::array<std::int64_t, 3>;

inline Features features_of(const ProblemShape& shape) { return {shape.M, shape.N, shape.K}; }

struct Sample {
  Features features{};
  int label = 0;
};

std::vector<Sample> samples_of(const Dataset& dataset, std::span<const std::size_t> indices);
std::vector<Sample> samples_of(const Dataset& dataset);

// Minimum samples per leaf, either an absolute count or a fraction of the training-set size.
class LeafSize {
 public:
  static LeafSize count(std::int64_t n);
  static LeafSize fraction(double f);
  // "4" is a count, "0.1" a fraction.
  static LeafSize parse(std::string_view text);

  bool is_fraction() const { return fractional_; }
  double value() const { return value_; }
  // ceil(fraction * n) floored at 1 for fractions; the count itself otherwise.
  std::int64_t effective(std::size_t training_size) const;
  std::string label() const;

  bool operator==(const LeafSize&) const = default;

 private:
  bool fractional_ = false;
  double value_ = 1.0;
};

struct TrainConfig {
  std::optional<int> max_height;  // nullopt = unbounded ("Max")
  LeafSize min_samples_leaf = LeafSize::count(1);

  // "h8-L1", "hMax-L0.5".
  std::string name() const;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int class_id = -1;  // leaves only
  std::int64_t samples = 0;

  bool is_leaf() const { return feature < 0; }
};

class DecisionTree {
 public:
  DecisionTree() = default;

  // Validates that the nodes form a single binary tree rooted at `root`.
  static DecisionTree from_nodes(std::vector<TreeNode> nodes, int root = 0);

  int predict(const Features& features) const;
  int predict(std::int64_t m, std::int64_t n, std::int64_t k) const { return predict(Features{m, n, k}); }

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  int root() const { return root_; }
  const TreeNode& node(int index) const { return nodes_[static_cast<std::size_t>(index)]; }

  // Edges on the longest root-to-leaf path.
  int height() const;
  int leaf_count() const;
  std::vector<int> leaf_classes() const;

  bool operator==(const DecisionTree&) const;

 private:
  std::vector<TreeNode> nodes_;
  int root_ = 0;
};

// 1 - sum_k p_k^2. Throws ArgumentError for an empty multiset.
double gini(std::span<const int> labels);

struct SplitChoice {
  int feature = 0;
  double threshold = 0.0;
  double weighted_impurity = 0.0;
};

// Lowest weighted-Gini split keeping both children >= min_leaf. nullopt for a pure node or when no
// candidate is feasible.
std::optional<SplitChoice> best_split(std::span<const Sample> samples, std::int64_t min_leaf);

DecisionTree train(std::span<const Sample> samples, const TrainConfig& config);

struct TreeStats {
  int height = 0;
  int total_leaves = 0;
  FamilyCounts leaves_per_family;
  FamilyCounts unique_configs_per_family;
};

// Throws ConsistencyError when a leaf's class is missing from the class table.
TreeStats stats(const DecisionTree& tree, const ClassTable& classes);

struct NamedTree {
  std::string name;
  TrainConfig config;
  DecisionTree tree;
};

std::vector<std::optional<int>> default_height_set();
std::vector<LeafSize> default_leaf_set();

// One tree per (H, L) pair, H-major in the order given.
std::vector<NamedTree> grid_train(std::span<const Sample> samples,
                                  const std::vector<std::optional<int>>& heights,
                                  const std::vector<LeafSize>& leaves);

// JSON persistence. The sidecar reference names the class table the leaf ids refer to.
std::string tree_to_json(const DecisionTree& tree, const std::string& name = "",
                         const std::optional<TrainConfig>& config = std::nullopt,
                         const std::string& class_sidecar = "",
                         const std::string& config_hash = "");
struct LoadedTree {
  DecisionTree tree;
  std::string name;
  std::optional<TrainConfig> config;
  std::string class_sidecar;
};
LoadedTree tree_from_json(const std::string& json_text);

}  // namespace adagemm
