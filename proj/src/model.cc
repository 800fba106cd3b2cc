#include "adagemm/model.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>

#include "adagemm/error.h"
#include "adagemm/text.h"
#include "json.hpp"

namespace adagemm {

using nlohmann::json;

std::string_view feature_name(int feature) {
  switch (feature) {
    case 0: return "M";
    case 1: return "N";
    case 2: return "K";
    default: throw ConsistencyError("feature index out of range: " + std::to_string(feature));
  }
}

int parse_feature(std::string_view name) {
  if (name == "M") { return 0; }
  if (name == "N") { return 1; }
  if (name == "K") { return 2; }
  throw ParseError("unknown feature '" + std::string(name) + "'");
}

std::vector<Sample> samples_of(const Dataset& dataset, std::span<const std::size_t> indices) {
  std::vector<Sample> samples;
  samples.reserve(indices.size());
  for (const auto i : indices) {
    const auto& r = dataset.records.at(i);
    samples.push_back({features_of(r.input), r.class_id});
  }
  return samples;
}

std::vector<Sample> samples_of(const Dataset& dataset) {
  std::vector<Sample> samples;
  samples.reserve(dataset.records.size());
  for (const auto& r : dataset.records) { samples.push_back({features_of(r.input), r.class_id}); }
  return samples;
}

// =================================================================================================

LeafSize LeafSize::count(std::int64_t n) {
  if (n < 1) { throw ArgumentError("minimum samples per leaf must be >= 1"); }
  LeafSize size;
  size.value_ = static_cast<double>(n);
  return size;
}

LeafSize LeafSize::fraction(double f) {
  if (!(f > 0.0 && f <= 0.5)) {
    throw ArgumentError("fractional minimum samples per leaf must lie in (0, 0.5], got " +
                        text::format_double(f));
  }
  LeafSize size;
  size.fractional_ = true;
  size.value_ = f;
  return size;
}

LeafSize LeafSize::parse(std::string_view text) {
  text = text::trim(text);
  if (text.find_first_of(".eE") != std::string_view::npos) { return fraction(text::parse_double(text)); }
  return count(text::parse_int(text));
}

std::int64_t LeafSize::effective(std::size_t training_size) const {
  if (!fractional_) { return static_cast<std::int64_t>(value_); }
  // The slack absorbs products like 0.3 * 10 = 3.0000000000000004.
  const double raw = std::ceil(value_ * static_cast<double>(training_size) - 1e-9);
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(raw));
}

std::string LeafSize::label() const {
  if (fractional_) { return text::format_double(value_); }
  return std::to_string(static_cast<std::int64_t>(value_));
}

std::string TrainConfig::name() const {
  return "h" + (max_height ? std::to_string(*max_height) : std::string("Max")) + "-L" +
         min_samples_leaf.label();
}

// =================================================================================================

DecisionTree DecisionTree::from_nodes(std::vector<TreeNode> nodes, int root) {
  const int n = static_cast<int>(nodes.size());
  if (n == 0 || root < 0 || root >= n) { throw ConsistencyError("tree has no valid root"); }
  std::vector<int> visits(static_cast<std::size_t>(n), 0);
  std::vector<int> stack{root};
  while (!stack.empty()) {
    const int index = stack.back();
    stack.pop_back();
    if (++visits[static_cast<std::size_t>(index)] > 1) {
      throw ConsistencyError("node " + std::to_string(index) + " is reachable twice");
    }
    const auto& node = nodes[static_cast<std::size_t>(index)];
    if (node.is_leaf()) {
      if (node.class_id < 0) { throw ConsistencyError("leaf " + std::to_string(index) + " has no class"); }
      continue;
    }
    if (node.feature > 2) { throw ConsistencyError("node " + std::to_string(index) + " has a bad feature"); }
    if (!std::isfinite(node.threshold)) {
      throw ConsistencyError("node " + std::to_string(index) + " has a non-finite threshold");
    }
    for (const int child : {node.left, node.right}) {
      if (child < 0 || child >= n) {
        throw ConsistencyError("node " + std::to_string(index) + " has an invalid child");
      }
      stack.push_back(child);
    }
  }
  if (std::count(visits.begin(), visits.end(), 0) != 0) {
    throw ConsistencyError("tree contains unreachable nodes");
  }
  DecisionTree tree;
  tree.nodes_ = std::move(nodes);
  tree.root_ = root;
  return tree;
}

int DecisionTree::predict(const Features& features) const {
  const TreeNode* node = &nodes_[static_cast<std::size_t>(root_)];
  while (!node->is_leaf()) {
    const double value = static_cast<double>(features[static_cast<std::size_t>(node->feature)]);
    node = &nodes_[static_cast<std::size_t>(value <= node->threshold ? node->left : node->right)];
  }
  return node->class_id;
}

int DecisionTree::height() const {
  int height = 0;
  std::vector<std::pair<int, int>> stack{{root_, 0}};
  while (!stack.empty()) {
    const auto [index, depth] = stack.back();
    stack.pop_back();
    const auto& node = nodes_[static_cast<std::size_t>(index)];
    if (node.is_leaf()) {
      height = std::max(height, depth);
    } else {
      stack.emplace_back(node.left, depth + 1);
      stack.emplace_back(node.right, depth + 1);
    }
  }
  return height;
}

int DecisionTree::leaf_count() const {
  return static_cast<int>(std::count_if(nodes_.begin(), nodes_.end(),
                                        [](const TreeNode& node) { return node.is_leaf(); }));
}

std::vector<int> DecisionTree::leaf_classes() const {
  std::vector<int> classes;
  for (const auto& node : nodes_) {
    if (node.is_leaf()) { classes.push_back(node.class_id); }
  }
  return classes;
}

bool DecisionTree::operator==(const DecisionTree& other) const {
  if (root_ != other.root_ || nodes_.size() != other.nodes_.size()) { return false; }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& a = nodes_[i];
    const auto& b = other.nodes_[i];
    if (a.feature != b.feature || a.threshold != b.threshold || a.left != b.left ||
        a.right != b.right || a.class_id != b.class_id || a.samples != b.samples) {
      return false;
    }
  }
  return true;
}

// =================================================================================================

double gini(std::span<const int> labels) {
  if (labels.empty()) { throw ArgumentError("gini impurity of an empty label set"); }
  std::map<int, std::int64_t> counts;
  for (const int label : labels) { ++counts[label]; }
  const double n = static_cast<double>(labels.size());
  double sum_sq = 0.0;
  for (const auto& [label, count] : counts) {
    const double p = static_cast<double>(count) / n;
    sum_sq += p * p;
  }
  return 1.0 - sum_sq;
}

namespace {

using Wide = __int128;

// Labels of a node remapped to 0..k-1 in increasing class-id order.
struct LabelSlots {
  std::vector<int> classes;  // slot -> class id
  std::vector<int> slot_of;  // per sample position
};

LabelSlots slot_labels(std::span<const Sample> samples, std::span<const std::size_t> indices) {
  LabelSlots slots;
  for (const auto i : indices) { slots.classes.push_back(samples[i].label); }
  std::sort(slots.classes.begin(), slots.classes.end());
  slots.classes.erase(std::unique(slots.classes.begin(), slots.classes.end()), slots.classes.end());
  slots.slot_of.resize(samples.size(), -1);
  for (const auto i : indices) {
    slots.slot_of[i] = static_cast<int>(
        std::lower_bound(slots.classes.begin(), slots.classes.end(), samples[i].label) -
        slots.classes.begin());
  }
  return slots;
}

// Minimising sum_children n_c * gini_c is maximising sum_children (sum_k count_k^2) / n_c. Scores
// are kept as fractions num/den and compared by cross-multiplication.
std::optional<SplitChoice> find_split(std::span<const Sample> samples,
                                      std::span<const std::size_t> indices, std::int64_t min_leaf) {
  const auto n = static_cast<std::int64_t>(indices.size());
  if (n < 2 || n < 2 * min_leaf) { return std::nullopt; }

  const auto slots = slot_labels(samples, indices);
  const std::size_t k = slots.classes.size();
  if (k < 2) { return std::nullopt; }

  std::vector<std::int64_t> parent(k, 0);
  for (const auto i : indices) { ++parent[static_cast<std::size_t>(slots.slot_of[i])]; }
  std::int64_t parent_sq = 0;
  for (const auto c : parent) { parent_sq += c * c; }

  // An impure parent always splits when a feasible candidate exists: the weighted child impurity
  // never exceeds the parent's, and refusing zero-gain splits would stall on XOR-like nodes.
  Wide best_num = 0;
  Wide best_den = 1;
  std::optional<SplitChoice> best;

  std::vector<std::size_t> order(indices.begin(), indices.end());
  std::vector<std::int64_t> left(k), right(k);
  for (int feature = 0; feature < 3; ++feature) {
    const auto f = static_cast<std::size_t>(feature);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return samples[a].features[f] < samples[b].features[f];
    });
    std::fill(left.begin(), left.end(), 0);
    right = parent;
    std::int64_t left_sq = 0;
    std::int64_t right_sq = parent_sq;
    for (std::int64_t p = 1; p < n; ++p) {
      const auto moved = order[static_cast<std::size_t>(p - 1)];
      const auto s = static_cast<std::size_t>(slots.slot_of[moved]);
      left_sq += 2 * left[s] + 1;
      ++left[s];
      right_sq -= 2 * right[s] - 1;
      --right[s];

      const auto lo = samples[moved].features[f];
      const auto hi = samples[order[static_cast<std::size_t>(p)]].features[f];
      if (lo == hi) { continue; }
      const std::int64_t n_left = p;
      const std::int64_t n_right = n - p;
      if (n_left < min_leaf || n_right < min_leaf) { continue; }

      const Wide num = static_cast<Wide>(left_sq) * n_right + static_cast<Wide>(right_sq) * n_left;
      const Wide den = static_cast<Wide>(n_left) * n_right;
      if (!best || num * best_den > best_num * den) {
        best_num = num;
        best_den = den;
        SplitChoice choice;
        choice.feature = feature;
        choice.threshold = (static_cast<double>(lo) + static_cast<double>(hi)) / 2.0;
        choice.weighted_impurity =
            1.0 - static_cast<double>(num) / (static_cast<double>(den) * static_cast<double>(n));
        best = choice;
      }
    }
  }
  return best;
}

int majority_class(std::span<const Sample> samples, std::span<const std::size_t> indices) {
  std::map<int, std::int64_t> counts;
  for (const auto i : indices) { ++counts[samples[i].label]; }
  int best_label = counts.begin()->first;
  std::int64_t best_count = 0;
  for (const auto& [label, count] : counts) {
    if (count > best_count) {  // ascending labels: ties keep the smallest id
      best_label = label;
      best_count = count;
    }
  }
  return best_label;
}

bool is_pure(std::span<const Sample> samples, std::span<const std::size_t> indices) {
  const int first = samples[indices.front()].label;
  return std::all_of(indices.begin(), indices.end(),
                     [&](std::size_t i) { return samples[i].label == first; });
}

class Grower {
 public:
  Grower(std::span<const Sample> samples, std::optional<int> max_height, std::int64_t min_leaf)
      : samples_(samples), max_height_(max_height), min_leaf_(min_leaf) {}

  int grow(std::vector<std::size_t> indices, int depth) {
    const int index = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    nodes_.back().samples = static_cast<std::int64_t>(indices.size());

    std::optional<SplitChoice> choice;
    const bool height_reached = max_height_ && depth >= *max_height_;
    if (!height_reached && !is_pure(samples_, indices)) {
      choice = find_split(samples_, indices, min_leaf_);
    }
    if (!choice) {
      nodes_[static_cast<std::size_t>(index)].class_id = majority_class(samples_, indices);
      return index;
    }

    const auto f = static_cast<std::size_t>(choice->feature);
    std::vector<std::size_t> left, right;
    for (const auto i : indices) {
      (static_cast<double>(samples_[i].features[f]) <= choice->threshold ? left : right).push_back(i);
    }
    indices.clear();
    indices.shrink_to_fit();
    nodes_[static_cast<std::size_t>(index)].feature = choice->feature;
    nodes_[static_cast<std::size_t>(index)].threshold = choice->threshold;
    const int left_child = grow(std::move(left), depth + 1);
    const int right_child = grow(std::move(right), depth + 1);
    nodes_[static_cast<std::size_t>(index)].left = left_child;
    nodes_[static_cast<std::size_t>(index)].right = right_child;
    return index;
  }

  std::vector<TreeNode> take() { return std::move(nodes_); }

 private:
  std::span<const Sample> samples_;
  std::optional<int> max_height_;
  std::int64_t min_leaf_;
  std::vector<TreeNode> nodes_;
};

}  // namespace

std::optional<SplitChoice> best_split(std::span<const Sample> samples, std::int64_t min_leaf) {
  std::vector<std::size_t> indices(samples.size());
  for (std::size_t i = 0; i < indices.size(); ++i) { indices[i] = i; }
  return find_split(samples, indices, std::max<std::int64_t>(min_leaf, 1));
}

DecisionTree train(std::span<const Sample> samples, const TrainConfig& config) {
  if (samples.empty()) { throw ArgumentError("cannot train a decision tree on zero samples"); }
  if (config.max_height && *config.max_height < 0) { throw ArgumentError("maximum height must be >= 0"); }
  const auto min_leaf = config.min_samples_leaf.effective(samples.size());
  std::vector<std::size_t> indices(samples.size());
  for (std::size_t i = 0; i < indices.size(); ++i) { indices[i] = i; }
  Grower grower(samples, config.max_height, min_leaf);
  grower.grow(std::move(indices), 0);
  return DecisionTree::from_nodes(grower.take(), 0);
}

TreeStats stats(const DecisionTree& tree, const ClassTable& classes) {
  TreeStats result;
  result.height = tree.height();
  std::set<int> distinct;
  for (const int class_id : tree.leaf_classes()) {
    const auto family = classes.config(class_id).family;
    ++result.total_leaves;
    ++result.leaves_per_family[family];
    if (distinct.insert(class_id).second) { ++result.unique_configs_per_family[family]; }
  }
  return result;
}

std::vector<std::optional<int>> default_height_set() { return {1, 2, 4, 8, std::nullopt}; }

std::vector<LeafSize> default_leaf_set() {
  return {LeafSize::count(1),      LeafSize::count(2),      LeafSize::count(4),
          LeafSize::fraction(0.1), LeafSize::fraction(0.2), LeafSize::fraction(0.3),
          LeafSize::fraction(0.4), LeafSize::fraction(0.5)};
}

std::vector<NamedTree> grid_train(std::span<const Sample> samples,
                                  const std::vector<std::optional<int>>& heights,
                                  const std::vector<LeafSize>& leaves) {
  if (heights.empty() || leaves.empty()) { throw ArgumentError("training grid needs non-empty H and L sets"); }
  std::vector<NamedTree> models;
  for (const auto& height : heights) {
    for (const auto& leaf : leaves) {
      TrainConfig config{height, leaf};
      models.push_back({config.name(), config, train(samples, config)});
    }
  }
  return models;
}

// =================================================================================================

std::string tree_to_json(const DecisionTree& tree, const std::string& name,
                         const std::optional<TrainConfig>& config, const std::string& class_sidecar,
                         const std::string& config_hash) {
  json doc;
  doc["format"] = "adagemm.decision_tree";
  doc["version"] = 1;
  if (!config_hash.empty()) { doc["config_hash"] = config_hash; }
  doc["name"] = name;
  if (config) {
    doc["train_config"] = {
        {"max_height", config->max_height ? json(*config->max_height) : json("Max")},
        {"min_samples_leaf", config->min_samples_leaf.label()}};
  }
  doc["classes"] = class_sidecar;
  doc["root"] = tree.root();
  json nodes = json::array();
  for (const auto& node : tree.nodes()) {
    if (node.is_leaf()) {
      nodes.push_back({{"class_id", node.class_id}, {"samples", node.samples}});
    } else {
      nodes.push_back({{"feature", feature_name(node.feature)},
                       {"threshold", node.threshold},
                       {"left", node.left},
                       {"right", node.right},
                       {"samples", node.samples}});
    }
  }
  doc["nodes"] = std::move(nodes);
  return doc.dump(1) + "\n";
}

LoadedTree tree_from_json(const std::string& json_text) {
  try {
    const auto doc = json::parse(json_text);
    if (doc.value("format", "") != "adagemm.decision_tree") {
      throw ParseError("not a decision tree file");
    }
    if (doc.value("version", 0) != 1) { throw ParseError("unsupported decision tree version"); }
    std::vector<TreeNode> nodes;
    for (const auto& entry : doc.at("nodes")) {
      TreeNode node;
      node.samples = entry.value("samples", std::int64_t{0});
      if (entry.contains("class_id")) {
        node.class_id = entry.at("class_id").get<int>();
      } else {
        node.feature = parse_feature(entry.at("feature").get<std::string>());
        node.threshold = entry.at("threshold").get<double>();
        node.left = entry.at("left").get<int>();
        node.right = entry.at("right").get<int>();
      }
      nodes.push_back(node);
    }
    LoadedTree loaded;
    loaded.tree = DecisionTree::from_nodes(std::move(nodes), doc.value("root", 0));
    loaded.name = doc.value("name", "");
    loaded.class_sidecar = doc.value("classes", "");
    if (doc.contains("train_config")) {
      const auto& tc = doc["train_config"];
      TrainConfig config;
      if (tc.at("max_height").is_string()) {
        config.max_height = std::nullopt;
      } else {
        config.max_height = tc.at("max_height").get<int>();
      }
      config.min_samples_leaf = LeafSize::parse(tc.at("min_samples_leaf").get<std::string>());
      loaded.config = config;
    }
    return loaded;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed decision tree: ") + e.what());
  }
}

}  // namespace adagemm
