#include "support.h"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace adagemm::testing {

namespace {

std::uint64_t mix(std::uint64_t x) {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ULL;
  x ^= x >> 33;
  return x;
}

double utilisation(std::int64_t extent, int tile) {
  const std::int64_t tiles = (extent + tile - 1) / tile;
  return static_cast<double>(extent) / static_cast<double>(tiles * tile);
}

}  // namespace

double synthetic_gflops(const ProblemShape& s, const KernelConfig& c) {
  const bool direct = c.family == KernelFamily::Direct;
  const double volume = static_cast<double>(s.M) * static_cast<double>(s.N) * static_cast<double>(s.K);
  const double edge = std::cbrt(volume);

  double g = direct ? 6.0 : 14.0;
  g *= utilisation(s.M, c.Mwg) * utilisation(s.N, c.Nwg) * std::sqrt(utilisation(s.K, c.Kwg));
  g *= std::sqrt(std::min(1.0, c.Mwi * c.Nwi / (direct ? 8.0 : 24.0)));
  g *= c.Kwi == 2 && s.K % 64 == 0 ? 1.08 : 1.0;
  const double footprint = (c.Mwg + c.Nwg) * c.Kwg * 4.0 / 32768.0;
  g *= 0.8 + 0.2 * footprint;
  if (direct) {
    g *= 1.0 + 1.5 * (1.0 - std::min(1.0, edge / 512.0));
  } else {
    const bool aligned = s.M % c.Mwg == 0 && s.N % c.Nwg == 0 && s.K % c.Kwg == 0;
    if (!aligned) { g *= 0.55 + 0.45 * std::min(1.0, volume / (768.0 * 768.0 * 768.0)); }
    g *= 0.5 + 0.5 * std::min(1.0, edge / 256.0);
  }
  const std::uint64_t key = mix(static_cast<std::uint64_t>(s.M) * 1000003ULL ^ static_cast<std::uint64_t>(s.N) << 20 ^
                                static_cast<std::uint64_t>(s.K) << 40 ^
                                mix(static_cast<std::uint64_t>(c.Mwg) | c.Nwg << 8 | c.Kwg << 16 | c.Mwi << 24 |
                                    static_cast<std::uint64_t>(c.Nwi) << 32 | static_cast<std::uint64_t>(c.Kwi) << 40 |
                                    static_cast<std::uint64_t>(c.family) << 48));
  g *= 1.0 + 0.06 * (static_cast<double>(key >> 11) / 9007199254740992.0 - 0.5);
  return g;
}

TuningTable synthetic_table(const ProblemShape& shape, const DeviceCaps& caps) {
  std::vector<Measurement> rows;
  for (const auto family : {KernelFamily::Direct, KernelFamily::Indirect}) {
    for (const auto& config : enumerate_search_space(family, caps)) {
      const double gflops = synthetic_gflops(shape, config);
      const double elapsed = 2.0 * static_cast<double>(shape.M) * static_cast<double>(shape.N) *
                             static_cast<double>(shape.K) / (gflops * 1e9);
      rows.push_back({config, elapsed, gflops});
    }
  }
  TableMetadata meta;
  meta.caps = caps;
  meta.version = "synthetic";
  std::stringstream csv;
  write_table_csv(csv, TuningTable(shape, std::move(rows), meta));
  return read_table_csv(csv, "synthetic");
}

SyntheticData synthetic_data(const std::vector<ProblemShape>& shapes, const DeviceCaps& caps) {
  SyntheticData data;
  for (const auto& shape : shapes) { data.tables.add(synthetic_table(shape, caps)); }
  data.dataset = build_dataset_from_tables(shapes, data.tables, "synthetic");
  return data;
}

// =================================================================================================

std::vector<double> oracle_gemm(const ProblemShape& s, const std::vector<double>& A, const std::vector<double>& B,
                                const std::vector<double>& C) {
  const auto a = [&](std::int64_t i, std::int64_t k) {
    return s.transA ? A[static_cast<std::size_t>(k * s.M + i)] : A[static_cast<std::size_t>(i * s.K + k)];
  };
  const auto b = [&](std::int64_t k, std::int64_t j) {
    return s.transB ? B[static_cast<std::size_t>(j * s.K + k)] : B[static_cast<std::size_t>(k * s.N + j)];
  };
  std::vector<double> acc(static_cast<std::size_t>(s.M * s.N), 0.0);
  for (std::int64_t j = 0; j < s.N; ++j) {
    for (std::int64_t k = 0; k < s.K; ++k) {
      const double bkj = b(k, j);
      for (std::int64_t i = 0; i < s.M; ++i) { acc[static_cast<std::size_t>(i * s.N + j)] += a(i, k) * bkj; }
    }
  }
  for (std::size_t e = 0; e < acc.size(); ++e) {
    acc[e] = s.alpha * acc[e] + (s.beta == 0.0 ? 0.0 : s.beta * C[e]);
  }
  return acc;
}

std::vector<KernelConfig> oracle_search_space(KernelFamily family, const DeviceCaps& caps) {
  const bool direct = family == KernelFamily::Direct;
  const std::vector<int> mwg = direct ? std::vector<int>{8, 16, 32} : std::vector<int>{16, 32, 64};
  const std::vector<int> kwg = direct ? std::vector<int>{8, 16} : std::vector<int>{8, 16, 32};
  const std::vector<int> wi = direct ? std::vector<int>{1, 2, 4} : std::vector<int>{2, 4, 8};
  const std::vector<int> kwi = direct ? std::vector<int>{1} : std::vector<int>{1, 2};
  const int reg_cap = direct ? caps.register_tile_cap_direct : caps.register_tile_cap_indirect;
  std::vector<KernelConfig> legal;
  for (int a : mwg)
    for (int b : mwg)
      for (int k : kwg)
        for (int x : wi)
          for (int y : wi)
            for (int u : kwi) {
              if (a % x || b % y || k % u) continue;
              if (x * y > reg_cap) continue;
              if ((a + b) * k * caps.element_size > caps.tile_memory_cap) continue;
              legal.push_back({family, a, b, k, x, y, u});
            }
  return legal;
}

// =================================================================================================

namespace {

struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  Rational(std::int64_t n = 0, std::int64_t d = 1) : num(n), den(d) {
    const auto g = std::gcd(num, den);
    if (g != 0) {
      num /= g;
      den /= g;
    }
  }
  friend Rational operator+(Rational a, Rational b) { return {a.num * b.den + b.num * a.den, a.den * b.den}; }
  friend Rational operator-(Rational a, Rational b) { return {a.num * b.den - b.num * a.den, a.den * b.den}; }
  friend Rational operator*(Rational a, Rational b) { return {a.num * b.num, a.den * b.den}; }
  friend bool operator<(Rational a, Rational b) { return a.num * b.den < b.num * a.den; }
};

Rational gini_of(const std::vector<int>& labels) {
  const auto n = static_cast<std::int64_t>(labels.size());
  Rational sum_sq;
  for (int cls = 0; cls <= *std::max_element(labels.begin(), labels.end()); ++cls) {
    const auto c = std::count(labels.begin(), labels.end(), cls);
    sum_sq = sum_sq + Rational(c * c, n * n);
  }
  return Rational(1) - sum_sq;
}

}  // namespace

std::optional<OracleSplit> oracle_root_split(const std::vector<Sample>& samples, std::int64_t min_leaf) {
  const auto n = static_cast<std::int64_t>(samples.size());
  std::vector<int> all;
  for (const auto& s : samples) { all.push_back(s.label); }
  // A pure parent is never split. Otherwise any feasible candidate qualifies, since the weighted
  // child impurity cannot exceed the parent's.
  if (!(Rational(0) < gini_of(all))) { return std::nullopt; }
  Rational best;
  std::optional<OracleSplit> choice;
  for (int f = 0; f < 3; ++f) {
    std::vector<std::int64_t> values;
    for (const auto& s : samples) { values.push_back(s.features[static_cast<std::size_t>(f)]); }
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (std::size_t i = 0; i + 1 < values.size(); ++i) {
      const double threshold = 0.5 * static_cast<double>(values[i] + values[i + 1]);
      std::vector<int> left, right;
      for (const auto& s : samples) {
        (static_cast<double>(s.features[static_cast<std::size_t>(f)]) <= threshold ? left : right).push_back(s.label);
      }
      if (static_cast<std::int64_t>(left.size()) < min_leaf || static_cast<std::int64_t>(right.size()) < min_leaf) {
        continue;
      }
      const Rational weighted = Rational(static_cast<std::int64_t>(left.size()), n) * gini_of(left) +
                                Rational(static_cast<std::int64_t>(right.size()), n) * gini_of(right);
      if (!choice || weighted < best) {
        best = weighted;
        choice = OracleSplit{f, threshold};
      }
    }
  }
  return choice;
}

// =================================================================================================

namespace {

struct Box {
  std::array<std::int64_t, 3> lo{1, 1, 1};
  std::array<std::int64_t, 3> hi{4096, 4096, 4096};
};

struct Grower {
  std::mt19937_64& rng;
  int depth;
  int max_leaves;
  std::vector<KernelConfig> palette;
  GrownTree out;
  std::vector<TreeNode> nodes;
  int leaves = 0;

  bool coin(double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }
  std::int64_t uniform(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
  }

  int grow(const Box& box, int level, bool spine) {
    std::vector<int> splittable;
    for (int f = 0; f < 3; ++f) {
      if (box.hi[static_cast<std::size_t>(f)] > box.lo[static_cast<std::size_t>(f)]) { splittable.push_back(f); }
    }
    const bool split = !splittable.empty() && level < depth && (spine || (leaves < max_leaves && coin(0.5)));
    const int index = static_cast<int>(nodes.size());
    nodes.emplace_back();
    if (!split) {
      const int class_id = out.classes.intern(palette[static_cast<std::size_t>(leaves)]);
      ++leaves;
      const int points = 1 + static_cast<int>(uniform(0, 1));
      for (int p = 0; p < points; ++p) {
        Features x{};
        for (std::size_t f = 0; f < 3; ++f) { x[f] = uniform(box.lo[f], box.hi[f]); }
        out.training.push_back(x);
      }
      nodes[static_cast<std::size_t>(index)].class_id = class_id;
      nodes[static_cast<std::size_t>(index)].samples = points;
      return index;
    }
    const auto f = static_cast<std::size_t>(splittable[static_cast<std::size_t>(uniform(0, static_cast<std::int64_t>(splittable.size()) - 1))]);
    const std::int64_t v = uniform(box.lo[f], box.hi[f] - 1);
    Box left = box, right = box;
    left.hi[f] = v;
    right.lo[f] = v + 1;
    const bool spine_left = (v - box.lo[f]) >= (box.hi[f] - v - 1);
    const int l = grow(left, level + 1, spine && spine_left);
    const int r = grow(right, level + 1, spine && !spine_left);
    auto& node = nodes[static_cast<std::size_t>(index)];
    node.feature = static_cast<int>(f);
    node.threshold = static_cast<double>(v) + 0.5;
    node.left = l;
    node.right = r;
    node.samples = nodes[static_cast<std::size_t>(l)].samples + nodes[static_cast<std::size_t>(r)].samples;
    return index;
  }
};

}  // namespace

GrownTree grow_random_tree(std::mt19937_64& rng, int depth, int max_leaves) {
  Grower g{rng, depth, max_leaves, {}, {}, {}, 0};
  for (const auto family : {KernelFamily::Direct, KernelFamily::Indirect}) {
    const auto space = enumerate_search_space(family, DeviceCaps{});
    g.palette.insert(g.palette.end(), space.begin(), space.end());
  }
  std::shuffle(g.palette.begin(), g.palette.end(), rng);
  g.grow(Box{}, 0, true);
  g.out.tree = DecisionTree::from_nodes(std::move(g.nodes), 0);
  return std::move(g.out);
}

GrownTree fixture_tree() {
  GrownTree t;
  const int small = t.classes.intern({KernelFamily::Direct, 16, 16, 8, 2, 2, 1});
  const int mid = t.classes.intern({KernelFamily::Indirect, 32, 32, 16, 4, 4, 1});
  const int large = t.classes.intern({KernelFamily::Indirect, 64, 64, 16, 8, 4, 2});
  std::vector<TreeNode> nodes(5);
  nodes[0] = {0, 192.5, 1, 2, -1, 6};
  nodes[1] = {-1, 0.0, -1, -1, small, 2};
  nodes[2] = {2, 640.5, 3, 4, -1, 4};
  nodes[3] = {-1, 0.0, -1, -1, mid, 2};
  nodes[4] = {-1, 0.0, -1, -1, large, 2};
  t.tree = DecisionTree::from_nodes(nodes, 0);
  t.training = {{64, 64, 64}, {128, 512, 1024}, {256, 256, 256}, {512, 64, 640}, {1024, 1024, 1024}, {2048, 8, 4096}};
  return t;
}

std::filesystem::path scratch_dir(const std::string& tag) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("adagemm-test-" + tag + "-" + std::to_string(static_cast<long>(::getpid())));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace adagemm::testing
