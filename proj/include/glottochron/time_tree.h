#pragma once

#include <array>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace glottochron {

using Rng = std::mt19937_64;

// Uniform prior on a tip's age, in years before present. Extant taxa are (0, 0).
struct CalibrationPrior {
  double min_age = 0.0;
  double max_age = 0.0;

  auto is_extant() const -> bool { return max_age == 0.0; }
  auto contains(double age) const -> bool { return age >= min_age && age <= max_age; }
  auto midpoint() const -> double { return 0.5 * (min_age + max_age); }
  auto width() const -> double { return max_age - min_age; }
};

struct Taxon {
  int id = 0;
  std::string name;
  CalibrationPrior calibration;
};

struct RootBounds {
  double min_age = 4000.0;
  double max_age = 25000.0;

  auto contains(double age) const -> bool { return age >= min_age && age <= max_age; }
};

inline constexpr int k_no_node = -1;

struct Node {
  int parent = k_no_node;
  std::array<int, 2> children{k_no_node, k_no_node};
  double age = 0.0;           // years BP
  int taxon = -1;             // tips only
  bool is_sampled_ancestor = false;

  auto is_tip() const -> bool { return taxon >= 0; }
  auto num_children() const -> int {
    return (children[0] != k_no_node ? 1 : 0) + (children[1] != k_no_node ? 1 : 0);
  }
};

// Rooted binary time tree. A sampled ancestor is a tip hanging off its
// attachment node by a zero-duration branch, so every internal node keeps
// exactly two children. Node ids are stable for the lifetime of a chain.
struct TimeTree {
  std::vector<Node> nodes;
  int root = k_no_node;

  auto size() const -> int { return static_cast<int>(nodes.size()); }
  auto at(int i) -> Node& { return nodes.at(i); }
  auto at(int i) const -> const Node& { return nodes.at(i); }
  auto is_root(int i) const -> bool { return i == root; }
  auto height() const -> double { return nodes.at(root).age; }
  auto num_tips() const -> int;

  auto sibling(int i) const -> int;
  auto other_child(int parent, int child) const -> int;
  void replace_child(int parent, int old_child, int new_child);

  // True when one child of `i` is a sampled-ancestor tip.
  auto is_ancestor_attachment(int i) const -> bool;
  auto oldest_child_age(int i) const -> double;

  auto postorder() const -> std::vector<int>;
  // Node id for each taxon id; k_no_node for taxa absent from the tree.
  auto tip_nodes(int num_taxa) const -> std::vector<int>;
};

// All TimeTree invariants against the dataset taxa. Empty result iff valid.
auto validate_tree(const TimeTree& tree, std::span<const Taxon> taxa,
                   std::optional<RootBounds> root_bounds = std::nullopt)
    -> std::vector<std::string>;

// parent.age - node.age; throws UsageError for the root.
auto branch_duration(const TimeTree& tree, int node) -> double;

auto total_duration(const TimeTree& tree) -> double;

// Random valid starting tree: tips at calibration midpoints, root at
// `root_age`, internal ages placed between their children and the root.
auto random_tree(std::span<const Taxon> taxa, double root_age, Rng& rng) -> TimeTree;

}  // namespace glottochron
