#include "glottochron/time_tree.h"

#include <algorithm>
#include <sstream>

#include "glottochron/errors.h"

namespace glottochron {

auto TimeTree::num_tips() const -> int {
  return static_cast<int>(std::ranges::count_if(nodes, [](const Node& n) { return n.is_tip(); }));
}

auto TimeTree::sibling(int i) const -> int {
  auto p = at(i).parent;
  if (p == k_no_node) {
    throw UsageError{"root has no sibling"};
  }
  return other_child(p, i);
}

auto TimeTree::other_child(int parent, int child) const -> int {
  const auto& ch = at(parent).children;
  return ch[0] == child ? ch[1] : ch[0];
}

void TimeTree::replace_child(int parent, int old_child, int new_child) {
  auto& ch = at(parent).children;
  if (ch[0] == old_child) {
    ch[0] = new_child;
  } else if (ch[1] == old_child) {
    ch[1] = new_child;
  } else {
    throw UsageError{"replace_child: node is not a child of parent"};
  }
}

auto TimeTree::is_ancestor_attachment(int i) const -> bool {
  const auto& n = at(i);
  if (n.is_tip()) return false;
  for (auto c : n.children) {
    if (c != k_no_node && at(c).is_sampled_ancestor) return true;
  }
  return false;
}

auto TimeTree::oldest_child_age(int i) const -> double {
  auto result = 0.0;
  for (auto c : at(i).children) {
    if (c != k_no_node) result = std::max(result, at(c).age);
  }
  return result;
}

auto TimeTree::postorder() const -> std::vector<int> {
  auto order = std::vector<int>{};
  order.reserve(nodes.size());
  if (root == k_no_node) return order;
  // Iterative two-stack traversal; children are emitted before their parent.
  auto stack = std::vector<int>{root};
  while (!stack.empty()) {
    auto v = stack.back();
    stack.pop_back();
    order.push_back(v);
    for (auto c : at(v).children) {
      if (c != k_no_node) stack.push_back(c);
    }
  }
  std::ranges::reverse(order);
  return order;
}

auto TimeTree::tip_nodes(int num_taxa) const -> std::vector<int> {
  auto result = std::vector<int>(num_taxa, k_no_node);
  for (auto i = 0; i < size(); ++i) {
    auto t = nodes[i].taxon;
    if (t >= 0 && t < num_taxa) result[t] = i;
  }
  return result;
}

auto validate_tree(const TimeTree& tree, std::span<const Taxon> taxa,
                   std::optional<RootBounds> root_bounds) -> std::vector<std::string> {
  auto violations = std::vector<std::string>{};
  auto report = [&](auto&&... parts) {
    auto os = std::ostringstream{};
    (os << ... << parts);
    violations.push_back(os.str());
  };
  auto n = tree.size();
  if (tree.root < 0 || tree.root >= n) {
    report("structure: root index ", tree.root, " out of range");
    return violations;
  }
  if (tree.at(tree.root).parent != k_no_node) {
    report("structure: root node ", tree.root, " has a parent");
  }

  auto taxon_seen = std::vector<int>(taxa.size(), 0);
  for (auto i = 0; i < n; ++i) {
    const auto& node = tree.nodes[i];
    auto nc = node.num_children();
    for (auto c : node.children) {
      if (c == k_no_node) continue;
      if (c < 0 || c >= n || tree.nodes[c].parent != i) {
        report("structure: child link ", i, " -> ", c, " is inconsistent");
      }
    }
    if (i != tree.root && (node.parent < 0 || node.parent >= n)) {
      report("structure: node ", i, " has no valid parent");
      continue;
    }
    if (node.is_tip()) {
      if (nc != 0) report("structure: tip node ", i, " has children");
      if (node.taxon >= static_cast<int>(taxa.size())) {
        report("structure: tip node ", i, " refers to unknown taxon ", node.taxon);
      } else {
        ++taxon_seen[node.taxon];
        const auto& cal = taxa[node.taxon].calibration;
        if (!cal.contains(node.age)) {
          report("calibration bounds: tip ", taxa[node.taxon].name, " age ", node.age,
                 " outside [", cal.min_age, ", ", cal.max_age, "]");
        }
      }
    } else {
      if (nc != 2) report("structure: internal node ", i, " has ", nc, " children");
      if (node.is_sampled_ancestor) {
        report("structure: internal node ", i, " flagged as sampled ancestor");
      }
    }
    if (i == tree.root) continue;
    const auto& parent = tree.nodes[node.parent];
    if (node.is_sampled_ancestor) {
      if (node.age != parent.age) {
        report("age ordering: sampled ancestor ", i, " (age ", node.age,
               ") differs from its attachment ", node.parent, " (age ", parent.age, ")");
      }
      if (node.parent == tree.root) {
        report("structure: sampled ancestor ", i, " attached at the root");
      }
    } else if (!(node.age < parent.age)) {
      report("age ordering: node ", i, " (age ", node.age, ") is not younger than parent ",
             node.parent, " (age ", parent.age, ")");
    }
  }
  for (auto i = 0; i < n; ++i) {
    const auto& node = tree.nodes[i];
    if (!node.is_tip() && node.num_children() == 2 && tree.at(node.children[0]).is_sampled_ancestor &&
        tree.at(node.children[1]).is_sampled_ancestor) {
      report("structure: node ", i, " carries two sampled ancestors");
    }
  }

  // Connectivity: every node reachable from the root exactly once.
  auto reached = tree.postorder();
  if (static_cast<int>(reached.size()) != n) {
    report("structure: ", n - static_cast<int>(reached.size()), " node(s) unreachable from root");
  }
  for (auto t = 0; t < static_cast<int>(taxa.size()); ++t) {
    if (taxon_seen[t] != 1) {
      report("taxa: ", taxa[t].name, " appears ", taxon_seen[t], " times");
    }
  }
  if (root_bounds && !root_bounds->contains(tree.height())) {
    report("root bounds: root age ", tree.height(), " outside [", root_bounds->min_age, ", ",
           root_bounds->max_age, "]");
  }
  return violations;
}

auto branch_duration(const TimeTree& tree, int node) -> double {
  const auto& n = tree.at(node);
  if (n.parent == k_no_node) {
    throw UsageError{"branch_duration: root has no branch"};
  }
  return tree.at(n.parent).age - n.age;
}

auto total_duration(const TimeTree& tree) -> double {
  auto sum = 0.0;
  for (auto i = 0; i < tree.size(); ++i) {
    if (i != tree.root) sum += branch_duration(tree, i);
  }
  return sum;
}

auto random_tree(std::span<const Taxon> taxa, double root_age, Rng& rng) -> TimeTree {
  auto n = static_cast<int>(taxa.size());
  if (n == 0) throw UsageError{"random_tree: no taxa"};
  auto tree = TimeTree{};
  tree.nodes.resize(2 * n - 1);
  auto lineages = std::vector<int>{};
  for (auto i = 0; i < n; ++i) {
    tree.nodes[i].taxon = taxa[i].id;
    tree.nodes[i].age = taxa[i].calibration.midpoint();
    if (!(tree.nodes[i].age < root_age) && n > 1) {
      throw UsageError{"random_tree: root age must exceed every tip age"};
    }
    lineages.push_back(i);
  }
  auto next = n;
  auto unit = std::uniform_real_distribution<double>{0.0, 1.0};
  while (lineages.size() > 1) {
    auto pick = [&] {
      auto k = std::uniform_int_distribution<std::size_t>{0, lineages.size() - 1}(rng);
      auto v = lineages[k];
      lineages.erase(lineages.begin() + static_cast<long>(k));
      return v;
    };
    auto a = pick();
    auto b = pick();
    auto& parent = tree.nodes[next];
    parent.children = {a, b};
    auto floor = std::max(tree.nodes[a].age, tree.nodes[b].age);
    parent.age = lineages.empty() ? root_age : floor + (root_age - floor) * (0.05 + 0.45 * unit(rng));
    tree.nodes[a].parent = next;
    tree.nodes[b].parent = next;
    lineages.push_back(next);
    ++next;
  }
  tree.root = lineages.front();
  return tree;
}

}  // namespace glottochron
