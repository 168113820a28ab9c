#pragma once

// Test fixtures and hand-rolled random generators.

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "glottochron/data_io.h"
#include "glottochron/model_state.h"
#include "glottochron/time_tree.h"

namespace support {

using glottochron::Rng;

inline auto make_taxa(const std::vector<std::string>& names) -> std::vector<glottochron::Taxon> {
  auto taxa = std::vector<glottochron::Taxon>{};
  for (auto i = 0u; i < names.size(); ++i) taxa.push_back({static_cast<int>(i), names[i], {}});
  return taxa;
}

inline auto numbered_taxa(int n) -> std::vector<glottochron::Taxon> {
  auto names = std::vector<std::string>{};
  for (auto i = 0; i < n; ++i) names.push_back("t" + std::to_string(i + 1));
  return make_taxa(names);
}

// Tree from Newick; tip ages come from the durations.
inline auto tree(const std::string& newick, const std::vector<glottochron::Taxon>& taxa) -> glottochron::TimeTree {
  return glottochron::parse_newick(newick, taxa);
}

struct TreeSpec {
  int taxa = 5;
  int fossils = 0;              // tips with positive age
  int sampled_ancestors = 0;    // at most `fossils`
  double mean_gap = 200.0;      // mean age increment per merge
};

struct GeneratedTree {
  std::vector<glottochron::Taxon> taxa;  // fossils calibrated to a window around their age
  glottochron::TimeTree tree;
};

// Random merges of lineages with exponential age increments. Fossils get
// random ages; some are then turned into sampled ancestors by moving them up
// to their parent.
inline auto random_tree(const TreeSpec& spec, Rng& rng) -> GeneratedTree {
  auto out = GeneratedTree{numbered_taxa(spec.taxa), {}};
  auto& t = out.tree;
  auto unit = std::uniform_real_distribution<double>{0.0, 1.0};
  auto gap = std::exponential_distribution<double>{1.0 / spec.mean_gap};
  for (auto i = 0; i < spec.taxa; ++i) {
    auto node = glottochron::Node{};
    node.taxon = i;
    node.age = i >= spec.taxa - spec.fossils ? 50.0 + unit(rng) * 3.0 * spec.mean_gap : 0.0;
    t.nodes.push_back(node);
  }
  auto active = std::vector<int>(spec.taxa);
  for (auto i = 0; i < spec.taxa; ++i) active[i] = i;
  while (active.size() > 1) {
    auto pick = [&] {
      auto k = std::uniform_int_distribution<std::size_t>{0, active.size() - 1}(rng);
      auto v = active[k];
      active.erase(active.begin() + static_cast<long>(k));
      return v;
    };
    auto a = pick();
    auto b = pick();
    auto parent = glottochron::Node{};
    parent.children = {a, b};
    parent.age = std::max(t.nodes[a].age, t.nodes[b].age) + 1.0 + gap(rng);
    auto id = static_cast<int>(t.nodes.size());
    t.nodes.push_back(parent);
    t.nodes[a].parent = id;
    t.nodes[b].parent = id;
    active.push_back(id);
  }
  t.root = active.front();

  auto made = 0;
  for (auto i = spec.taxa - spec.fossils; i < spec.taxa && made < spec.sampled_ancestors; ++i) {
    auto p = t.nodes[i].parent;
    if (p == t.root) continue;
    auto s = t.other_child(p, i);
    if (t.nodes[s].is_sampled_ancestor) continue;
    t.nodes[i].age = t.nodes[p].age;
    t.nodes[i].is_sampled_ancestor = true;
    ++made;
  }
  for (auto i = spec.taxa - spec.fossils; i < spec.taxa; ++i) {
    auto age = t.nodes[i].age;
    out.taxa[i].calibration = {std::max(1.0, age - 40.0), age + 40.0};
  }
  return out;
}

inline auto random_column(int n, Rng& rng, double missing = 0.1) -> std::vector<glottochron::Cell> {
  auto unit = std::uniform_real_distribution<double>{0.0, 1.0};
  auto column = std::vector<glottochron::Cell>(n);
  for (auto& c : column) {
    auto u = unit(rng);
    c = u < missing ? glottochron::Cell::missing
                    : (unit(rng) < 0.5 ? glottochron::Cell::present : glottochron::Cell::absent);
  }
  return column;
}

inline auto random_matrix(const std::vector<glottochron::Taxon>& taxa, int sites, Rng& rng, double missing = 0.1)
    -> glottochron::CognateMatrix {
  auto m = glottochron::CognateMatrix{};
  m.taxa = taxa;
  m.rows.assign(taxa.size(), {});
  for (auto s = 0; s < sites; ++s) {
    auto col = random_column(static_cast<int>(taxa.size()), rng, missing);
    for (auto i = 0u; i < taxa.size(); ++i) m.rows[i].push_back(col[i]);
    m.site_meaning.push_back(s);
    m.meanings.push_back("m" + std::to_string(s));
  }
  return m;
}

// ModelState around a tree with random substitution parameters and branch rates.
inline auto random_state(const glottochron::TimeTree& tree, Rng& rng) -> glottochron::ModelState {
  auto unit = std::uniform_real_distribution<double>{0.0, 1.0};
  auto s = glottochron::ModelState{};
  s.tree = tree;
  auto pi0 = 0.1 + 0.8 * unit(rng);
  s.pi = {pi0, 1.0 - pi0};
  s.alpha = 0.2 + 3.0 * unit(rng);
  s.clock_rate = 1e-4 * (0.5 + 2.0 * unit(rng));
  s.branch_rates.assign(tree.size(), 1.0);
  for (auto& r : s.branch_rates) r = 0.5 + unit(rng);
  s.prior_params = glottochron::FbdParams{};
  return s;
}

// Every ranked merge history on n contemporaneous tips (covers every rooted
// binary topology). The k-th merge happens at age k * step.
inline void ranked_histories(glottochron::TimeTree partial, std::vector<int> active, double step,
                             std::vector<glottochron::TimeTree>& out) {
  if (active.size() == 1) {
    partial.root = active.front();
    out.push_back(std::move(partial));
    return;
  }
  for (auto i = 0u; i < active.size(); ++i) {
    for (auto j = i + 1; j < active.size(); ++j) {
      auto t = partial;
      auto id = static_cast<int>(t.nodes.size());
      auto node = glottochron::Node{};
      node.children = {active[i], active[j]};
      auto merges = std::ranges::count_if(t.nodes, [](const glottochron::Node& x) { return !x.is_tip(); });
      node.age = step * static_cast<double>(merges + 1);
      t.nodes.push_back(node);
      t.nodes[active[i]].parent = id;
      t.nodes[active[j]].parent = id;
      auto next = std::vector<int>{};
      for (auto k = 0u; k < active.size(); ++k)
        if (k != i && k != j) next.push_back(active[k]);
      next.push_back(id);
      ranked_histories(std::move(t), std::move(next), step, out);
    }
  }
}

inline auto all_ranked_trees(int n, double step) -> std::vector<glottochron::TimeTree> {
  auto t = glottochron::TimeTree{};
  auto active = std::vector<int>{};
  for (auto i = 0; i < n; ++i) {
    auto node = glottochron::Node{};
    node.taxon = i;
    t.nodes.push_back(node);
    active.push_back(i);
  }
  auto out = std::vector<glottochron::TimeTree>{};
  ranked_histories(t, active, step, out);
  return out;
}

}  // namespace support
