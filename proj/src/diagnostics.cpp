#include "glottochron/diagnostics.h"

#include <algorithm>
#include <cmath>
#include <map>

#include "glottochron/errors.h"

namespace glottochron {

auto node_clades(const TimeTree& tree, int num_taxa) -> std::vector<NodeClade> {
  auto below = std::vector<Clade>(tree.size());
  auto out = std::vector<NodeClade>{};
  for (auto v : tree.postorder()) {
    const auto& node = tree.at(v);
    below[v].resize(num_taxa);
    if (node.is_tip()) {
      below[v].set(node.taxon);
      continue;
    }
    below[v] = below[node.children[0]] | below[node.children[1]];
    out.push_back(NodeClade{v, below[v]});
  }
  return out;
}

auto informative_clades(const TimeTree& tree, int num_taxa) -> std::vector<Clade> {
  auto out = std::vector<Clade>{};
  for (auto& nc : node_clades(tree, num_taxa)) {
    auto n = static_cast<int>(nc.clade.count());
    if (n >= 2 && n < num_taxa) out.push_back(std::move(nc.clade));
  }
  std::ranges::sort(out);
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

auto burn_in_count(std::size_t n, double burn_in) -> std::size_t {
  if (!(burn_in >= 0.0 && burn_in < 1.0)) throw UsageError{"burn-in fraction must lie in [0, 1)"};
  return static_cast<std::size_t>(std::floor(burn_in * static_cast<double>(n)));
}

auto asdsf(std::span<const std::vector<TimeTree>> runs, int num_taxa, double burn_in) -> double {
  if (runs.size() < 2) throw UsageError{"asdsf: need at least two runs"};
  auto freqs = std::map<Clade, std::vector<double>>{};
  for (auto r = 0u; r < runs.size(); ++r) {
    const auto& trees = runs[r];
    auto skip = burn_in_count(trees.size(), burn_in);
    auto kept = trees.size() - skip;
    if (kept < 2) throw UsageError{"asdsf: fewer than 2 trees after burn-in"};
    for (auto i = skip; i < trees.size(); ++i) {
      for (auto& c : informative_clades(trees[i], num_taxa)) {
        auto& f = freqs[c];
        f.resize(runs.size(), 0.0);
        f[r] += 1.0 / static_cast<double>(kept);
      }
    }
  }
  auto total = 0.0;
  auto count = 0;
  auto k = static_cast<double>(runs.size());
  for (const auto& [clade, f] : freqs) {
    if (*std::ranges::max_element(f) < 0.1) continue;
    auto mean = 0.0;
    for (auto x : f) mean += x / k;
    auto ss = 0.0;
    for (auto x : f) ss += (x - mean) * (x - mean);
    total += std::sqrt(ss / (k - 1.0));
    ++count;
  }
  return count == 0 ? 0.0 : total / count;
}

auto asdsf(const std::vector<TimeTree>& run_a, const std::vector<TimeTree>& run_b, int num_taxa,
           double burn_in) -> double {
  auto runs = std::vector<std::vector<TimeTree>>{run_a, run_b};
  return asdsf(runs, num_taxa, burn_in);
}

}  // namespace glottochron
