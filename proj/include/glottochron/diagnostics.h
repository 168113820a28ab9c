#pragma once

#include <span>
#include <vector>

#include <boost/dynamic_bitset.hpp>

#include "glottochron/time_tree.h"

namespace glottochron {

// Set of taxon ids below a node.
using Clade = boost::dynamic_bitset<>;

struct NodeClade {
  int node = k_no_node;
  Clade clade;
};

// Clade of every internal node (root included), in postorder.
auto node_clades(const TimeTree& tree, int num_taxa) -> std::vector<NodeClade>;

// Clades with at least two and fewer than all taxa, sorted and unique.
auto informative_clades(const TimeTree& tree, int num_taxa) -> std::vector<Clade>;

// Leading fraction of a sample to drop.
auto burn_in_count(std::size_t n, double burn_in) -> std::size_t;

// Average standard deviation of clade frequencies across runs. Clades enter
// when their frequency reaches 0.1 in at least one run; the deviation uses the
// n - 1 sample convention.
auto asdsf(std::span<const std::vector<TimeTree>> runs, int num_taxa, double burn_in = 0.25) -> double;
auto asdsf(const std::vector<TimeTree>& run_a, const std::vector<TimeTree>& run_b, int num_taxa,
           double burn_in = 0.25) -> double;

}  // namespace glottochron
