#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "glottochron/diagnostics.h"
#include "glottochron/settings.h"
#include "glottochron/time_tree.h"

namespace glottochron {

// Smallest window over the sorted samples holding ceil(mass * n) of them;
// ties go to the lower window. Requires at least 20 samples.
auto hpd_interval(std::span<const double> samples, double mass = 0.95) -> std::pair<double, double>;

auto median(std::span<const double> samples) -> double;

struct CladeSummary {
  Clade clade;
  double support = 0.0;
  double age_median = 0.0;
  std::pair<double, double> age_hpd{0.0, 0.0};
};

// Support and age summary of one clade over the trees that contain it. With
// fewer than 20 such trees the HPD falls back to the sample range.
auto summarize_clade(std::span<const TimeTree> trees, const Clade& clade) -> std::optional<CladeSummary>;

struct ConsensusNode {
  int parent = -1;
  std::vector<int> children;
  int taxon = -1;  // tips only
  CladeSummary summary;
};

// Possibly multifurcating tree of the clades above the threshold; node 0 is
// the root. Children are ordered by clade bitset.
struct ConsensusTree {
  std::vector<ConsensusNode> nodes;

  auto find(const Clade& clade) const -> int;
};

auto majority_consensus(std::span<const TimeTree> trees, int num_taxa, double threshold = 0.5)
    -> ConsensusTree;

// Newick with durations between median ages and per-node comments
// "[&support=S,age_median=M,age_hpd={lo,hi}]".
auto write_annotated_newick(const ConsensusTree& tree, std::span<const Taxon> taxa) -> std::string;

struct BayesFactor {
  long posterior_steppe = 0;
  long posterior_anatolian = 0;
  long prior_steppe = 0;
  long prior_anatolian = 0;
  std::optional<double> k;  // empty when a prior window count is zero
  std::string sentinel;     // "", "*" or "**"
};

auto bayes_factor_root(std::span<const double> posterior_roots, std::span<const double> prior_roots,
                       const HypothesisWindows& windows) -> BayesFactor;

// "Very Strong" (> 150), "Strong" (> 20), "Positive" (> 3), "Neutral" (>= 1),
// otherwise "Negative".
auto evidence_label(double k) -> std::string;

// "K = 6.000 (Positive)", or the sentinel.
auto format_bayes_factor(const BayesFactor& bf) -> std::string;

// AICM = 2 s^2 - 2 mean, with the unbiased variance of the log-likelihoods
// (the estimator reported by Tracer). Needs at least two values.
auto aicm(std::span<const double> log_likelihoods) -> double;

struct Subgroup {
  std::string name;
  std::optional<double> reference_age;
  std::vector<std::string> taxa;
};

// "name<TAB>reference_age or -<TAB>taxon,taxon,..." lines; '#' comments.
auto parse_subgroups(std::string_view text, std::span<const Taxon> taxa) -> std::vector<Subgroup>;

struct NodeAgeRow {
  std::string name;
  bool monophyletic_in_consensus = false;
  std::optional<CladeSummary> summary;  // empty when never monophyletic
  std::optional<double> reference_age;
  std::optional<double> difference;  // reference - median
};

struct NodeAgeReport {
  std::vector<NodeAgeRow> rows;  // subgroups then the root
  std::optional<double> average_difference;
};

auto node_age_report(std::span<const TimeTree> trees, const ConsensusTree& consensus,
                     std::span<const Subgroup> subgroups, std::span<const Taxon> taxa) -> NodeAgeReport;

// Plain-text table; "-" marks values that do not exist.
auto format_node_age_report(const NodeAgeReport& report) -> std::string;

}  // namespace glottochron
