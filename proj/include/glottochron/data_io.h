#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "glottochron/model_state.h"
#include "glottochron/settings.h"
#include "glottochron/time_tree.h"

namespace glottochron {

enum class Cell : std::uint8_t { absent = 0, present = 1, missing = 2 };

auto to_char(Cell c) -> char;

// Raw cognate-class assignments. classes[taxon][meaning] holds the class ids of
// the taxon's words for that meaning; an empty list means the meaning is missing.
// Class ids are scoped per meaning.
struct CognateClassTable {
  std::vector<std::string> taxa;
  std::vector<std::string> meanings;
  std::vector<std::vector<std::vector<int>>> classes;
};

// Tab-separated: header "taxon<TAB>meaning..." then one row per taxon whose
// cells are class ids, '?' (or empty) for missing, and "a/b" for polymorphism.
auto parse_cognate_table(std::string_view text) -> CognateClassTable;

struct CognateMatrix {
  std::vector<Taxon> taxa;
  std::vector<std::vector<Cell>> rows;  // rows[taxon][site]
  std::vector<int> site_meaning;
  std::vector<std::string> meanings;

  auto num_taxa() const -> int { return static_cast<int>(taxa.size()); }
  auto num_sites() const -> int { return static_cast<int>(site_meaning.size()); }
  auto column(int site) const -> std::vector<Cell>;
};

// One column per (meaning, class) pair, ordered by meaning then class id.
// A taxon missing for a meaning is '?' across that meaning's whole block.
auto binarize(const CognateClassTable& table, bool allow_polymorphic = false) -> CognateMatrix;

// "ntax nchar" header then "name<TAB>chars" rows over {0, 1, ?}.
auto parse_matrix(std::string_view text) -> CognateMatrix;
auto write_matrix(const CognateMatrix& matrix) -> std::string;

// Accepts either the matrix format or a cognate-class table.
auto parse_dataset(std::string_view text, bool allow_polymorphic = false) -> CognateMatrix;

// "name,min_age,max_age" lines. Result is indexed like `taxa`; taxa that are
// not listed are extant (0, 0).
auto parse_calibrations(std::string_view text, std::span<const Taxon> taxa)
    -> std::vector<CalibrationPrior>;
void apply_calibrations(std::vector<Taxon>& taxa, std::span<const CalibrationPrior> calibrations);

struct RunConfig {
  std::string dataset;
  std::string calibrations;
  TreePriorKind tree_prior = TreePriorKind::fbd;
  std::optional<int> n_extant_family;
  long chain_length = 1'000'000;
  long thin = 1000;
  int n_runs = 2;
  int n_chains = 3;
  double heat_delta = 0.1;
  std::uint64_t seed = 1;
  RootBounds root_bounds;
  bool prior_only = false;
  std::string output = "glottochron";
  double burn_in = 0.25;
  bool allow_polymorphic = false;
  AscertainmentMode ascertainment = AscertainmentMode::global;
  long print_every = 10'000;
  KernelWeights weights;
  HypothesisWindows windows;
  std::string subgroups;
  std::map<std::string, double> initial;  // "init.<param>" keys
  std::set<std::string> fixed;            // parameters held at their initial value
  std::string start_tree;
  bool fixed_topology = false;
  int sim_taxa = 8;
  int sim_sites = 200;
  long sim_burn = 20'000;
  std::map<std::string, double> sim_params;  // "sim.<param>" keys

  std::set<std::string> keys_present;
};

// Sampled scalar parameter names usable in "init.", "sim." and "fixed".
auto scalar_parameter_names() -> std::span<const std::string_view>;

// Line-oriented "key = value"; '#' starts a comment. Unknown keys, malformed
// values and violated invariants raise ConfigError naming the key.
auto parse_config(std::string_view text) -> RunConfig;
// Keys that `run` and `validate` additionally require.
void require_run_keys(const RunConfig& config);

// One thinned record of the cold chain.
struct TraceSample {
  long iteration = 0;
  double log_likelihood = 0.0;
  double log_prior = 0.0;
  double tree_height = 0.0;
  std::map<std::string, double> scalars;  // ordered alphabetically
};

inline constexpr std::string_view k_trace_banner = "# glottochron trace";
inline constexpr std::string_view k_trees_banner = "# glottochron trees";

void write_trace_header(std::ostream& os, const TraceSample& schema);
void write_trace_row(std::ostream& os, const TraceSample& sample);
void write_trace(std::span<const TraceSample> samples, std::ostream& os);
auto read_trace(std::istream& is) -> std::vector<TraceSample>;

// Shortest decimal text that round-trips the double.
auto format_number(double value) -> std::string;
auto quote_label(std::string_view label) -> std::string;

// Branch lengths are durations in years; sampled ancestors are zero-length tips.
auto write_newick(const TimeTree& tree, std::span<const Taxon> taxa) -> std::string;

// Ages are rebuilt from durations. Extant tips anchor the reconstruction at
// age 0; without extant tips the calibration midpoints are used, and with no
// calibrations at all the deepest tip is placed at age 0. Bracketed comments
// are skipped. Tip labels must name `taxa`.
auto parse_newick(std::string_view text, std::span<const Taxon> taxa) -> TimeTree;

struct SampledTree {
  long iteration = 0;
  TimeTree tree;
};

void write_trees_header(std::ostream& os);
void write_tree_row(std::ostream& os, long iteration, const TimeTree& tree, std::span<const Taxon> taxa);
void write_trees(std::span<const SampledTree> trees, std::span<const Taxon> taxa, std::ostream& os);
auto read_trees(std::istream& is, std::span<const Taxon> taxa) -> std::vector<SampledTree>;

auto read_file(const std::string& path) -> std::string;

}  // namespace glottochron
