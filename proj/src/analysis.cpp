#include "glottochron/analysis.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "glottochron/data_io.h"
#include "glottochron/errors.h"

namespace glottochron {

namespace {

constexpr std::size_t k_min_hpd_samples = 20;
constexpr std::string_view k_absent = "–";

auto fixed(double v, int digits) -> std::string {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

auto clade_of(std::span<const std::string> names, std::span<const Taxon> taxa) -> Clade {
  auto clade = Clade(taxa.size());
  for (const auto& name : names) {
    auto it = std::ranges::find_if(taxa, [&](const Taxon& t) { return t.name == name; });
    if (it == taxa.end()) throw DataError{"subgroup names unknown taxon '" + name + "'"};
    clade.set(static_cast<std::size_t>(it - taxa.begin()));
  }
  return clade;
}

// Age of the node spanning `clade` in `tree`, if the clade is present.
auto clade_age(const TimeTree& tree, const Clade& clade) -> std::optional<double> {
  if (clade.count() == 1) {
    auto taxon = static_cast<int>(clade.find_first());
    for (const auto& node : tree.nodes) {
      if (node.taxon == taxon) return node.age;
    }
    return std::nullopt;
  }
  for (const auto& nc : node_clades(tree, static_cast<int>(clade.size()))) {
    if (nc.clade == clade) return tree.at(nc.node).age;
  }
  return std::nullopt;
}

}  // namespace

auto hpd_interval(std::span<const double> samples, double mass) -> std::pair<double, double> {
  if (samples.size() < k_min_hpd_samples) {
    throw UsageError{"hpd_interval: need at least 20 samples, got " + std::to_string(samples.size())};
  }
  if (!(mass > 0.0 && mass <= 1.0)) throw UsageError{"hpd_interval: mass must lie in (0, 1]"};
  auto sorted = std::vector<double>(samples.begin(), samples.end());
  std::ranges::sort(sorted);
  auto n = sorted.size();
  auto count = static_cast<std::size_t>(std::ceil(mass * static_cast<double>(n) - 1e-9));
  count = std::clamp<std::size_t>(count, 1, n);
  auto best = std::size_t{0};
  for (auto i = std::size_t{1}; i + count <= n; ++i) {
    if (sorted[i + count - 1] - sorted[i] < sorted[best + count - 1] - sorted[best]) best = i;
  }
  return {sorted[best], sorted[best + count - 1]};
}

auto median(std::span<const double> samples) -> double {
  if (samples.empty()) throw UsageError{"median of an empty sample"};
  auto sorted = std::vector<double>(samples.begin(), samples.end());
  std::ranges::sort(sorted);
  auto n = sorted.size();
  return n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
}

auto summarize_clade(std::span<const TimeTree> trees, const Clade& clade) -> std::optional<CladeSummary> {
  auto ages = std::vector<double>{};
  for (const auto& tree : trees) {
    if (auto age = clade_age(tree, clade)) ages.push_back(*age);
  }
  if (ages.empty()) return std::nullopt;
  auto s = CladeSummary{clade, static_cast<double>(ages.size()) / static_cast<double>(trees.size()),
                        median(ages), {}};
  if (ages.size() >= k_min_hpd_samples) {
    s.age_hpd = hpd_interval(ages);
  } else {
    auto [lo, hi] = std::ranges::minmax(ages);
    s.age_hpd = {lo, hi};
  }
  return s;
}

auto ConsensusTree::find(const Clade& clade) const -> int {
  for (auto i = 0; i < static_cast<int>(nodes.size()); ++i) {
    if (nodes[i].summary.clade == clade) return i;
  }
  return -1;
}

auto majority_consensus(std::span<const TimeTree> trees, int num_taxa, double threshold) -> ConsensusTree {
  if (trees.empty()) throw UsageError{"majority_consensus: no trees"};
  if (!(threshold >= 0.5 && threshold < 1.0)) throw UsageError{"majority_consensus: threshold must lie in [0.5, 1)"};
  auto counts = std::map<Clade, std::vector<double>>{};
  for (const auto& tree : trees) {
    if (tree.num_tips() != num_taxa) throw UsageError{"majority_consensus: trees have different taxon sets"};
    for (const auto& nc : node_clades(tree, num_taxa)) counts[nc.clade].push_back(tree.at(nc.node).age);
  }
  auto total = static_cast<double>(trees.size());

  auto summarize_ages = [&](Clade clade, std::vector<double> ages) {
    auto s = CladeSummary{std::move(clade), static_cast<double>(ages.size()) / total, median(ages), {}};
    if (ages.size() >= k_min_hpd_samples) {
      s.age_hpd = hpd_interval(ages);
    } else {
      auto [lo, hi] = std::ranges::minmax(ages);
      s.age_hpd = {lo, hi};
    }
    return s;
  };

  // Selected clades, largest first so parents precede children.
  auto selected = std::vector<CladeSummary>{};
  for (auto& [clade, ages] : counts) {
    if (static_cast<double>(ages.size()) / total > threshold) selected.push_back(summarize_ages(clade, ages));
  }
  std::ranges::stable_sort(selected, [](const auto& a, const auto& b) { return a.clade.count() > b.clade.count(); });

  auto tree = ConsensusTree{};
  for (auto& s : selected) {
    auto node = ConsensusNode{};
    // Parent: the smallest already placed clade containing this one.
    for (auto i = static_cast<int>(tree.nodes.size()) - 1; i >= 0; --i) {
      if (s.clade.is_proper_subset_of(tree.nodes[i].summary.clade)) {
        node.parent = i;
        break;
      }
    }
    node.summary = std::move(s);
    tree.nodes.push_back(std::move(node));
  }
  for (auto t = 0; t < num_taxa; ++t) {
    auto clade = Clade(num_taxa);
    clade.set(t);
    auto ages = std::vector<double>{};
    for (const auto& tr : trees) {
      for (const auto& node : tr.nodes) {
        if (node.taxon == t) ages.push_back(node.age);
      }
    }
    auto node = ConsensusNode{};
    node.taxon = t;
    for (auto i = static_cast<int>(tree.nodes.size()) - 1; i >= 0; --i) {
      if (tree.nodes[i].taxon < 0 && clade.is_subset_of(tree.nodes[i].summary.clade)) {
        node.parent = i;
        break;
      }
    }
    node.summary = summarize_ages(clade, ages);
    node.summary.support = 1.0;
    tree.nodes.push_back(std::move(node));
  }
  for (auto i = 1; i < static_cast<int>(tree.nodes.size()); ++i) {
    tree.nodes[tree.nodes[i].parent].children.push_back(i);
  }
  for (auto& node : tree.nodes) {
    std::ranges::sort(node.children, [&](int a, int b) { return tree.nodes[a].summary.clade < tree.nodes[b].summary.clade; });
  }
  return tree;
}

auto write_annotated_newick(const ConsensusTree& tree, std::span<const Taxon> taxa) -> std::string {
  auto out = std::string{};
  auto emit = [&](auto&& self, int v) -> void {
    const auto& node = tree.nodes[v];
    if (node.taxon >= 0) {
      out += quote_label(taxa[node.taxon].name);
    } else {
      out += '(';
      for (auto i = 0u; i < node.children.size(); ++i) {
        if (i > 0) out += ',';
        self(self, node.children[i]);
      }
      out += ')';
    }
    const auto& s = node.summary;
    out += "[&support=" + format_number(s.support) + ",age_median=" + format_number(s.age_median) +
           ",age_hpd={" + format_number(s.age_hpd.first) + "," + format_number(s.age_hpd.second) + "}]";
    if (node.parent >= 0) {
      auto duration = std::max(0.0, tree.nodes[node.parent].summary.age_median - s.age_median);
      out += ":" + format_number(duration);
    }
  };
  emit(emit, 0);
  out += ';';
  return out;
}

auto bayes_factor_root(std::span<const double> posterior_roots, std::span<const double> prior_roots,
                       const HypothesisWindows& windows) -> BayesFactor {
  if (posterior_roots.empty() || prior_roots.empty()) throw UsageError{"bayes_factor_root: empty sample"};
  auto count = [](std::span<const double> xs, const AgeWindow& w) {
    return static_cast<long>(std::ranges::count_if(xs, [&](double x) { return w.contains(x); }));
  };
  auto bf = BayesFactor{};
  bf.posterior_steppe = count(posterior_roots, windows.steppe);
  bf.posterior_anatolian = count(posterior_roots, windows.anatolian);
  bf.prior_steppe = count(prior_roots, windows.steppe);
  bf.prior_anatolian = count(prior_roots, windows.anatolian);
  if (bf.prior_steppe == 0 || bf.prior_anatolian == 0) {
    auto empty_window = (bf.prior_steppe == 0 && bf.posterior_steppe == 0) ||
                        (bf.prior_anatolian == 0 && bf.posterior_anatolian == 0);
    bf.sentinel = empty_window ? "**" : "*";
    return bf;
  }
  // Sample sizes cancel between the posterior and prior ratios.
  auto steppe = static_cast<double>(bf.posterior_steppe) / static_cast<double>(bf.prior_steppe);
  auto anatolian = static_cast<double>(bf.posterior_anatolian) / static_cast<double>(bf.prior_anatolian);
  bf.k = steppe / anatolian;
  return bf;
}

auto evidence_label(double k) -> std::string {
  if (k > 150.0) return "Very Strong";
  if (k > 20.0) return "Strong";
  if (k > 3.0) return "Positive";
  if (k >= 1.0) return "Neutral";
  return "Negative";
}

auto format_bayes_factor(const BayesFactor& bf) -> std::string {
  if (!bf.k) return bf.sentinel;
  return "K = " + fixed(*bf.k, 3) + " (" + evidence_label(*bf.k) + ")";
}

// AICM = 2 s^2 - 2 mean(lnL), with the n - 1 sample variance.
auto aicm(std::span<const double> log_likelihoods) -> double {
  auto n = log_likelihoods.size();
  if (n < 2) throw UsageError{"aicm: need at least two log-likelihood values"};
  auto mean = std::accumulate(log_likelihoods.begin(), log_likelihoods.end(), 0.0) / static_cast<double>(n);
  auto ss = 0.0;
  for (auto x : log_likelihoods) ss += (x - mean) * (x - mean);
  auto variance = ss / static_cast<double>(n - 1);
  return 2.0 * variance - 2.0 * mean;
}

auto parse_subgroups(std::string_view text, std::span<const Taxon> taxa) -> std::vector<Subgroup> {
  auto groups = std::vector<Subgroup>{};
  auto in = std::istringstream{std::string{text}};
  auto line = std::string{};
  auto line_no = 0L;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    auto fields = std::vector<std::string>{};
    auto field = std::string{};
    auto fs = std::istringstream{line};
    while (std::getline(fs, field, '\t')) fields.push_back(field);
    if (fields.size() != 3) throw ParseError{"subgroup line must be 'name<TAB>age<TAB>taxa'", line_no};
    auto group = Subgroup{fields[0], std::nullopt, {}};
    if (fields[1] != "-" && fields[1] != k_absent) {
      try {
        group.reference_age = std::stod(fields[1]);
      } catch (const std::exception&) {
        throw ParseError{"bad reference age '" + fields[1] + "'", line_no};
      }
    }
    auto ts = std::istringstream{fields[2]};
    while (std::getline(ts, field, ',')) {
      if (!field.empty()) group.taxa.push_back(field);
    }
    if (group.taxa.empty()) throw ParseError{"subgroup '" + group.name + "' has no taxa", line_no};
    clade_of(group.taxa, taxa);
    groups.push_back(std::move(group));
  }
  return groups;
}

auto node_age_report(std::span<const TimeTree> trees, const ConsensusTree& consensus,
                     std::span<const Subgroup> subgroups, std::span<const Taxon> taxa) -> NodeAgeReport {
  auto report = NodeAgeReport{};
  auto sum = 0.0;
  auto count = 0;
  for (const auto& group : subgroups) {
    auto clade = clade_of(group.taxa, taxa);
    auto row = NodeAgeRow{group.name, consensus.find(clade) >= 0, summarize_clade(trees, clade),
                          group.reference_age, std::nullopt};
    if (row.summary && row.reference_age) {
      row.difference = *row.reference_age - row.summary->age_median;
      sum += *row.difference;
      ++count;
    }
    report.rows.push_back(std::move(row));
  }
  auto all = Clade(taxa.size());
  all.set();
  report.rows.push_back(NodeAgeRow{"root", true, summarize_clade(trees, all), std::nullopt, std::nullopt});
  if (count > 0) report.average_difference = sum / count;
  return report;
}

auto format_node_age_report(const NodeAgeReport& report) -> std::string {
  auto os = std::ostringstream{};
  os << "clade\tmonophyletic\tsupport\tmedian_age\thpd95\treference_age\tdifference\n";
  auto absent = std::string{k_absent};
  for (const auto& row : report.rows) {
    os << row.name << '\t' << (row.monophyletic_in_consensus ? "yes" : "no") << '\t';
    if (row.summary) {
      os << fixed(row.summary->support, 3) << '\t' << fixed(row.summary->age_median, 0) << '\t' << '['
         << fixed(row.summary->age_hpd.first, 0) << '-' << fixed(row.summary->age_hpd.second, 0) << ']';
    } else {
      os << absent << '\t' << absent << '\t' << absent;
    }
    os << '\t' << (row.reference_age ? fixed(*row.reference_age, 0) : absent) << '\t'
       << (row.difference ? fixed(*row.difference, 0) : absent) << '\n';
  }
  os << "average difference\t" << (report.average_difference ? fixed(*report.average_difference, 3) : absent)
     << '\n';
  return os.str();
}

}  // namespace glottochron
