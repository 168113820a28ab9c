// Command-line front end: run, summarize, bf, aicm, validate, simulate.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "glottochron/analysis.h"
#include "glottochron/data_io.h"
#include "glottochron/errors.h"
#include "glottochron/likelihood.h"
#include "glottochron/mcmc.h"
#include "glottochron/simulate.h"
#include "glottochron/tree_priors.h"

namespace fs = std::filesystem;
using namespace glottochron;

namespace {

enum ExitCode { k_ok = 0, k_usage = 1, k_config = 2, k_data = 3, k_numeric = 4 };

struct Loaded {
  RunConfig config;
  fs::path base;  // directory of the config file; relative inputs resolve here
  CognateMatrix matrix;
  std::vector<Subgroup> subgroups;
  std::optional<TimeTree> start_tree;
};

auto resolve(const fs::path& base, const std::string& path) -> std::string {
  auto p = fs::path{path};
  return p.is_absolute() ? p.string() : (base / p).string();
}

auto load_config(const std::string& path) -> std::pair<RunConfig, fs::path> {
  auto in = std::ifstream{path};
  if (!in) throw ConfigError{"cannot read config file '" + path + "'"};
  auto ss = std::ostringstream{};
  ss << in.rdbuf();
  auto base = fs::path{path}.parent_path();
  return {parse_config(ss.str()), base};
}

auto load(const std::string& config_path) -> Loaded {
  auto [config, base] = load_config(config_path);
  require_run_keys(config);
  auto loaded = Loaded{std::move(config), base, {}, {}, {}};
  auto& cfg = loaded.config;
  loaded.matrix = parse_dataset(read_file(resolve(base, cfg.dataset)), cfg.allow_polymorphic);
  if (!cfg.calibrations.empty()) {
    auto cals = parse_calibrations(read_file(resolve(base, cfg.calibrations)), loaded.matrix.taxa);
    apply_calibrations(loaded.matrix.taxa, cals);
  }
  if (!cfg.subgroups.empty()) {
    loaded.subgroups = parse_subgroups(read_file(resolve(base, cfg.subgroups)), loaded.matrix.taxa);
  }
  if (!cfg.start_tree.empty()) {
    loaded.start_tree = parse_newick(read_file(resolve(base, cfg.start_tree)), loaded.matrix.taxa);
    auto problems = validate_tree(*loaded.start_tree, loaded.matrix.taxa);
    if (!problems.empty()) throw DataError{"start tree: " + problems.front()};
  }
  if (cfg.fixed_topology && !loaded.start_tree) {
    throw ConfigError{"key 'fixed_topology' requires key 'start_tree'"};
  }
  return loaded;
}

auto extant_count(std::span<const Taxon> taxa) -> int {
  return static_cast<int>(std::ranges::count_if(taxa, [](const Taxon& t) { return t.calibration.is_extant(); }));
}

auto trace_path(const RunConfig& c, int run) -> std::string {
  return c.output + ".run" + std::to_string(run + 1) + ".trace.tsv";
}
auto trees_path(const RunConfig& c, int run) -> std::string {
  return c.output + ".run" + std::to_string(run + 1) + ".trees";
}

void refuse_overwrite(const std::vector<std::string>& paths, bool force) {
  if (force) return;
  for (const auto& p : paths) {
    if (fs::exists(p)) throw UsageError{"'" + p + "' exists; pass --force to overwrite"};
  }
}

auto open_out(const std::string& path) -> std::ofstream {
  auto out = std::ofstream{path};
  if (!out) throw DataError{"cannot write '" + path + "'"};
  return out;
}

auto make_setup(const Loaded& loaded, int threads) -> McmcSetup {
  const auto& cfg = loaded.config;
  auto setup = McmcSetup{};
  setup.taxa = loaded.matrix.taxa;
  setup.initial = initial_state(cfg, setup.taxa, extant_count(setup.taxa));
  setup.start_tree = loaded.start_tree;
  setup.chain_length = cfg.chain_length;
  setup.thin = cfg.thin;
  setup.n_runs = cfg.n_runs;
  setup.n_chains = cfg.n_chains;
  setup.heat_delta = cfg.heat_delta;
  setup.seed = cfg.seed;
  setup.burn_in = cfg.burn_in;
  setup.print_every = cfg.print_every;
  setup.threads = threads;
  setup.chain.kernels.weights = cfg.weights;
  setup.chain.kernels.fixed = cfg.fixed;
  setup.chain.kernels.fixed_topology = cfg.fixed_topology;
  setup.chain.hyper.root_bounds = cfg.root_bounds;
  setup.chain.ascertainment = cfg.ascertainment;
  setup.chain.prior_only = cfg.prior_only;
  return setup;
}

auto fmt(double v) -> std::string { return format_number(v); }

auto fixed(double v, int digits) -> std::string {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}
auto fixed0(double v) -> std::string { return fixed(v, 0); }
auto fixed3(double v) -> std::string { return fixed(v, 3); }
auto fixed_lnl(double v) -> std::string { return fixed(v, 2); }

auto cmd_run(const std::string& config_path, bool force, int threads) -> int {
  auto loaded = load(config_path);
  const auto& cfg = loaded.config;
  if (threads > 1) {
    std::cerr << "warning: --threads > 1 runs independent runs concurrently; output is not guaranteed "
                 "bit-reproducible\n";
  }
  auto outputs = std::vector<std::string>{};
  for (auto r = 0; r < cfg.n_runs; ++r) {
    outputs.push_back(trace_path(cfg, r));
    outputs.push_back(trees_path(cfg, r));
  }
  outputs.push_back(cfg.output + ".stats.txt");
  refuse_overwrite(outputs, force);

  auto setup = make_setup(loaded, threads);
  auto traces = std::vector<std::ofstream>{};
  auto trees = std::vector<std::ofstream>{};
  for (auto r = 0; r < cfg.n_runs; ++r) {
    traces.push_back(open_out(trace_path(cfg, r)));
    trees.push_back(open_out(trees_path(cfg, r)));
    write_trees_header(trees.back());
  }
  auto header_written = std::vector<bool>(cfg.n_runs, false);
  auto callbacks = McmcCallbacks{};
  const auto& taxa = setup.taxa;
  callbacks.on_sample = [&](int run, const TraceSample& sample, const TimeTree& tree) {
    if (!header_written[run]) {
      write_trace_header(traces[run], sample);
      header_written[run] = true;
    }
    write_trace_row(traces[run], sample);
    write_tree_row(trees[run], sample.iteration, tree, taxa);
  };
  callbacks.on_progress = [&](long iteration, const std::vector<double>& lnl, std::optional<double> asdsf) {
    std::cout << iteration << '\t';
    for (auto i = 0u; i < lnl.size(); ++i) std::cout << (i ? "," : "") << fixed_lnl(lnl[i]);
    std::cout << '\t' << (asdsf ? fmt(*asdsf) : std::string{"-"}) << '\n' << std::flush;
  };
  std::cout << "iter\tLnL\tASDSF\n";
  auto result = run_mc3(setup, loaded.matrix.num_sites() > 0 ? &loaded.matrix : nullptr, callbacks);
  for (auto& t : traces) t.flush();
  for (auto& t : trees) t.flush();

  auto stats = open_out(cfg.output + ".stats.txt");
  stats << "# glottochron run statistics\n";
  stats << "tree_prior\t" << to_string(cfg.tree_prior) << "\nchain_length\t" << cfg.chain_length << "\nseed\t"
        << cfg.seed << "\nprior_only\t" << (cfg.prior_only ? "true" : "false") << '\n';
  for (auto r = 0u; r < result.runs.size(); ++r) {
    const auto& run = result.runs[r];
    stats << "\n[run " << r + 1 << "]\nkernel\tproposed\taccepted\tacceptance\twindow\n";
    for (const auto& k : run.kernel_stats) {
      auto rate = k.proposed > 0 ? static_cast<double>(k.accepted) / static_cast<double>(k.proposed) : 0.0;
      stats << k.name << '\t' << k.proposed << '\t' << k.accepted << '\t' << fixed3(rate) << '\t' << fmt(k.window)
            << '\n';
    }
    auto swap_rate = run.swaps_proposed > 0
                         ? static_cast<double>(run.swaps_accepted) / static_cast<double>(run.swaps_proposed)
                         : 0.0;
    stats << "swaps\t" << run.swaps_proposed << '\t' << run.swaps_accepted << '\t' << fixed3(swap_rate) << '\n';
  }
  if (!cfg.prior_only && loaded.matrix.num_sites() > 0 && !result.runs.empty()) {
    // Sensitivity of the likelihood to the clock at the final cold state of run 1.
    const auto& last = result.runs.front().trace.back();
    auto state = setup.initial;
    state.tree = result.runs.front().trees.back().tree;
    for (const auto& [name, value] : last.scalars) set_scalar(state, name, value);
    state.branch_rates.assign(state.tree.size(), 1.0);
    auto g = alignment_log_likelihood_gradient(state, loaded.matrix, cfg.ascertainment);
    stats << "\nd_lnl_d_clock_rate_at_unit_rates\t" << fmt(g.d_clock_rate) << '\n';
  }
  stats << "\nfinal_asdsf\t" << (result.final_asdsf ? fmt(*result.final_asdsf) : std::string{"-"}) << '\n';

  if (result.final_asdsf) {
    std::cout << "final ASDSF: " << fmt(*result.final_asdsf) << '\n';
    if (*result.final_asdsf >= 0.01) {
      std::cerr << "warning: ASDSF " << fmt(*result.final_asdsf) << " is not below 0.01; runs may not have converged\n";
    }
  }
  return k_ok;
}

auto read_trace_file(const std::string& path) -> std::vector<TraceSample> {
  auto in = std::ifstream{path};
  if (!in) throw DataError{"cannot read '" + path + "'"};
  return read_trace(in);
}

auto after_burn_in(std::vector<TraceSample> samples, double burn_in) -> std::vector<TraceSample> {
  auto skip = burn_in_count(samples.size(), burn_in);
  samples.erase(samples.begin(), samples.begin() + static_cast<long>(skip));
  return samples;
}

void check_burn_in(double burn_in) {
  if (!(burn_in >= 0.0 && burn_in < 1.0)) throw UsageError{"--burn-in must lie in [0, 1)"};
}

auto cmd_summarize(const std::string& config_path, std::optional<double> burn_in_flag, bool force) -> int {
  auto loaded = load(config_path);
  const auto& cfg = loaded.config;
  auto burn_in = burn_in_flag.value_or(cfg.burn_in);
  check_burn_in(burn_in);
  auto consensus_path = cfg.output + ".consensus.tre";
  auto report_path = cfg.output + ".report.txt";
  refuse_overwrite({consensus_path, report_path}, force);

  const auto& taxa = loaded.matrix.taxa;
  auto runs = std::vector<std::vector<TimeTree>>{};
  auto pooled = std::vector<TimeTree>{};
  auto log_l = std::vector<double>{};
  for (auto r = 0; r < cfg.n_runs; ++r) {
    auto in = std::ifstream{trees_path(cfg, r)};
    if (!in) throw DataError{"cannot read '" + trees_path(cfg, r) + "'"};
    auto sampled = read_trees(in, taxa);
    auto& list = runs.emplace_back();
    for (auto& s : sampled) list.push_back(std::move(s.tree));
    auto skip = burn_in_count(list.size(), burn_in);
    pooled.insert(pooled.end(), list.begin() + static_cast<long>(skip), list.end());
    for (const auto& s : after_burn_in(read_trace_file(trace_path(cfg, r)), burn_in)) log_l.push_back(s.log_likelihood);
  }
  if (pooled.empty()) throw DataError{"no trees left after burn-in"};

  auto consensus = majority_consensus(pooled, static_cast<int>(taxa.size()));
  auto report = node_age_report(pooled, consensus, loaded.subgroups, taxa);
  auto roots = std::vector<double>{};
  for (const auto& t : pooled) roots.push_back(t.height());

  auto os = std::ostringstream{};
  os << "# glottochron summary\n";
  os << "runs\t" << cfg.n_runs << "\nburn_in\t" << fmt(burn_in) << "\ntrees\t" << pooled.size() << '\n';
  os << "root_age_median\t" << fixed0(median(roots)) << '\n';
  if (roots.size() >= 20) {
    auto [lo, hi] = hpd_interval(roots);
    os << "root_age_hpd95\t[" << fixed0(lo) << "-" << fixed0(hi) << "]\n";
  } else {
    os << "root_age_hpd95\t-\n";
  }
  auto enough = true;
  for (const auto& list : runs) enough = enough && list.size() - burn_in_count(list.size(), burn_in) >= 2;
  if (runs.size() >= 2 && enough) {
    os << "asdsf\t" << fmt(asdsf(runs, static_cast<int>(taxa.size()), burn_in)) << '\n';
  }
  if (log_l.size() >= 20) os << "aicm\t" << fixed3(aicm(log_l)) << '\n';
  os << "\n[clades]\nsupport\tmedian_age\thpd95\ttaxa\n";
  for (const auto& node : consensus.nodes) {
    if (node.taxon >= 0) continue;
    const auto& s = node.summary;
    os << fixed3(s.support) << '\t' << fixed0(s.age_median) << "\t[" << fixed0(s.age_hpd.first) << "-"
       << fixed0(s.age_hpd.second) << "]\t";
    auto first = true;
    for (auto t = s.clade.find_first(); t != Clade::npos; t = s.clade.find_next(t)) {
      os << (first ? "" : ",") << taxa[t].name;
      first = false;
    }
    os << '\n';
  }
  os << "\n[node ages]\n" << format_node_age_report(report);

  auto consensus_out = open_out(consensus_path);
  consensus_out << write_annotated_newick(consensus, taxa) << '\n';
  auto report_out = open_out(report_path);
  report_out << os.str();
  std::cout << os.str();
  return k_ok;
}

auto cmd_bf(const std::string& posterior, const std::string& prior, std::optional<double> burn_in_flag,
            const std::string& config_path) -> int {
  auto windows = HypothesisWindows{};
  auto burn_in = 0.25;
  if (!config_path.empty()) {
    auto [cfg, base] = load_config(config_path);
    windows = cfg.windows;
    burn_in = cfg.burn_in;
  }
  burn_in = burn_in_flag.value_or(burn_in);
  check_burn_in(burn_in);
  auto roots = [&](const std::string& path) {
    auto out = std::vector<double>{};
    for (const auto& s : after_burn_in(read_trace_file(path), burn_in)) out.push_back(s.tree_height);
    return out;
  };
  auto post = roots(posterior);
  auto pri = roots(prior);
  if (post.empty() || pri.empty()) throw UsageError{"a trace has no samples after burn-in"};
  auto bf = bayes_factor_root(post, pri, windows);
  std::cout << "posterior\tsteppe " << bf.posterior_steppe << "/" << post.size() << "\tanatolian "
            << bf.posterior_anatolian << "/" << post.size() << '\n';
  std::cout << "prior\tsteppe " << bf.prior_steppe << "/" << pri.size() << "\tanatolian " << bf.prior_anatolian << "/"
            << pri.size() << '\n';
  std::cout << format_bayes_factor(bf) << '\n';
  return k_ok;
}

auto cmd_aicm(const std::vector<std::string>& traces, std::optional<double> burn_in_flag) -> int {
  auto burn_in = burn_in_flag.value_or(0.25);
  check_burn_in(burn_in);
  for (const auto& path : traces) {
    auto values = std::vector<double>{};
    for (const auto& s : after_burn_in(read_trace_file(path), burn_in)) values.push_back(s.log_likelihood);
    if (values.size() < 20) {
      throw UsageError{"'" + path + "' has " + std::to_string(values.size()) +
                       " samples after burn-in; AICM needs at least 20"};
    }
    std::cout << path << "\tAICM = " << fixed3(aicm(values)) << '\n';
  }
  return k_ok;
}

auto cmd_validate(const std::string& config_path) -> int {
  auto loaded = load(config_path);
  const auto& cfg = loaded.config;
  const auto& taxa = loaded.matrix.taxa;
  auto state = initial_state(cfg, taxa, extant_count(taxa));
  if (loaded.start_tree) {
    state.tree = *loaded.start_tree;
    state.branch_rates.assign(state.tree.size(), 1.0);
    auto bounds = cfg.tree_prior == TreePriorKind::coalescent ? std::nullopt : std::optional{cfg.root_bounds};
    auto problems = validate_tree(state.tree, taxa, bounds);
    if (!problems.empty()) throw DataError{"start tree: " + problems.front()};
  }
  std::cout << "config ok\n";
  std::cout << "taxa\t" << taxa.size() << " (" << extant_count(taxa) << " extant)\n";
  std::cout << "sites\t" << loaded.matrix.num_sites() << '\n';
  std::cout << "subgroups\t" << loaded.subgroups.size() << '\n';
  std::cout << "tree_prior\t" << to_string(cfg.tree_prior) << '\n';
  return k_ok;
}

auto cmd_simulate(const std::string& config_path, bool force) -> int {
  auto [cfg, base] = load_config(config_path);
  if (!cfg.keys_present.contains("tree_prior")) throw ConfigError{"missing required key 'tree_prior'"};
  auto matrix_path = cfg.output + ".sim.matrix";
  auto tree_path = cfg.output + ".sim.true.tre";
  auto truth_path = cfg.output + ".sim.truth.tsv";
  refuse_overwrite({matrix_path, tree_path, truth_path}, force);
  auto calibrations = cfg.calibrations.empty() ? std::string{} : read_file(resolve(base, cfg.calibrations));
  auto sim = simulate(cfg, calibrations);
  open_out(matrix_path) << write_matrix(sim.matrix);
  open_out(tree_path) << write_newick(sim.truth.tree, sim.taxa) << '\n';
  auto truth = open_out(truth_path);
  truth << "parameter\tvalue\nroot_age\t" << fmt(sim.truth.tree.height()) << '\n';
  for (const auto& name : sampled_scalars(cfg.tree_prior)) truth << name << '\t' << fmt(get_scalar(sim.truth, name)) << '\n';
  std::cout << "simulated " << sim.matrix.num_taxa() << " taxa x " << sim.matrix.num_sites() << " sites, root age "
            << fmt(sim.truth.tree.height()) << '\n';
  return k_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian dating of binary cognate data with tip-dated time trees"};
  app.require_subcommand(1);
  auto config_path = std::string{};
  auto force = false;
  auto threads = 1;
  auto burn_in = std::optional<double>{};

  auto* run = app.add_subcommand("run", "run Metropolis-coupled MCMC");
  run->add_option("--config", config_path, "configuration file")->required();
  run->add_flag("--force", force, "overwrite existing outputs");
  run->add_option("--threads", threads, "run independent runs on this many threads")->check(CLI::PositiveNumber);

  auto* summarize = app.add_subcommand("summarize", "consensus tree and node-age report");
  summarize->add_option("--config", config_path, "configuration file")->required();
  summarize->add_option("--burn-in", burn_in, "leading fraction of samples to discard");
  summarize->add_flag("--force", force, "overwrite existing outputs");

  auto posterior = std::string{};
  auto prior = std::string{};
  auto* bf = app.add_subcommand("bf", "root-age Bayes factor of the two hypothesis windows");
  bf->add_option("posterior", posterior, "posterior trace")->required();
  bf->add_option("prior", prior, "prior-only trace")->required();
  bf->add_option("--config", config_path, "configuration file with window keys");
  bf->add_option("--burn-in", burn_in, "leading fraction of samples to discard");

  auto traces = std::vector<std::string>{};
  auto* aicm_cmd = app.add_subcommand("aicm", "AICM of one or more traces");
  aicm_cmd->add_option("traces", traces, "trace files")->required();
  aicm_cmd->add_option("--burn-in", burn_in, "leading fraction of samples to discard");

  auto* validate = app.add_subcommand("validate", "check configuration and inputs without running");
  validate->add_option("--config", config_path, "configuration file")->required();

  auto* sim = app.add_subcommand("simulate", "simulate a dataset and its true tree");
  sim->add_option("--config", config_path, "configuration file")->required();
  sim->add_flag("--force", force, "overwrite existing outputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    auto code = app.exit(e);
    return code == 0 ? k_ok : k_usage;
  }

  try {
    if (*run) return cmd_run(config_path, force, threads);
    if (*summarize) return cmd_summarize(config_path, burn_in, force);
    if (*bf) return cmd_bf(posterior, prior, burn_in, config_path);
    if (*aicm_cmd) return cmd_aicm(traces, burn_in);
    if (*validate) return cmd_validate(config_path);
    if (*sim) return cmd_simulate(config_path, force);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return k_usage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return k_config;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << " (at " << e.location() << ")\n";
    return k_data;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return k_data;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return k_numeric;
  }
  return k_usage;
}
