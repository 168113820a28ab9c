#include "glottochron/data_io.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <ranges>
#include <sstream>
#include <unordered_map>

#include "glottochron/errors.h"

namespace glottochron {

namespace {

auto trim(std::string_view s) -> std::string_view {
  auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

auto split_lines(std::string_view text) -> std::vector<std::string_view> {
  auto lines = std::vector<std::string_view>{};
  while (!text.empty()) {
    auto pos = text.find('\n');
    auto line = text.substr(0, pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (pos == std::string_view::npos) break;
    text.remove_prefix(pos + 1);
  }
  return lines;
}

auto split(std::string_view s, char sep) -> std::vector<std::string_view> {
  auto parts = std::vector<std::string_view>{};
  while (true) {
    auto pos = s.find(sep);
    parts.push_back(s.substr(0, pos));
    if (pos == std::string_view::npos) break;
    s.remove_prefix(pos + 1);
  }
  return parts;
}

template <typename T>
auto parse_value(std::string_view s) -> std::optional<T> {
  s = trim(s);
  auto value = T{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

auto to_cell(char c) -> std::optional<Cell> {
  switch (c) {
    case '0': return Cell::absent;
    case '1': return Cell::present;
    case '?': return Cell::missing;
    default: return std::nullopt;
  }
}

auto make_taxa(const std::vector<std::string>& names) -> std::vector<Taxon> {
  auto taxa = std::vector<Taxon>{};
  for (auto i = 0; i < static_cast<int>(names.size()); ++i) {
    taxa.push_back(Taxon{i, names[i], {}});
  }
  return taxa;
}

}  // namespace

auto to_char(Cell c) -> char {
  switch (c) {
    case Cell::absent: return '0';
    case Cell::present: return '1';
    case Cell::missing: return '?';
  }
  return '?';
}

auto CognateMatrix::column(int site) const -> std::vector<Cell> {
  auto col = std::vector<Cell>{};
  col.reserve(rows.size());
  for (const auto& row : rows) col.push_back(row.at(site));
  return col;
}

auto parse_cognate_table(std::string_view text) -> CognateClassTable {
  auto table = CognateClassTable{};
  auto lines = split_lines(text);
  auto line_no = 0;
  auto header_seen = false;
  for (auto raw : lines) {
    ++line_no;
    if (trim(raw).empty() || trim(raw).front() == '#') continue;
    auto fields = split(raw, '\t');
    if (!header_seen) {
      if (fields.size() < 2) throw ParseError{"cognate table header needs at least one meaning", line_no};
      for (auto i = 1u; i < fields.size(); ++i) table.meanings.emplace_back(trim(fields[i]));
      header_seen = true;
      continue;
    }
    if (fields.size() != table.meanings.size() + 1) {
      throw ParseError{"row has " + std::to_string(fields.size() - 1) + " meanings, header has " +
                           std::to_string(table.meanings.size()),
                       line_no};
    }
    auto name = std::string{trim(fields[0])};
    if (std::ranges::find(table.taxa, name) != table.taxa.end()) {
      throw ParseError{"duplicate taxon '" + name + "'", line_no};
    }
    table.taxa.push_back(name);
    auto& row = table.classes.emplace_back();
    for (auto i = 1u; i < fields.size(); ++i) {
      auto cell = trim(fields[i]);
      auto& ids = row.emplace_back();
      if (cell.empty() || cell == "?") continue;
      for (auto part : split(cell, '/')) {
        auto id = parse_value<int>(part);
        if (!id) throw ParseError{"bad cognate class '" + std::string{cell} + "'", line_no};
        ids.push_back(*id);
      }
    }
  }
  if (!header_seen || table.taxa.empty()) throw ParseError{"empty cognate table", line_no};
  return table;
}

auto binarize(const CognateClassTable& table, bool allow_polymorphic) -> CognateMatrix {
  if (table.taxa.empty() || table.meanings.empty()) throw DataError{"binarize: empty table"};
  auto matrix = CognateMatrix{};
  matrix.taxa = make_taxa(table.taxa);
  matrix.meanings = table.meanings;
  matrix.rows.resize(table.taxa.size());
  auto num_taxa = table.taxa.size();
  for (auto m = 0; m < static_cast<int>(table.meanings.size()); ++m) {
    auto ids = std::set<int>{};
    for (auto t = 0u; t < num_taxa; ++t) {
      const auto& entry = table.classes.at(t).at(m);
      if (entry.size() > 1 && !allow_polymorphic) {
        throw DataError{"taxon '" + table.taxa[t] + "' has several classes for meaning '" +
                        table.meanings[m] + "' (polymorphism not enabled)"};
      }
      ids.insert(entry.begin(), entry.end());
    }
    if (ids.empty()) {
      throw DataError{"meaning '" + table.meanings[m] + "' has no observed cognate class"};
    }
    for (auto id : ids) {
      matrix.site_meaning.push_back(m);
      for (auto t = 0u; t < num_taxa; ++t) {
        const auto& entry = table.classes[t][m];
        auto cell = entry.empty() ? Cell::missing
                    : std::ranges::find(entry, id) != entry.end() ? Cell::present
                                                                  : Cell::absent;
        matrix.rows[t].push_back(cell);
      }
    }
  }
  return matrix;
}

auto parse_matrix(std::string_view text) -> CognateMatrix {
  auto lines = split_lines(text);
  auto matrix = CognateMatrix{};
  auto line_no = 0;
  auto ntax = -1;
  auto nchar = -1;
  auto names = std::vector<std::string>{};
  for (auto raw : lines) {
    ++line_no;
    auto line = trim(raw);
    if (line.empty()) continue;
    if (ntax < 0) {
      auto fields = std::istringstream{std::string{line}};
      if (!(fields >> ntax >> nchar) || ntax < 1 || nchar < 1) {
        throw ParseError{"matrix header must be 'ntax nchar'", line_no};
      }
      continue;
    }
    auto tab = line.rfind('\t');
    if (tab == std::string_view::npos) throw ParseError{"row must be 'name<TAB>characters'", line_no};
    auto name = std::string{trim(line.substr(0, tab))};
    auto chars = trim(line.substr(tab + 1));
    if (name.empty()) throw ParseError{"empty taxon name", line_no};
    if (std::ranges::find(names, name) != names.end()) {
      throw ParseError{"duplicate taxon '" + name + "'", line_no};
    }
    if (static_cast<int>(names.size()) == ntax) {
      throw ParseError{"more taxa than the header's " + std::to_string(ntax), line_no};
    }
    if (static_cast<int>(chars.size()) != nchar) {
      throw ParseError{"taxon '" + name + "' has " + std::to_string(chars.size()) +
                           " characters, header says " + std::to_string(nchar),
                       line_no};
    }
    auto& row = matrix.rows.emplace_back();
    for (auto c : chars) {
      auto cell = to_cell(c);
      if (!cell) throw ParseError{std::string{"bad character '"} + c + "'", line_no};
      row.push_back(*cell);
    }
    names.push_back(name);
  }
  if (ntax < 0) throw ParseError{"empty matrix", line_no};
  if (static_cast<int>(names.size()) != ntax) {
    throw ParseError{"header declares " + std::to_string(ntax) + " taxa, found " +
                         std::to_string(names.size()),
                     line_no};
  }
  matrix.taxa = make_taxa(names);
  for (auto s = 0; s < nchar; ++s) {
    matrix.site_meaning.push_back(s);
    matrix.meanings.push_back("site" + std::to_string(s + 1));
  }
  return matrix;
}

auto write_matrix(const CognateMatrix& matrix) -> std::string {
  auto os = std::ostringstream{};
  os << matrix.num_taxa() << ' ' << matrix.num_sites() << '\n';
  for (auto t = 0; t < matrix.num_taxa(); ++t) {
    os << matrix.taxa[t].name << '\t';
    for (auto c : matrix.rows[t]) os << to_char(c);
    os << '\n';
  }
  return os.str();
}

auto parse_dataset(std::string_view text, bool allow_polymorphic) -> CognateMatrix {
  for (auto line : split_lines(text)) {
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (line.find('\t') != std::string_view::npos) {
      return binarize(parse_cognate_table(text), allow_polymorphic);
    }
    break;
  }
  return parse_matrix(text);
}

auto parse_calibrations(std::string_view text, std::span<const Taxon> taxa)
    -> std::vector<CalibrationPrior> {
  auto result = std::vector<CalibrationPrior>(taxa.size());
  auto seen = std::vector<bool>(taxa.size(), false);
  auto line_no = 0;
  for (auto raw : split_lines(text)) {
    ++line_no;
    auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto fields = split(line, ',');
    if (fields.size() != 3) throw ParseError{"calibration line must be 'name,min_age,max_age'", line_no};
    auto name = trim(fields[0]);
    auto lo = parse_value<double>(fields[1]);
    auto hi = parse_value<double>(fields[2]);
    if (!lo || !hi) throw ParseError{"bad age in calibration for '" + std::string{name} + "'", line_no};
    auto it = std::ranges::find_if(taxa, [&](const Taxon& t) { return t.name == name; });
    if (it == taxa.end()) {
      throw DataError{"calibration names taxon '" + std::string{name} + "' which is not in the dataset"};
    }
    if (*lo < 0.0 || *lo > *hi) {
      throw DataError{"calibration for '" + std::string{name} + "' needs 0 <= min_age <= max_age"};
    }
    auto idx = static_cast<std::size_t>(it - taxa.begin());
    if (seen[idx]) throw DataError{"taxon '" + std::string{name} + "' calibrated twice"};
    seen[idx] = true;
    result[idx] = CalibrationPrior{*lo, *hi};
  }
  return result;
}

void apply_calibrations(std::vector<Taxon>& taxa, std::span<const CalibrationPrior> calibrations) {
  for (auto i = 0u; i < taxa.size(); ++i) taxa[i].calibration = calibrations[i];
}

// ---- run configuration ----

namespace {

constexpr std::string_view k_scalar_names[] = {
    "alpha", "clock_rate", "diversification", "fossil_sampling", "igr_variance",
    "pi0",   "pop_size",   "turnover",
};

auto parse_bool(std::string_view key, std::string_view v) -> bool {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError{"key '" + std::string{key} + "': expected true or false, got '" + std::string{v} + "'"};
}

template <typename T>
auto require_number(std::string_view key, std::string_view v) -> T {
  auto parsed = parse_value<T>(v);
  if (!parsed) {
    throw ConfigError{"key '" + std::string{key} + "': bad numeric value '" + std::string{v} + "'"};
  }
  return *parsed;
}

auto parse_pair(std::string_view key, std::string_view v) -> std::pair<double, double> {
  auto parts = split(v, ',');
  if (parts.size() != 2) {
    throw ConfigError{"key '" + std::string{key} + "': expected 'lo,hi'"};
  }
  return {require_number<double>(key, parts[0]), require_number<double>(key, parts[1])};
}

auto is_scalar_name(std::string_view name) -> bool {
  return std::ranges::find(k_scalar_names, name) != std::end(k_scalar_names);
}

}  // namespace

auto scalar_parameter_names() -> std::span<const std::string_view> { return k_scalar_names; }

auto parse_config(std::string_view text) -> RunConfig {
  auto config = RunConfig{};
  using Setter = std::function<void(std::string_view, std::string_view)>;
  auto setters = std::unordered_map<std::string_view, Setter>{
      {"dataset", [&](auto, auto v) { config.dataset = v; }},
      {"calibrations", [&](auto, auto v) { config.calibrations = v; }},
      {"tree_prior",
       [&](auto k, auto v) {
         try {
           config.tree_prior = parse_tree_prior_kind(v);
         } catch (const UsageError&) {
           throw ConfigError{"key '" + std::string{k} + "': expected coalescent, fbd or uniform"};
         }
       }},
      {"n_extant_family", [&](auto k, auto v) { config.n_extant_family = require_number<int>(k, v); }},
      {"chain_length", [&](auto k, auto v) { config.chain_length = require_number<long>(k, v); }},
      {"thin", [&](auto k, auto v) { config.thin = require_number<long>(k, v); }},
      {"n_runs", [&](auto k, auto v) { config.n_runs = require_number<int>(k, v); }},
      {"n_chains", [&](auto k, auto v) { config.n_chains = require_number<int>(k, v); }},
      {"heat_delta", [&](auto k, auto v) { config.heat_delta = require_number<double>(k, v); }},
      {"seed", [&](auto k, auto v) { config.seed = require_number<std::uint64_t>(k, v); }},
      {"root_bounds",
       [&](auto k, auto v) {
         auto [lo, hi] = parse_pair(k, v);
         config.root_bounds = RootBounds{lo, hi};
       }},
      {"prior_only", [&](auto k, auto v) { config.prior_only = parse_bool(k, v); }},
      {"output", [&](auto, auto v) { config.output = v; }},
      {"burn_in", [&](auto k, auto v) { config.burn_in = require_number<double>(k, v); }},
      {"allow_polymorphic", [&](auto k, auto v) { config.allow_polymorphic = parse_bool(k, v); }},
      {"ascertainment",
       [&](auto k, auto v) {
         if (v == "global") {
           config.ascertainment = AscertainmentMode::global;
         } else if (v == "per_block") {
           config.ascertainment = AscertainmentMode::per_block;
         } else {
           throw ConfigError{"key '" + std::string{k} + "': expected global or per_block"};
         }
       }},
      {"print_every", [&](auto k, auto v) { config.print_every = require_number<long>(k, v); }},
      {"weight.topology", [&](auto k, auto v) { config.weights.topology = require_number<double>(k, v); }},
      {"weight.node_ages", [&](auto k, auto v) { config.weights.node_ages = require_number<double>(k, v); }},
      {"weight.tip_ages", [&](auto k, auto v) { config.weights.tip_ages = require_number<double>(k, v); }},
      {"weight.scalars", [&](auto k, auto v) { config.weights.scalars = require_number<double>(k, v); }},
      {"weight.branch_rates",
       [&](auto k, auto v) { config.weights.branch_rates = require_number<double>(k, v); }},
      {"weight.ancestor_toggle",
       [&](auto k, auto v) { config.weights.ancestor_toggle = require_number<double>(k, v); }},
      {"steppe_window",
       [&](auto k, auto v) {
         auto [lo, hi] = parse_pair(k, v);
         config.windows.steppe = AgeWindow{lo, hi};
       }},
      {"anatolian_window",
       [&](auto k, auto v) {
         auto [lo, hi] = parse_pair(k, v);
         config.windows.anatolian = AgeWindow{lo, hi};
       }},
      {"subgroups", [&](auto, auto v) { config.subgroups = v; }},
      {"fixed",
       [&](auto k, auto v) {
         for (auto part : split(v, ',')) {
           auto name = trim(part);
           if (name.empty()) continue;
           if (!is_scalar_name(name)) {
             throw ConfigError{"key '" + std::string{k} + "': unknown parameter '" + std::string{name} + "'"};
           }
           config.fixed.emplace(name);
         }
       }},
      {"start_tree", [&](auto, auto v) { config.start_tree = v; }},
      {"fixed_topology", [&](auto k, auto v) { config.fixed_topology = parse_bool(k, v); }},
      {"sim_taxa", [&](auto k, auto v) { config.sim_taxa = require_number<int>(k, v); }},
      {"sim_sites", [&](auto k, auto v) { config.sim_sites = require_number<int>(k, v); }},
      {"sim_burn", [&](auto k, auto v) { config.sim_burn = require_number<long>(k, v); }},
  };

  auto line_no = 0;
  for (auto raw : split_lines(text)) {
    ++line_no;
    auto line = raw.substr(0, raw.find('#'));
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError{"line " + std::to_string(line_no) + ": expected 'key = value'"};
    }
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    auto key_str = std::string{key};
    if (config.keys_present.contains(key_str)) {
      throw ConfigError{"key '" + key_str + "' given twice (line " + std::to_string(line_no) + ")"};
    }
    config.keys_present.insert(key_str);
    if (key.starts_with("init.") || key.starts_with("sim.")) {
      auto dot = key.find('.');
      auto name = key.substr(dot + 1);
      if (!is_scalar_name(name)) {
        throw ConfigError{"unknown key '" + key_str + "' at line " + std::to_string(line_no)};
      }
      auto& target = key.starts_with("init.") ? config.initial : config.sim_params;
      target[std::string{name}] = require_number<double>(key, value);
      continue;
    }
    auto it = setters.find(key);
    if (it == setters.end()) {
      throw ConfigError{"unknown key '" + key_str + "' at line " + std::to_string(line_no)};
    }
    it->second(key, value);
  }

  if (config.chain_length <= 0) throw ConfigError{"key 'chain_length' must be positive"};
  if (config.thin <= 0) throw ConfigError{"key 'thin' must be positive"};
  if (!(config.root_bounds.min_age < config.root_bounds.max_age)) {
    throw ConfigError{"key 'root_bounds' must satisfy min < max"};
  }
  if (config.n_runs < 1) throw ConfigError{"key 'n_runs' must be at least 1"};
  if (config.n_chains < 1) throw ConfigError{"key 'n_chains' must be at least 1"};
  if (config.heat_delta < 0.0) throw ConfigError{"key 'heat_delta' must be non-negative"};
  if (!(config.burn_in >= 0.0 && config.burn_in < 1.0)) throw ConfigError{"key 'burn_in' must lie in [0, 1)"};
  if (config.print_every <= 0) throw ConfigError{"key 'print_every' must be positive"};
  if (config.n_extant_family && *config.n_extant_family < 1) {
    throw ConfigError{"key 'n_extant_family' must be positive"};
  }
  if (!(config.windows.steppe.lo <= config.windows.steppe.hi &&
        config.windows.steppe.hi < config.windows.anatolian.lo &&
        config.windows.anatolian.lo <= config.windows.anatolian.hi)) {
    throw ConfigError{"keys 'steppe_window' and 'anatolian_window' must be disjoint and ordered"};
  }
  return config;
}

void require_run_keys(const RunConfig& config) {
  if (config.dataset.empty()) throw ConfigError{"missing required key 'dataset'"};
  if (!config.keys_present.contains("tree_prior")) throw ConfigError{"missing required key 'tree_prior'"};
  if (config.tree_prior == TreePriorKind::fbd && !config.n_extant_family) {
    throw ConfigError{"missing required key 'n_extant_family' (needed by tree_prior = fbd)"};
  }
}

// ---- traces ----

auto format_number(double value) -> std::string {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

void write_trace_header(std::ostream& os, const TraceSample& schema) {
  os << k_trace_banner << '\n' << "Sample\tLnL\tLnPrior\tTreeHeight";
  for (const auto& [name, _] : schema.scalars) os << '\t' << name;
  os << '\n';
}

void write_trace_row(std::ostream& os, const TraceSample& sample) {
  os << sample.iteration << '\t' << format_number(sample.log_likelihood) << '\t'
     << format_number(sample.log_prior) << '\t' << format_number(sample.tree_height);
  for (const auto& [_, v] : sample.scalars) os << '\t' << format_number(v);
  os << '\n';
}

void write_trace(std::span<const TraceSample> samples, std::ostream& os) {
  auto schema = samples.empty() ? TraceSample{} : samples.front();
  write_trace_header(os, schema);
  for (const auto& s : samples) {
    if (s.scalars.size() != schema.scalars.size() ||
        !std::ranges::equal(s.scalars | std::views::keys, schema.scalars | std::views::keys)) {
      throw UsageError{"write_trace: samples do not share one schema"};
    }
    write_trace_row(os, s);
  }
  if (!os) throw std::runtime_error{"write_trace: output stream failed"};
}

auto read_trace(std::istream& is) -> std::vector<TraceSample> {
  auto samples = std::vector<TraceSample>{};
  auto columns = std::vector<std::string>{};
  auto line = std::string{};
  auto line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    auto view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    auto fields = split(view, '\t');
    if (columns.empty()) {
      if (fields.size() < 4 || fields[0] != "Sample") throw ParseError{"trace header must begin with 'Sample'", line_no};
      for (auto f : fields) columns.emplace_back(trim(f));
      continue;
    }
    if (fields.size() != columns.size()) throw ParseError{"trace row has the wrong number of columns", line_no};
    auto sample = TraceSample{};
    auto it = parse_value<long>(fields[0]);
    if (!it) throw ParseError{"bad sample index", line_no};
    sample.iteration = *it;
    for (auto c = 1u; c < fields.size(); ++c) {
      auto v = parse_value<double>(fields[c]);
      if (!v) throw ParseError{"bad value in column '" + columns[c] + "'", line_no};
      if (c == 1) sample.log_likelihood = *v;
      else if (c == 2) sample.log_prior = *v;
      else if (c == 3) sample.tree_height = *v;
      else sample.scalars[columns[c]] = *v;
    }
    samples.push_back(std::move(sample));
  }
  if (columns.empty()) throw ParseError{"trace has no header", line_no};
  return samples;
}

// ---- Newick ----

auto quote_label(std::string_view label) -> std::string {
  if (!label.empty() && label.find_first_of(" \t()[]':;,") == std::string_view::npos) {
    return std::string{label};
  }
  auto out = std::string{"'"};
  for (auto c : label) {
    if (c == '\'') out += '\'';
    out += c;
  }
  out += '\'';
  return out;
}

auto write_newick(const TimeTree& tree, std::span<const Taxon> taxa) -> std::string {
  auto out = std::string{};
  auto emit = [&](auto&& self, int v) -> void {
    const auto& node = tree.at(v);
    if (node.is_tip()) {
      out += quote_label(taxa[node.taxon].name);
    } else {
      out += '(';
      self(self, node.children[0]);
      out += ',';
      self(self, node.children[1]);
      out += ')';
    }
    if (v != tree.root) {
      out += ':';
      out += format_number(branch_duration(tree, v));
    }
  };
  emit(emit, tree.root);
  out += ';';
  return out;
}

namespace {

struct NewickParser {
  std::string_view text;
  std::size_t pos = 0;

  struct Raw {
    std::vector<int> children;
    std::string label;
    std::optional<double> length;
  };
  std::vector<Raw> raw;

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError{"newick: " + what + " at position " + std::to_string(pos), static_cast<long>(pos)};
  }

  void skip() {
    while (pos < text.size()) {
      auto c = text[pos];
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        ++pos;
      } else if (c == '[') {
        auto close = text.find(']', pos);
        if (close == std::string_view::npos) fail("unterminated comment");
        pos = close + 1;
      } else {
        break;
      }
    }
  }

  auto peek() -> char {
    skip();
    return pos < text.size() ? text[pos] : '\0';
  }

  auto label() -> std::string {
    skip();
    auto out = std::string{};
    if (pos < text.size() && text[pos] == '\'') {
      ++pos;
      while (true) {
        if (pos >= text.size()) fail("unterminated quoted label");
        if (text[pos] == '\'') {
          if (pos + 1 < text.size() && text[pos + 1] == '\'') {
            out += '\'';
            pos += 2;
            continue;
          }
          ++pos;
          break;
        }
        out += text[pos++];
      }
      return out;
    }
    while (pos < text.size() && std::string_view{"(),:;[ \t\r\n"}.find(text[pos]) == std::string_view::npos) {
      out += text[pos++];
    }
    return out;
  }

  auto node() -> int {
    auto r = Raw{};
    if (peek() == '(') {
      ++pos;
      r.children.push_back(node());
      while (peek() == ',') {
        ++pos;
        r.children.push_back(node());
      }
      if (peek() != ')') fail("expected ')'");
      ++pos;
    }
    r.label = label();
    if (peek() == ':') {
      ++pos;
      skip();
      auto start = pos;
      while (pos < text.size() && std::string_view{"(),:;[ \t\r\n"}.find(text[pos]) == std::string_view::npos) ++pos;
      auto v = parse_value<double>(text.substr(start, pos - start));
      if (!v || *v < 0.0) {
        pos = start;
        fail("bad branch length");
      }
      r.length = *v;
    }
    raw.push_back(std::move(r));
    return static_cast<int>(raw.size()) - 1;
  }
};

}  // namespace

auto parse_newick(std::string_view text, std::span<const Taxon> taxa) -> TimeTree {
  auto parser = NewickParser{text, 0, {}};
  auto top = parser.node();
  if (parser.peek() != ';') parser.fail("expected ';'");
  ++parser.pos;
  if (parser.peek() != '\0') parser.fail("trailing characters");

  const auto& raw = parser.raw;
  auto num_taxa = static_cast<int>(taxa.size());
  auto tree = TimeTree{};
  tree.nodes.resize(raw.size());
  // Tips take node ids equal to their taxon ids, internal nodes follow.
  auto ids = std::vector<int>(raw.size(), k_no_node);
  auto next_internal = num_taxa;
  auto seen = std::vector<bool>(taxa.size(), false);
  for (auto i = 0; i < static_cast<int>(raw.size()); ++i) {
    const auto& r = raw[i];
    if (r.children.empty()) {
      auto it = std::ranges::find_if(taxa, [&](const Taxon& t) { return t.name == r.label; });
      if (it == taxa.end()) throw ParseError{"newick: unknown taxon '" + r.label + "'", 0};
      auto t = static_cast<int>(it - taxa.begin());
      if (seen[t]) throw ParseError{"newick: taxon '" + r.label + "' appears twice", 0};
      seen[t] = true;
      ids[i] = t;
    } else {
      if (r.children.size() != 2) {
        throw ParseError{"newick: node with " + std::to_string(r.children.size()) + " children", 0};
      }
      ids[i] = next_internal++;
    }
  }
  if (std::ranges::count(seen, true) != num_taxa) throw ParseError{"newick: tree does not contain every taxon", 0};
  if (next_internal != static_cast<int>(raw.size())) throw ParseError{"newick: tree is not binary", 0};

  for (auto i = 0; i < static_cast<int>(raw.size()); ++i) {
    const auto& r = raw[i];
    auto& node = tree.nodes[ids[i]];
    if (r.children.empty()) node.taxon = ids[i];
    for (auto c = 0u; c < r.children.size(); ++c) {
      node.children[c] = ids[r.children[c]];
      tree.nodes[ids[r.children[c]]].parent = ids[i];
    }
    if (i != top && !r.length) throw ParseError{"newick: missing branch length", 0};
  }
  tree.root = ids[top];

  // Depth below the root, then anchor to tip ages.
  auto depth = std::vector<double>(raw.size(), 0.0);
  auto length_of = std::vector<double>(raw.size(), 0.0);
  for (auto i = 0; i < static_cast<int>(raw.size()); ++i) length_of[ids[i]] = raw[i].length.value_or(0.0);
  auto order = tree.postorder();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto v = *it;
    if (v != tree.root) depth[v] = depth[tree.at(v).parent] + length_of[v];
  }
  auto extant_anchor = std::optional<double>{};
  auto midpoint_sum = 0.0;
  auto midpoint_count = 0;
  for (auto t = 0; t < num_taxa; ++t) {
    const auto& cal = taxa[t].calibration;
    if (cal.is_extant()) {
      extant_anchor = std::max(extant_anchor.value_or(0.0), depth[t]);
    } else {
      midpoint_sum += depth[t] + cal.midpoint();
      ++midpoint_count;
    }
  }
  auto root_age = extant_anchor ? *extant_anchor : midpoint_sum / midpoint_count;
  for (auto v = 0; v < tree.size(); ++v) tree.nodes[v].age = root_age - depth[v];
  for (auto t = 0; t < num_taxa; ++t) {
    auto& node = tree.nodes[t];
    const auto& cal = taxa[t].calibration;
    if (node.parent != k_no_node && length_of[t] == 0.0) {
      node.is_sampled_ancestor = true;
      node.age = tree.at(node.parent).age;
    }
    // Undo rounding drift from summing durations.
    auto tol = 1e-6 * std::max(1.0, root_age);
    if (node.age < cal.min_age && node.age > cal.min_age - tol) node.age = cal.min_age;
    if (node.age > cal.max_age && node.age < cal.max_age + tol) node.age = cal.max_age;
    if (node.is_sampled_ancestor) tree.at(node.parent).age = node.age;
  }
  return tree;
}

void write_trees_header(std::ostream& os) { os << k_trees_banner << '\n'; }

void write_tree_row(std::ostream& os, long iteration, const TimeTree& tree, std::span<const Taxon> taxa) {
  os << iteration << '\t' << write_newick(tree, taxa) << '\n';
}

void write_trees(std::span<const SampledTree> trees, std::span<const Taxon> taxa, std::ostream& os) {
  write_trees_header(os);
  for (const auto& t : trees) write_tree_row(os, t.iteration, t.tree, taxa);
  if (!os) throw std::runtime_error{"write_trees: output stream failed"};
}

auto read_trees(std::istream& is, std::span<const Taxon> taxa) -> std::vector<SampledTree> {
  auto out = std::vector<SampledTree>{};
  auto line = std::string{};
  auto line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    auto view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    auto tab = view.find('\t');
    if (tab == std::string_view::npos) throw ParseError{"tree row must be 'iteration<TAB>newick'", line_no};
    auto it = parse_value<long>(view.substr(0, tab));
    if (!it) throw ParseError{"bad iteration", line_no};
    try {
      out.push_back(SampledTree{*it, parse_newick(view.substr(tab + 1), taxa)});
    } catch (const ParseError& e) {
      throw ParseError{std::string{e.what()} + " (line " + std::to_string(line_no) + ")", line_no};
    }
  }
  return out;
}

auto read_file(const std::string& path) -> std::string {
  auto in = std::ifstream{path, std::ios::binary};
  if (!in) throw DataError{"cannot open '" + path + "'"};
  auto os = std::ostringstream{};
  os << in.rdbuf();
  return os.str();
}

}  // namespace glottochron
