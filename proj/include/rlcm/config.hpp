#pragma once

#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rlcm/errors.hpp"
#include "rlcm/mathutil.hpp"
#include "rlcm/simbench.hpp"

namespace rlcm {

// ---------------------------------------------------------------------------
// value parsing

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  if (!s.empty() && s.back() == ',') out.push_back("");
  return out;
}

}  // namespace detail

inline double parse_double_value(const std::string& raw) {
  const std::string s = detail::trim(raw);
  try {
    std::size_t idx = 0;
    const double v = std::stod(s, &idx);
    if (idx != s.size()) throw ConfigError("trailing characters in number: " + raw);
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("not a number: " + raw);
  }
}

// Accepts plain decimals and simple fractions such as 1/6.
inline double parse_fraction_value(const std::string& raw) {
  const std::string s = detail::trim(raw);
  const std::size_t slash = s.find('/');
  if (slash == std::string::npos) return parse_double_value(s);
  const double num = parse_double_value(s.substr(0, slash));
  const double den = parse_double_value(s.substr(slash + 1));
  if (den == 0.0) throw ConfigError("zero denominator: " + raw);
  return num / den;
}

inline long parse_long_value(const std::string& raw) {
  const std::string s = detail::trim(raw);
  try {
    std::size_t idx = 0;
    const long v = std::stol(s, &idx);
    if (idx != s.size()) throw ConfigError("trailing characters in integer: " + raw);
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("not an integer: " + raw);
  }
}

inline std::uint64_t parse_u64_value(const std::string& raw) {
  const std::string s = detail::trim(raw);
  if (!s.empty() && s[0] == '-') throw ConfigError("seed must be nonnegative: " + raw);
  try {
    std::size_t idx = 0;
    const unsigned long long v = std::stoull(s, &idx);
    if (idx != s.size()) throw ConfigError("trailing characters in integer: " + raw);
    return static_cast<std::uint64_t>(v);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("not an integer: " + raw);
  }
}

inline bool parse_bool_value(const std::string& raw) {
  const std::string s = detail::trim(raw);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("not a boolean (use true/false/1/0): " + raw);
}

inline std::vector<double> parse_fraction_list(const std::string& raw) {
  std::vector<double> out;
  for (const std::string& item : detail::split_csv_list(raw))
    out.push_back(parse_fraction_value(item));
  return out;
}

// ---------------------------------------------------------------------------
// application configuration

// Benchmark grid axes; the defaults reproduce the canonical replication-study
// factorial. Override axes in the config file for smaller runs.
struct BenchPlan {
  std::vector<std::size_t> l = {50, 100, 200, 400};
  std::vector<std::size_t> n = {50, 100, 200};
  std::vector<double> theta0 = {0.8, 0.9};
  std::vector<double> psi0 = {0.05, 0.15};
  std::vector<std::string> pi0 = {"uniform", "sim1"};
  std::vector<double> s = {0.1, 0.2};
  std::size_t m = 3;
  long r = 60;
  std::uint64_t seed_base = 1;
  std::vector<std::string> methods = {"hc", "lca", "rlcm"};
  long k = 0;  // baseline cluster count; 0 picks min(2^m, n)
};

struct AppConfig {
  SamplerConfig sampler;

  SimDesign sim;
  std::string sim_pi0_spec = "sim1";

  long ppc_replicates = 500;

  BenchPlan bench;
  long lca_iterations = 1000;
  long lca_burn_in = 500;

  AppConfig() {
    sim.psi0 = 0.15;
    sim.pi0 = sim1_pattern_weights();
  }
};

inline std::vector<double> resolve_pattern_weights(const std::string& spec, std::size_t m) {
  if (spec == "uniform") return uniform_pattern_weights(m);
  if (spec == "sim1") {
    if (m != 3) throw ConfigError("sim1 pattern weights need m = 3");
    return sim1_pattern_weights();
  }
  return parse_fraction_list(spec);
}

// ---------------------------------------------------------------------------
// key dispatch

namespace detail {

inline std::vector<std::size_t> parse_size_list(const std::string& raw) {
  std::vector<std::size_t> out;
  for (const std::string& item : split_csv_list(raw)) {
    const long v = parse_long_value(item);
    if (v < 1) throw ConfigError("list entries must be positive: " + raw);
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

inline std::vector<std::string> parse_name_list(const std::string& raw) {
  std::vector<std::string> out = split_csv_list(raw);
  for (const std::string& v : out)
    if (v.empty()) throw ConfigError("empty entry in list: " + raw);
  return out;
}

inline BinaryMatrix parse_bit_rows(const std::string& raw) {
  std::vector<std::string> rows;
  std::string item;
  std::istringstream in(raw);
  while (std::getline(in, item, ';')) rows.push_back(trim(item));
  if (rows.empty()) throw ConfigError("empty bit-row matrix");
  return BinaryMatrix::from_row_strings(rows);
}

inline std::vector<std::vector<int>> parse_block_list(const std::string& raw) {
  std::vector<std::vector<int>> blocks;
  std::string blk;
  std::istringstream in(raw);
  while (std::getline(in, blk, ';')) {
    std::vector<int> ids;
    std::istringstream bin(blk);
    long v = 0;
    while (bin >> v) {
      if (v < 0) throw ConfigError("subject index must be nonnegative");
      ids.push_back(static_cast<int>(v));
    }
    if (!bin.eof()) throw ConfigError("bad subject index in block: " + blk);
    if (!ids.empty()) blocks.push_back(std::move(ids));
  }
  return blocks;
}

}  // namespace detail

// Applies one key=value setting; unknown keys are rejected.
inline void apply_config_kv(AppConfig& c, const std::string& key, const std::string& value) {
  SamplerConfig& s = c.sampler;
  if (key == "iterations") s.iterations = parse_long_value(value);
  else if (key == "burn_in") s.burn_in = parse_long_value(value);
  else if (key == "thin") s.thin = parse_long_value(value);
  else if (key == "chains") s.chains = parse_long_value(value);
  else if (key == "seed") s.seed = parse_u64_value(value);
  else if (key == "m_dagger") s.m_dagger = static_cast<std::size_t>(parse_long_value(value));
  else if (key == "rule") s.rule = rule_from_string(detail::trim(value));
  else if (key == "mode") s.mode = mode_from_string(detail::trim(value));
  else if (key == "gamma") s.gamma = parse_fraction_value(value);
  else if (key == "pk_family") s.pk_family = pk_family_from_string(detail::trim(value));
  else if (key == "pk_param") s.pk_param = parse_fraction_value(value);
  else if (key == "a_theta") s.a_theta = parse_fraction_value(value);
  else if (key == "b_theta") s.b_theta = parse_fraction_value(value);
  else if (key == "a_psi") s.a_psi = parse_fraction_value(value);
  else if (key == "b_psi") s.b_psi = parse_fraction_value(value);
  else if (key == "a_beta") s.a_beta = parse_fraction_value(value);
  else if (key == "b_beta") s.b_beta = parse_fraction_value(value);
  else if (key == "alpha1_init") s.alpha1_init = parse_fraction_value(value);
  else if (key == "alpha2") s.alpha2 = parse_fraction_value(value);
  else if (key == "p_init") s.p_init = parse_fraction_value(value);
  else if (key == "tau1") s.tau1 = parse_fraction_value(value);
  else if (key == "split_merge_scans") s.split_merge_scans = parse_long_value(value);
  else if (key == "block_cap") s.block_cap = static_cast<std::size_t>(parse_long_value(value));
  else if (key == "alpha_grid_points") s.alpha_grid_points = parse_long_value(value);
  else if (key == "theta_lower_bound") s.theta_lower_bound = parse_fraction_value(value);
  else if (key == "psi_upper_bound") s.psi_upper_bound = parse_fraction_value(value);
  else if (key == "fix_q") s.fix_q = parse_bool_value(value);
  else if (key == "fix_rates") s.fix_rates = parse_bool_value(value);
  else if (key == "fix_p") s.fix_p = parse_bool_value(value);
  else if (key == "fix_alpha1") s.fix_alpha1 = parse_bool_value(value);
  else if (key == "prior_only") s.prior_only = parse_bool_value(value);
  else if (key == "theta_fixed") s.theta_fixed = parse_fraction_value(value);
  else if (key == "psi_fixed") s.psi_fixed = parse_fraction_value(value);
  else if (key == "p_fixed") s.p_fixed = parse_fraction_value(value);
  else if (key == "fixed_q") s.fixed_q = detail::parse_bit_rows(value);
  else if (key == "partial_clusters") s.partial_clusters = detail::parse_block_list(value);
  else if (key == "ppc_replicates") c.ppc_replicates = parse_long_value(value);
  else if (key == "sim_l") c.sim.l = static_cast<std::size_t>(parse_long_value(value));
  else if (key == "sim_n") c.sim.n = static_cast<std::size_t>(parse_long_value(value));
  else if (key == "sim_m") c.sim.m = static_cast<std::size_t>(parse_long_value(value));
  else if (key == "sim_theta0") c.sim.theta0 = parse_fraction_value(value);
  else if (key == "sim_psi0") c.sim.psi0 = parse_fraction_value(value);
  else if (key == "sim_s") c.sim.s = parse_fraction_value(value);
  else if (key == "sim_pi0") c.sim_pi0_spec = detail::trim(value);
  else if (key == "sim_replications") c.sim.replications = parse_long_value(value);
  else if (key == "sim_seed") c.sim.seed = parse_u64_value(value);
  else if (key == "bench_l") c.bench.l = detail::parse_size_list(value);
  else if (key == "bench_n") c.bench.n = detail::parse_size_list(value);
  else if (key == "bench_theta0") c.bench.theta0 = parse_fraction_list(value);
  else if (key == "bench_psi0") c.bench.psi0 = parse_fraction_list(value);
  else if (key == "bench_pi0") c.bench.pi0 = detail::parse_name_list(value);
  else if (key == "bench_s") c.bench.s = parse_fraction_list(value);
  else if (key == "bench_m") c.bench.m = static_cast<std::size_t>(parse_long_value(value));
  else if (key == "bench_r") c.bench.r = parse_long_value(value);
  else if (key == "bench_seed_base") c.bench.seed_base = parse_u64_value(value);
  else if (key == "bench_methods") c.bench.methods = detail::parse_name_list(value);
  else if (key == "bench_k") c.bench.k = parse_long_value(value);
  else if (key == "lca_iterations") c.lca_iterations = parse_long_value(value);
  else if (key == "lca_burn_in") c.lca_burn_in = parse_long_value(value);
  else throw ConfigError("unknown config key: " + key);
}

// Parses flat key=value text; '#' starts a comment, blank lines are skipped,
// keys may appear at most once.
inline std::vector<std::pair<std::string, std::string>> parse_config_text(
    const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string stripped = detail::trim(line);
    if (stripped.empty()) continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + " is not key=value: " + stripped);
    const std::string key = detail::trim(stripped.substr(0, eq));
    const std::string value = detail::trim(stripped.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key on line " + std::to_string(lineno));
    if (!seen.insert(key).second)
      throw ConfigError("duplicate config key: " + key);
    out.emplace_back(key, value);
  }
  return out;
}

// Builds the effective configuration from config text: applies every setting,
// resolves the pattern-weight spec, and validates the sampler block.
inline AppConfig load_config_text(const std::string& text) {
  AppConfig c;
  bool sim_seed_set = false;
  for (const auto& [key, value] : parse_config_text(text)) {
    if (key == "sim_seed") sim_seed_set = true;
    apply_config_kv(c, key, value);
  }
  c.sim.pi0 = resolve_pattern_weights(c.sim_pi0_spec, c.sim.m);
  if (!sim_seed_set) c.sim.seed = c.sampler.seed;
  c.sampler.validate();
  return c;
}

inline AppConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_config_text(buf.str());
}

// ---------------------------------------------------------------------------
// canonical serialization and fingerprint

namespace detail {

// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

// Flat key=value view of a sampler configuration; parsing it back through
// apply_config_kv reproduces the configuration exactly.
inline std::map<std::string, std::string> flat_sampler_map(const SamplerConfig& s) {
  std::map<std::string, std::string> m;
  m["iterations"] = std::to_string(s.iterations);
  m["burn_in"] = std::to_string(s.burn_in);
  m["thin"] = std::to_string(s.thin);
  m["chains"] = std::to_string(s.chains);
  m["seed"] = std::to_string(s.seed);
  m["m_dagger"] = std::to_string(s.m_dagger);
  m["rule"] = rule_name(s.rule);
  m["mode"] = mode_name(s.mode);
  m["gamma"] = detail::format_double(s.gamma);
  m["pk_family"] = pk_family_name(s.pk_family);
  m["pk_param"] = detail::format_double(s.pk_param);
  m["a_theta"] = detail::format_double(s.a_theta);
  m["b_theta"] = detail::format_double(s.b_theta);
  m["a_psi"] = detail::format_double(s.a_psi);
  m["b_psi"] = detail::format_double(s.b_psi);
  m["a_beta"] = detail::format_double(s.a_beta);
  m["b_beta"] = detail::format_double(s.b_beta);
  m["alpha1_init"] = detail::format_double(s.alpha1_init);
  m["alpha2"] = detail::format_double(s.alpha2);
  m["p_init"] = detail::format_double(s.p_init);
  m["tau1"] = detail::format_double(s.tau1);
  m["split_merge_scans"] = std::to_string(s.split_merge_scans);
  m["block_cap"] = std::to_string(s.block_cap);
  m["alpha_grid_points"] = std::to_string(s.alpha_grid_points);
  m["theta_lower_bound"] = detail::format_double(s.theta_lower_bound);
  m["psi_upper_bound"] = detail::format_double(s.psi_upper_bound);
  m["fix_q"] = s.fix_q ? "true" : "false";
  m["fix_rates"] = s.fix_rates ? "true" : "false";
  m["fix_p"] = s.fix_p ? "true" : "false";
  m["fix_alpha1"] = s.fix_alpha1 ? "true" : "false";
  m["prior_only"] = s.prior_only ? "true" : "false";
  m["theta_fixed"] = detail::format_double(s.theta_fixed);
  m["psi_fixed"] = detail::format_double(s.psi_fixed);
  m["p_fixed"] = detail::format_double(s.p_fixed);
  if (s.fixed_q) {
    std::string rows;
    for (std::size_t r = 0; r < s.fixed_q->rows(); ++r) {
      if (r) rows += ';';
      rows += s.fixed_q->row_string(r);
    }
    m["fixed_q"] = rows;
  }
  if (!s.partial_clusters.empty()) {
    std::string blocks;
    for (std::size_t b = 0; b < s.partial_clusters.size(); ++b) {
      if (b) blocks += ';';
      for (std::size_t i = 0; i < s.partial_clusters[b].size(); ++i) {
        if (i) blocks += ' ';
        blocks += std::to_string(s.partial_clusters[b][i]);
      }
    }
    m["partial_clusters"] = blocks;
  }
  return m;
}

inline SamplerConfig sampler_from_flat_map(const std::map<std::string, std::string>& m) {
  AppConfig c;
  for (const auto& [key, value] : m) apply_config_kv(c, key, value);
  return c.sampler;
}

// 64-bit FNV-1a over the sorted flat key=value serialization.
inline std::uint64_t config_fingerprint(const SamplerConfig& s) {
  std::string blob;
  for (const auto& [key, value] : flat_sampler_map(s)) {
    blob += key;
    blob += '=';
    blob += value;
    blob += '\n';
  }
  return fnv1a64(blob);
}

// Grid cells from the benchmark plan axes, in axis-nesting order with
// consecutive seeds.
inline std::vector<SimDesign> bench_cells(const BenchPlan& p) {
  std::vector<std::vector<double>> pis;
  for (const std::string& spec : p.pi0) pis.push_back(resolve_pattern_weights(spec, p.m));
  std::vector<SimDesign> grid;
  for (std::size_t L : p.l)
    for (std::size_t N : p.n)
      for (double th : p.theta0)
        for (double ps : p.psi0)
          for (const auto& pi : pis)
            for (double sv : p.s) {
              SimDesign d;
              d.l = L;
              d.n = N;
              d.m = p.m;
              d.theta0 = th;
              d.psi0 = ps;
              d.pi0 = pi;
              d.s = sv;
              d.replications = p.r;
              d.seed = p.seed_base + grid.size();
              d.validate();
              grid.push_back(std::move(d));
            }
  if (grid.empty()) throw ConfigError("benchmark grid has no cells");
  return grid;
}

}  // namespace rlcm
