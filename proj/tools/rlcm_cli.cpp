// Command-line front end: simulation, fitting, posterior summaries,
// diagnostics, predictive checks, and the replication benchmark.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rlcm/config.hpp"
#include "rlcm/io.hpp"
#include "rlcm/simbench.hpp"
#include "rlcm/slice.hpp"

namespace {

struct CliOverrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<long> chains, iterations, burn_in, thin;
  std::optional<std::string> mode, rule;
  std::string fixed_q_path, partial_clusters_path;
  std::string out_dir = ".";
  std::string data_path;
};

void add_common_flags(CLI::App* cmd, CliOverrides& o) {
  cmd->add_option("--config", o.config_path, "key=value configuration file");
  cmd->add_option("--seed", o.seed, "master seed override");
  cmd->add_option("--chains", o.chains, "number of chains");
  cmd->add_option("--iterations", o.iterations, "total sweeps including burn-in");
  cmd->add_option("--burn-in", o.burn_in, "discarded initial sweeps");
  cmd->add_option("--thin", o.thin, "keep every thin-th sweep");
  cmd->add_option("--mode", o.mode, "sampler mode (finite|infinite)");
  cmd->add_option("--rule", o.rule, "design rule (dino|dina)");
  cmd->add_option("--fixed-q", o.fixed_q_path, "CSV of a fixed design matrix");
  cmd->add_option("--partial-clusters", o.partial_clusters_path,
                  "partition file pinning subjects together");
  cmd->add_option("--out", o.out_dir, "output directory");
}

rlcm::AppConfig effective_config(const CliOverrides& o) {
  rlcm::AppConfig c = o.config_path.empty() ? rlcm::load_config_text("")
                                            : rlcm::load_config_file(o.config_path);
  rlcm::SamplerConfig& s = c.sampler;
  if (o.seed) {
    s.seed = *o.seed;
    c.sim.seed = *o.seed;
  }
  if (o.chains) s.chains = *o.chains;
  if (o.iterations) s.iterations = *o.iterations;
  if (o.burn_in) s.burn_in = *o.burn_in;
  if (o.thin) s.thin = *o.thin;
  if (o.mode) s.mode = rlcm::mode_from_string(*o.mode);
  if (o.rule) s.rule = rlcm::rule_from_string(*o.rule);
  if (!o.fixed_q_path.empty()) {
    s.fixed_q = rlcm::read_binary_csv(o.fixed_q_path);
    s.fix_q = true;
  }
  if (!o.partial_clusters_path.empty())
    s.partial_clusters = rlcm::read_partition_file(o.partial_clusters_path);
  s.validate();
  return c;
}

std::filesystem::path ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw rlcm::DataError("cannot create output directory: " + dir);
  return std::filesystem::path(dir);
}

std::vector<rlcm::ChainOutput> read_chains(const std::vector<std::string>& paths) {
  if (paths.empty()) throw rlcm::DataError("no chain files given");
  std::vector<rlcm::ChainOutput> chains;
  for (const std::string& p : paths) chains.push_back(rlcm::read_chain_file(p));
  return chains;
}

int cmd_simulate(const CliOverrides& o) {
  const rlcm::AppConfig c = effective_config(o);
  const rlcm::SimDesign& d = c.sim;
  d.validate();
  const auto out = ensure_out_dir(o.out_dir);
  rlcm::Rng rng(d.seed);
  const rlcm::BinaryMatrix Q = rlcm::gen_Q(d.m, d.l, d.s, rng);
  const rlcm::SimData data = rlcm::gen_data(d, Q, rng);
  rlcm::write_binary_csv((out / "data.csv").string(), data.y);
  rlcm::write_binary_csv((out / "truth_q.csv").string(), Q);
  rlcm::write_binary_csv((out / "truth_eta.csv").string(), data.eta);
  rlcm::write_partition_file((out / "truth_z.txt").string(), data.z);
  std::printf("simulated %zu x %zu observations into %s\n", d.n, d.l,
              out.string().c_str());
  return 0;
}

int cmd_fit(const CliOverrides& o) {
  if (o.data_path.empty()) throw rlcm::ConfigError("fit needs --data");
  const rlcm::AppConfig c = effective_config(o);
  const rlcm::BinaryMatrix Y = rlcm::read_binary_csv(o.data_path);
  const auto out = ensure_out_dir(o.out_dir);
  const std::vector<rlcm::ChainOutput> chains = rlcm::run_model_chains(Y, c.sampler);
  for (const rlcm::ChainOutput& chain : chains) {
    const std::string path =
        (out / ("chain_" + std::to_string(chain.chain_index) + ".jsonl")).string();
    rlcm::write_chain_file(path, chain);
    std::printf("wrote %s (%zu draws)\n", path.c_str(), chain.draws.size());
    for (const std::string& w : chain.warnings)
      std::fprintf(stderr, "warning: chain %ld: %s\n", chain.chain_index, w.c_str());
  }
  return 0;
}

int cmd_summarize(const CliOverrides& o, const std::vector<std::string>& chain_paths) {
  const std::vector<rlcm::ChainOutput> chains = read_chains(chain_paths);
  const auto out = ensure_out_dir(o.out_dir);

  const rlcm::CoClusteringMatrix pihat = rlcm::coclustering(chains);
  rlcm::write_coclustering_csv((out / "coclustering.csv").string(), pihat);

  const rlcm::LsClustering ls = rlcm::ls_clustering(chains, pihat);
  rlcm::write_partition_file((out / "ls_partition.txt").string(), ls.z);

  const rlcm::Draw* ls_draw = nullptr;
  for (const rlcm::Draw& d : chains[ls.chain].draws)
    if (d.iter == ls.iteration) ls_draw = &d;
  if (!ls_draw) throw rlcm::DataError("selected draw missing from its chain");
  const rlcm::ScientificPartition sci = rlcm::merge_scientific(ls.z, ls_draw->hstar);
  rlcm::write_partition_file((out / "scientific_partition.txt").string(), sci.z);
  rlcm::write_binary_csv((out / "scientific_states.csv").string(), sci.states);

  rlcm::write_count_distribution_csv((out / "t_tilde.csv").string(),
                                     rlcm::posterior_T_tilde(chains));

  const rlcm::QSelection qs = rlcm::select_Q_ls(chains);
  rlcm::write_binary_csv((out / "q_selected.csv").string(), qs.q);

  rlcm::write_state_marginals_csv((out / "state_marginals.csv").string(),
                                  rlcm::state_marginals(chains));

  std::printf("summaries for %zu draws across %zu chains written to %s\n",
              rlcm::total_draws(chains), chains.size(), out.string().c_str());
  return 0;
}

int cmd_diagnose(const CliOverrides& o, const std::vector<std::string>& chain_paths) {
  const std::vector<rlcm::ChainOutput> chains = read_chains(chain_paths);
  const auto out = ensure_out_dir(o.out_dir);
  const std::vector<rlcm::ConvergenceRow> table = rlcm::convergence_table(chains);
  rlcm::write_convergence_csv((out / "convergence.csv").string(), table);
  long flagged = 0;
  for (const rlcm::ConvergenceRow& r : table)
    if (r.rhat_flagged || r.z_flagged) ++flagged;
  std::printf("convergence table (%zu rows, %ld flagged) written to %s\n", table.size(),
              flagged, out.string().c_str());
  return 0;
}

int cmd_ppc(const CliOverrides& o, const std::vector<std::string>& chain_paths) {
  if (o.data_path.empty()) throw rlcm::ConfigError("ppc needs --data");
  const rlcm::AppConfig c = effective_config(o);
  const rlcm::BinaryMatrix Y = rlcm::read_binary_csv(o.data_path);
  const std::vector<rlcm::ChainOutput> chains = read_chains(chain_paths);
  if (rlcm::total_draws(chains) == 0)
    throw rlcm::DataError("predictive checks need retained draws");
  for (const rlcm::ChainOutput& chain : chains)
    if (chain.n != Y.rows() || chain.l != Y.cols())
      throw rlcm::DataError("chain dimensions disagree with the data");
  const long R = c.ppc_replicates;
  if (R < 100) throw rlcm::ConfigError("ppc_replicates must be at least 100");
  const auto out = ensure_out_dir(o.out_dir);

  std::vector<const rlcm::Draw*> pooled;
  rlcm::Rule rule = c.sampler.rule;
  for (const rlcm::ChainOutput& chain : chains) {
    rule = chain.config.rule;
    for (const rlcm::Draw& d : chain.draws) pooled.push_back(&d);
  }
  rlcm::Rng rng(rlcm::Rng::substream(c.sampler.seed, rlcm::fnv1a64("ppc")));
  std::vector<rlcm::BinaryMatrix> reps;
  std::vector<rlcm::LorMatrix> rep_lors;
  reps.reserve(static_cast<std::size_t>(R));
  rep_lors.reserve(static_cast<std::size_t>(R));
  for (long r = 0; r < R; ++r) {
    const rlcm::Draw& d = *pooled[rng.uniform_below(pooled.size())];
    rlcm::BinaryMatrix rep = rlcm::ppc_replicate(d, Y.rows(), Y.cols(), rule, rng);
    rep_lors.push_back(rlcm::pairwise_lor(rep));
    reps.push_back(std::move(rep));
  }
  const rlcm::PpcReport lor_report = rlcm::ppci_and_slord(Y, rep_lors);
  rlcm::write_ppc_lor_csv((out / "ppc_lor.csv").string(), lor_report);
  const rlcm::PpcPairStats mean_stats = rlcm::ppci_means(Y, reps);
  rlcm::write_ppc_means_csv((out / "ppc_means.csv").string(), mean_stats);
  std::printf("ppc with %ld replicates: LOR coverage %.3f, mean coverage %.3f\n", R,
              lor_report.stats.coverage, mean_stats.coverage);
  return 0;
}

int cmd_bench(const CliOverrides& o) {
  const rlcm::AppConfig c = effective_config(o);
  const auto out = ensure_out_dir(o.out_dir);
  const std::vector<rlcm::SimDesign> cells = rlcm::bench_cells(c.bench);
  rlcm::BenchMethodConfig mcfg;
  mcfg.rlcm = c.sampler;
  mcfg.baseline_k = c.bench.k;
  mcfg.lca_iterations = c.lca_iterations;
  mcfg.lca_burn_in = c.lca_burn_in;
  const rlcm::BenchResults res =
      rlcm::run_replication_study(cells, c.bench.methods, c.bench.r, mcfg);
  rlcm::write_bench_records_csv((out / "bench_records.csv").string(), res.records);
  rlcm::write_bench_summary_csv((out / "bench_results.csv").string(), cells,
                                res.summaries);
  std::printf("benchmark: %zu cells, %zu records written to %s\n", cells.size(),
              res.records.size(), out.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian restricted latent class clustering of binary data"};
  app.require_subcommand(1);

  CliOverrides sim_o, fit_o, sum_o, diag_o, ppc_o, bench_o;
  std::vector<std::string> sum_chains, diag_chains, ppc_chains;

  CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic data set");
  add_common_flags(sim, sim_o);

  CLI::App* fit = app.add_subcommand("fit", "run MCMC on a binary data matrix");
  add_common_flags(fit, fit_o);
  fit->add_option("--data", fit_o.data_path, "binary CSV data matrix")->required();

  CLI::App* sum = app.add_subcommand("summarize", "posterior summaries from chain files");
  add_common_flags(sum, sum_o);
  sum->add_option("chain_files", sum_chains, "chain files")->required();

  CLI::App* diag = app.add_subcommand("diagnose", "convergence diagnostics");
  add_common_flags(diag, diag_o);
  diag->add_option("chain_files", diag_chains, "chain files")->required();

  CLI::App* ppc = app.add_subcommand("ppc", "posterior predictive checks");
  add_common_flags(ppc, ppc_o);
  ppc->add_option("--data", ppc_o.data_path, "binary CSV data matrix")->required();
  ppc->add_option("chain_files", ppc_chains, "chain files")->required();

  CLI::App* bench = app.add_subcommand("bench", "replication benchmark study");
  add_common_flags(bench, bench_o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_o);
    if (fit->parsed()) return cmd_fit(fit_o);
    if (sum->parsed()) return cmd_summarize(sum_o, sum_chains);
    if (diag->parsed()) return cmd_diagnose(diag_o, diag_chains);
    if (ppc->parsed()) return cmd_ppc(ppc_o, ppc_chains);
    if (bench->parsed()) return cmd_bench(bench_o);
  } catch (const rlcm::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const rlcm::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const rlcm::CapacityError& e) {
    std::fprintf(stderr, "capacity error: %s\n", e.what());
    return 3;
  } catch (const rlcm::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 1;
}
