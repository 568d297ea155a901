#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rlcm/config.hpp"
#include "rlcm/diagnostics.hpp"
#include "rlcm/summaries.hpp"

namespace rlcm {

// ---------------------------------------------------------------------------
// low-level file helpers

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// All writers go through here: write to a sibling temp file, then rename.
inline void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open file for writing: " + tmp);
    out << content;
    out.flush();
    if (!out) throw DataError("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("rename failed: " + tmp + " -> " + path);
}

namespace detail {

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// binary data matrices: headerless CSV of 0/1 cells

inline BinaryMatrix read_binary_csv_text(const std::string& text, const std::string& origin) {
  std::vector<std::vector<Bit>> rows;
  std::istringstream in(text);
  std::string line;
  long lineno = 0, blank_at = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (rlcm::detail::trim(line).empty()) {
      if (!rows.empty() && blank_at == 0) blank_at = lineno;
      continue;
    }
    if (blank_at != 0)
      throw DataError(origin + ": blank line " + std::to_string(blank_at));
    std::vector<Bit> row;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) {
      const std::string v = rlcm::detail::trim(cell);
      if (v == "0") row.push_back(0);
      else if (v == "1") row.push_back(1);
      else
        throw DataError(origin + ": non-binary cell '" + v + "' on line " +
                        std::to_string(lineno));
    }
    if (row.empty()) throw DataError(origin + ": empty row on line " + std::to_string(lineno));
    if (!rows.empty() && row.size() != rows.front().size())
      throw DataError(origin + ": ragged row on line " + std::to_string(lineno));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(origin + ": no data rows");
  BinaryMatrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
  return m;
}

inline BinaryMatrix read_binary_csv(const std::string& path) {
  return read_binary_csv_text(read_text_file(path), path);
}

inline std::string binary_csv_text(const BinaryMatrix& m) {
  std::string out;
  out.reserve(m.rows() * (2 * m.cols() + 1));
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out += ',';
      out += m(r, c) ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

inline void write_binary_csv(const std::string& path, const BinaryMatrix& m) {
  write_text_atomic(path, binary_csv_text(m));
}

// ---------------------------------------------------------------------------
// partition files: one block per line, 0-based subject ids

inline std::string partition_text(const std::vector<int>& z) {
  long t = -1;
  for (int v : z) t = std::max(t, static_cast<long>(v));
  std::vector<std::vector<int>> blocks(static_cast<std::size_t>(t + 1));
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (z[i] < 0) throw DataError("negative cluster label");
    blocks[static_cast<std::size_t>(z[i])].push_back(static_cast<int>(i));
  }
  std::string out;
  for (const auto& blk : blocks) {
    if (blk.empty()) throw DataError("cluster labels must be contiguous");
    for (std::size_t i = 0; i < blk.size(); ++i) {
      if (i) out += ' ';
      out += std::to_string(blk[i]);
    }
    out += '\n';
  }
  return out;
}

inline void write_partition_file(const std::string& path, const std::vector<int>& z) {
  write_text_atomic(path, partition_text(z));
}

inline std::vector<std::vector<int>> read_partition_file(const std::string& path) {
  const std::string text = read_text_file(path);
  std::vector<std::vector<int>> blocks;
  std::istringstream in(text);
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (rlcm::detail::trim(line).empty()) continue;
    std::vector<int> ids;
    std::istringstream ls(line);
    long v = 0;
    while (ls >> v) {
      if (v < 0) throw DataError(path + ": negative subject id on line " + std::to_string(lineno));
      ids.push_back(static_cast<int>(v));
    }
    if (!ls.eof())
      throw DataError(path + ": bad subject id on line " + std::to_string(lineno));
    blocks.push_back(std::move(ids));
  }
  if (blocks.empty()) throw DataError(path + ": no blocks");
  return blocks;
}

// Blocks to per-subject labels; every subject must appear exactly once.
inline std::vector<int> blocks_to_labels(const std::vector<std::vector<int>>& blocks,
                                         std::size_t n) {
  std::vector<int> z(n, -1);
  for (std::size_t b = 0; b < blocks.size(); ++b)
    for (int i : blocks[b]) {
      if (i < 0 || static_cast<std::size_t>(i) >= n)
        throw DataError("subject id out of range in partition");
      if (z[static_cast<std::size_t>(i)] != -1)
        throw DataError("subject assigned to two blocks");
      z[static_cast<std::size_t>(i)] = static_cast<int>(b);
    }
  for (int v : z)
    if (v == -1) throw DataError("partition does not cover every subject");
  return z;
}

// ---------------------------------------------------------------------------
// chain files: newline-delimited JSON, header record then one record per draw

namespace detail {

inline std::vector<std::string> bit_rows(const BinaryMatrix& m) {
  std::vector<std::string> rows(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) rows[r] = m.row_string(r);
  return rows;
}

inline BinaryMatrix matrix_from_bit_rows(const std::vector<std::string>& rows,
                                         const std::string& origin) {
  if (rows.empty()) return BinaryMatrix(0, 0);
  try {
    return BinaryMatrix::from_row_strings(rows);
  } catch (const std::exception& e) {
    throw DataError(origin + ": " + e.what());
  }
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace detail

inline std::string chain_text(const ChainOutput& chain) {
  nlohmann::json header;
  header["format"] = "rlcm-chain";
  header["version"] = 1;
  header["chain"] = chain.chain_index;
  header["seed"] = chain.master_seed;
  header["n"] = chain.n;
  header["l"] = chain.l;
  header["config_hash"] = detail::hex64(config_fingerprint(chain.config));
  header["config"] = flat_sampler_map(chain.config);
  header["warnings"] = chain.warnings;
  std::string out = header.dump();
  out += '\n';
  for (const Draw& d : chain.draws) {
    nlohmann::json rec;
    rec["iter"] = d.iter;
    rec["z"] = d.z;
    rec["hstar"] = detail::bit_rows(d.hstar);
    rec["q"] = detail::bit_rows(d.q);
    rec["theta"] = d.theta;
    rec["psi"] = d.psi;
    rec["p"] = d.p;
    rec["alpha1"] = d.alpha1;
    rec["logpost"] = d.logpost;
    rec["t_tilde"] = d.t_tilde;
    out += rec.dump();
    out += '\n';
  }
  return out;
}

inline void write_chain_file(const std::string& path, const ChainOutput& chain) {
  write_text_atomic(path, chain_text(chain));
}

inline ChainOutput read_chain_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || rlcm::detail::trim(line).empty())
    throw DataError(origin + ": empty chain file");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const std::exception& e) {
    throw DataError(origin + ": bad header: " + e.what());
  }
  ChainOutput chain;
  try {
    if (header.at("format").get<std::string>() != "rlcm-chain")
      throw DataError("not a chain file");
    if (header.at("version").get<long>() != 1) throw DataError("unsupported chain version");
    chain.chain_index = header.at("chain").get<long>();
    chain.master_seed = header.at("seed").get<std::uint64_t>();
    chain.n = header.at("n").get<std::size_t>();
    chain.l = header.at("l").get<std::size_t>();
    const auto cfg = header.at("config").get<std::map<std::string, std::string>>();
    chain.config = sampler_from_flat_map(cfg);
    if (header.contains("warnings"))
      chain.warnings = header.at("warnings").get<std::vector<std::string>>();
    const std::string want = header.at("config_hash").get<std::string>();
    if (detail::hex64(config_fingerprint(chain.config)) != want)
      throw DataError("config hash mismatch");
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(origin + ": bad header: " + e.what());
  }
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (rlcm::detail::trim(line).empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
      Draw d;
      d.iter = rec.at("iter").get<long>();
      d.z = rec.at("z").get<std::vector<int>>();
      d.hstar = detail::matrix_from_bit_rows(
          rec.at("hstar").get<std::vector<std::string>>(), origin);
      d.q = detail::matrix_from_bit_rows(rec.at("q").get<std::vector<std::string>>(), origin);
      d.theta = rec.at("theta").get<std::vector<double>>();
      d.psi = rec.at("psi").get<std::vector<double>>();
      d.p = rec.at("p").get<std::vector<double>>();
      d.alpha1 = rec.at("alpha1").get<double>();
      d.logpost = rec.at("logpost").get<double>();
      d.t_tilde = rec.at("t_tilde").get<long>();
      if (d.z.size() != chain.n)
        throw DataError("draw size disagrees with header");
      chain.draws.push_back(std::move(d));
    } catch (const DataError&) {
      throw;
    } catch (const std::exception& e) {
      throw DataError(origin + ": bad record on line " + std::to_string(lineno) + ": " +
                      e.what());
    }
  }
  return chain;
}

inline ChainOutput read_chain_file(const std::string& path) {
  return read_chain_text(read_text_file(path), path);
}

// ---------------------------------------------------------------------------
// report writers

inline std::string double_matrix_csv(std::size_t nrow, std::size_t ncol,
                                     const std::vector<double>& v) {
  if (v.size() != nrow * ncol) throw DataError("matrix size mismatch");
  std::string out;
  for (std::size_t r = 0; r < nrow; ++r) {
    for (std::size_t c = 0; c < ncol; ++c) {
      if (c) out += ',';
      out += rlcm::detail::format_double(v[r * ncol + c]);
    }
    out += '\n';
  }
  return out;
}

inline void write_coclustering_csv(const std::string& path, const CoClusteringMatrix& m) {
  write_text_atomic(path, double_matrix_csv(m.n, m.n, m.pi));
}

inline void write_state_marginals_csv(const std::string& path, const StateMarginals& sm) {
  std::string out = "subject";
  for (std::size_t m = 0; m < sm.m; ++m) out += ",state_" + std::to_string(m);
  out += '\n';
  for (std::size_t i = 0; i < sm.n; ++i) {
    out += std::to_string(i);
    for (std::size_t m = 0; m < sm.m; ++m) {
      out += ',';
      out += rlcm::detail::format_double(sm(i, m));
    }
    out += '\n';
  }
  write_text_atomic(path, out);
}

inline void write_count_distribution_csv(const std::string& path,
                                         const CountDistribution& dist) {
  std::string out = "value,probability\n";
  for (const auto& [value, prob] : dist.pmf) {
    out += std::to_string(value);
    out += ',';
    out += rlcm::detail::format_double(prob);
    out += '\n';
  }
  write_text_atomic(path, out);
}

inline void write_convergence_csv(const std::string& path,
                                  const std::vector<ConvergenceRow>& rows) {
  std::string out = "parameter,rhat,rhat_flagged,geweke_z,geweke_flagged\n";
  for (const ConvergenceRow& r : rows) {
    out += detail::csv_escape(r.name);
    out += ',';
    out += rlcm::detail::format_double(r.rhat);
    out += ',';
    out += r.rhat_flagged ? "1" : "0";
    out += ',';
    out += rlcm::detail::format_double(r.z);
    out += ',';
    out += r.z_flagged ? "1" : "0";
    out += '\n';
  }
  write_text_atomic(path, out);
}

namespace detail {

inline void append_ppc_stat_row(std::string& out, const std::string& label,
                                const PpcPairStats& s, std::size_t k) {
  out += label;
  out += ',';
  out += format_double(s.obs[k]);
  out += ',';
  out += format_double(s.lo[k]);
  out += ',';
  out += format_double(s.hi[k]);
  out += ',';
  out += format_double(s.mean[k]);
  out += ',';
  out += format_double(s.sd[k]);
  out += ',';
  out += format_double(s.slord[k]);
  out += ',';
  out += format_double(s.ppp[k]);
  out += ',';
  out += s.inside[k] ? "1" : "0";
  out += ',';
  out += s.slord_flagged[k] ? "1" : "0";
  out += '\n';
}

}  // namespace detail

inline void write_ppc_lor_csv(const std::string& path, const PpcReport& rep) {
  std::string out =
      "feature_a,feature_b,observed,lo,hi,mean,sd,slord,ppp,inside,slord_flagged\n";
  for (std::size_t k = 0; k < rep.pairs.size(); ++k) {
    const std::string label = std::to_string(rep.pairs[k].first) + ',' +
                              std::to_string(rep.pairs[k].second);
    detail::append_ppc_stat_row(out, label, rep.stats, k);
  }
  write_text_atomic(path, out);
}

inline void write_ppc_means_csv(const std::string& path, const PpcPairStats& s) {
  std::string out = "feature,observed,lo,hi,mean,sd,slord,ppp,inside,slord_flagged\n";
  for (std::size_t k = 0; k < s.obs.size(); ++k)
    detail::append_ppc_stat_row(out, std::to_string(k), s, k);
  write_text_atomic(path, out);
}

inline void write_bench_records_csv(const std::string& path,
                                    const std::vector<BenchRecord>& records) {
  std::string out = "cell,method,rep,ari,failed,error\n";
  for (const BenchRecord& r : records) {
    out += std::to_string(r.cell);
    out += ',';
    out += detail::csv_escape(r.method);
    out += ',';
    out += std::to_string(r.rep);
    out += ',';
    out += rlcm::detail::format_double(r.ari);
    out += ',';
    out += r.failed ? "1" : "0";
    out += ',';
    out += detail::csv_escape(r.error);
    out += '\n';
  }
  write_text_atomic(path, out);
}

inline void write_bench_summary_csv(const std::string& path,
                                    const std::vector<SimDesign>& cells,
                                    const std::vector<BenchSummary>& summaries) {
  std::string out = "cell,l,n,theta0,psi0,s,method,n_ok,n_failed,mean_ari,sd_ari\n";
  for (const BenchSummary& s : summaries) {
    if (s.cell >= cells.size()) throw DataError("summary references unknown cell");
    const SimDesign& d = cells[s.cell];
    out += std::to_string(s.cell);
    out += ',';
    out += std::to_string(d.l);
    out += ',';
    out += std::to_string(d.n);
    out += ',';
    out += rlcm::detail::format_double(d.theta0);
    out += ',';
    out += rlcm::detail::format_double(d.psi0);
    out += ',';
    out += rlcm::detail::format_double(d.s);
    out += ',';
    out += detail::csv_escape(s.method);
    out += ',';
    out += std::to_string(s.n_ok);
    out += ',';
    out += std::to_string(s.n_failed);
    out += ',';
    out += rlcm::detail::format_double(s.mean_ari);
    out += ',';
    out += rlcm::detail::format_double(s.sd_ari);
    out += '\n';
  }
  write_text_atomic(path, out);
}

}  // namespace rlcm
