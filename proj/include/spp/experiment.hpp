#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "spp/config.hpp"
#include "spp/digraph.hpp"
#include "spp/engine.hpp"
#include "spp/errors.hpp"
#include "spp/mixing.hpp"
#include "spp/problems.hpp"
#include "spp/rng.hpp"
#include "spp/series.hpp"

namespace spp {

inline constexpr const char* kVersion = "spp 0.1.0";
inline constexpr const char* kOutputRootEnv = "SPP_OUTPUT_ROOT";

// ---------------------------------------------------------------------------
// Building blocks from a config

inline Stream graph_stream(std::uint64_t seed) { return Stream::keyed(seed, stream_tag::graph); }
inline Stream problem_stream(std::uint64_t seed) { return Stream::keyed(seed, stream_tag::problem); }

/// Pull graph described by the topology section.
inline DirectedGraph build_graph(const TopologyConfig& t) {
  Stream rng = graph_stream(t.seed);
  if (t.kind == "ring") return gen_ring(t.n, t.bidirectional);
  if (t.kind == "er") return gen_erdos_renyi(t.n, t.edge_prob, rng);
  if (t.kind == "msr") return gen_multi_subring(t.n, t.subrings);
  if (t.kind == "tree") return gen_spanning_tree_pair(t.n, rng).pull;
  if (t.kind == "edges") return DirectedGraph(t.n, t.edges);
  throw InputError("unknown topology kind '" + t.kind + "'");
}

/// Pull matrix on the graph and push matrix on its reversal.
inline MixingPair build_pair(const ExperimentConfig& c) {
  const DirectedGraph g = build_graph(c.topology);
  if (c.mixing.scheme == "pushpull") {
    return MixingPair{pull_matrix(g), push_matrix(g.reversed()), false};
  }
  if (c.mixing.scheme == "dsgt") {
    const Matrix w = doubly_stochastic(g);
    return MixingPair{w, w, false};
  }
  if (c.mixing.scheme == "tree") {
    if (c.topology.kind != "tree") throw InputError("mixing scheme 'tree' needs topology kind 'tree'");
    return tree_01_matrices(g, g.reversed());
  }
  throw InputError("unknown mixing scheme '" + c.mixing.scheme + "'");
}

inline Problem build_problem(const ExperimentConfig& c) {
  const auto& p = c.problem;
  Stream rng = problem_stream(p.seed);
  if (p.kind == "quadratic") {
    return gen_quadratic(c.topology.n, p.dim, p.heterogeneity, p.sigma, rng,
                         QuadraticOptions{p.mu, p.L});
  }
  if (p.kind == "logistic") {
    return gen_logistic(c.topology.n, p.samples, p.dim, p.reg, p.sigma_h, rng);
  }
  throw InputError("unknown problem kind '" + p.kind + "'");
}

inline DecayOptions decay_options(const ExperimentConfig& c) {
  DecayOptions d;
  d.check_horizon = c.mixing.check_horizon;
  return d;
}

/// Lowest objective value seen along deterministic gradient descent with
/// stepsize 1/L; exact minimum for quadratics.
inline double estimate_fstar(const Problem& pr, const Vector& x0, int iterations) {
  if (pr.minimizer) return global_value(pr, *pr.minimizer);
  Vector x = x0;
  double best = global_value(pr, x);
  for (int k = 0; k < iterations; ++k) {
    x -= global_grad(pr, x) / pr.L;
    best = std::min(best, global_value(pr, x));
  }
  return best;
}

/// Per-node gradient variance at x: exact for quadratics, Monte Carlo
/// (64 draws, worst node) for logistic sampling noise.
inline double estimate_sigma2(const Problem& pr, const Vector& x, int batch, std::uint64_t seed) {
  if (pr.is_quadratic()) return pr.sigma2_hint;
  constexpr int kDraws = 64;
  double worst = 0.0;
  for (int i = 0; i < pr.n; ++i) {
    const Vector g = grad(pr, i, x);
    double acc = 0.0;
    for (int d = 0; d < kDraws; ++d) {
      Stream rng = Stream::keyed(seed, stream_tag::noise, static_cast<std::uint64_t>(i),
                                 0xffff0000ULL + static_cast<std::uint64_t>(d));
      acc += (stoch_grad(pr, i, x, batch, rng) - g).squaredNorm();
    }
    worst = std::max(worst, acc / kDraws);
  }
  return worst;
}

inline ProblemConstants problem_constants(const Problem& pr, const Vector& x0, int batch,
                                          int fstar_iterations) {
  ProblemConstants pc;
  pc.L = pr.L;
  pc.sigma2 = estimate_sigma2(pr, x0, batch, 0);
  pc.Delta_f = std::max(0.0, global_value(pr, x0) - estimate_fstar(pr, x0, fstar_iterations));
  double f0 = 0.0;
  for (int i = 0; i < pr.n; ++i) f0 += grad(pr, i, x0).squaredNorm();
  pc.F0 = f0 / pr.n;
  return pc;
}

// ---------------------------------------------------------------------------
// Output helpers

/// Writes through a temporary file and renames it into place.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out << content;
    if (!out) throw InputError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string trace_csv(const std::vector<TraceRecord>& recs) {
  std::ostringstream o;
  write_trace_csv(o, recs);
  return o.str();
}

/// Relative output paths are placed under $SPP_OUTPUT_ROOT when it is set.
inline std::filesystem::path resolve_output(const std::string& output) {
  std::filesystem::path p(output);
  if (p.is_relative()) {
    if (const char* root = std::getenv(kOutputRootEnv); root && *root) {
      return std::filesystem::path(root) / p;
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Commands

struct ValidateOutcome {
  ValidationReport report;
  nlohmann::json json;
  bool passed() const { return json.value("passed", false); }
};

/// Builds the pair and runs every assumption check. Construction failures
/// (e.g. asymmetric graph for DSGT) are reported as a failed check.
inline ValidateOutcome validate_config(const ExperimentConfig& c) {
  ValidateOutcome out;
  try {
    const MixingPair pair = build_pair(c);
    out.report = validate_pair(pair, decay_options(c));
    out.json = to_json(out.report);
  } catch (const Error& e) {
    out.report.checks.push_back({"construction", false, 0.0, e.what()});
    out.json = to_json(out.report);
  }
  out.json["scheme"] = c.mixing.scheme;
  out.json["topology"] = c.topology.kind;
  out.json["n"] = c.topology.n;
  return out;
}

/// Prints the JSON report; returns the process exit code.
inline int cmd_validate(const ExperimentConfig& c, std::ostream& out) {
  const ValidateOutcome v = validate_config(c);
  out << v.json.dump(2) << '\n';
  return v.passed() ? 0 : 1;
}

struct RunResult {
  std::vector<Trace> traces;
  std::vector<TraceRecord> aggregate;
  std::optional<SpectralReport> spectral;
  std::optional<TheoryBundle> bundle;
  double bound = std::numeric_limits<double>::quiet_NaN();
  double time_avg_grad_norm_sq = 0.0;
  std::optional<double> steady_state_mse;
  ProblemConstants constants;
  nlohmann::json report;
};

inline double time_average_grad_norm_sq(const std::vector<TraceRecord>& recs) {
  if (recs.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : recs) s += r.grad_norm_sq;
  return s / static_cast<double>(recs.size());
}

/// Mean of dist_sq over the last `window` records (last quarter when 0).
inline std::optional<double> steady_state_mse(const std::vector<TraceRecord>& recs, int window) {
  if (recs.empty() || std::isnan(recs.back().dist_sq)) return std::nullopt;
  std::size_t w = window > 0 ? static_cast<std::size_t>(window) : std::max<std::size_t>(1, recs.size() / 4);
  w = std::min(w, recs.size());
  double s = 0.0;
  for (std::size_t k = recs.size() - w; k < recs.size(); ++k) s += recs[k].dist_sq;
  return s / static_cast<double>(w);
}

/// Runs every seed of the config. When `out_dir` is given, writes per-seed
/// traces, the aggregate, report.json, a config copy and a version stamp.
inline RunResult run_experiment(const ExperimentConfig& c,
                                const std::optional<std::filesystem::path>& out_dir = {}) {
  RunResult res;
  const Problem pr = build_problem(c);
  const Vector x0 = Vector::Zero(pr.p);
  std::optional<CertifiedPair> cp;
  if (c.run.method == "spp") {
    const ValidateOutcome v = validate_config(c);
    if (!v.report.certified) {
      std::string failed;
      for (const auto& chk : v.report.checks)
        if (!chk.passed) failed += (failed.empty() ? "" : ", ") + chk.name + " (" + chk.detail + ")";
      throw AssumptionViolation("config does not validate: " + failed);
    }
    cp = *v.report.certified;
    res.report["validation"] = v.json;
  }

  RunOptions ro;
  ro.T = c.run.T;
  ro.batch = c.run.batch;
  ro.metrics_every = c.run.metrics_every;
  ro.workers = c.run.workers;
  ro.x0 = x0;
  for (std::uint64_t seed : c.run.seeds) {
    ro.seed = seed;
    try {
      Trace tr = cp ? run_spp(pr, *cp, c.schedule, ro) : run_centralized_sgd(pr, c.schedule, ro);
      tr.pair_id = c.topology.kind + "-" + c.mixing.scheme + "-n" + std::to_string(c.topology.n) +
                   "-s" + std::to_string(c.topology.seed);
      res.traces.push_back(std::move(tr));
    } catch (const DivergenceError& e) {
      throw DivergenceError("seed " + std::to_string(seed) + ": " + e.what(), e.iteration());
    }
  }
  res.aggregate = aggregate_mean(res.traces);
  res.time_avg_grad_norm_sq = time_average_grad_norm_sq(res.aggregate);
  res.steady_state_mse = steady_state_mse(res.aggregate, c.run.steady_window);
  res.constants = problem_constants(pr, x0, c.run.batch, c.problem.fstar_iterations);

  nlohmann::json& rep = res.report;
  rep["version"] = kVersion;
  rep["problem"] = {{"id", pr.id},
                    {"n", pr.n},
                    {"p", pr.p},
                    {"L", pr.L},
                    {"sigma2", res.constants.sigma2},
                    {"Delta_f", res.constants.Delta_f},
                    {"F0", res.constants.F0}};
  if (cp) {
    SeriesOptions so;
    so.tol = c.mixing.tol;
    res.spectral = compute_constants(*cp, so);
    res.bundle = theory_bundle(*res.spectral, res.constants, std::max(1, c.run.T));
    res.bound = bound_rhs(*res.bundle, *res.spectral);
    rep["spectral"] = to_json(*res.spectral);
    rep["theory"] = to_json(*res.bundle);
    rep["bound_rhs"] = detail::finite_or_null(res.bound);
  }
  rep["time_avg_grad_norm_sq"] = res.time_avg_grad_norm_sq;
  rep["steady_state_mse"] =
      res.steady_state_mse ? nlohmann::json(*res.steady_state_mse) : nlohmann::json(nullptr);
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& tr : res.traces) seeds.push_back(trace_metadata(tr));
  rep["seeds"] = seeds;

  if (out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(*out_dir);
    write_atomic(*out_dir / "config.ini", serialize(c));
    write_atomic(*out_dir / "VERSION", std::string(kVersion) + '\n');
    for (const auto& tr : res.traces) {
      const std::string stem = "seed_" + std::to_string(tr.seed);
      write_atomic(*out_dir / (stem + ".csv"), trace_csv(tr.records));
      write_atomic(*out_dir / (stem + ".json"), trace_metadata(tr).dump(2) + '\n');
    }
    write_atomic(*out_dir / "aggregate.csv", trace_csv(res.aggregate));
    write_atomic(*out_dir / "report.json", rep.dump(2) + '\n');
  }
  return res;
}

struct SweepCell {
  std::string value;
  bool ok = false;
  double time_avg_grad_norm_sq = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> steady_state_mse;
  double bound = std::numeric_limits<double>::quiet_NaN();
  std::string message;
};

/// Copy of `c` with one axis (n, topology or gamma) set to `value`.
inline ExperimentConfig with_axis(ExperimentConfig c, const std::string& axis,
                                  const std::string& value) {
  if (axis == "n") {
    c.topology.n = detail::parse_number<int>(value, 0);
  } else if (axis == "topology") {
    detail::require_one_of(value, {"ring", "er", "msr", "tree", "edges"}, 0);
    c.topology.kind = value;
  } else if (axis == "gamma") {
    c.schedule.gamma0 = detail::parse_number<double>(value, 0);
  } else {
    throw InputError("sweep axis must be n, topology or gamma");
  }
  return c;
}

inline std::string sweep_csv(const std::string& axis, const std::vector<SweepCell>& cells) {
  std::ostringstream o;
  o << "axis,value,status,time_avg_grad_norm_sq,steady_state_mse,bound_rhs,message\n";
  for (const auto& s : cells) {
    std::string msg = s.message;
    std::replace(msg.begin(), msg.end(), '"', '\'');
    o << axis << ',' << s.value << ',' << (s.ok ? "ok" : "failed") << ',';
    if (s.ok) o << format_double(s.time_avg_grad_norm_sq);
    o << ',';
    if (s.steady_state_mse) o << format_double(*s.steady_state_mse);
    o << ',';
    if (std::isfinite(s.bound)) o << format_double(s.bound);
    o << ",\"" << msg << "\"\n";
  }
  return o.str();
}

/// One run per axis value; a failing cell is recorded and the sweep goes on.
inline std::vector<SweepCell> run_sweep(const ExperimentConfig& c, const std::string& axis,
                                        const std::vector<std::string>& values,
                                        const std::optional<std::filesystem::path>& out_dir = {}) {
  std::vector<SweepCell> cells;
  for (const std::string& v : values) {
    SweepCell cell;
    cell.value = v;
    try {
      const ExperimentConfig cc = with_axis(c, axis, v);
      std::optional<std::filesystem::path> sub;
      if (out_dir) sub = *out_dir / (axis + "=" + v);
      const RunResult r = run_experiment(cc, sub);
      cell.ok = true;
      cell.time_avg_grad_norm_sq = r.time_avg_grad_norm_sq;
      cell.steady_state_mse = r.steady_state_mse;
      cell.bound = r.bound;
    } catch (const std::exception& e) {
      cell.message = e.what();
    }
    cells.push_back(std::move(cell));
  }
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    write_atomic(*out_dir / "config.ini", serialize(c));
    write_atomic(*out_dir / "VERSION", std::string(kVersion) + '\n');
    write_atomic(*out_dir / "summary.csv", sweep_csv(axis, cells));
  }
  return cells;
}

}  // namespace spp
