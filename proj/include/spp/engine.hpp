#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "spp/errors.hpp"
#include "spp/linalg.hpp"
#include "spp/mixing.hpp"
#include "spp/problems.hpp"
#include "spp/rng.hpp"
#include "spp/series.hpp"

namespace spp {

/// gamma(t) = gamma0 * decay_factor^floor(t / decay_every), optionally divided
/// by n*pi.
struct StepsizeSchedule {
  double gamma0 = 0.1;
  double decay_factor = 1.0;
  int decay_every = 0;  // 0 = constant
  bool rescale_by_npi = false;

  double at(long t, double npi = 1.0) const {
    double g = gamma0;
    if (rescale_by_npi) g /= npi;
    if (decay_every > 0) g *= std::pow(decay_factor, static_cast<double>(t / decay_every));
    return g;
  }
};

struct RunOptions {
  int T = 1000;
  int batch = 1;
  std::uint64_t seed = 0;
  int metrics_every = 1;
  int workers = 1;
  bool record_f = true;
  std::optional<Vector> x0;  // defaults to zero
};

struct TraceRecord {
  long t = 0;
  double gamma = 0.0;
  double grad_norm_sq = 0.0;       // ||grad f(x_hat)||^2
  double consensus = 0.0;          // ||Pi_R X||_F^2
  double tracking = 0.0;           // ||Pi_C Y||_F^2
  double invariant_residual = 0.0; // ||1^T Y - 1^T G||_inf
  double f_hat = std::numeric_limits<double>::quiet_NaN();
  double g_fro = 0.0;              // ||G||_F
  double hat_residual = 0.0;       // relative x_hat recursion residual
  double dist_sq = std::numeric_limits<double>::quiet_NaN();  // ||x_hat - x*||^2
};

struct Trace {
  std::vector<TraceRecord> records;
  std::uint64_t seed = 0;
  std::string pair_id;
  std::string problem_id;
  std::string method;
  // Worst values over every iteration, including ones thinned out of records.
  double max_invariant_ratio = 0.0;  // residual / max(1, ||G||_F)
  double max_hat_residual = 0.0;
  Vector final_x_hat;
};

/// pi_R-weighted average of the rows of X.
inline Vector hat_x(const Matrix& X, const Vector& pi_R) {
  if (X.rows() != pi_R.size()) throw DimensionError("hat_x: pi_R length must equal rows of X");
  return X.transpose() * pi_R;
}

namespace detail {

// Per-node stochastic gradients at iteration t, rows of the returned matrix.
// Rows are independent, so splitting them over workers cannot change values.
inline Matrix gradients(const Problem& pr, const Matrix& X, int batch, std::uint64_t seed,
                        long t, int workers) {
  Matrix G(pr.n, pr.p);
  auto work = [&](int begin, int end) {
    for (int i = begin; i < end; ++i) {
      Stream rng = noise_stream(seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(t));
      G.row(i) = stoch_grad(pr, i, X.row(i).transpose(), batch, rng).transpose();
    }
  };
  const int w = std::clamp(workers, 1, pr.n);
  if (w == 1) {
    work(0, pr.n);
    return G;
  }
  std::vector<std::jthread> pool;
  const int chunk = (pr.n + w - 1) / w;
  for (int begin = 0; begin < pr.n; begin += chunk) {
    pool.emplace_back(work, begin, std::min(pr.n, begin + chunk));
  }
  pool.clear();
  return G;
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void fill_metrics(TraceRecord& rec, const Problem& pr, const Vector& xh, bool record_f) {
  const Vector g = global_grad(pr, xh);
  rec.grad_norm_sq = g.squaredNorm();
  if (record_f) rec.f_hat = global_value(pr, xh);
  if (pr.minimizer) rec.dist_sq = (xh - *pr.minimizer).squaredNorm();
}

}  // namespace detail

/// Stochastic push-pull in compact form:
///   X+ = R (X - gamma Y),  Y+ = C (Y + G+ - G),  Y0 = G0.
inline Trace run_spp(const Problem& pr, const MixingPair& pair, const Vector& pi_R,
                     const Vector& pi_C, const StepsizeSchedule& schedule,
                     const RunOptions& opts) {
  const int n = pr.n;
  if (pair.n() != n || pair.C.rows() != n || pi_R.size() != n || pi_C.size() != n) {
    throw DimensionError("pair, root eigenvectors and problem disagree on n");
  }
  if (opts.T < 0) throw InputError("T must be >= 0");
  if (opts.metrics_every < 1) throw InputError("metrics_every must be >= 1");
  if (row_sum_residual(pair.R) > kStochasticTolerance ||
      column_sum_residual(pair.C) > kStochasticTolerance) {
    throw AssumptionViolation("R must be row-stochastic and C column-stochastic");
  }
  const double npi = n * pi_R.dot(pi_C);
  const Vector ones = Vector::Ones(n);

  Vector x0 = opts.x0.value_or(Vector::Zero(pr.p));
  if (x0.size() != pr.p) throw DimensionError("x0 dimension mismatch");
  Matrix X = ones * x0.transpose();
  Matrix G = detail::gradients(pr, X, opts.batch, opts.seed, 0, opts.workers);
  Matrix Y = G;

  Trace tr;
  tr.seed = opts.seed;
  tr.problem_id = pr.id;
  tr.method = "spp";
  Vector xh = hat_x(X, pi_R);

  auto observe = [&](long t, double gamma, double hat_res) {
    const double inv = (Y.colwise().sum() - G.colwise().sum()).cwiseAbs().maxCoeff();
    const double gf = G.norm();
    tr.max_invariant_ratio = std::max(tr.max_invariant_ratio, inv / std::max(1.0, gf));
    tr.max_hat_residual = std::max(tr.max_hat_residual, hat_res);
    if (t % opts.metrics_every != 0 && t != opts.T) return;
    TraceRecord rec;
    rec.t = t;
    rec.gamma = gamma;
    rec.invariant_residual = inv;
    rec.g_fro = gf;
    rec.hat_residual = hat_res;
    rec.consensus = (X - ones * xh.transpose()).squaredNorm();
    rec.tracking = (Y - pi_C * Y.colwise().sum()).squaredNorm();
    detail::fill_metrics(rec, pr, xh, opts.record_f);
    tr.records.push_back(rec);
  };

  observe(0, schedule.at(0, npi), 0.0);
  for (long t = 0; t < opts.T; ++t) {
    const double gamma = schedule.at(t, npi);
    const Vector step = gamma * (Y.transpose() * pi_R);
    X = pair.R * (X - gamma * Y);
    Matrix G_next = detail::gradients(pr, X, opts.batch, opts.seed, t + 1, opts.workers);
    // (Y - G) + G_next keeps Y == G bitwise when C is the 1x1 identity.
    Y = pair.C * ((Y - G) + G_next);
    G = std::move(G_next);
    if (!detail::all_finite(X) || !detail::all_finite(Y)) {
      throw DivergenceError("non-finite iterate", t + 1);
    }
    const Vector xh_next = hat_x(X, pi_R);
    const double scale = std::max({1.0, xh.norm(), xh_next.norm(), step.norm()});
    const double hat_res = ((xh_next - xh) + step).norm() / scale;
    xh = xh_next;
    observe(t + 1, schedule.at(t + 1, npi), hat_res);
  }
  tr.final_x_hat = xh;
  return tr;
}

inline Trace run_spp(const Problem& pr, const CertifiedPair& cp, const StepsizeSchedule& schedule,
                     const RunOptions& opts) {
  return run_spp(pr, cp.pair, cp.pi_R.pi, cp.pi_C.pi, schedule, opts);
}

/// Gradient tracking with R = C = W, W doubly stochastic with ||W - J|| < 1.
inline Trace run_dsgt(const Problem& pr, const Matrix& W, const StepsizeSchedule& schedule,
                      const RunOptions& opts) {
  const Eigen::Index n = W.rows();
  if (W.cols() != n || (W.array() < 0.0).any() || row_sum_residual(W) > kStochasticTolerance ||
      column_sum_residual(W) > kStochasticTolerance) {
    throw AssumptionViolation("DSGT needs a nonnegative doubly stochastic W");
  }
  if (n > 1 && subdominant_norm(W) >= 1.0 - 1e-12) {
    throw AssumptionViolation("DSGT needs ||W - 11^T/n||_2 < 1");
  }
  const Vector uniform = Vector::Constant(n, 1.0 / static_cast<double>(n));
  Trace tr = run_spp(pr, MixingPair{W, W, false}, uniform, uniform, schedule, opts);
  tr.method = "dsgt";
  return tr;
}

/// Centralized minibatch SGD on the same per-(node, iteration) noise streams.
inline Trace run_centralized_sgd(const Problem& pr, const StepsizeSchedule& schedule,
                                 const RunOptions& opts) {
  if (opts.metrics_every < 1) throw InputError("metrics_every must be >= 1");
  Vector x = opts.x0.value_or(Vector::Zero(pr.p));
  if (x.size() != pr.p) throw DimensionError("x0 dimension mismatch");
  Trace tr;
  tr.seed = opts.seed;
  tr.problem_id = pr.id;
  tr.method = "centralized";
  auto observe = [&](long t, double gamma, const Matrix& G) {
    if (t % opts.metrics_every != 0 && t != opts.T) return;
    TraceRecord rec;
    rec.t = t;
    rec.gamma = gamma;
    rec.g_fro = G.norm();
    detail::fill_metrics(rec, pr, x, opts.record_f);
    tr.records.push_back(rec);
  };
  auto mean_grad = [&](long t, Matrix& G) {
    G = detail::gradients(pr, Vector::Ones(pr.n) * x.transpose(), opts.batch, opts.seed, t,
                          opts.workers);
    return Vector(G.colwise().sum().transpose() / static_cast<double>(pr.n));
  };
  Matrix G;
  Vector g = mean_grad(0, G);
  observe(0, schedule.at(0), G);
  for (long t = 0; t < opts.T; ++t) {
    const double gamma = schedule.at(t);
    x = x - gamma * g;
    if (!x.allFinite()) throw DivergenceError("non-finite iterate", t + 1);
    g = mean_grad(t + 1, G);
    observe(t + 1, schedule.at(t + 1), G);
  }
  tr.final_x_hat = x;
  return tr;
}

// ---------------------------------------------------------------------------
// Output

inline constexpr const char* kTraceHeader =
    "t,gamma,grad_norm_sq,consensus,tracking,invariant_residual,f_hat";

inline void write_trace_csv(std::ostream& out, const std::vector<TraceRecord>& recs) {
  out << kTraceHeader << '\n';
  for (const auto& r : recs) {
    out << r.t << ',' << format_double(r.gamma) << ',' << format_double(r.grad_norm_sq) << ','
        << format_double(r.consensus) << ',' << format_double(r.tracking) << ','
        << format_double(r.invariant_residual) << ',';
    if (!std::isnan(r.f_hat)) out << format_double(r.f_hat);
    out << '\n';
  }
}

inline nlohmann::json trace_metadata(const Trace& tr) {
  return nlohmann::json{{"seed", tr.seed},
                        {"pair_id", tr.pair_id},
                        {"problem_id", tr.problem_id},
                        {"method", tr.method},
                        {"records", tr.records.size()},
                        {"max_invariant_ratio", tr.max_invariant_ratio},
                        {"max_hat_residual", tr.max_hat_residual}};
}

/// Per-index arithmetic mean of several traces with identical record grids.
inline std::vector<TraceRecord> aggregate_mean(const std::vector<Trace>& traces) {
  if (traces.empty()) return {};
  const std::size_t len = traces.front().records.size();
  for (const auto& t : traces)
    if (t.records.size() != len) throw DimensionError("traces have different lengths");
  std::vector<TraceRecord> out(len);
  const double k = static_cast<double>(traces.size());
  for (std::size_t r = 0; r < len; ++r) {
    TraceRecord acc;
    acc.t = traces.front().records[r].t;
    acc.gamma = traces.front().records[r].gamma;
    acc.f_hat = 0.0;
    acc.dist_sq = 0.0;
    for (const auto& tr : traces) {
      const auto& s = tr.records[r];
      acc.grad_norm_sq += s.grad_norm_sq / k;
      acc.consensus += s.consensus / k;
      acc.tracking += s.tracking / k;
      acc.invariant_residual += s.invariant_residual / k;
      acc.f_hat += s.f_hat / k;
      acc.dist_sq += s.dist_sq / k;
      acc.g_fro += s.g_fro / k;
      acc.hat_residual += s.hat_residual / k;
    }
    out[r] = acc;
  }
  return out;
}

}  // namespace spp
