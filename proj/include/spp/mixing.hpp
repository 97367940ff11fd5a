#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spp/digraph.hpp"
#include "spp/errors.hpp"
#include "spp/linalg.hpp"

namespace spp {

/// Row-stochastic pull matrix R and column-stochastic push matrix C.
struct MixingPair {
  Matrix R;
  Matrix C;
  // True for the 0/1 spanning-tree construction; selects M2_tilde = 0.
  bool spanning_tree_mode = false;

  int n() const { return static_cast<int>(R.rows()); }
};

enum class EigenOf { pull_R, push_CT };

inline const char* to_string(EigenOf w) {
  return w == EigenOf::pull_R ? "R" : "C^T";
}

/// Nonnegative unit-l1 left eigenvector of a row-stochastic matrix for the
/// eigenvalue 1, supported on the root set of the induced graph.
struct RootEigenvector {
  Vector pi;
  EigenOf associated_matrix = EigenOf::pull_R;
};

/// ||A^t - 1 pi^T||_2 <= alpha^t for every t in [m, checked_horizon].
struct DecayCertificate {
  int m = 1;
  double alpha = 0.0;
  int checked_horizon = 0;
  double rho_estimate = 0.0;
};

inline constexpr double kStochasticTolerance = 1e-12;
inline constexpr double kClampThreshold = 1e-12;

// ---------------------------------------------------------------------------
// Constructors

/// R_ij = 1/(1 + d_i^in) for each in-neighbor j of i and for j = i.
inline Matrix pull_matrix(const DirectedGraph& g) {
  const int n = g.n();
  Matrix r = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const double w = 1.0 / (1.0 + g.in_degree(i));
    r(i, i) = w;
    for (int j : g.in_neighbors(i)) r(i, j) = w;
  }
  return r;
}

/// C_ij = 1/(1 + d_j^out) for each out-neighbor i of j and for i = j.
inline Matrix push_matrix(const DirectedGraph& g) {
  const int n = g.n();
  Matrix c = Matrix::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    const double w = 1.0 / (1.0 + g.out_degree(j));
    c(j, j) = w;
    for (int i : g.out_neighbors(j)) c(i, j) = w;
  }
  return c;
}

/// Metropolis-Hastings weights on an undirected (symmetric) edge set.
inline Matrix doubly_stochastic(const DirectedGraph& g) {
  if (!g.is_symmetric()) throw NotUndirectedError("Metropolis weights need a symmetric edge set");
  const int n = g.n();
  Matrix w = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j : g.out_neighbors(i)) {
      w(i, j) = 1.0 / (1.0 + std::max(g.out_degree(i), g.out_degree(j)));
    }
  }
  for (int i = 0; i < n; ++i) {
    double off = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i) off += w(i, j);
    w(i, i) = 1.0 - off;
  }
  return w;
}

/// 0/1 matrices for a spanning-tree pair with a common root.
///
/// Each node pulls from its unique parent in `pull` (the root keeps its own
/// value) and pushes its whole tracker to its parent in `push`.
inline MixingPair tree_01_matrices(const DirectedGraph& pull, const DirectedGraph& push) {
  if (pull.n() != push.n()) throw DimensionError("tree pair size mismatch");
  const int n = pull.n();
  if (!(push == pull.reversed())) {
    throw StructureError("push tree must be the reversal of the pull tree");
  }
  if (pull.edge_count() != static_cast<std::size_t>(n - 1)) {
    throw StructureError("a spanning tree on n nodes has n-1 edges");
  }
  int root = -1;
  for (int i = 0; i < n; ++i) {
    const int d = pull.in_degree(i);
    if (d == 0) {
      if (root >= 0) throw StructureError("pull graph has more than one root");
      root = i;
    } else if (d != 1) {
      throw StructureError("node " + std::to_string(i) + " has several parents");
    }
  }
  const RootSet roots = root_set(pull);
  if (root < 0 || roots.size() != 1 || roots.front() != root) {
    throw StructureError("pull graph is not a spanning tree");
  }
  MixingPair out{Matrix::Zero(n, n), Matrix::Zero(n, n), true};
  out.R(root, root) = 1.0;
  out.C(root, root) = 1.0;
  for (int i = 0; i < n; ++i) {
    if (i == root) continue;
    const int parent = pull.in_neighbors(i).front();
    out.R(i, parent) = 1.0;
    out.C(parent, i) = 1.0;
  }
  return out;
}

/// Graph with an edge (j, i) wherever A_ij > 0, i != j.
inline DirectedGraph induced_graph(const Matrix& a) {
  DirectedGraph g(static_cast<int>(a.rows()));
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      if (i != j && a(i, j) > 0.0) g.add_edge(static_cast<int>(j), static_cast<int>(i));
  return g;
}

inline double row_sum_residual(const Matrix& a) {
  return (a.rowwise().sum().array() - 1.0).abs().maxCoeff();
}

inline double column_sum_residual(const Matrix& a) {
  return (a.colwise().sum().array() - 1.0).abs().maxCoeff();
}

// ---------------------------------------------------------------------------
// Root eigenvector

struct RootEigenvectorOptions {
  double tolerance = 1e-12;
  int max_iterations = 2'000'000;
};

/// Root eigenvector of a row-stochastic `a` by power iteration on a^T.
///
/// Rows of root nodes place no weight on non-root nodes, so the iteration runs
/// on the root block only. The lazy form (I + a)/2 has the same fixed point
/// and also converges for periodic blocks.
inline RootEigenvector root_eigenvector(const Matrix& a, const RootSet& roots,
                                        EigenOf which = EigenOf::pull_R,
                                        const RootEigenvectorOptions& opts = {}) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n) throw DimensionError("root_eigenvector needs a square matrix");
  if (roots.empty()) {
    throw AssumptionViolation(std::string("induced graph of ") + to_string(which) +
                              " has no spanning tree");
  }
  const auto k = static_cast<Eigen::Index>(roots.size());
  Matrix block(k, k);
  for (Eigen::Index r = 0; r < k; ++r)
    for (Eigen::Index c = 0; c < k; ++c) block(r, c) = a(roots[r], roots[c]);
  const Matrix lazy = 0.5 * (Matrix::Identity(k, k) + block);

  Vector pi = Vector::Constant(k, 1.0 / static_cast<double>(k));
  bool converged = false;
  for (int it = 0; it < opts.max_iterations; ++it) {
    Vector next = lazy.transpose() * pi;
    next /= next.lpNorm<1>();
    const double diff = (next - pi).lpNorm<Eigen::Infinity>();
    pi = std::move(next);
    if (diff < opts.tolerance) {
      converged = true;
      break;
    }
  }
  if (!converged) throw NumericError("root eigenvector power iteration did not converge");

  for (Eigen::Index r = 0; r < k; ++r)
    if (pi[r] < kClampThreshold) pi[r] = 0.0;
  pi /= pi.lpNorm<1>();

  RootEigenvector out{Vector::Zero(n), which};
  for (Eigen::Index r = 0; r < k; ++r) out.pi[roots[r]] = pi[r];
  return out;
}

// ---------------------------------------------------------------------------
// Decay certificate

struct DecayOptions {
  int check_horizon = 1000;
  int norm_root_power = 64;  // rounded up to a power of two
};

/// Numerical certificate of exponential decay for a row-stochastic `a`.
///
/// The decay rate comes from rho = ||(A - 1 pi^T)^K||^(1/K); alpha adds 5% of
/// the gap. m is the smallest start such that the bound holds on the whole
/// checked range [m, check_horizon].
inline DecayCertificate certify_decay(const Matrix& a, const RootEigenvector& pi,
                                      const DecayOptions& opts = {}) {
  const Eigen::Index n = a.rows();
  if (pi.pi.size() != n) throw DimensionError("root eigenvector length mismatch");
  if (opts.check_horizon < 1) throw InputError("check horizon must be positive");
  const Matrix dev = a - Vector::Ones(n) * pi.pi.transpose();

  Matrix power = dev;
  int k = 1;
  while (k < opts.norm_root_power) {
    power = power * power;
    k *= 2;
  }
  const double big = spectral_norm(power);
  const double rho = big > 0.0 ? std::pow(big, 1.0 / k) : 0.0;
  const double margin = 0.05 * (1.0 - rho);
  const double alpha = std::min(rho + margin, 1.0 - 1e-9);

  std::vector<double> norms(static_cast<std::size_t>(opts.check_horizon) + 1, 0.0);
  Matrix dt = dev;
  Vector warm;
  for (int t = 1; t <= opts.check_horizon; ++t) {
    if (t > 1) dt = dt * dev;
    norms[t] = spectral_norm(dt, &warm);
  }
  int m = opts.check_horizon + 1;
  for (int t = opts.check_horizon; t >= 1; --t) {
    if (norms[t] <= std::pow(alpha, t)) {
      m = t;
    } else {
      break;
    }
  }
  if (m > opts.check_horizon || !(alpha < 1.0)) {
    throw DecayUncertifiable("||A^t - 1 pi^T|| <= alpha^t fails at t = " +
                             std::to_string(opts.check_horizon) +
                             " (rho estimate " + format_double(rho) + ")");
  }
  return DecayCertificate{m, alpha, opts.check_horizon, rho};
}

// ---------------------------------------------------------------------------
// Pair validation

/// Pair whose assumptions have been checked, with its certification artifacts.
struct CertifiedPair {
  MixingPair pair;
  RootEigenvector pi_R;
  RootEigenvector pi_C;
  DecayCertificate cert_R;
  DecayCertificate cert_C;

  double pi() const { return pi_R.pi.dot(pi_C.pi); }
};

struct ValidationCheck {
  std::string name;
  bool passed = false;
  double value = 0.0;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;
  std::optional<CertifiedPair> certified;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(),
                       [](const ValidationCheck& c) { return c.passed; });
  }

  const ValidationCheck* find(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
};

/// Runs every assumption check on the pair; failures become report entries.
inline ValidationReport validate_pair(const MixingPair& pair, const DecayOptions& decay = {}) {
  ValidationReport rep;
  const Eigen::Index n = pair.R.rows();
  auto add = [&rep](std::string name, bool ok, double value, std::string detail = {}) {
    rep.checks.push_back({std::move(name), ok, value, std::move(detail)});
  };
  if (n == 0 || pair.R.cols() != n || pair.C.rows() != n || pair.C.cols() != n) {
    add("dimensions", false, static_cast<double>(n), "R and C must be square and equal size");
    return rep;
  }
  const double rmin = pair.R.minCoeff();
  const double cmin = pair.C.minCoeff();
  add("R_nonnegative", rmin >= 0.0, rmin);
  add("C_nonnegative", cmin >= 0.0, cmin);
  const double rres = row_sum_residual(pair.R);
  const double cres = column_sum_residual(pair.C);
  add("R_row_stochastic", rres <= kStochasticTolerance, rres, "||R 1 - 1||_inf");
  add("C_column_stochastic", cres <= kStochasticTolerance, cres, "||C^T 1 - 1||_inf");

  const DirectedGraph g_pull = induced_graph(pair.R);
  const DirectedGraph g_push = induced_graph(pair.C);
  const RootSet roots_R = root_set(g_pull);
  const RootSet roots_CT = root_set(g_push.reversed());
  const RootSet shared = common_roots(g_pull, g_push);
  add("assumption1_common_root", !shared.empty(), static_cast<double>(shared.size()),
      "|R_R intersect R_C^T|");
  if (!rep.passed()) return rep;

  std::optional<RootEigenvector> pi_R, pi_C;
  std::optional<DecayCertificate> cert_R, cert_C;
  auto eigen_check = [&](const Matrix& a, const RootSet& roots, EigenOf which,
                         std::optional<RootEigenvector>& pi,
                         std::optional<DecayCertificate>& cert, const std::string& tag) {
    try {
      pi = root_eigenvector(a, roots, which);
      const double res = (pi->pi.transpose() * a - pi->pi.transpose()).lpNorm<Eigen::Infinity>();
      add("root_eigenvector_" + tag, res <= 1e-10, res, "||pi^T A - pi^T||_inf");
    } catch (const Error& e) {
      add("root_eigenvector_" + tag, false, 0.0, e.what());
      return;
    }
    try {
      cert = certify_decay(a, *pi, decay);
      add("decay_" + tag, true, cert->alpha,
          "m=" + std::to_string(cert->m) + " alpha=" + format_double(cert->alpha));
    } catch (const Error& e) {
      add("decay_" + tag, false, 1.0, e.what());
    }
  };
  eigen_check(pair.R, roots_R, EigenOf::pull_R, pi_R, cert_R, "R");
  const Matrix ct = pair.C.transpose();
  eigen_check(ct, roots_CT, EigenOf::push_CT, pi_C, cert_C, "CT");

  if (pi_R && pi_C) {
    const double pi = pi_R->pi.dot(pi_C->pi);
    add("pi_positive", pi > 0.0, pi, "pi_R^T pi_C");
  }
  if (rep.passed()) {
    rep.certified = CertifiedPair{pair, *pi_R, *pi_C, *cert_R, *cert_C};
  }
  return rep;
}

/// validate_pair, throwing the first failed check.
inline CertifiedPair certify_pair(const MixingPair& pair, const DecayOptions& decay = {}) {
  ValidationReport rep = validate_pair(pair, decay);
  if (!rep.certified) {
    for (const auto& c : rep.checks) {
      if (!c.passed) {
        throw AssumptionViolation("pair check '" + c.name + "' failed: value " +
                                  format_double(c.value) +
                                  (c.detail.empty() ? "" : " (" + c.detail + ")"));
      }
    }
    throw AssumptionViolation("pair validation failed");
  }
  return std::move(*rep.certified);
}

inline nlohmann::json to_json(const ValidationReport& rep) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : rep.checks) {
    nlohmann::json j{{"check", c.name}, {"passed", c.passed}, {"detail", c.detail}};
    if (std::isfinite(c.value)) {
      j["value"] = c.value;
    } else {
      j["value"] = nullptr;
    }
    checks.push_back(std::move(j));
  }
  nlohmann::json out{{"passed", rep.passed()}, {"checks", checks}};
  if (rep.certified) {
    out["pi_R"] = to_std(rep.certified->pi_R.pi);
    out["pi_C"] = to_std(rep.certified->pi_C.pi);
    out["pi"] = rep.certified->pi();
  }
  return out;
}

}  // namespace spp
