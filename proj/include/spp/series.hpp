#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spp/errors.hpp"
#include "spp/linalg.hpp"
#include "spp/mixing.hpp"

namespace spp {

/// Spectral series constants of a certified pair.
///
/// With R~^k = R^k - 1 pi_R^T and C~^k = C^k - pi_C 1^T (C~^0 = I - pi_C 1^T):
///   M1 = ||pi_R^T C||^2 + sum_{t>=1} ||pi_R^T (C^{t+1} - C^t)||^2
///   M2 = sum_{t>=1} t ||pi_R^T (C^{t+1} - C^t)||
///   N1 = sum_{t>=1} ||pi_R^T C~^t||,      N2 = sum_{t>=0} ||pi_R^T C~^t||^2
///   N3 = sum_{t>=1} ||R~^t pi_C||,        N4 = sum_{t>=1} ||R~^t pi_C||^2
///   N5 = sum_t ||S_t||,  N6 = sum_t ||S_t + R~^t C~^0||^2,
///   N8 = sum_t ||S_{t+1} - S_t||, N7 = sum_t ||S_{t+1} - S_t||^2,
/// where S_t = sum_{k=1}^{t-1} R~^k C~^{t-k}.
struct SpectralReport {
  int n = 0;
  Vector pi_R;
  Vector pi_C;
  double pi = 0.0;
  std::optional<double> lambda;      // ||W - 11^T/n|| when R = C = W doubly stochastic
  std::optional<double> lambda_min;  // smallest eigenvalue when that W is symmetric
  double M1 = 0, M2 = 0, M2_tilde = 0;
  double N1 = 0, N2 = 0, N3 = 0, N4 = 0, N5 = 0, N6 = 0, N7 = 0, N8 = 0;
  int truncation_T = 0;
  double tail_bound = 0.0;
  bool spanning_tree_mode = false;

  // Partial sums after each index when SeriesOptions::record_partials is set,
  // ordered as M1, M2, N1..N8.
  std::vector<std::array<double, 10>> partials;
};

struct SeriesOptions {
  double tol = 1e-10;
  int max_terms = 100'000;
  bool record_partials = false;
};

namespace detail {

// sum_{t > T} t^a x^t for a in {0, 1, 2} and 0 <= x < 1.
inline double power_tail(int a, double x, int T) {
  if (x <= 0.0) return 0.0;
  const double tt = static_cast<double>(T);
  const double lead = std::pow(x, tt + 1.0);
  const double q = 1.0 - x;
  switch (a) {
    case 0:
      return lead / q;
    case 1:
      return lead * (tt * q + 1.0) / (q * q);
    default:
      return lead * (tt * tt * q * q + 2.0 * tt * q + 1.0 + x) / (q * q * q);
  }
}

inline bool is_doubly_stochastic(const Matrix& w) {
  return (w.array() >= 0.0).all() && row_sum_residual(w) <= kStochasticTolerance &&
         column_sum_residual(w) <= kStochasticTolerance;
}

}  // namespace detail

/// ||W - 11^T/n||_2 by power iteration.
inline double subdominant_norm(const Matrix& w) {
  const Eigen::Index n = w.rows();
  return spectral_norm(w - Matrix::Constant(n, n, 1.0 / static_cast<double>(n)));
}

/// Truncated series with a certified geometric tail.
///
/// Summation stops at the first index T >= max(m_R, m_C) whose tail bound,
/// derived from the certificates, is below `tol` for every series.
inline SpectralReport compute_constants(const CertifiedPair& cp, const SeriesOptions& opts = {}) {
  const Matrix& R = cp.pair.R;
  const Matrix& C = cp.pair.C;
  const Eigen::Index n = R.rows();
  const Vector& piR = cp.pi_R.pi;
  const Vector& piC = cp.pi_C.pi;
  const Vector ones = Vector::Ones(n);

  SpectralReport rep;
  rep.n = static_cast<int>(n);
  rep.pi_R = piR;
  rep.pi_C = piC;
  rep.pi = piR.dot(piC);
  rep.spanning_tree_mode = cp.pair.spanning_tree_mode;
  if (!(rep.pi > 0.0)) throw AssumptionViolation("pi_R^T pi_C must be positive");

  if ((R - C).cwiseAbs().maxCoeff() <= kStochasticTolerance && detail::is_doubly_stochastic(R)) {
    rep.lambda = subdominant_norm(R);
    if ((R - R.transpose()).cwiseAbs().maxCoeff() <= kStochasticTolerance) {
      Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (R + R.transpose()), Eigen::EigenvaluesOnly);
      rep.lambda_min = es.eigenvalues().minCoeff();
    }
  }

  const Matrix ER = R - ones * piR.transpose();      // R~^1, and R~^{t+1} = R~^t ER
  const Matrix EC = C - piC * ones.transpose();      // C~^1, and C~^{t+1} = C~^t EC
  const Matrix PiC = Matrix::Identity(n, n) - piC * ones.transpose();  // C~^0

  // Tail constants: ||R~^j||, ||C~^j|| <= B alpha^j for every j >= 0.
  const int m = std::max(cp.cert_R.m, cp.cert_C.m);
  const double alpha = std::max(cp.cert_R.alpha, cp.cert_C.alpha);
  double B = std::max(1.0, spectral_norm(PiC));
  {
    Matrix rp = ER;
    Matrix cpow = EC;
    for (int j = 1; j < m; ++j) {
      const double aj = std::pow(alpha, j);
      B = std::max({B, spectral_norm(rp) / aj, spectral_norm(cpow) / aj});
      rp = rp * ER;
      cpow = cpow * EC;
    }
  }
  const double nR = piR.norm();
  const double nC = piC.norm();
  const double a2 = alpha * alpha;
  const double B2 = B * B;
  auto tail_at = [&](int T) {
    using detail::power_tail;
    const std::array<double, 10> tails{
        4.0 * nR * nR * power_tail(0, a2, T),  // M1
        2.0 * nR * power_tail(1, alpha, T),    // M2
        nR * power_tail(0, alpha, T),          // N1
        nR * nR * power_tail(0, a2, T),        // N2
        nC * power_tail(0, alpha, T),          // N3
        nC * nC * power_tail(0, a2, T),        // N4
        B2 * power_tail(1, alpha, T),          // N5
        B2 * B2 * power_tail(2, a2, T),        // N6
        4.0 * B2 * B2 * power_tail(2, a2, T),  // N7
        2.0 * B2 * power_tail(1, alpha, T),    // N8
    };
    return *std::max_element(tails.begin(), tails.end());
  };

  Vector u = piR - rep.pi * ones;  // (pi_R^T C~^t)^T, starting at t = 0
  rep.N2 = u.squaredNorm();
  const Vector first = C.transpose() * piR;
  rep.M1 = first.squaredNorm();
  u = EC.transpose() * u;

  Matrix Rt = ER;             // R~^t
  Matrix S = Matrix::Zero(n, n);  // S_t
  Vector w = ER * piC;        // R~^t pi_C
  Vector warm5, warm6, warm8;

  for (int t = 1;; ++t) {
    const Vector u_next = EC.transpose() * u;
    const Vector d = u_next - u;  // pi_R^T (C^{t+1} - C^t)
    const double dn = d.norm();
    rep.M1 += dn * dn;
    rep.M2 += static_cast<double>(t) * dn;

    const double un = u.norm();
    rep.N1 += un;
    rep.N2 += un * un;

    const double wn = w.norm();
    rep.N3 += wn;
    rep.N4 += wn * wn;

    rep.N5 += spectral_norm(S, &warm5);
    const Matrix S6 = S + Rt - (Rt * piC) * ones.transpose();
    const double s6 = spectral_norm(S6, &warm6);
    rep.N6 += s6 * s6;

    Matrix S_next = (S + Rt) * EC;
    const double dd = spectral_norm(S_next - S, &warm8);
    rep.N7 += dd * dd;
    rep.N8 += dd;

    if (opts.record_partials) {
      rep.partials.push_back({rep.M1, rep.M2, rep.N1, rep.N2, rep.N3, rep.N4, rep.N5, rep.N6,
                              rep.N7, rep.N8});
    }

    if (t >= m) {
      const double tail = tail_at(t);
      if (tail < opts.tol) {
        rep.truncation_T = t;
        rep.tail_bound = tail;
        break;
      }
    }
    if (t >= opts.max_terms) {
      throw TruncationFailure("series tail bound " + format_double(tail_at(t)) +
                                  " still above tol after " + std::to_string(t) + " terms",
                              t);
    }
    u = u_next;
    w = ER * w;
    Rt = Rt * ER;
    S = std::move(S_next);
  }
  rep.M2_tilde = rep.spanning_tree_mode ? 0.0 : rep.M2;
  return rep;
}

/// Exact and bounding constants for R = C = W, W symmetric doubly stochastic.
struct SymmetricClosedForm {
  int n = 0;
  double lambda = 0.0;
  double lambda_min = 0.0;
  double M1 = 0, M2 = 0, N1 = 0, N2 = 0, N3 = 0, N4 = 0;
  double N5 = 0, N6 = 0;
  double N7_bound = 0, N8_bound = 0;  // symmetric-case bounds (use c = 1 + min(lambda_n, 0))
  // Bounds that hold for any doubly stochastic W with this lambda.
  double N5_bound_general = 0, N6_bound_general = 0, N7_bound_general = 0,
         N8_bound_general = 0;
};

inline SymmetricClosedForm closed_form_symmetric(const Matrix& w) {
  const Eigen::Index n = w.rows();
  if (w.cols() != n) throw DimensionError("closed form needs a square matrix");
  if ((w - w.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw InputError("closed form needs a symmetric matrix");
  }
  if (!detail::is_doubly_stochastic(w)) throw InputError("closed form needs a doubly stochastic matrix");
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (w + w.transpose()), Eigen::EigenvaluesOnly);
  Vector ev = es.eigenvalues();  // ascending; the last one is 1
  SymmetricClosedForm out;
  out.n = static_cast<int>(n);
  out.lambda_min = ev[0];
  double lam = 0.0;
  for (Eigen::Index i = 0; i + 1 < n; ++i) lam = std::max(lam, std::abs(ev[i]));
  out.lambda = lam;
  if (!(lam < 1.0)) throw InputError("closed form needs lambda < 1");
  const double l2 = lam * lam;
  out.M1 = 1.0 / static_cast<double>(n);
  out.N5 = l2 / ((1.0 - lam) * (1.0 - lam));
  out.N6 = (l2 + l2 * l2) / std::pow(1.0 - l2, 3);
  const double c = 1.0 + std::min(out.lambda_min, 0.0);
  out.N7_bound = 10.0 / (c * (1.0 - lam));
  out.N8_bound = 10.0 / (std::sqrt(c) * (1.0 - lam));
  out.N5_bound_general = out.N5;
  out.N6_bound_general = out.N6;
  out.N7_bound_general = 8.0 / std::pow(1.0 - l2, 3);
  out.N8_bound_general = 8.0 / ((1.0 - lam) * (1.0 - lam));
  return out;
}

/// Q/(n pi^2) with Q = max{M1, M2~, M1 M2~}; linear speedup holds when this
/// stays bounded in n.
inline double speedup_ratio(const SpectralReport& rep) {
  if (!(rep.pi > 0.0)) throw AssumptionViolation("speedup ratio undefined for pi = 0");
  const double q = std::max({rep.M1, rep.M2_tilde, rep.M1 * rep.M2_tilde});
  return q / (static_cast<double>(rep.n) * rep.pi * rep.pi);
}

// ---------------------------------------------------------------------------
// Theory bundle

/// Problem-side inputs of the convergence bound.
struct ProblemConstants {
  double L = 1.0;
  double sigma2 = 0.0;
  double Delta_f = 0.0;
  double F0 = 0.0;  // ||grad F(x0)||_F^2 / n
};

struct TheoryBundle {
  double P1 = 0, P2 = 0, P3 = 0, P4 = 0, P5 = 0, Q = 0, C1 = 0;
  double L = 1.0, sigma2 = 0.0, Delta_f = 0.0, F0 = 0.0;
  double gamma = 0.0;
  double gamma_cap = 0.0;  // 1/(500 sqrt(max{P1..P4}) L)
  int T = 0;
};

inline constexpr double kUniversalConstant = 2e6;

namespace detail {
inline double safe_ratio(double num, double den) {
  if (num == 0.0) return 0.0;
  if (den == 0.0) return std::numeric_limits<double>::infinity();
  return num / den;
}
}  // namespace detail

inline TheoryBundle theory_bundle(const SpectralReport& r, const ProblemConstants& pc, int T) {
  if (T < 1) throw InputError("horizon T must be at least 1");
  if (!(pc.L > 0.0)) throw InputError("L must be positive");
  const double n = static_cast<double>(r.n);
  const double pi = r.pi;
  const double m2 = r.M2_tilde;
  TheoryBundle b;
  b.L = pc.L;
  b.sigma2 = pc.sigma2;
  b.Delta_f = pc.Delta_f;
  b.F0 = pc.F0;
  b.T = T;
  b.P1 = std::max({n * r.N1 * r.N1, n * r.N3 * r.N3, r.N8 * r.N8, std::sqrt(n) * r.N1 * r.N5,
                   n * pi * r.N5});
  b.C1 = b.P1;
  b.P2 = std::max({n * n * pi * pi, n * r.N1 * r.N1, n * r.N1 * r.N1 * m2, n * n * pi * pi * m2 * m2});
  b.P3 = std::max({n * n * pi * pi, std::pow(r.N1, 4) / (pi * pi), std::pow(r.N3, 4) / (pi * pi)});
  b.P4 = std::sqrt(std::max(b.P2, b.P3)) * r.N5;
  b.P5 = std::max({r.N2 / pi, r.N2 / (n * pi * pi), detail::safe_ratio(r.N6, r.N5)});
  b.Q = std::max({r.M1, m2, r.M1 * m2});

  const double pmax = std::max({b.P1, b.P2, b.P3, b.P4});
  b.gamma_cap = 1.0 / (500.0 * std::sqrt(pmax) * pc.L);
  const double A = pc.Delta_f / (n * pi);
  const double Bc = b.Q * pc.sigma2 * pc.L / (n * pi);
  const double Cc = std::sqrt(std::max(b.P2, b.P3)) * std::max(r.N4, r.N7) * pc.sigma2 * pc.L *
                    pc.L / (n * pi);
  const double Tp1 = static_cast<double>(T) + 1.0;
  const double inf = std::numeric_limits<double>::infinity();
  const double g_c = Cc > 0.0 ? std::cbrt(A / (Cc * Tp1)) : inf;
  const double g_b = Bc > 0.0 ? std::sqrt(A / (Bc * Tp1)) : inf;
  b.gamma = std::min({g_c, g_b, b.gamma_cap});
  return b;
}

/// Right-hand side of the averaged-gradient bound for the bundle's stepsize.
///
/// The three stepsize-balanced terms carry the universal constant C0 = 2e6.
/// The gamma^4 term is evaluated at the chosen stepsize, which keeps it finite
/// as sigma -> 0.
inline double bound_rhs(const TheoryBundle& b, const SpectralReport& r) {
  const double n = static_cast<double>(r.n);
  const double pi = r.pi;
  const double Tp1 = static_cast<double>(b.T) + 1.0;
  const double A = b.Delta_f / (n * pi);
  const double Bc = b.Q * b.sigma2 * b.L / (n * pi);
  const double Cc = std::sqrt(std::max(b.P2, b.P3)) * std::max(r.N4, r.N7) * b.sigma2 * b.L * b.L /
                    (n * pi);
  const double alpha = 1.0 / b.gamma_cap;
  const double balanced = std::sqrt(A * Bc / Tp1) + std::cbrt(Cc) * std::pow(A / Tp1, 2.0 / 3.0) +
                          alpha * A / Tp1;
  const double init = b.F0 == 0.0 ? 0.0 : 30.0 * b.P5 * b.F0 / (n * pi * Tp1);
  const double quartic = std::sqrt(std::max(b.P2, b.P3)) * r.M1 * r.N5 * r.N5 * b.sigma2 *
                         std::pow(b.L, 4) / (n * pi) * std::pow(b.gamma, 4);
  return kUniversalConstant * (balanced + quartic) + init;
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {
inline nlohmann::json finite_or_null(double x) {
  return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
}
}  // namespace detail

inline nlohmann::json to_json(const SpectralReport& r) {
  using detail::finite_or_null;
  nlohmann::json j{
      {"n", r.n},
      {"pi_R", to_std(r.pi_R)},
      {"pi_C", to_std(r.pi_C)},
      {"pi", r.pi},
      {"M1", r.M1},
      {"M2", r.M2},
      {"M2_tilde", r.M2_tilde},
      {"N1", r.N1}, {"N2", r.N2}, {"N3", r.N3}, {"N4", r.N4},
      {"N5", r.N5}, {"N6", r.N6}, {"N7", r.N7}, {"N8", r.N8},
      {"truncation_T", r.truncation_T},
      {"tail_bound", r.tail_bound},
      {"spanning_tree_mode", r.spanning_tree_mode},
  };
  j["lambda"] = r.lambda ? nlohmann::json(*r.lambda) : nlohmann::json(nullptr);
  j["lambda_min"] = r.lambda_min ? nlohmann::json(*r.lambda_min) : nlohmann::json(nullptr);
  j["speedup_ratio"] = finite_or_null(speedup_ratio(r));
  return j;
}

inline nlohmann::json to_json(const TheoryBundle& b) {
  using detail::finite_or_null;
  return nlohmann::json{
      {"P1", finite_or_null(b.P1)}, {"P2", finite_or_null(b.P2)}, {"P3", finite_or_null(b.P3)},
      {"P4", finite_or_null(b.P4)}, {"P5", finite_or_null(b.P5)}, {"Q", finite_or_null(b.Q)},
      {"C1", finite_or_null(b.C1)}, {"L", b.L}, {"sigma2", b.sigma2},
      {"Delta_f", b.Delta_f}, {"F0", b.F0}, {"gamma", finite_or_null(b.gamma)},
      {"gamma_cap", finite_or_null(b.gamma_cap)}, {"T", b.T},
  };
}

}  // namespace spp
