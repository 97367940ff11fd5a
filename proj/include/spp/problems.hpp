#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "spp/errors.hpp"
#include "spp/linalg.hpp"
#include "spp/rng.hpp"

namespace spp {

/// f_i(x) = 1/2 x^T A x - b^T x.
struct QuadraticLocal {
  Matrix A;
  Vector b;
};

/// f_i(x) = mean_j log(1 + exp(-y_j h_j^T x)) + reg * sum_k x_k^2 / (1 + x_k^2).
struct LogisticLocal {
  Matrix H;  // J x p, one sample per row
  Vector y;  // labels in {-1, +1}
  double reg = 0.0;
};

/// n local objectives whose average is minimized.
struct Problem {
  int n = 0;
  int p = 0;
  std::variant<std::vector<QuadraticLocal>, std::vector<LogisticLocal>> locals;
  double L = 1.0;
  // Quadratics: exact per-node variance of the additive gradient noise.
  // Logistic: nominal scale only; sampling noise is not Gaussian.
  double sigma2_hint = 0.0;
  std::optional<Vector> minimizer;  // known for quadratics
  std::string id;

  bool is_quadratic() const {
    return std::holds_alternative<std::vector<QuadraticLocal>>(locals);
  }
  const std::vector<QuadraticLocal>& quadratics() const {
    return std::get<std::vector<QuadraticLocal>>(locals);
  }
  const std::vector<LogisticLocal>& logistics() const {
    return std::get<std::vector<LogisticLocal>>(locals);
  }
};

namespace detail {

inline void check_node(const Problem& pr, int i, const Vector& x) {
  if (i < 0 || i >= pr.n) throw DimensionError("node index out of range");
  if (x.size() != pr.p) {
    throw DimensionError("x has dimension " + std::to_string(x.size()) + ", expected " +
                         std::to_string(pr.p));
  }
}

// log(1 + exp(z)) without overflow.
inline double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

// 1 / (1 + exp(-z)).
inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline Vector regularizer_grad(const Vector& x, double reg) {
  return (2.0 * reg * x.array() / (1.0 + x.array().square()).square()).matrix();
}

inline Vector standard_normal(Eigen::Index p, Stream& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Vector v(p);
  for (Eigen::Index k = 0; k < p; ++k) v[k] = nd(rng);
  return v;
}

}  // namespace detail

inline double value(const Problem& pr, int i, const Vector& x) {
  detail::check_node(pr, i, x);
  if (pr.is_quadratic()) {
    const auto& q = pr.quadratics()[i];
    return 0.5 * x.dot(q.A * x) - q.b.dot(x);
  }
  const auto& l = pr.logistics()[i];
  const Vector margins = l.y.cwiseProduct(l.H * x);
  double data = 0.0;
  for (Eigen::Index j = 0; j < margins.size(); ++j) data += detail::softplus(-margins[j]);
  data /= static_cast<double>(margins.size());
  const double reg = l.reg * (x.array().square() / (1.0 + x.array().square())).sum();
  return data + reg;
}

inline Vector grad(const Problem& pr, int i, const Vector& x) {
  detail::check_node(pr, i, x);
  if (pr.is_quadratic()) {
    const auto& q = pr.quadratics()[i];
    return q.A * x - q.b;
  }
  const auto& l = pr.logistics()[i];
  const Vector margins = l.y.cwiseProduct(l.H * x);
  Vector weights(margins.size());
  for (Eigen::Index j = 0; j < margins.size(); ++j) {
    weights[j] = -l.y[j] * detail::sigmoid(-margins[j]);
  }
  Vector g = l.H.transpose() * weights;
  g /= static_cast<double>(margins.size());
  return g + detail::regularizer_grad(x, l.reg);
}

/// Average objective f = (1/n) sum_i f_i.
inline double global_value(const Problem& pr, const Vector& x) {
  double s = 0.0;
  for (int i = 0; i < pr.n; ++i) s += value(pr, i, x);
  return s / pr.n;
}

inline Vector global_grad(const Problem& pr, const Vector& x) {
  Vector g = Vector::Zero(pr.p);
  for (int i = 0; i < pr.n; ++i) g += grad(pr, i, x);
  return g / pr.n;
}

/// Unbiased stochastic gradient of f_i drawn from `rng`.
///
/// Logistic: `batch` samples uniformly with replacement; batch >= J enumerates
/// every sample and returns the exact gradient. Quadratic: exact gradient plus
/// N(0, sigma^2/p I), so the total variance is sigma^2.
inline Vector stoch_grad(const Problem& pr, int i, const Vector& x, int batch, Stream& rng) {
  detail::check_node(pr, i, x);
  if (batch < 1) throw InputError("batch must be at least 1");
  if (pr.is_quadratic()) {
    Vector g = grad(pr, i, x);
    if (pr.sigma2_hint > 0.0) {
      const double s = std::sqrt(pr.sigma2_hint / static_cast<double>(pr.p));
      std::normal_distribution<double> nd(0.0, 1.0);
      for (Eigen::Index k = 0; k < g.size(); ++k) g[k] += s * nd(rng);
    }
    return g;
  }
  const auto& l = pr.logistics()[i];
  const auto J = l.H.rows();
  if (batch >= J) return grad(pr, i, x);
  std::uniform_int_distribution<Eigen::Index> pick(0, J - 1);
  Vector g = Vector::Zero(pr.p);
  for (int s = 0; s < batch; ++s) {
    const Eigen::Index j = pick(rng);
    const double margin = l.y[j] * l.H.row(j).dot(x);
    g += (-l.y[j] * detail::sigmoid(-margin)) * l.H.row(j).transpose();
  }
  g /= static_cast<double>(batch);
  return g + detail::regularizer_grad(x, l.reg);
}

// ---------------------------------------------------------------------------
// Generators

struct QuadraticOptions {
  double mu = 0.1;
  double L = 1.0;
};

/// Random strongly convex quadratics with spectra in [mu, L].
///
/// b_i = A_i (x_base + heterogeneity * u_i); the global minimizer solves
/// (mean A_i) x = mean b_i and is stored on the problem.
inline Problem gen_quadratic(int n, int p, double heterogeneity, double sigma, Stream& rng,
                             const QuadraticOptions& opts = {}) {
  if (n < 1 || p < 1) throw InvalidSizeError("quadratic problem needs n, p >= 1");
  if (!(opts.mu > 0.0 && opts.mu <= opts.L)) throw InputError("need 0 < mu <= L");
  if (sigma < 0.0 || heterogeneity < 0.0) throw InputError("sigma and heterogeneity must be >= 0");
  std::uniform_real_distribution<double> unif(opts.mu, opts.L);
  const Vector base = detail::standard_normal(p, rng);
  std::vector<QuadraticLocal> locals;
  locals.reserve(static_cast<std::size_t>(n));
  Matrix Abar = Matrix::Zero(p, p);
  Vector bbar = Vector::Zero(p);
  for (int i = 0; i < n; ++i) {
    Matrix g(p, p);
    for (Eigen::Index c = 0; c < p; ++c) g.col(c) = detail::standard_normal(p, rng);
    const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
    Vector eig(p);
    for (Eigen::Index k = 0; k < p; ++k) eig[k] = unif(rng);
    eig[0] = opts.L;
    if (p > 1) eig[1] = opts.mu;
    Matrix A = q * eig.asDiagonal() * q.transpose();
    A = 0.5 * (A + A.transpose());
    const Vector u = detail::standard_normal(p, rng);
    Vector shift = base;
    if (heterogeneity > 0.0) shift += heterogeneity * u;
    Vector b = A * shift;
    Abar += A;
    bbar += b;
    locals.push_back({std::move(A), std::move(b)});
  }
  Problem pr;
  pr.n = n;
  pr.p = p;
  pr.L = opts.L;
  pr.sigma2_hint = sigma * sigma;
  pr.minimizer = Abar.ldlt().solve(bbar);
  pr.locals = std::move(locals);
  pr.id = "quadratic-n" + std::to_string(n) + "-p" + std::to_string(p);
  return pr;
}

struct LogisticOptions {
  bool force_zero_common = false;  // use x~ = 0 (labels become fair coin flips)
};

/// Synthetic logistic regression with heterogeneous local generators.
///
/// x~_i = x~ + v_i with x~ ~ N(0, I) and v_i ~ N(0, sigma_h^2 I); features
/// h ~ N(0, I); label +1 with probability sigmoid(h^T x~_i), else -1.
inline Problem gen_logistic(int n, int J, int p, double reg, double sigma_h, Stream& rng,
                            const LogisticOptions& opts = {}) {
  if (n < 1 || J < 1 || p < 1) throw InvalidSizeError("logistic problem needs n, J, p >= 1");
  if (sigma_h < 0.0) throw InputError("sigma_h must be >= 0");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vector common = detail::standard_normal(p, rng);
  if (opts.force_zero_common) common.setZero();
  std::vector<LogisticLocal> locals;
  locals.reserve(static_cast<std::size_t>(n));
  double L = 0.0;
  for (int i = 0; i < n; ++i) {
    Vector local = common;
    if (sigma_h > 0.0) local += sigma_h * detail::standard_normal(p, rng);
    LogisticLocal l{Matrix(J, p), Vector(J), reg};
    for (int j = 0; j < J; ++j) {
      l.H.row(j) = detail::standard_normal(p, rng).transpose();
      const double prob = detail::sigmoid(l.H.row(j).dot(local));
      l.y[j] = unif(rng) < prob ? 1.0 : -1.0;
    }
    const double hn = spectral_norm(l.H);
    L = std::max(L, hn * hn / (4.0 * J) + 2.0 * reg);
    locals.push_back(std::move(l));
  }
  Problem pr;
  pr.n = n;
  pr.p = p;
  pr.L = L;
  pr.sigma2_hint = 0.0;
  pr.locals = std::move(locals);
  pr.id = "logistic-n" + std::to_string(n) + "-J" + std::to_string(J) + "-p" + std::to_string(p);
  return pr;
}

// ---------------------------------------------------------------------------
// Serialization: problem.json plus one CSV per data matrix.

inline void save_problem(const Problem& pr, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json meta{{"n", pr.n}, {"p", pr.p}, {"L", pr.L}, {"sigma2_hint", pr.sigma2_hint},
                      {"id", pr.id}, {"kind", pr.is_quadratic() ? "quadratic" : "logistic"}};
  auto write = [&dir](const std::string& name, const Matrix& m) {
    std::ofstream(dir / name) << matrix_to_csv(m);
  };
  if (pr.is_quadratic()) {
    for (int i = 0; i < pr.n; ++i) {
      write("A_" + std::to_string(i) + ".csv", pr.quadratics()[i].A);
      write("b_" + std::to_string(i) + ".csv", pr.quadratics()[i].b);
    }
    if (pr.minimizer) meta["minimizer"] = to_std(*pr.minimizer);
  } else {
    meta["reg"] = pr.logistics().front().reg;
    for (int i = 0; i < pr.n; ++i) {
      write("H_" + std::to_string(i) + ".csv", pr.logistics()[i].H);
      write("y_" + std::to_string(i) + ".csv", pr.logistics()[i].y);
    }
  }
  std::ofstream(dir / "problem.json") << meta.dump(2) << '\n';
}

inline Problem load_problem(const std::filesystem::path& dir) {
  std::ifstream in(dir / "problem.json");
  if (!in) throw InputError("missing " + (dir / "problem.json").string());
  const nlohmann::json meta = nlohmann::json::parse(in);
  Problem pr;
  pr.n = meta.at("n").get<int>();
  pr.p = meta.at("p").get<int>();
  pr.L = meta.at("L").get<double>();
  pr.sigma2_hint = meta.at("sigma2_hint").get<double>();
  pr.id = meta.value("id", std::string{});
  auto read = [&dir](const std::string& name) { return read_matrix_csv((dir / name).string()); };
  if (meta.at("kind") == "quadratic") {
    std::vector<QuadraticLocal> locals;
    for (int i = 0; i < pr.n; ++i) {
      locals.push_back({read("A_" + std::to_string(i) + ".csv"),
                        read("b_" + std::to_string(i) + ".csv").col(0)});
    }
    pr.locals = std::move(locals);
    if (meta.contains("minimizer")) pr.minimizer = from_std(meta["minimizer"].get<std::vector<double>>());
  } else {
    const double reg = meta.at("reg").get<double>();
    std::vector<LogisticLocal> locals;
    for (int i = 0; i < pr.n; ++i) {
      locals.push_back({read("H_" + std::to_string(i) + ".csv"),
                        read("y_" + std::to_string(i) + ".csv").col(0), reg});
    }
    pr.locals = std::move(locals);
  }
  return pr;
}

}  // namespace spp
