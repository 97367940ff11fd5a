#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "spp/errors.hpp"

namespace spp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct PowerIterationOptions {
  double tolerance = 1e-12;
  int max_iterations = 10000;
};

namespace detail {

// Deterministic start vector with no special alignment to 1 or to e_i.
inline Vector generic_start(Eigen::Index n) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    v[i] = 1.0 + 0.5 * std::sin(1.7 * static_cast<double>(i) + 0.3) +
           0.01 * static_cast<double>(i % 7);
  }
  return v.normalized();
}

}  // namespace detail

/// Spectral norm ||M||_2 by power iteration on M^T M.
///
/// `warm` (optional) holds a right singular vector estimate from a previous
/// call; it is used as the start and overwritten with the new estimate. The
/// iteration stops when successive estimates agree to `tolerance` relative.
inline double spectral_norm(const Matrix& m, Vector* warm = nullptr,
                            const PowerIterationOptions& opts = {}) {
  const Eigen::Index cols = m.cols();
  if (cols == 0 || m.rows() == 0) return 0.0;
  const double scale = m.cwiseAbs().maxCoeff();
  if (scale == 0.0 || !std::isfinite(scale)) {
    if (!std::isfinite(scale)) throw NumericError("non-finite matrix in spectral_norm");
    return 0.0;
  }
  const Matrix a = m / scale;

  Vector v;
  if (warm != nullptr && warm->size() == cols && warm->norm() > 0.0) {
    v = (warm->normalized() + 1e-3 * detail::generic_start(cols)).normalized();
  } else {
    v = detail::generic_start(cols);
  }

  double sigma = (a * v).norm();
  for (int it = 0; it < opts.max_iterations; ++it) {
    Vector w = a.transpose() * (a * v);
    const double wn = w.norm();
    if (wn == 0.0) {
      // The start landed in the null space; nudge with a different vector.
      v = (v + detail::generic_start(cols).reverse()).normalized();
      continue;
    }
    v = w / wn;
    const double next = (a * v).norm();
    const double change = std::abs(next - sigma);
    sigma = next;
    if (change <= opts.tolerance * sigma) break;
  }
  if (warm != nullptr) *warm = v;
  return sigma * scale;
}

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Dense row-major CSV, full round-trip precision.
inline std::string matrix_to_csv(const Matrix& m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out += ',';
      out += format_double(m(i, j));
    }
    out += '\n';
  }
  return out;
}

inline Matrix matrix_from_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw ParseError("bad number '" + cell + "'", lineno);
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError("ragged row", lineno);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) return Matrix(0, 0);
  Matrix m(static_cast<Eigen::Index>(rows.size()),
           static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
  return m;
}

inline Matrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return matrix_from_csv(in);
}

inline std::vector<double> to_std(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Vector from_std(const std::vector<double>& v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

}  // namespace spp
