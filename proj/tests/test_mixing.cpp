#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include "spp/mixing.hpp"

using namespace spp;

namespace {

// Dense eigen-solve oracle: left eigenvector of `a` for the eigenvalue
// closest to 1, normalised to unit l1 norm.
Vector dense_left_eigenvector(const Matrix& a) {
  Eigen::EigenSolver<Matrix> es(a.transpose());
  Eigen::Index best = 0;
  for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k)
    if (std::abs(es.eigenvalues()[k] - 1.0) < std::abs(es.eigenvalues()[best] - 1.0)) best = k;
  Vector v = es.eigenvectors().col(best).real();
  return v / v.sum();
}

Matrix matrix_power(const Matrix& a, int t) {
  Matrix p = Matrix::Identity(a.rows(), a.cols());
  for (int k = 0; k < t; ++k) p = p * a;
  return p;
}

double dense_norm(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

}  // namespace

TEST(PullMatrix, Examples) {
  EXPECT_EQ(pull_matrix(DirectedGraph(1)), Matrix::Ones(1, 1));
  const Matrix r = pull_matrix(gen_ring(3, false));
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ((r.row(i).array() == 0.5).count(), 2);
  }
  // star into node 0 from {1,2}
  const Matrix s = pull_matrix(DirectedGraph(3, {{1, 0}, {2, 0}}));
  for (int j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(s(0, j), 1.0 / 3.0);
  EXPECT_EQ(s(1, 1), 1.0);
  EXPECT_EQ(s(2, 2), 1.0);
  EXPECT_EQ(s(1, 0), 0.0);
}

TEST(PushMatrix, Examples) {
  EXPECT_EQ(push_matrix(DirectedGraph(1)), Matrix::Ones(1, 1));
  const Matrix c = push_matrix(gen_ring(3, false));
  for (int j = 0; j < 3; ++j) EXPECT_EQ((c.col(j).array() == 0.5).count(), 2);
  const Matrix s = push_matrix(DirectedGraph(3, {{0, 1}, {0, 2}}));
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(s(i, 0), 1.0 / 3.0);
}

TEST(Constructors, StochasticAndSupportedOnEdges) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    Stream rng(seed);
    const auto g = gen_erdos_renyi(3 + static_cast<int>(seed % 12), 0.3, rng);
    const Matrix r = pull_matrix(g);
    const Matrix c = push_matrix(g);
    EXPECT_LT(row_sum_residual(r), 1e-12);
    EXPECT_LT(column_sum_residual(c), 1e-12);
    for (int i = 0; i < g.n(); ++i)
      for (int j = 0; j < g.n(); ++j) {
        if (i != j && !g.has_edge(j, i)) {
          EXPECT_EQ(r(i, j), 0.0);
          EXPECT_EQ(c(i, j), 0.0);
        }
      }
  }
}

TEST(DoublyStochastic, CompletePairAndPath) {
  const Matrix w2 = doubly_stochastic(gen_ring(2, true));
  EXPECT_TRUE(w2.isApprox(Matrix::Constant(2, 2, 0.5)));
  const Matrix p = doubly_stochastic(DirectedGraph(3, {{0, 1}, {1, 0}, {1, 2}, {2, 1}}));
  EXPECT_DOUBLE_EQ(p(0, 1), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(p(1, 2), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(p(0, 0), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(p(1, 1), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(p(2, 2), 2.0 / 3.0);
  EXPECT_EQ(p(0, 2), 0.0);
}

TEST(DoublyStochastic, RingIsSymmetricWithSpectralGap) {
  const Matrix w = doubly_stochastic(gen_ring(4, true));
  EXPECT_TRUE(w.isApprox(w.transpose(), 0.0));
  EXPECT_LT(row_sum_residual(w), 1e-12);
  EXPECT_LT(column_sum_residual(w), 1e-12);
  const Matrix dev = w - Matrix::Constant(4, 4, 0.25);
  EXPECT_LT(dense_norm(dev), 1.0);
}

TEST(DoublyStochastic, DirectedGraphRejected) {
  EXPECT_THROW(doubly_stochastic(gen_ring(3, false)), NotUndirectedError);
}

TEST(TreeMatrices, SingleNodeAndChain) {
  const auto one = tree_01_matrices(DirectedGraph(1), DirectedGraph(1));
  EXPECT_EQ(one.R, Matrix::Ones(1, 1));
  EXPECT_EQ(one.C, Matrix::Ones(1, 1));
  EXPECT_TRUE(one.spanning_tree_mode);

  const DirectedGraph chain(3, {{0, 1}, {1, 2}});
  const auto p = tree_01_matrices(chain, chain.reversed());
  Matrix expected_r(3, 3);
  expected_r << 1, 0, 0, 1, 0, 0, 0, 1, 0;
  EXPECT_EQ(p.R, expected_r);
  EXPECT_EQ(p.C, expected_r.transpose());
  EXPECT_LT(row_sum_residual(p.R), 1e-15);
  EXPECT_LT(column_sum_residual(p.C), 1e-15);
}

TEST(TreeMatrices, RejectsNonTrees) {
  const auto ring = gen_ring(3, false);
  EXPECT_THROW(tree_01_matrices(ring, ring.reversed()), StructureError);
  const DirectedGraph chain(3, {{0, 1}, {1, 2}});
  EXPECT_THROW(tree_01_matrices(chain, chain), StructureError);
  const DirectedGraph forest(3, {{0, 1}});
  EXPECT_THROW(tree_01_matrices(forest, forest.reversed()), StructureError);
}

TEST(RootEigenvector, DoublyStochasticIsUniform) {
  const Matrix w = doubly_stochastic(gen_ring(6, true));
  const auto pi = root_eigenvector(w, root_set(induced_graph(w)));
  EXPECT_LT((pi.pi - Vector::Constant(6, 1.0 / 6)).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(RootEigenvector, PullFromSingleRoot) {
  Matrix r(2, 2);
  r << 1.0, 0.0, 0.5, 0.5;
  const auto pi = root_eigenvector(r, root_set(induced_graph(r)));
  EXPECT_EQ(pi.pi, Vector::Unit(2, 0));
}

TEST(RootEigenvector, MatchesDenseOracleOnErdosRenyi) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Stream rng(seed);
    const auto g = gen_erdos_renyi(8, 0.3, rng);
    const Matrix r = pull_matrix(g);
    const auto pi = root_eigenvector(r, root_set(g));
    EXPECT_GT(pi.pi.minCoeff(), 0.0);
    EXPECT_NEAR(pi.pi.sum(), 1.0, 1e-12);
    EXPECT_LT((pi.pi.transpose() * r - pi.pi.transpose()).lpNorm<Eigen::Infinity>(), 1e-10);
    EXPECT_LT((pi.pi - dense_left_eigenvector(r)).lpNorm<Eigen::Infinity>(), 1e-9);
  }
}

TEST(RootEigenvector, SupportInsideRootSet) {
  // Root block {0, 1} feeds node 2, which feeds node 3.
  const DirectedGraph g(4, {{0, 1}, {1, 0}, {1, 2}, {2, 3}});
  const Matrix r = pull_matrix(g);
  const RootSet roots = root_set(induced_graph(r));
  EXPECT_EQ(roots, (RootSet{0, 1}));
  const auto pi = root_eigenvector(r, roots);
  EXPECT_EQ(pi.pi[2], 0.0);
  EXPECT_EQ(pi.pi[3], 0.0);
  EXPECT_LT((pi.pi - dense_left_eigenvector(r)).lpNorm<Eigen::Infinity>(), 1e-9);
}

TEST(RootEigenvector, PeriodicBlockConverges) {
  // Pure permutation cycle: plain power iteration would oscillate.
  Matrix p = Matrix::Zero(3, 3);
  p(0, 1) = p(1, 2) = p(2, 0) = 1.0;
  const auto pi = root_eigenvector(p, {0, 1, 2});
  EXPECT_LT((pi.pi - Vector::Constant(3, 1.0 / 3)).lpNorm<Eigen::Infinity>(), 1e-11);
}

TEST(RootEigenvector, NoSpanningTreeRejected) {
  EXPECT_THROW(root_eigenvector(Matrix::Identity(3, 3), {}), AssumptionViolation);
}

TEST(DecayCertificate, ExactAveragingCertifiesImmediately) {
  const Matrix j = Matrix::Constant(4, 4, 0.25);
  const auto pi = root_eigenvector(j, {0, 1, 2, 3});
  const auto cert = certify_decay(j, pi);
  EXPECT_EQ(cert.m, 1);
}

TEST(DecayCertificate, SymmetricRateNearLambda) {
  const Matrix w = doubly_stochastic(gen_ring(8, true));
  const auto pi = root_eigenvector(w, root_set(induced_graph(w)));
  const auto cert = certify_decay(w, pi);
  const double lambda = dense_norm(w - Matrix::Constant(8, 8, 1.0 / 8));
  EXPECT_EQ(cert.m, 1);
  EXPECT_GE(cert.alpha, lambda - 1e-9);
  EXPECT_LE(cert.alpha, lambda + 0.05 * (1 - lambda) + 1e-6);
}

TEST(DecayCertificate, HoldsOnSampledHorizon) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Stream rng(seed);
    const auto g = gen_erdos_renyi(6 + static_cast<int>(seed % 5), 0.25, rng);
    for (const Matrix& a : {Matrix(pull_matrix(g)), Matrix(push_matrix(g).transpose())}) {
      const auto pi = root_eigenvector(a, root_set(induced_graph(a)));
      DecayOptions opts;
      opts.check_horizon = 300;
      const auto cert = certify_decay(a, pi, opts);
      ASSERT_LT(cert.alpha, 1.0);
      const Matrix dev = a - Vector::Ones(a.rows()) * pi.pi.transpose();
      for (int k = 0; k < 20; ++k) {
        const int t = cert.m + (opts.check_horizon - cert.m) * k / 19;
        EXPECT_LE(dense_norm(matrix_power(dev, t)), std::pow(cert.alpha, t) * (1 + 1e-9))
            << "seed " << seed << " t " << t;
      }
    }
  }
}

TEST(DecayCertificate, IdentityIsUncertifiable) {
  RootEigenvector pi{Vector::Unit(3, 0), EigenOf::pull_R};
  EXPECT_THROW(certify_decay(Matrix::Identity(3, 3), pi), DecayUncertifiable);
}

TEST(ValidatePair, DsgtRingPasses) {
  const Matrix w = doubly_stochastic(gen_ring(5, true));
  const auto rep = validate_pair({w, w, false});
  ASSERT_TRUE(rep.passed());
  EXPECT_NEAR(rep.certified->pi(), 0.2, 1e-12);
}

TEST(ValidatePair, StarPairMatchesOracle) {
  // Pull: star out of 0 (leaves pull from 0). Push: star into 0.
  const DirectedGraph pull(4, {{0, 1}, {0, 2}, {0, 3}});
  const MixingPair pair{pull_matrix(pull), push_matrix(pull.reversed()), false};
  const auto rep = validate_pair(pair);
  ASSERT_TRUE(rep.passed());
  EXPECT_EQ(rep.certified->pi_R.pi, Vector::Unit(4, 0));
  const Vector oracle = dense_left_eigenvector(pair.C.transpose());
  EXPECT_LT((rep.certified->pi_C.pi - oracle).lpNorm<Eigen::Infinity>(), 1e-9);
  for (int i = 1; i < 4; ++i) EXPECT_LT(rep.certified->pi_C.pi[i], rep.certified->pi_C.pi[0]);
}

TEST(ValidatePair, DisjointRootsFailAssumptionOne) {
  const DirectedGraph pull(3, {{0, 1}, {0, 2}});  // rooted at 0
  const DirectedGraph push(3, {{0, 1}, {2, 1}});  // reversal rooted at 1
  const MixingPair pair{pull_matrix(pull), push_matrix(push), false};
  const auto rep = validate_pair(pair);
  EXPECT_FALSE(rep.passed());
  ASSERT_NE(rep.find("assumption1_common_root"), nullptr);
  EXPECT_FALSE(rep.find("assumption1_common_root")->passed);
  EXPECT_THROW(certify_pair(pair), AssumptionViolation);
}

TEST(ValidatePair, NonStochasticReported) {
  Matrix r = Matrix::Constant(2, 2, 0.5);
  r(0, 0) = 0.6;
  const auto rep = validate_pair({r, Matrix::Constant(2, 2, 0.5), false});
  EXPECT_FALSE(rep.find("R_row_stochastic")->passed);
  EXPECT_TRUE(rep.find("C_column_stochastic")->passed);
}

TEST(ValidatePair, JsonListsEveryCheck) {
  const Matrix w = doubly_stochastic(gen_ring(4, true));
  const auto j = to_json(validate_pair({w, w, false}));
  EXPECT_TRUE(j["passed"].get<bool>());
  EXPECT_EQ(j["checks"].size(), 10u);
  EXPECT_NEAR(j["pi"].get<double>(), 0.25, 1e-12);
}
