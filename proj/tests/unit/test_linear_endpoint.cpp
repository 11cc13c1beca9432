#include <cmath>
#include <random>

#include "branchlab/continuation.hpp"
#include "branchlab/errors.hpp"
#include "branchlab/linear_endpoint.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace branchlab;

namespace {

MatrixXd random_spd(std::mt19937_64& rng, Eigen::Index d) {
  const MatrixXd A = oracle::random_matrix(rng, d + 3, d);
  return A.transpose() * A / static_cast<double>(d + 3);
}

const Dataset& hd() {
  static const Dataset d = gen_hd(11, 500, 5);
  return d;
}

}  // namespace

TEST_CASE("rank-one Kronecker spectra by hand") {
  const VectorXd v = (VectorXd(2) << 1.0, 0.0).finished();
  const MatrixXd I = MatrixXd::Identity(2, 2);
  const EndpointSpectrum s0 = kron_hessian_spectrum(v, I, 0.0);
  CHECK(s0.all_eigenvalues().isApprox((VectorXd(4) << 0, 0, 1, 1).finished()));
  CHECK(s0.kernel_dim_at_zero_alpha == 2);
  const EndpointSpectrum s1 = kron_hessian_spectrum(v, I, 0.1);
  CHECK((s1.all_eigenvalues() - (VectorXd(4) << 0.1, 0.1, 1.1, 1.1).finished()).norm() < 1e-15);
  CHECK(s1.flat_multiplicity == 2);
  MatrixXd bad = I;
  bad(0, 1) = 0.5;
  CHECK_THROWS_AS(kron_hessian_spectrum(v, bad, 0.0), Error);
}

TEST_CASE("analytic spectrum matches a dense eigensolve") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> md(1, 12), dd(1, 10);
  int instances = 0;
  while (instances < 20) {
    const int m = md(rng), d = dd(rng);
    if (m * d > 200) continue;
    ++instances;
    const VectorXd v = oracle::random_matrix(rng, m, 1).col(0);
    const MatrixXd S = random_spd(rng, d);
    for (double alpha : {0.0, 0.004}) {
      const VectorXd analytic = kron_hessian_spectrum(v, S, alpha).all_eigenvalues();
      const VectorXd dense = symmetric_eigen(kron_hessian_dense(v, S, alpha)).values;
      CHECK((analytic - dense).cwiseAbs().maxCoeff() <= 1e-10);
      if (alpha == 0.0) CHECK((dense.array().abs() < 1e-10).count() == (m - 1) * d);
    }
  }
}

TEST_CASE("flatness does not depend on v") {
  std::mt19937_64 rng(3);
  const MatrixXd S = random_spd(rng, 4);
  for (const VectorXd& v : {graded_output_weights(6), VectorXd(VectorXd::Ones(6))}) {
    const VectorXd dense = symmetric_eigen(kron_hessian_dense(v, S, 0.0)).values;
    CHECK((dense.array().abs() < 1e-10).count() == 5 * 4);
  }
}

TEST_CASE("hd instance: flat eigenvalue alpha with multiplicity 45") {
  const EndpointSpectrum s = kron_hessian_spectrum(graded_output_weights(10), hd().sigma, 0.004);
  const VectorXd all = s.all_eigenvalues();
  CHECK(all(0) == 0.004);
  CHECK((all.array() == 0.004).count() == 45);
  CHECK(all.minCoeff() >= 0.004);
  CHECK(s.cluster_gap > 0.0);
}

TEST_CASE("closed-form minimizer") {
  std::mt19937_64 rng(5);
  SUBCASE("zero cross-moment gives zero") {
    const EndpointSolution s = solve_w0(graded_output_weights(3), random_spd(rng, 2), VectorXd::Zero(2), 0.01);
    CHECK(s.W.norm() == 0.0);
  }
  SUBCASE("matches the dense system") {
    const VectorXd v = oracle::random_matrix(rng, 3, 1).col(0);
    const MatrixXd S = random_spd(rng, 2);
    const VectorXd g = oracle::random_matrix(rng, 2, 1).col(0);
    const EndpointSolution s = solve_w0(v, S, g, 0.05);
    CHECK((s.W - solve_w0_dense(v, S, g, 0.05)).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(s.residual <= 1e-10);
    CHECK_FALSE(s.rank_deficient);
  }
  SUBCASE("small-alpha limit") {
    const VectorXd v = graded_output_weights(4);
    const EndpointSolution s = solve_w0(v, hd().sigma, hd().gamma, 1e-8);
    const MatrixXd limit = v * (hd().sigma.ldlt().solve(hd().gamma)).transpose() / v.squaredNorm();
    CHECK((s.W - limit).cwiseAbs().maxCoeff() <= 1e-6);
  }
  SUBCASE("alpha = 0 with singular Sigma returns the minimum-norm solution") {
    MatrixXd S = MatrixXd::Zero(2, 2);
    S(0, 0) = 1.0;
    const VectorXd g = (VectorXd(2) << 0.5, 0.0).finished();
    const EndpointSolution s = solve_w0(VectorXd::Ones(2), S, g, 0.0);
    CHECK(s.rank_deficient);
    CHECK(s.W(0, 1) == 0.0);
    CHECK(s.residual <= 1e-12);
  }
}

TEST_CASE("softening rate") {
  const Dataset& d = hd();
  const VectorXd v = graded_output_weights(10);
  SUBCASE("zero weights give a zero rate") {
    const SofteningReport r = softening_rate(v, MatrixXd::Zero(10, 5), d);
    CHECK(r.rate == 0.0);
    CHECK(r.polynomial_rate == 0.0);
    CHECK(polynomial_approx_rate(v, MatrixXd::Zero(10, 5), d) == 0.0);
  }
  SUBCASE("v = 0 is rejected") {
    CHECK_THROWS_AS(softening_rate(VectorXd::Zero(10), MatrixXd::Zero(10, 5), d), Error);
  }
  const MatrixXd W0 = solve_w0(v, d.sigma, d.gamma, 0.004).W;
  const SofteningReport r = softening_rate(v, W0, d);
  SUBCASE("structure") {
    CHECK(r.rate < 0.0);
    CHECK(r.per_unit.sum() == doctest::Approx(r.rate).epsilon(1e-12));
    CHECK(r.k_estimate == doctest::Approx(10.0 * r.rate));
    CHECK(std::abs(r.u0.norm() - 1.0) < 1e-12);
    // u0 lies in the flat subspace v^T U = 0
    CHECK((v.transpose() * unvec_rowmajor(r.u0, 10, 5)).norm() < 1e-12);
    // tanh^2 <= z^2 pointwise
    CHECK(std::abs(r.polynomial_rate) > std::abs(r.diagonal_gn_rate));
  }
  SUBCASE("matches the FD slope of the tracked lowest eigenvalue") {
    ObjectiveConfig obj;
    obj.alpha = 0.004;
    ContinuationConfig cfg;
    cfg.hessian = HessianSource::Analytic;
    const double h = 1e-3;
    const Branch b = trace_branch(d, v, cfg, obj, {0.0, h, 2 * h}, W0);
    const double l0 = b.points[0].spectrum(0), l1 = b.points[1].spectrum(0), l2 = b.points[2].spectrum(0);
    const double fd = (-3.0 * l0 + 4.0 * l1 - l2) / (2.0 * h);
    CHECK(std::abs(fd - r.rate) <= 0.01 * std::abs(r.rate));
  }
}

TEST_CASE("K estimate stabilizes with width") {
  const Dataset& d = hd();
  std::vector<double> ks;
  for (int m : {20, 30, 50, 75, 100}) {
    const VectorXd v = graded_output_weights(m);
    const MatrixXd W0 = solve_w0(v, d.sigma, d.gamma, 0.004).W;
    ks.push_back(softening_rate(v, W0, d).k_estimate);
  }
  double mean = 0.0;
  for (double k : ks) mean += k / static_cast<double>(ks.size());
  double var = 0.0;
  for (double k : ks) var += (k - mean) * (k - mean) / static_cast<double>(ks.size());
  CHECK(std::sqrt(var) / std::abs(mean) <= 0.10);
}

TEST_CASE("lambda* prediction") {
  CHECK(*predict_lambda_star(0.004, -0.006) == doctest::Approx(0.6666667).epsilon(1e-6));
  CHECK_FALSE(predict_lambda_star(0.004, 0.0).has_value());
  CHECK_FALSE(predict_lambda_star(0.004, 0.3).has_value());
  CHECK(*predict_lambda_star(0.01, -0.0705 / 10.0) == doctest::Approx(0.01 * 10 / 0.0705));
}
