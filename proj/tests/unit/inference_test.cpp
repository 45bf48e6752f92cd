#include <doctest.h>

#include "gmrf/inference.hpp"
#include "gmrf/oracle.hpp"
#include "test_support.hpp"

using namespace gmrf;

namespace {

LatentModel scalar_model(bool with_covariate) {
  LatentModel m;
  m.Q_u = SparseMatrix::identity(1);
  m.A_u = SparseMatrix::identity(1);
  m.tau_y = 1.0;
  m.y = {2.0};
  if (with_covariate) {
    m.Q_beta = SparseMatrix::identity(1);
    m.A_beta = DenseMatrix(1, 1, {1.0});
  } else {
    m.Q_beta = SparseMatrix::zero(0, 0);
    m.A_beta = DenseMatrix(1, 0);
  }
  return m;
}

std::vector<double> head(const std::vector<double>& v, std::size_t n) { return {v.begin(), v.begin() + n}; }
std::vector<double> tail(const std::vector<double>& v, std::size_t n) { return {v.end() - n, v.end()}; }

}  // namespace

TEST_CASE("scalar model posterior mean") {
  const auto s = posterior_mean(scalar_model(false));
  REQUIRE(s.mu_u.size() == 1);
  CHECK(s.mu_u[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(s.mu_beta.empty());
  CHECK(s.solve_count == 1);
}

TEST_CASE("no fixed effects: one solve and the dense posterior") {
  std::mt19937_64 rng(4);
  const LatentModel m = testing::random_model(40, 0, rng);
  const auto s = posterior_mean(m);
  CHECK(s.solve_count == 1);
  const auto o = oracle::dense_posterior(m);
  CHECK(testing::rel_norm_error(s.mu_u, o.exact_mu) <= 1e-10);
  const auto blocks = assemble_posterior_blocks(m);
  CHECK(testing::max_rel_error(oracle::dense_inverse_diag(blocks.Q_uu), o.exact_diag) <= 1e-12);
  const auto ex = exact_diag(blocks.Q_uu);
  long solves = -1;
  CHECK(marginal_variance(m, ex, DenseMatrix(0, 0), {}, &solves) == ex.diag_variance);
  CHECK(solves == 0);
}

TEST_CASE("random model with covariates matches the dense block system") {
  std::mt19937_64 rng(60);
  const LatentModel m = testing::random_model(60, 3, rng);
  const auto s = posterior_mean(m);
  CHECK(s.solve_count == 3 + 2);
  CHECK(s.reports.size() == 5);
  const auto o = oracle::dense_posterior(m);
  CHECK(testing::rel_norm_error(s.mu_u, head(o.exact_mu, 60)) <= 1e-8);
  CHECK(testing::rel_norm_error(s.mu_beta, tail(o.exact_mu, 3)) <= 1e-8);
  // S⁻¹ is the fixed-effects block of the posterior covariance.
  for (Index a = 0; a < 3; ++a)
    for (Index b = 0; b < 3; ++b) CHECK(s.S_inv(a, b) == doctest::Approx(o.dense_inverse(60 + a, 60 + b)).epsilon(1e-8));

  const auto blocks = assemble_posterior_blocks(m);
  const auto ex = exact_diag(blocks.Q_uu);
  long solves = 0;
  const auto var = marginal_variance(m, ex, s.S_inv, {}, &solves);
  CHECK(solves == 3);
  CHECK(testing::max_rel_error(var, head(o.exact_diag, 60)) <= 1e-8);
  for (Index i = 0; i < 60; ++i) CHECK(var[i] >= ex.diag_variance[i]);
}

TEST_CASE("mean consistency on the assembled system") {
  std::mt19937_64 rng(8);
  for (Index n : {30, 120, 200}) {
    const LatentModel m = testing::random_model(n, 2, rng);
    const auto s = posterior_mean(m);
    const auto blocks = assemble_posterior_blocks(m);
    // [Q_uu Q_uβ; Q_βu Q_ββ] μ = [b_u; b_β]
    std::vector<double> qy = m.y;
    for (auto& v : qy) v *= m.tau_y;
    const auto bu = spmv(m.A_u.transpose(), qy);
    const auto bb = multiply_transposed(m.A_beta, qy);
    auto top = spmv(blocks.Q_uu, s.mu_u);
    const auto cross = multiply(blocks.Q_ubeta, s.mu_beta);
    for (Index i = 0; i < n; ++i) top[i] += cross[i];
    auto bottom = multiply_transposed(blocks.Q_ubeta, s.mu_u);
    const auto bbmu = multiply(blocks.Q_betabeta, s.mu_beta);
    for (Index a = 0; a < 2; ++a) bottom[a] += bbmu[a];
    CHECK(testing::rel_norm_error(top, bu) <= 1e-9);
    CHECK(testing::rel_norm_error(bottom, bb) <= 1e-9);
  }
}

TEST_CASE("scalar model with one covariate") {
  const LatentModel m = scalar_model(true);
  const auto s = posterior_mean(m);
  const auto o = oracle::dense_posterior(m);
  CHECK(s.mu_u[0] == doctest::Approx(o.exact_mu[0]).epsilon(1e-12));
  CHECK(s.mu_beta[0] == doctest::Approx(o.exact_mu[1]).epsilon(1e-12));
  const auto ex = exact_diag(assemble_posterior_blocks(m).Q_uu);
  const auto var = marginal_variance(m, ex, s.S_inv);
  CHECK(std::abs(var[0] - o.exact_diag[0]) <= 1e-10 * o.exact_diag[0]);
  CHECK(std::abs(s.S_inv(0, 0) - o.exact_diag[1]) <= 1e-10 * o.exact_diag[1]);
}

TEST_CASE("marginal_variance validates dimensions") {
  std::mt19937_64 rng(1);
  const LatentModel m = testing::random_model(20, 2, rng);
  MarginalResult bad;
  bad.diag_variance.assign(19, 1.0);
  CHECK_THROWS_AS(marginal_variance(m, bad, DenseMatrix(2, 2)), DimensionError);
  MarginalResult ok;
  ok.diag_variance.assign(20, 1.0);
  CHECK_THROWS_AS(marginal_variance(m, ok, DenseMatrix(3, 3)), DimensionError);
}

TEST_CASE("singular fixed-effects Schur complement is reported") {
  // Two identical covariates with a flat prior on β.
  LatentModel m;
  m.Q_u = build_ar1_precision(0.5, 5);
  m.A_u = SparseMatrix::identity(5);
  m.tau_y = 1.0;
  m.y = {1, 2, 3, 4, 5};
  m.Q_beta = SparseMatrix::zero(2, 2);
  m.A_beta = DenseMatrix(5, 2);
  for (Index i = 0; i < 5; ++i) m.A_beta(i, 0) = m.A_beta(i, 1) = 1.0;
  CHECK_THROWS_WITH(posterior_mean(m), doctest::Contains("singular"));
}

TEST_CASE("QuuSolver counts solves and reports non-convergence") {
  const SparseMatrix q = testing::lattice_precision(8, 8, 2, 0.3);
  QuuSolver solver(q, {});
  std::vector<double> b(64, 1.0);
  (void)solver.solve(b);
  (void)solver.solve(b);
  CHECK(solver.solves() == 2);
  CHECK(solver.reports().size() == 2);
  SolverSettings tight;
  tight.maxit = 1;
  QuuSolver capped(q, tight);
  CHECK_THROWS_WITH(capped.solve(b), doctest::Contains("did not converge"));
}

TEST_CASE("trace of Q⁻¹ times a derivative") {
  const auto id = takahashi_selected_inverse(sparse_cholesky(SparseMatrix::identity(3)));
  CHECK(trace_inv_times(id, SparseMatrix::identity(3)) == 3.0);

  const std::vector<double> d{2, 4};
  const auto sel = takahashi_selected_inverse(sparse_cholesky(SparseMatrix::diagonal(d)));
  CHECK(trace_inv_times(sel, SparseMatrix::identity(2)) == 0.75);

  const double phi = 0.7;
  const Index n = 30;
  const SparseMatrix q = build_ar1_precision(phi, n);
  std::vector<Triplet> t;
  for (Index i = 1; i + 1 < n; ++i) t.push_back({i, i, 2 * phi});
  for (Index i = 0; i + 1 < n; ++i) {
    t.push_back({i, i + 1, -1.0});
    t.push_back({i + 1, i, -1.0});
  }
  const SparseMatrix dq = SparseMatrix::from_triplets(n, n, std::move(t), true);
  const DenseMatrix inv = oracle::dense_inverse(q);
  double want = 0.0;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) want += inv(i, j) * dq.at(i, j);
  for (const auto ord : {Ordering::natural, Ordering::amd_like}) {
    const auto s = takahashi_selected_inverse(sparse_cholesky(q, ord));
    CHECK(std::abs(trace_inv_times(s, dq) - want) <= 1e-10 * std::abs(want));
  }

  // An entry outside the filled pattern is named in the error.
  const SparseMatrix far = SparseMatrix::from_triplets(n, n, {{0, 5, 1.0}, {5, 0, 1.0}}, true);
  const auto s = takahashi_selected_inverse(sparse_cholesky(q, Ordering::natural));
  CHECK_THROWS_WITH_AS(trace_inv_times(s, far), doctest::Contains("(0,5)"), std::invalid_argument);
}
