// Dense brute-force references and theoretical error laws. Backed by Eigen so
// that nothing here shares code with the estimators it checks.
#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "gmrf/model.hpp"
#include "gmrf/sparse.hpp"

namespace gmrf::oracle {

class OracleLimitExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Default 5000, overridden by GMRF_ORACLE_LIMIT.
Index default_limit();

DenseMatrix dense_inverse(const SparseMatrix& q, Index limit = default_limit());
std::vector<double> dense_inverse_diag(const SparseMatrix& q, Index limit = default_limit());

struct OracleResult {
  DenseMatrix dense_inverse;  // (Q_x + AᵀQ_yA)⁻¹ over x = (u, β)
  std::vector<double> exact_diag;
  std::vector<double> exact_mu;
};

/// Assembles the full posterior precision densely and solves for μ and Σ.
OracleResult dense_posterior(const LatentModel& model, Index limit = default_limit());

/// diag(Q⁻¹) for a matrix that is block tridiagonal with square blocks of
/// `block` rows (space-time precisions in time-major order). Exact, dense
/// per block; throws if Q couples blocks more than one apart.
std::vector<double> block_tridiagonal_inverse_diag(const SparseMatrix& q, Index block);

/// Relative RMSE of the RBMC variance estimate at distance l from the
/// separator of a stationary AR(1) chain: φ^{2l}·√(2/K).
double rbmc_rmse_theory(double phi, int K, int l);

/// Uncentered second moment (1/K)·Σ u uᵀ of zero-mean samples.
DenseMatrix empirical_covariance(std::span<const std::vector<double>> samples);

/// max |corr(x_source, x_v)| over vertices v at each hop distance 0..max_hops.
std::vector<double> correlation_by_hop(const SparseMatrix& q, Index source, Index max_hops,
                                       Index limit = default_limit());

}  // namespace gmrf::oracle
